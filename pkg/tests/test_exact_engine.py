import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from detdiff import exact_engine as ee
from detdiff.errors import DomainError, ToleranceUnreachable
from detdiff.map_core import MapParams
from detdiff.transport import diffusion

H = F(1, 2)


def test_exact_correlation_examples():
    assert ee.exact_correlation(3, 0, 1) == F(1, 9)
    assert ee.exact_correlation(4, 0, 1) == F(-3, 32)
    assert ee.exact_correlation(2, 0, 1) == F(-1, 48)


@pytest.mark.parametrize("a,target", [(2, F(0)), (3, F(1, 3)), (4, F(1, 4))])
def test_exact_diffusion_examples(a, target):
    r = ee.exact_diffusion(a, 0, tol=1e-12)
    assert r.tail_bound <= 1e-12
    assert abs(r.value - target) <= F(r.tail_bound)


@pytest.mark.parametrize("a,b", [(3, F(1, 5)), (4, F(-1, 7)), (5, F(1, 3))])
def test_jump_and_correlation_series_agree(a, b):
    j = ee.exact_diffusion(a, b, tol=1e-9)
    c = ee.exact_diffusion(a, b, tol=1e-9, series="correlation")
    assert abs(float(j.value - c.value)) <= j.tail_bound + c.tail_bound


@given(st.integers(2, 9), st.fractions(-H, H, max_denominator=10**4))
@settings(max_examples=60, deadline=None)
def test_drift_identity(a, b):
    assert ee.exact_drift(a, b) == b


@pytest.mark.parametrize("a", [3, 4, 5])
@pytest.mark.parametrize("b", [F(0), F(1, 8), F(1, 3)])
def test_exact_matches_float_paths(a, b):
    r = ee.exact_diffusion(a, b)
    # the grid M-vs-2M estimate is not a bound (convergence in M is not
    # monotone at non-dyadic b), so the grid path is held to a fixed tolerance
    g = diffusion(MapParams(float(a), float(b)), M=2**15)
    assert abs(float(r.value) - g.D) < 1e-4
    f = diffusion(MapParams(float(a), float(b)), method="exact")
    assert abs(float(r.value) - f.D) <= r.tail_bound + f.error_estimate
    assert abs(float(ee.render_decimal(r.value, 15)) - f.D) <= 1e-14 + r.tail_bound + f.error_estimate


def test_tail_bound_is_honest():
    r = ee.exact_diffusion(3, F(2, 7), n_terms=12)
    ref = ee.exact_diffusion(3, F(2, 7), n_terms=80)
    assert abs(float(r.value - ref.value)) <= r.tail_bound


def test_orbit_examples():
    o = ee.orbit_of_bhat(3, 0)
    assert o.bhat == -H and o.cycle == (-H,) and o.cycle_contains_minus_half
    o = ee.orbit_of_bhat(3, H)
    assert o.bhat == F(-1, 4) and set(o.cycle) == {F(-1, 4), F(1, 4)}
    o = ee.orbit_of_bhat(4, H)
    assert o.bhat == F(-1, 3) and o.cycle == (F(-1, 3),)
    with pytest.raises(DomainError):
        ee.orbit_of_bhat(3, F(-1, 4))
    with pytest.raises(DomainError):
        ee.orbit_of_bhat(4, F(1, 2305843009213691579), max_len=1000)


@given(st.integers(2, 7), st.fractions(0, H, max_denominator=400))
@settings(max_examples=80, deadline=None)
def test_orbit_structure(a, b):
    o = ee.orbit_of_bhat(a, b)
    pts = o.preperiod + o.cycle
    for x, y in zip(pts, pts[1:]):
        assert y == a * x - math.floor(a * x + H)
    last = o.cycle[-1]
    assert a * last - math.floor(a * last + H) == o.cycle[0]
    assert len(o.cycle) <= o.bhat.denominator
    assert all(x.denominator <= o.bhat.denominator for x in pts)


@pytest.mark.parametrize("a", [3, 4, 5, 6, 7, 8])
def test_prediction_constants(a):
    la = math.log(a)
    p0 = ee.predict_log_coefficient(a, 0, side=1)
    ph = ee.predict_log_coefficient(a, H, side=-1)
    if a % 2:
        assert p0.value == -(a - 1) / (2 * la)
        assert abs(ph.value) == (a - 1) / (4 * la)
    else:
        assert p0.value == 0.0
        assert abs(ph.value) == (a - 1) / (2 * la)
    assert p0.case.startswith("special")


def test_prediction_clean_and_flagged():
    p = ee.predict_log_coefficient(4, F(1, 5))
    assert p.case == "clean" and p.value == pytest.approx(ee.cycle_average_coefficient(4, F(1, 5)))
    # mirrored parameter flips the coefficient
    m = ee.predict_log_coefficient(4, F(-1, 5), side=-1)
    assert m.value == pytest.approx(-p.value)
    q = ee.predict_log_coefficient(3, F(1, 4))
    assert q.value is None and q.case.startswith("no_prediction")
    long = ee.predict_log_coefficient(4, F(1, 2305843009213691579))
    assert long.value is None and "long_orbit" in long.case


def test_diff_quotient_structure():
    db = F(1, 10**20)
    r = ee.diff_quotient(3, F(1, 5), db)
    assert r.N_delta == math.ceil(math.log(2 * 10**20) / math.log(3))
    assert r.delta == db / 2
    assert r.n_terms >= r.N_delta + 20
    assert r.tail_bound < 1e-8
    Db = ee.exact_diffusion(3, F(1, 5), n_terms=r.n_terms).value
    Db2 = ee.exact_diffusion(3, F(1, 5) + db, n_terms=r.n_terms).value
    assert r.quotient == (Db2 - Db) / db


def test_diff_quotient_errors():
    with pytest.raises(DomainError):
        ee.diff_quotient(3, 0, 0)
    with pytest.raises(DomainError):
        ee.diff_quotient(3, H, F(1, 10))
    with pytest.raises(ToleranceUnreachable):
        ee.diff_quotient(3, 0, F(1, 10**20), n_terms=5)


def test_flat_quotient_at_even_slope():
    # zero slope plus a log-periodic part of period ln 4: equal one period apart
    q1 = float(ee.diff_quotient(4, 0, F(1, 4**20)).quotient)
    q2 = float(ee.diff_quotient(4, 0, F(1, 4**40)).quotient)
    assert abs(q2 - q1) < 1e-8


def test_grid_error_shrinks_with_cells():
    ex = float(ee.exact_diffusion(4, F(1, 3)).value)
    e12 = abs(diffusion(MapParams(4.0, 1 / 3), M=2**12, discretization=False).D - ex)
    e17 = abs(diffusion(MapParams(4.0, 1 / 3), M=2**17, discretization=False).D - ex)
    assert e17 < e12 / 10


@pytest.mark.slow
@pytest.mark.parametrize("a,b,target", [(3, F(0), 1 / math.log(3)), (3, -H, 1 / (2 * math.log(3))),
                                        (4, -H, 3 / (2 * math.log(4))), (4, F(0), 0.0)])
def test_quotient_slopes(a, b, target):
    fit = ee.quotient_slope(a, b)
    assert fit.method == "periodic"
    if target:
        assert abs(fit.slope - target) < 5e-5 * target
    else:
        assert abs(fit.slope) < 5e-5
    if fit.predicted is not None:
        assert fit.slope == pytest.approx(fit.predicted, rel=1e-6, abs=1e-9)


def test_quotient_slope_clean_cycle():
    fit = ee.quotient_slope(4, F(1, 5))
    assert fit.slope == pytest.approx(fit.predicted, rel=1e-3)


def test_rendering():
    assert ee.render_decimal(F(1, 3), 5) == "0.33333"
    assert ee.rational_json(F(-2, 6)) == {"num": "-1", "den": "3"}
    assert ee.to_rational("1e-30") == F(1, 10**30)
    assert ee.to_rational("1/3") == F(1, 3)
    with pytest.raises(DomainError):
        ee.exact_diffusion(3.5, 0)
