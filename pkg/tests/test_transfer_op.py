from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from detdiff.errors import DomainError
from detdiff.map_core import MapParams
from detdiff.transfer_op import (PiecewiseAffineFn as PA, apply_pf_affine, cell_centers,
                                 check_lasota_yorke, density_variation_bound, duality_residual,
                                 invariant_density, mixing_rate, pf_iterate, total_variation,
                                 ulam_matrix)

H = F(1, 2)


def pa_strategy(exact):
    n = st.integers(1, 5)

    @st.composite
    def build(draw):
        k = draw(n)
        if exact:
            inner = sorted(set(draw(st.lists(st.fractions(-H, H, max_denominator=200), min_size=k - 1, max_size=k - 1))) - {-H, H})
            vals = st.fractions(-4, 4, max_denominator=12)
            bps = [-H] + inner + [H]
        else:
            inner = sorted(set(draw(st.lists(st.floats(-0.49, 0.49), min_size=k - 1, max_size=k - 1))))
            inner = [x for i, x in enumerate(inner) if i == 0 or x - inner[i - 1] > 1e-6]
            vals = st.floats(-4, 4)
            bps = [-0.5] + inner + [0.5]
        m = len(bps) - 1
        sl = draw(st.lists(vals, min_size=m, max_size=m))
        ic = draw(st.lists(vals, min_size=m, max_size=m))
        return PA.from_pieces(bps, sl, ic, exact=exact)
    return build()


exact_params = st.builds(MapParams, st.fractions(F(21, 10), 8, max_denominator=50),
                         st.fractions(-H, H, max_denominator=50))
float_params = st.builds(MapParams, st.floats(2.1, 8.0), st.floats(-0.5, 0.5))


def test_pf_examples():
    p3 = MapParams(3, 0)
    assert apply_pf_affine(p3, PA.constant(F(1))) == PA.constant(F(1))
    img = apply_pf_affine(p3, PA.identity())
    assert all(img(x) == x / 3 for x in (F(-1, 2), F(-1, 7), F(0), F(2, 5)))
    img = apply_pf_affine(MapParams(4, 0), PA.identity())
    for x in (F(-2, 5), F(-1, 9), F(1, 9), F(3, 7)):
        assert img(x) == x / 4 - (1 if x > 0 else -1) * F(1, 8)


def test_total_variation_examples():
    assert total_variation(PA.constant(F(1))) == 2
    assert total_variation(PA.identity()) == 2
    bump = PA.step([-H, F(-1, 4), F(1, 4), H], [F(0), F(3), F(0)])
    assert total_variation(bump) == 6


def test_piece_validation():
    with pytest.raises(ValueError):
        PA((F(-1, 2), F(0), F(1, 2)), (1,), (0, 0))
    with pytest.raises(ValueError):
        PA((F(-1, 3), F(1, 2)), (1,), (0,))


@given(exact_params, pa_strategy(True), pa_strategy(True))
@settings(max_examples=40, deadline=None)
def test_duality_exact(p, f, g):
    assert duality_residual(p, f, g) == 0


@given(float_params, pa_strategy(False), pa_strategy(False))
@settings(max_examples=60, deadline=None)
def test_duality_float(p, f, g):
    scale = max(f.total_variation() * g.total_variation(), 1e-300)
    assert duality_residual(p, f, g) <= 1e-10 * scale


@given(exact_params, pa_strategy(True))
@settings(max_examples=40, deadline=None)
def test_mass_preserved_exactly(p, f):
    assert apply_pf_affine(p, f).integral() == f.integral()


@given(exact_params, pa_strategy(True))
@settings(max_examples=40, deadline=None)
def test_positivity(p, f):
    g = PA.from_pieces(f.breakpoints, [F(0)] * f.n_pieces, [abs(c) + 1 for c in f.intercepts])
    img = apply_pf_affine(p, g)
    assert all(img(x) >= 0 and img.left_limit(x) >= 0 for x in img.breakpoints)


@given(exact_params, pa_strategy(True))
@settings(max_examples=60, deadline=None)
def test_lasota_yorke_exact(p, f):
    assert check_lasota_yorke(p, f).passed


@given(float_params, pa_strategy(False))
@settings(max_examples=100, deadline=None)
def test_lasota_yorke_float(p, f):
    assert check_lasota_yorke(p, f).passed


@pytest.mark.parametrize("a", [2.5, 3, 4.7, 7])
def test_lasota_yorke_on_constant(a):
    rep = check_lasota_yorke(MapParams(a, 0.1), PA.constant(1.0, exact=False))
    assert rep.passed and float(rep.rhs) == pytest.approx(4 / a + 2)
    if float(a).is_integer():
        assert float(rep.lhs) == pytest.approx(2.0)


def test_ulam_examples():
    U = ulam_matrix(MapParams(3.0, 0.0), 3)
    assert np.allclose(U.matrix.toarray(), 1 / 3)
    for a, b, M in ((3.5, 0.1, 97), (7.3, -0.4, 1000), (2.05, 0.5, 64)):
        rs = np.asarray(ulam_matrix(MapParams(a, b), M).matrix.sum(axis=1)).ravel()
        assert np.max(np.abs(rs - 1)) < 1e-14


def test_ulam_stationary_matches_density():
    p = MapParams(3.5, 0.0)
    U = ulam_matrix(p, 7000)
    h = invariant_density(p, 7000)
    v = U.stationary()
    assert np.max(np.abs(v - h.values)) < 1e-9


def test_invariant_density_examples():
    h = invariant_density(MapParams(3.0, 0.2), 1024)
    assert np.allclose(h.values, 1.0, atol=1e-12)
    h = invariant_density(MapParams(3.7, 0.0), 4096)
    assert np.allclose(h.values, h.values[::-1], atol=1e-10)
    h = invariant_density(MapParams(3.5, 0.1), 4096)
    assert h.integral() == pytest.approx(1.0, abs=1e-12)
    assert h.values.min() >= 0
    assert h.total_variation() <= density_variation_bound(MapParams(3.5, 0.1))


def _cell_averages(f, M, sub=64):
    x = (np.arange(M * sub) + 0.5) / (M * sub) - 0.5
    return f.evaluate(x).reshape(M, sub).mean(axis=1)


def test_ulam_converges_to_exact_operator():
    p = MapParams(3.3, 0.15)
    f = PA.from_pieces([-0.5, -0.2, 0.1, 0.5], [1.0, -2.0, 0.5], [0.3, 0.0, -1.0], exact=False)
    exact = pf_iterate(p, f, 3)
    errs = []
    for M in (256, 512, 1024):
        v = _cell_averages(f, M)
        U = ulam_matrix(p, M)
        for _ in range(3):
            v = U.push(v)
        errs.append(np.abs(v - _cell_averages(exact, M)).sum() / M)
    assert errs[0] / errs[1] >= 1.8 and errs[1] / errs[2] >= 1.8


@pytest.mark.parametrize("a,b", [(3.0, 0.0), (6.0, 0.3), (2.5, -0.2), (4.4, 0.45)])
def test_mixing_rate_bound(a, b):
    rep = mixing_rate(MapParams(a, b), 2**14)
    assert rep.passed and rep.gamma_hat <= 2 / a + 0.05


def test_mixing_of_one_minus_density():
    p = MapParams(3.5, 0.1)
    h = invariant_density(p, 2**14)
    rep = mixing_rate(p, 2**14, f=lambda x: np.ones_like(x), h=h)
    assert rep.gamma_hat <= 2 / 3.5 + 0.05


def test_cell_centers():
    c = cell_centers(4)
    assert np.allclose(c, [-0.375, -0.125, 0.125, 0.375])
