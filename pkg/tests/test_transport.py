import math
from fractions import Fraction as F

import numpy as np
import pytest

from detdiff import exact_engine as ee
from detdiff.errors import DomainError, NumericalRefusal
from detdiff.map_core import MapParams, psi
from detdiff.orbit_sim import SimConfig, mc_transport
from detdiff.transfer_op import PiecewiseAffineFn as PA, invariant_density
from detdiff.transport import (correlation_series, continuity_scan, diffusion, drift, modulus_ell,
                               transport_scan)


@pytest.mark.parametrize("a", [2.3, 3.0, 4.6, 7.9])
def test_drift_vanishes_at_zero_bias(a):
    assert abs(drift(MapParams(a, 0.0), invariant_density(MapParams(a, 0.0), 2**12))) < 1e-12


def test_drift_integer_slope():
    assert drift(MapParams(3.0, 0.2), invariant_density(MapParams(3.0, 0.2), 1024)) == pytest.approx(0.2, abs=1e-13)


def test_drift_matches_monte_carlo():
    p = MapParams(3.5, 0.1)
    J = drift(p, invariant_density(p, 2**14))
    est = mc_transport(SimConfig(p, 4000, 4000, seed=0))
    assert abs(J - est.J) <= 3 * est.J_se


def test_correlation_series_examples():
    s = correlation_series(MapParams(F(3), F(0)), PA.constant(F(1)), N=4)
    assert s.c[0] == F(1, 3)
    assert all(s.c[n] == F(1, 3) / 3**n for n in range(5))
    s = correlation_series(MapParams(F(4), F(0)), PA.constant(F(1)), N=1)
    assert s.c[1] == F(-3, 32)


def test_correlation_series_requires_centring():
    p = MapParams(3.5, 0.1)
    h = invariant_density(p, 1024)
    with pytest.raises(ValueError):
        correlation_series(p, h, psi(p), N=3)


@pytest.mark.parametrize("a,target", [(3, 1 / 3), (4, 1 / 4), (5, 1.0), (6, 5 / 6)])
def test_diffusion_integer_closed_forms(a, target):
    r = diffusion(MapParams(float(a), 0.0), M=2**14, discretization=False)
    assert r.D == pytest.approx(target, abs=5e-4)
    assert r.error_estimate >= r.tail_bound
    e = diffusion(MapParams(float(a), 0.0), method="exact")
    assert e.D == pytest.approx(target, abs=1e-12)
    closed = (a * a - 1) / 24 if a % 2 else (a - 1) * (a - 2) / 24
    assert closed == pytest.approx(target)


def test_diffusion_exact_piecewise_path():
    r = diffusion(MapParams(F(3), F(0)), h=PA.constant(F(1)), tol=1e-12)
    assert float(r.D) == pytest.approx(1 / 3, abs=1e-12)


@pytest.mark.parametrize("a", [2.01, 2.05])
def test_random_walk_limit(a):
    D = diffusion(MapParams(a, 0.0), method="exact").D
    assert D == pytest.approx((a - 2) / (2 * a), rel=0.15)


def test_grid_refuses_near_two():
    with pytest.raises(NumericalRefusal):
        diffusion(MapParams(2.0005, 0.0))
    with pytest.raises(DomainError):
        diffusion(MapParams(3.0, 0.0), tol=0)


def test_tail_certification():
    p = MapParams(3.7, 0.2)
    h = invariant_density(p, 2**12)
    s = correlation_series(p, h, N=60)
    longer = correlation_series(p, h, N=70)
    assert abs(longer.green_kubo() - s.green_kubo()) < s.tail_bound


def test_green_kubo_forms_agree():
    a, b, n = 3, F(1, 5), 4
    p = MapParams(F(a), b)
    J = ee.exact_drift(a, b)
    g = PA.affine(F(a - 1), b - J)
    S, gk = g, g
    for _ in range(n - 1):
        gk = gk.compose_map(p)
        S = S + gk
    lhs = S.inner(S) / (2 * n)
    c = ee.exact_correlations(a, b, n)
    rhs = c[0] / 2 + sum((1 - F(k, n)) * c[k] for k in range(1, n))
    assert lhs == rhs


def test_symmetry_and_scan():
    rng = np.random.default_rng(3)
    a = rng.uniform(2, 8, 50)
    b = rng.uniform(-0.5, 0.5, 50)
    J1, D1 = transport_scan(a, b)
    J2, D2 = transport_scan(a, -b)
    assert np.max(np.abs(D1 - D2)) < 1e-10 and np.max(np.abs(J1 + J2)) < 1e-10
    with pytest.raises(DomainError):
        transport_scan([1.5], [0.0])


def test_grid_and_fast_paths_agree():
    for a, b in ((3.3, 0.1), (5.7, -0.3)):
        g = diffusion(MapParams(a, b), M=2**15, discretization=False)
        f = diffusion(MapParams(a, b), method="exact")
        assert abs(g.D - f.D) < 2e-4 and abs(g.J - f.J) < 1e-4


def test_oracle_agreement_with_monte_carlo():
    rng = np.random.default_rng(11)
    for _ in range(10):
        a, b = float(rng.uniform(2.2, 8.0)), float(rng.uniform(-0.5, 0.5))
        t = diffusion(MapParams(a, b), method="exact")
        # 100 batches: a 20-batch standard error is too noisy for 20 comparisons at 3 se
        est = mc_transport(SimConfig(MapParams(a, b), 2000, 4000, seed=1, n_batches=100))
        assert abs(t.D - est.D_inc) <= 3 * (est.D_inc_se + t.error_estimate)
        assert abs(t.J - est.J) <= 3 * (est.J_se + t.error_estimate)


def test_modulus_examples():
    assert modulus_ell(1, 1.0) == 1.0
    assert modulus_ell(2, math.exp(-1)) == pytest.approx(4 * math.exp(-1))
    assert modulus_ell(2, 1e-3) == pytest.approx(1e-3 * (1 + 3 * math.log(10)) ** 2, rel=1e-15)
    assert modulus_ell(2, 1e-3) == pytest.approx(6.2533e-2, rel=1e-4)
    with pytest.raises(DomainError):
        modulus_ell(1, 0.0)
    with pytest.raises(DomainError):
        modulus_ell(3, 0.5)


def test_continuity_scan_examples():
    reps = continuity_scan("a", 0.0, (2.0, 8.0), 20_000, quantity="J")
    assert all(r.osc < 1e-12 for r in reps)
    for a in (3.0, 4.0):
        r1 = np.array([r.ratio1 for r in continuity_scan("b", a, (-0.5, 0.5), 20_000)])
        assert r1.max() <= 2 * r1[0]
    r2 = np.array([r.ratio2 for r in continuity_scan("a", 0.0, (2.5, 8.0), 50_000)])
    assert r2.max() <= 2 * r2[0]
    with pytest.raises(DomainError):
        continuity_scan("a", 0.0, (2.5, 8.0), 100)
