import math
import warnings
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from detdiff.errors import DomainError
from detdiff.stats_lab import (ENSEMBLE_DENOM, EnsembleSpec, ensemble_b, qq_quantiles,
                               scaled_difference_ensemble, shapiro_wilk)


@pytest.mark.parametrize("n", [3, 4, 5, 6, 7, 11, 12, 20, 50, 200, 1000, 5000])
@pytest.mark.parametrize("dist", ["normal", "exponential", "uniform"])
def test_shapiro_wilk_matches_reference(n, dist):
    rng = np.random.default_rng(n)
    x = getattr(rng, dist)(size=n)
    ours = shapiro_wilk(x)
    ref = stats.shapiro(x)
    assert ours.W == pytest.approx(ref.statistic, abs=1e-6)
    assert ours.p == pytest.approx(ref.pvalue, abs=1e-3)


def test_shapiro_wilk_calibration():
    ps = np.array([shapiro_wilk(np.random.default_rng(s).normal(size=500)).p for s in range(100)])
    assert np.mean(ps > 0.05) >= 0.90
    assert np.mean(ps < 0.05) <= 0.12


def test_shapiro_wilk_rejects_skew():
    assert shapiro_wilk(np.random.default_rng(0).exponential(size=500)).p < 0.01


@given(st.floats(1e-3, 1e3), st.integers(0, 50))
@settings(max_examples=30, deadline=None)
def test_shapiro_wilk_scale_invariant(c, seed):
    x = np.random.default_rng(seed).normal(size=100)
    r1, r2 = shapiro_wilk(x), shapiro_wilk(c * x + 7)
    assert r2.W == pytest.approx(r1.W, abs=1e-12)
    assert r2.p == pytest.approx(r1.p, abs=1e-10)
    assert 0 < r1.W <= 1 and 0 <= r1.p <= 1


def test_shapiro_wilk_domain():
    with pytest.raises(DomainError):
        shapiro_wilk([1.0, 2.0])
    with pytest.raises(DomainError):
        shapiro_wilk(np.ones(20))
    x = np.random.default_rng(1).normal(size=6000)
    with pytest.warns(UserWarning):
        r = shapiro_wilk(x)
    assert r.n == 6000
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert shapiro_wilk(x).W == r.W


def test_qq_examples():
    x = np.random.default_rng(2).normal(3.0, 2.0, 500)
    qq = qq_quantiles(x)
    assert np.all(np.diff(qq.theoretical) > 0) and np.all(np.diff(qq.sample) >= 0)
    # the extreme order statistics alone scatter by ~0.4 sd; judge the central 80%
    assert qq.max_deviation(trim=0.1) < 0.2 * qq.slope
    assert qq.max_deviation() >= qq.max_deviation(trim=0.1)
    assert qq.slope == pytest.approx(np.std(x, ddof=1)) and qq.intercept == pytest.approx(np.mean(x))
    heavy = qq_quantiles(np.random.default_rng(2).standard_t(2, 500))
    line = heavy.line()
    assert heavy.sample[0] < line[0] and heavy.sample[-1] > line[-1]
    flat = qq_quantiles(np.full(30, 1.5))
    assert flat.degenerate and flat.max_deviation() == 0.0
    with pytest.raises(DomainError):
        qq_quantiles(np.arange(5.0))


def test_plotting_positions():
    qq = qq_quantiles(np.arange(10.0))
    i = np.arange(1, 11)
    assert np.allclose(qq.theoretical, stats.norm.ppf((i - 0.375) / 10.25), atol=1e-12)


def test_ensemble_spec_validation():
    with pytest.raises(DomainError):
        EnsembleSpec(3.5, F(1, 10**30))
    with pytest.raises(DomainError):
        EnsembleSpec(4, F(1, 10**30), b_range=(F(1, 4), F(1, 8)))
    with pytest.raises(DomainError):
        EnsembleSpec(4, F(1, 10**30), b_range=(F(0), F(3, 4)))
    with pytest.raises(DomainError):
        EnsembleSpec(4, F(1, 100))          # N_delta < 10
    with pytest.raises(DomainError):
        EnsembleSpec(4, F(-1, 10**30))


def test_ensemble_points():
    spec = EnsembleSpec(4, F(1, 10**30), 50, (F(0), F(1, 200)), seed=3)
    bs = [ensemble_b(spec, i) for i in range(50)]
    assert all(0 <= b < F(1, 200) for b in bs)
    assert all((b * 200 * ENSEMBLE_DENOM).denominator == 1 for b in bs)
    assert len(set(bs)) == 50
    assert bs == [ensemble_b(spec, i) for i in range(50)]


def test_ensemble_deterministic_and_parallel_safe():
    spec = EnsembleSpec(4, F(1, 10**20), 12, seed=5)
    z1 = scaled_difference_ensemble(spec)
    z2 = scaled_difference_ensemble(spec, workers=2)
    assert np.array_equal(z1, z2)
    assert np.array_equal(z1, scaled_difference_ensemble(spec))


def test_ensemble_values_are_scaled_quotients():
    from detdiff.exact_engine import exact_diffusion
    spec = EnsembleSpec(3, F(1, 10**12), 2, seed=0)
    z = scaled_difference_ensemble(spec)
    b = ensemble_b(spec, 0)
    db = spec.db
    d = (exact_diffusion(3, b + db, n_terms=90).value - exact_diffusion(3, b, n_terms=90).value) / db
    assert z[0] == pytest.approx(float(d) / math.sqrt(12 * math.log(10)), rel=1e-6)


@pytest.mark.slow
def test_ensemble_mean_and_normality():
    z = scaled_difference_ensemble(EnsembleSpec(4, F(1, 10**30), 500))
    rep = shapiro_wilk(z)
    assert abs(rep.mean) <= 3 * rep.se
    assert rep.p > 0.01


@pytest.mark.slow
def test_ensemble_independent_of_increment():
    reps = {k: shapiro_wilk(scaled_difference_ensemble(EnsembleSpec(4, F(1, 10**k), 300)))
            for k in (10, 20, 30)}
    sds = [r.sd for r in reps.values()]
    assert max(sds) / min(sds) < 1.2
    r10, r30 = reps[10], reps[30]
    assert abs(r10.mean - r30.mean) <= 3 * math.hypot(r10.se, r30.se)
    assert abs(r10.sd - r30.sd) <= 3 * math.hypot(r10.sd, r30.sd) / math.sqrt(2 * 300)


@pytest.mark.slow
def test_restricted_range_fine_structure():
    z = scaled_difference_ensemble(EnsembleSpec(4, F(1, 10**30), 500, (F(0), F(5, 1000))))
    p = shapiro_wilk(z).p
    assert p < 0.05, f"Shapiro-Wilk p = {p:.3f} on b in [0, 0.005)"
