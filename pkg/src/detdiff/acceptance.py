"""Acceptance suite: one check per primary criterion.

Each check returns a CriterionResult.  ``quick`` shrinks ensembles, trial
counts and Monte Carlo sizes; the full suite runs at the stated
tolerances.  All randomness is seeded (seed 0 unless given).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import exact_engine as ee
from .fractal import (GraphSample, box_count_curve, covering_bound, eps_schedule,
                      fit_log_corrected, fit_log_exponent, fit_power_law)
from .map_core import MapParams
from .orbit_sim import SimConfig, clt_check, mc_transport
from .stats_lab import EnsembleSpec, scaled_difference_ensemble, shapiro_wilk
from .transfer_op import (PiecewiseAffineFn, check_lasota_yorke, duality_residual,
                          invariant_density, mixing_rate)
from .transport import continuity_scan, diffusion, drift, transport_scan

F = Fraction


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"CRITERION {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.title}: {self.detail}"


# ---------------------------------------------------------------------------

CLOSED_FORMS = {2: F(0), 3: F(1, 3), 4: F(1, 4)}


def c1_closed_forms(quick=False, seed=0):
    parts, ok = [], True
    n = 2000 if quick else 10_000
    for a, target in CLOSED_FORMS.items():
        r = ee.exact_diffusion(a, 0, tol=1e-12)
        exact_ok = r.tail_bound <= 1e-12 and abs(r.value - target) <= F(r.tail_bound)
        est = mc_transport(SimConfig(MapParams(a, 0), n_steps=n, n_walkers=n, seed=seed))
        z = abs(est.D_inc - float(target)) / est.D_inc_se
        mc_ok = z <= 3.0
        ok &= exact_ok and mc_ok
        parts.append(f"D({a},0)={float(r.value):.12g} tail={r.tail_bound:.2e} MC={est.D_inc:.5f}+-{est.D_inc_se:.5f} ({z:.2f}se)")
    return ok, "; ".join(parts)


def c2_drift(quick=False, seed=0):
    M = 2**14 if quick else 2**16
    parts, ok = [], True
    for a in (2.7, 3.3, 5.1):
        J = drift(MapParams(a, 0.0), invariant_density(MapParams(a, 0.0), M))
        ok &= abs(J) < 1e-8
        parts.append(f"J({a},0)={J:.2e}")
    rng = np.random.default_rng(seed)
    exact = 0
    for a in (2, 3, 4, 5, 6, 7):
        for _ in range(3 if quick else 10):
            b = F(int(rng.integers(-500, 501)), 1000)
            exact += 1
            ok &= ee.exact_drift(a, b) == b
    parts.append(f"J(a,b)==b exactly at {exact} rational points")
    return ok, "; ".join(parts)


C3_CASES = ((3, F(0), 1 / math.log(3)), (3, F(-1, 2), 1 / (2 * math.log(3))),
            (4, F(-1, 2), 3 / (2 * math.log(4))), (4, F(0), 0.0))


def _four_figures(x, target):
    if target == 0:
        return abs(x) < 5e-5
    return abs(x - target) < 5e-5 * abs(target)


def c3_quotient_slopes(quick=False, seed=0):
    parts, ok = [], True
    for a, b, target in C3_CASES:
        fit = ee.quotient_slope(a, b)
        good = _four_figures(fit.slope, target)
        ok &= good
        parts.append(f"(a={a},b={b}) {fit.slope:.7f} vs {target:.7f}")
    return ok, "; ".join(parts)


def _observation_constant(a, b, side):
    """Closed forms for b = 0 (right side) and b = 1/2 (left side)."""
    la = math.log(a)
    if b == 0:
        return 0.0 if a % 2 == 0 else -(a - 1) / (2 * la)
    return (a - 1) / (2 * la) if a % 2 == 0 else (a - 1) / (4 * la)


def clean_cycle_points(count: int, max_den: int = 40):
    """First ``count`` clean-cycle rationals in (0, 1/2) for a in {3,4,5}, by denominator."""
    out = []
    for den in range(3, max_den):
        for num in range(1, den):
            b = F(num, den)
            if b.denominator != den or b >= F(1, 2):
                continue
            for a in (3, 4, 5):
                orb = ee.orbit_of_bhat(a, b)
                pred = ee.predict_log_coefficient(a, b)
                # the period-matched slope fit needs two periods inside the ln(db) range
                if orb.clean and pred.value and 2 * len(orb.cycle) * math.log(a) <= 30 * math.log(10):
                    out.append((a, b))
                    if len(out) == count:
                        return out
    return out


def c4_log_coefficients(quick=False, seed=0):
    ok, bad = True, []
    for a in (3, 4, 5, 6):
        for b, side in ((F(0), 1), (F(1, 2), -1)):
            v = ee.predict_log_coefficient(a, b, side).value
            if v != _observation_constant(a, b, side):
                ok, bad = False, bad + [(a, str(b))]
    parts = [f"constants a=3..6, b in {{0,1/2}}: {'exact' if not bad else f'mismatch {bad}'}"]
    worst = 0.0
    pts = clean_cycle_points(5 if quick else 20)
    for a, b in pts:
        fit = ee.quotient_slope(a, b)
        rel = abs(fit.slope - fit.predicted) / abs(fit.predicted)
        worst = max(worst, rel)
    ok &= worst < 1e-3 and len(pts) == (5 if quick else 20)
    parts.append(f"{len(pts)} clean-cycle b: max rel err {worst:.2e}")
    return ok, "; ".join(parts)


def _d_scan(lo, hi, n):
    a = np.linspace(lo, hi, n)
    _, D = transport_scan(a, np.zeros_like(a))
    return GraphSample(a, D, "a")


def c5_box_counting(quick=False, seed=0):
    n = 10**6
    g = _d_scan(2.0, 8.0, n)
    # the stated fit ranges take precedence over the spacing*1e3 guard
    curve = box_count_curve(g, eps=eps_schedule(g.extent, math.exp(-9.0)), eps_cut=math.exp(-9.0))
    B = fit_power_law(curve, (0.5, 6.0)).params["B"]
    lf = fit_log_corrected(curve, (0.5, 9.0))
    alpha = lf.params.get("alpha", math.nan)
    guard_curve = box_count_curve(g)
    cb = covering_bound(guard_curve)
    w = _d_scan(2.0, 2.06, n)
    wcurve = box_count_curve(w)
    shift = math.log(g.extent / w.extent)
    wa = fit_log_exponent(wcurve, (0.5 + shift, 9.0 + shift)).params["alpha"]
    checks = {"B": 1.02 <= B <= 1.06, "alpha": lf.converged and 0 < alpha <= 2,
              "bound": cb.ok, "window": abs(wa) < 0.1}
    detail = (f"B={B:.4f} [1.02,1.06]; alpha={alpha:.3f} converged={lf.converged}; "
              f"K={cb.K:.3f} at eps={cb.eps_at_max:.3g} ok={cb.ok}; a=2.03 window alpha={wa:.3f}"
              f" failed={[k for k, v in checks.items() if not v]}")
    return all(checks.values()), detail


def random_pa(rng, exact=False, max_pieces=6):
    k = int(rng.integers(1, max_pieces + 1))
    if exact:
        inner = sorted({F(int(v), 997) - F(1, 2) for v in rng.integers(1, 997, k - 1)})
        bps = [F(-1, 2)] + inner + [F(1, 2)]
        n = len(bps) - 1
        sl = [F(int(v), 16) for v in rng.integers(-64, 65, n)]
        ic = [F(int(v), 16) for v in rng.integers(-64, 65, n)]
    else:
        inner = sorted(set(rng.uniform(-0.5, 0.5, k - 1).tolist()))
        bps = [-0.5] + inner + [0.5]
        n = len(bps) - 1
        sl = rng.uniform(-4, 4, n).tolist()
        ic = rng.uniform(-4, 4, n).tolist()
    return PiecewiseAffineFn.from_pieces(bps, sl, ic, exact=exact)


def random_params(rng, exact=False):
    if exact:
        return MapParams(F(int(rng.integers(2100, 8001)), 1000), F(int(rng.integers(-500, 501)), 1000))
    return MapParams(float(rng.uniform(2.1, 8.0)), float(rng.uniform(-0.5, 0.5)))


def c6_operator_inequalities(quick=False, seed=0):
    rng = np.random.default_rng(seed)
    n_float, n_exact = (90, 10) if quick else (900, 100)
    fails = 0
    for i in range(n_float + n_exact):
        exact = i >= n_float
        p = random_params(rng, exact)
        f = random_pa(rng, exact)
        f = f - PiecewiseAffineFn.constant(f.integral(), exact=exact)     # mean zero
        if not check_lasota_yorke(p, f).passed:
            fails += 1
    dual = 0.0
    for _ in range(20 if quick else 100):
        p = random_params(rng)
        f, g = random_pa(rng), random_pa(rng)
        r = duality_residual(p, f, g) / max(f.total_variation() * g.total_variation(), 1e-300)
        dual = max(dual, float(r))
    p = random_params(rng, True)
    exact_dual = duality_residual(p, random_pa(rng, True), random_pa(rng, True))
    mix, worst = [], -math.inf
    M = 2**13 if quick else 2**16
    for _ in range(10):
        p = random_params(rng)
        rep = mixing_rate(p, M)
        mix.append(rep.passed)
        worst = max(worst, rep.gamma_hat - rep.bound)
    ok = fails == 0 and dual < 1e-10 and exact_dual == 0 and all(mix)
    return ok, (f"LY failures {fails}/{n_float + n_exact} ({n_exact} rational); "
                f"max duality residual {dual:.2e} (rational: {exact_dual}); "
                f"mixing {sum(mix)}/10 within 2/a+0.05, worst gamma-2/a={worst:+.3f}")


def _bounded(reports, attr):
    r = np.array([getattr(m, attr) for m in reports])
    return bool(np.all(np.isfinite(r)) and r.max() <= 2.0 * r[0]), r


def c7_continuity(quick=False, seed=0):
    n = 20_000 if quick else 100_000
    parts, ok = [], True
    cases = [("b", 3.0, (-0.5, 0.5), "ratio2"), ("a", 0.0, (2.0, 8.0), "ratio2"),
             ("b", 3.0, (-0.5, 0.5), "ratio1"), ("b", 4.0, (-0.5, 0.5), "ratio1")]
    for axis, fixed, interval, attr in cases:
        reps = continuity_scan(axis, fixed, interval, n)
        good, r = _bounded(reps, attr)
        ok &= good
        name = f"D_{fixed:g}(b)" if axis == "b" else f"D(a)|b={fixed:g}"
        parts.append(f"{name} osc/l{attr[-1]} {np.array2string(r, precision=3)}")
    return ok, "; ".join(parts)


def c8_clt(quick=False, seed=0):
    n = 2000 if quick else 10_000
    row = clt_check(SimConfig(MapParams(3, 0), n_steps=n, n_walkers=n, seed=seed), [n], 1 / 3, 0.0)[0]
    limit = 0.03 if not quick else 0.05
    return row.ks < limit, f"KS={row.ks:.4f} (< {limit}) var ratio={row.variance_ratio:.4f} n={n}"


def c9_ensemble(quick=False, seed=0):
    n = 100 if quick else 500
    db = F(1, 10**30)
    full = shapiro_wilk(scaled_difference_ensemble(EnsembleSpec(4, db, n, (F(0), F(1, 2)), seed)))
    part = shapiro_wilk(scaled_difference_ensemble(EnsembleSpec(4, db, n, (F(0), F(5, 1000)), seed)))
    mean_ok = abs(full.mean) <= 3 * full.se
    ok = mean_ok and full.p > 0.01 and part.p < 0.05
    return ok, (f"[0,1/2): mean={full.mean:.4f} ({full.mean / full.se:.2f}se) p={full.p:.3f}; "
                f"[0,0.005): p={part.p:.3f} (needs < 0.05); n={n}")


def c10_cross_backend(quick=False, seed=0):
    M = 2**14 if quick else 2**16
    worst = 0.0
    for a in (3, 4, 5):
        for b in (F(0), F(1, 8), F(1, 3)):
            Dg = diffusion(MapParams(float(a), float(b)), M=M, discretization=False).D
            De = float(ee.exact_diffusion(a, b).value)
            worst = max(worst, abs(Dg - De))
    rng = np.random.default_rng(seed)
    a = rng.uniform(2.0, 8.0, 10)
    b = rng.uniform(0.0, 0.5, 10)
    Jp, Dp = transport_scan(a, b)
    Jm, Dm = transport_scan(a, -b)
    sym = max(float(np.max(np.abs(Dp - Dm))), float(np.max(np.abs(Jp + Jm))))
    limit = 5e-4 if quick else 1e-4          # grid error scales like 1/M
    return worst < limit and sym < 1e-8, f"max |D_grid-D_exact|={worst:.2e} (< {limit:g}, M={M}); symmetry defect {sym:.1e}"


CRITERIA = [
    (1, "integer-slope closed forms", c1_closed_forms),
    (2, "drift identities", c2_drift),
    (3, "difference-quotient slopes", c3_quotient_slopes),
    (4, "log-coefficient predictions", c4_log_coefficients),
    (5, "box counting", c5_box_counting),
    (6, "operator inequalities", c6_operator_inequalities),
    (7, "continuity modulus", c7_continuity),
    (8, "CLT", c8_clt),
    (9, "ensemble normality", c9_ensemble),
    (10, "cross-backend agreement", c10_cross_backend),
]


def run_criterion(number: int, quick: bool = False, seed: int = 0) -> CriterionResult:
    num, title, fn = CRITERIA[number - 1]
    t0 = time.perf_counter()
    try:
        ok, detail = fn(quick=quick, seed=seed)
    except Exception as exc:                      # a crash is a failed criterion
        ok, detail = False, f"error: {type(exc).__name__}: {exc}"
    return CriterionResult(num, title, bool(ok), detail, time.perf_counter() - t0)


def run_all(quick: bool = False, seed: int = 0, only=None) -> list:
    nums = only or [c[0] for c in CRITERIA]
    return [run_criterion(n, quick, seed) for n in nums]
