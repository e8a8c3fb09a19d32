"""Box counting of sampled graphs and the fits used on the resulting curves.

Counting is column based.  Columns of width eps start at the left end of
the parameter interval and boxes in y are anchored at y = 0.  Each column
covers the graph's linear interpolant on it: the samples inside plus the
interpolated values at both column edges.  With that convention N(eps) is
exactly monotone along the dyadic schedule and every column, even one
with no sample in it, is counted.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

CUT_FACTOR = 1e3
DEFAULT_SEEDS = ((1.0, -1.0, 1.0), (1.0, -0.2, 2.0), (1.0, -5.0, 0.5))


@dataclass(frozen=True)
class GraphSample:
    grid: np.ndarray
    values: np.ndarray
    label: str = "a"

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float)
        y = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "values", y)
        if x.ndim != 1 or x.shape != y.shape:
            raise DomainError("grid and values must be 1-d of equal length")
        if x.size < 2:
            raise DomainError("need at least 2 samples")
        rng = x[-1] - x[0]
        if not rng > 0:
            raise DomainError("grid must be strictly increasing")
        ideal = x[0] + rng * np.arange(x.size) / (x.size - 1)
        if np.max(np.abs(x - ideal)) > 1e-12 * rng:
            raise DomainError("grid is not uniform to 1e-12 relative")
        if not np.all(np.isfinite(y)):
            raise DomainError("values must be finite")

    @classmethod
    def from_function(cls, f, lo: float, hi: float, n: int, label: str = "a") -> "GraphSample":
        x = np.linspace(lo, hi, n)
        return cls(x, f(x), label)

    @property
    def n(self) -> int:
        return self.grid.size

    @property
    def extent(self) -> float:
        return float(self.grid[-1] - self.grid[0])

    @property
    def spacing(self) -> float:
        return self.extent / (self.n - 1)

    @property
    def eps_cut(self) -> float:
        """Resolution limit: below this the count starts seeing single samples."""
        return self.spacing * CUT_FACTOR

    def window(self, lo: float, hi: float) -> "GraphSample":
        i0 = int(np.searchsorted(self.grid, lo, side="left"))
        i1 = int(np.searchsorted(self.grid, hi, side="right"))
        return GraphSample(self.grid[i0:i1], self.values[i0:i1], self.label)


def box_count(sample: GraphSample, eps: float) -> int:
    """Number of eps-boxes covering the graph, column by column."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    x, y = sample.grid, sample.values
    x0, ext = x[0], sample.extent
    ncols = max(1, int(math.ceil(ext / eps - 1e-9)))
    idx = np.minimum(np.floor((x - x0) / eps + 1e-9).astype(np.int64), ncols - 1)
    edges_x = np.minimum(x0 + eps * np.arange(ncols + 1), x[-1])
    edges_y = np.interp(edges_x, x, y)
    lo = np.minimum(edges_y[:-1], edges_y[1:])
    hi = np.maximum(edges_y[:-1], edges_y[1:])
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    cols = idx[starts]
    lo[cols] = np.minimum(lo[cols], np.minimum.reduceat(y, starts))
    hi[cols] = np.maximum(hi[cols], np.maximum.reduceat(y, starts))
    return int(np.sum(np.floor(hi / eps) - np.floor(lo / eps) + 1))


@dataclass
class BoxCountCurve:
    eps: np.ndarray
    N: np.ndarray
    eps_cut: float
    resolved: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.resolved is None:
            self.resolved = self.eps >= self.eps_cut * (1 - 1e-12)

    @property
    def t(self) -> np.ndarray:
        """-ln eps."""
        return -np.log(self.eps)

    @property
    def N_eps(self) -> np.ndarray:
        return self.N * self.eps

    def select(self, t_range) -> np.ndarray:
        lo, hi = t_range
        return self.resolved & (self.t >= lo) & (self.t <= hi)


def eps_schedule(extent: float, eps_min: float, ratio: float = 0.5) -> np.ndarray:
    """Geometric schedule from extent/4 down to eps_min (inclusive)."""
    if not 0 < ratio < 1:
        raise DomainError("ratio must lie in (0, 1)")
    out = []
    e = extent / 4
    while e >= eps_min * (1 - 1e-12):
        out.append(e)
        e *= ratio
    return np.array(out)


def box_count_curve(sample: GraphSample, eps=None, eps_min: float | None = None,
                    threads: int = 1, eps_cut: float | None = None) -> BoxCountCurve:
    """N(eps) over a schedule; defaults to extent/4 halving down to eps_cut.

    ``eps_cut`` overrides the resolution guard (spacing * 1e3), e.g. when
    a fit range is prescribed externally.
    """
    cut = sample.eps_cut if eps_cut is None else float(eps_cut)
    if eps is None:
        eps = eps_schedule(sample.extent, cut if eps_min is None else eps_min)
    eps = np.sort(np.asarray(eps, dtype=float))[::-1]
    if eps.size == 0:
        raise DomainError("empty eps schedule (grid too coarse for its extent)")
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            N = list(ex.map(lambda e: box_count(sample, e), eps))
    else:
        N = [box_count(sample, e) for e in eps]
    return BoxCountCurve(eps, np.array(N, dtype=np.int64), cut)


@dataclass
class FitResult:
    model: str
    params: dict
    residual: float
    fit_range: tuple
    iterations: int
    converged: bool
    n_points: int
    grad_norm: float = 0.0
    seed_fits: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"model": self.model, "params": self.params, "residual": self.residual,
                "range": list(self.fit_range), "converged": self.converged,
                "iterations": self.iterations, "n_points": self.n_points,
                "grad_norm": self.grad_norm, "seed_fits": self.seed_fits}


def fit_power_law(curve: BoxCountCurve, t_range=(0.5, 6.0)) -> FitResult:
    """Least-squares line through (ln eps, ln N); B = -slope."""
    sel = curve.select(t_range)
    if sel.sum() < 3:
        raise DomainError(f"only {int(sel.sum())} resolved points in -ln eps range {t_range}")
    le, lN = np.log(curve.eps[sel]), np.log(curve.N[sel].astype(float))
    A = np.vstack([le, np.ones_like(le)]).T
    coef, *_ = np.linalg.lstsq(A, lN, rcond=None)
    r = lN - A @ coef
    return FitResult("power", {"B": float(-coef[0]), "lnK": float(coef[1])},
                     float(np.linalg.norm(r)), tuple(t_range), 1, True, int(sel.sum()))


def _logcorr_residual(theta, t, z):
    lnK5, K6, alpha = theta
    u = 1.0 - K6 * t
    if np.any(u <= 0):
        return None, None
    lu = np.log(u)
    r = z - (lnK5 + alpha * lu)
    Jm = np.empty((t.size, 3))            # Jacobian of the model
    Jm[:, 0] = 1.0
    Jm[:, 1] = -alpha * t / u
    Jm[:, 2] = lu
    return r, Jm


def levenberg_marquardt(t, z, theta0, max_iter: int = 500, gtol: float = 1e-9,
                        xtol: float = 1e-14):
    """Damped Gauss-Newton on the log-corrected model; (theta, r, iters, gnorm, ok)."""
    theta = np.array(theta0, dtype=float)
    r, Jm = _logcorr_residual(theta, t, z)
    if r is None:
        raise DomainError("initial seed outside the model domain")
    cost = float(r @ r)
    lam = 1e-3
    it = 0
    for it in range(1, max_iter + 1):
        g = Jm.T @ r
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= gtol:
            return theta, r, it, gnorm, True
        A = Jm.T @ Jm
        improved = False
        while lam < 1e16:
            step = np.linalg.solve(A + lam * np.diag(np.maximum(np.diag(A), 1e-12)), g)
            cand = theta + step
            r2, J2 = _logcorr_residual(cand, t, z)
            if r2 is not None and float(r2 @ r2) < cost:
                improved = True
                break
            lam *= 10.0
        if not improved:
            break
        small = np.max(np.abs(step)) <= xtol * (1.0 + np.max(np.abs(theta)))
        theta, r, Jm, cost = cand, r2, J2, float(r2 @ r2)
        lam = max(lam / 10.0, 1e-12)
        if small:
            break
    gnorm = float(np.max(np.abs(Jm.T @ r)))
    return theta, r, it, gnorm, gnorm <= gtol


def fit_log_corrected(curve: BoxCountCurve, t_range=(0.5, 9.0), seeds=DEFAULT_SEEDS,
                      gtol: float = 1e-9) -> FitResult:
    """Fit N eps = K5 (1 + K6 ln eps)^alpha, i.e. ln(N eps) vs t = -ln eps.

    The first seed gives the reported fit; the others are refitted and
    listed in ``seed_fits`` so the sensitivity of alpha can be judged.
    """
    sel = curve.select(t_range)
    if sel.sum() < 6:
        raise DomainError(f"log-corrected fit needs 6 resolved points, got {int(sel.sum())}")
    t = curve.t[sel]
    z = np.log(curve.N_eps[sel])
    fits = []
    for s in seeds:
        K5, K6, al = s
        try:
            theta, r, it, gn, ok = levenberg_marquardt(t, z, (math.log(K5), K6, al), gtol=gtol)
        except (DomainError, np.linalg.LinAlgError):
            fits.append({"seed": list(s), "converged": False})
            continue
        fits.append({"seed": list(s), "K5": float(math.exp(theta[0])), "K6": float(theta[1]),
                     "alpha": float(theta[2]), "residual": float(np.linalg.norm(r)),
                     "iterations": it, "grad_norm": gn, "converged": bool(ok)})
    main = fits[0]
    if "K5" not in main:
        return FitResult("log_corrected", {}, math.inf, tuple(t_range), 0, False, int(sel.sum()),
                         math.inf, fits)
    params = {k: main[k] for k in ("K5", "K6", "alpha")}
    return FitResult("log_corrected", params, main["residual"], tuple(t_range), main["iterations"],
                     main["converged"], int(sel.sum()), main["grad_norm"], fits)


def fit_log_exponent(curve: BoxCountCurve, t_range, K6: float = -1.0) -> FitResult:
    """alpha with K6 held fixed: linear fit of ln(N eps) on ln(1 + K6 ln eps).

    With K6 = -1 this is the covering-bound form eps^-1 (1 - ln eps)^alpha.
    Unlike the three-parameter fit it stays identifiable on flat curves.
    """
    sel = curve.select(t_range)
    if sel.sum() < 3:
        raise DomainError(f"only {int(sel.sum())} resolved points in -ln eps range {t_range}")
    u = np.log(1.0 - K6 * curve.t[sel])
    z = np.log(curve.N_eps[sel])
    A = np.vstack([u, np.ones_like(u)]).T
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    r = z - A @ coef
    return FitResult("log_fixed", {"K5": float(np.exp(coef[1])), "K6": K6, "alpha": float(coef[0])},
                     float(np.linalg.norm(r)), tuple(t_range), 1, True, int(sel.sum()))


@dataclass(frozen=True)
class CoveringBound:
    K: float
    argmax: int
    eps_at_max: float
    n_resolved: int

    @property
    def ok(self) -> bool:
        """Finite sup attained before the last resolved scale."""
        return math.isfinite(self.K) and self.argmax < self.n_resolved - 1


def covering_bound(curve: BoxCountCurve) -> CoveringBound:
    """K = sup N eps / (1 - ln eps)^2 over the resolved part of the curve."""
    sel = curve.resolved
    if not sel.any():
        raise DomainError("no resolved points")
    eps, N = curve.eps[sel], curve.N[sel]
    ratio = N * eps / (1.0 - np.log(eps)) ** 2
    k = int(np.argmax(ratio))
    return CoveringBound(float(ratio[k]), k, float(eps[k]), int(sel.sum()))


@dataclass
class LocalDimensionRow:
    center: float
    n_samples: int
    B: float
    B_smooth: float
    alpha: float | None
    converged: bool
    curve: BoxCountCurve = field(repr=False)


def local_dimension_scan(sample: GraphSample, width: float, centers=None,
                         t_range=None, smooth: bool = True, min_samples: int = 1000,
                         log_fit: bool = True, eps_cut: float | None = None) -> list:
    """Power-law (and log-corrected) fits on windows of the given width.

    ``t_range`` defaults to the full resolved range of each window.  The
    optional 3-point running average of B is stored in ``B_smooth``.
    """
    if centers is None:
        lo, hi = sample.grid[0] + width / 2, sample.grid[-1] - width / 2
        n = max(1, int(round((hi - lo) / width)) + 1)
        centers = np.linspace(lo, hi, n)
    rows = []
    for c in centers:
        w = sample.window(c - width / 2, c + width / 2)
        if w.n < min_samples:
            raise DomainError(f"window at {c} holds {w.n} < {min_samples} samples")
        curve = box_count_curve(w, eps_cut=eps_cut)
        tr = t_range or (-math.inf, math.inf)
        B = fit_power_law(curve, tr).params["B"]
        alpha, conv = None, False
        if log_fit and curve.select(tr).sum() >= 6:
            lf = fit_log_corrected(curve, tr)
            alpha, conv = lf.params.get("alpha"), lf.converged
        rows.append(LocalDimensionRow(float(c), w.n, B, B, alpha, conv, curve))
    if smooth and len(rows) >= 3:
        Bs = np.array([r.B for r in rows])
        sm = Bs.copy()
        sm[1:-1] = (Bs[:-2] + Bs[1:-1] + Bs[2:]) / 3
        for r, v in zip(rows, sm):
            r.B_smooth = float(v)
    return rows
