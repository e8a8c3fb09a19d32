"""Perron-Frobenius operator of the affine mod-1 maps.

Two realisations live here.  ``PiecewiseAffineFn`` with ``apply_pf_affine``
is exact (or exact up to float rounding): the image of a piecewise-affine
function is again piecewise affine.  ``ulam_matrix`` discretises the
operator on M equal cells and is what ``invariant_density`` iterates.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, PieceOverflowError
from .map_core import HALF, MapParams, branch_set

PIECE_CAP = 10**6
MERGE_EPS = 1e-15


def _is_exact(v) -> bool:
    return isinstance(v, (int, Fraction))


@dataclass(frozen=True)
class PiecewiseAffineFn:
    """f(x) = slopes[i] * x + intercepts[i] on [breakpoints[i], breakpoints[i+1]).

    Breakpoints run from -1/2 to 1/2 inclusive.  Evaluation is right
    continuous; at x = 1/2 the last piece is used.
    """

    breakpoints: tuple
    slopes: tuple
    intercepts: tuple

    def __post_init__(self):
        n = len(self.slopes)
        if n < 1 or len(self.intercepts) != n or len(self.breakpoints) != n + 1:
            raise ValueError("need n pieces and n+1 breakpoints")
        bp = self.breakpoints
        if bp[0] != -HALF or bp[-1] != HALF:
            raise ValueError("breakpoints must start at -1/2 and end at 1/2")
        if any(bp[i] >= bp[i + 1] for i in range(n)):
            raise ValueError("breakpoints must be strictly increasing")

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, c, exact=True):
        h = HALF if exact else 0.5
        return cls((-h, h), (0 * c,), (c,))

    @classmethod
    def affine(cls, slope, intercept, exact=True):
        h = HALF if exact else 0.5
        return cls((-h, h), (slope,), (intercept,))

    @classmethod
    def identity(cls, exact=True):
        one = Fraction(1) if exact else 1.0
        return cls.affine(one, 0 * one, exact)

    @classmethod
    def step(cls, edges: Sequence, values: Sequence):
        """Piecewise constant with ``values[i]`` on [edges[i], edges[i+1])."""
        return cls(tuple(edges), tuple(0 * v for v in values), tuple(values))

    @classmethod
    def from_pieces(cls, breakpoints, slopes, intercepts, exact=None):
        """Build after merging adjacent identical pieces (and, on the float
        path, breakpoints closer than 1e-15)."""
        if exact is None:
            exact = all(_is_exact(x) for x in breakpoints[1:-1])
        bp, sl, ic = [breakpoints[0]], [], []
        for i in range(len(slopes)):
            right = breakpoints[i + 1]
            if not exact and right - bp[-1] < MERGE_EPS and i + 1 < len(slopes):
                continue
            if sl and sl[-1] == slopes[i] and ic[-1] == intercepts[i]:
                bp[-1] = right
                continue
            sl.append(slopes[i])
            ic.append(intercepts[i])
            bp.append(right)
        if bp[-1] != breakpoints[-1]:
            bp[-1] = breakpoints[-1]
        if len(sl) > PIECE_CAP:
            raise PieceOverflowError(f"{len(sl)} pieces exceed cap {PIECE_CAP}", len(sl))
        return cls(tuple(bp), tuple(sl), tuple(ic))

    # -- evaluation -------------------------------------------------------
    @property
    def n_pieces(self) -> int:
        return len(self.slopes)

    def piece_index(self, x) -> int:
        i = bisect.bisect_right(self.breakpoints, x) - 1
        return min(max(i, 0), self.n_pieces - 1)

    def __call__(self, x):
        i = self.piece_index(x)
        return self.slopes[i] * x + self.intercepts[i]

    def left_limit(self, x):
        i = bisect.bisect_left(self.breakpoints, x) - 1
        i = min(max(i, 0), self.n_pieces - 1)
        return self.slopes[i] * x + self.intercepts[i]

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        bp = np.array([float(v) for v in self.breakpoints])
        idx = np.clip(np.searchsorted(bp, xs, side="right") - 1, 0, self.n_pieces - 1)
        s = np.array([float(v) for v in self.slopes])
        c = np.array([float(v) for v in self.intercepts])
        return s[idx] * xs + c[idx]

    # -- closed-form functionals -------------------------------------------
    def integral(self):
        tot = 0
        for i in range(self.n_pieces):
            x0, x1 = self.breakpoints[i], self.breakpoints[i + 1]
            tot += self.slopes[i] * (x1 * x1 - x0 * x0) / 2 + self.intercepts[i] * (x1 - x0)
        return tot

    def moment(self, k: int = 1):
        """Integral of x**k f(x)."""
        tot = 0
        for i in range(self.n_pieces):
            x0, x1 = self.breakpoints[i], self.breakpoints[i + 1]
            s, c = self.slopes[i], self.intercepts[i]
            tot += s * (x1 ** (k + 2) - x0 ** (k + 2)) / (k + 2) + c * (x1 ** (k + 1) - x0 ** (k + 1)) / (k + 1)
        return tot

    def l1_norm(self):
        tot = 0
        for i in range(self.n_pieces):
            x0, x1 = self.breakpoints[i], self.breakpoints[i + 1]
            s, c = self.slopes[i], self.intercepts[i]
            f0, f1 = s * x0 + c, s * x1 + c
            if f0 * f1 >= 0:
                tot += abs(f0 + f1) * (x1 - x0) / 2
            else:
                r = -c / s
                tot += (abs(f0) * (r - x0) + abs(f1) * (x1 - r)) / 2
        return tot

    def total_variation(self):
        """Variation of f extended by zero outside I."""
        n = self.n_pieces
        tv = abs(self.slopes[0] * self.breakpoints[0] + self.intercepts[0])
        for i in range(n):
            x0, x1 = self.breakpoints[i], self.breakpoints[i + 1]
            tv += abs(self.slopes[i]) * (x1 - x0)
            if i + 1 < n:
                tv += abs((self.slopes[i + 1] - self.slopes[i]) * x1 + self.intercepts[i + 1] - self.intercepts[i])
        tv += abs(self.slopes[-1] * self.breakpoints[-1] + self.intercepts[-1])
        return tv

    def inner(self, other: "PiecewiseAffineFn"):
        """Integral of f * g over I, exact on the common refinement."""
        pts = sorted(set(self.breakpoints) | set(other.breakpoints))
        tot = 0
        for x0, x1 in zip(pts[:-1], pts[1:]):
            mid = (x0 + x1) / 2
            i, j = self.piece_index(mid), other.piece_index(mid)
            s1, c1 = self.slopes[i], self.intercepts[i]
            s2, c2 = other.slopes[j], other.intercepts[j]
            # (s1 x + c1)(s2 x + c2) integrated
            tot += (s1 * s2 * (x1**3 - x0**3) / 3
                    + (s1 * c2 + s2 * c1) * (x1**2 - x0**2) / 2
                    + c1 * c2 * (x1 - x0))
        return tot

    # -- arithmetic --------------------------------------------------------
    def _combine(self, other, op):
        pts = sorted(set(self.breakpoints) | set(other.breakpoints))
        sl, ic = [], []
        for x0, x1 in zip(pts[:-1], pts[1:]):
            mid = (x0 + x1) / 2
            i, j = self.piece_index(mid), other.piece_index(mid)
            sl.append(op(self.slopes[i], other.slopes[j]))
            ic.append(op(self.intercepts[i], other.intercepts[j]))
        return PiecewiseAffineFn.from_pieces(pts, sl, ic)

    def __add__(self, other):
        if isinstance(other, PiecewiseAffineFn):
            return self._combine(other, lambda u, v: u + v)
        return PiecewiseAffineFn(self.breakpoints, self.slopes, tuple(c + other for c in self.intercepts))

    def __sub__(self, other):
        if isinstance(other, PiecewiseAffineFn):
            return self._combine(other, lambda u, v: u - v)
        return self + (-other)

    def scale(self, k):
        return PiecewiseAffineFn(self.breakpoints, tuple(k * s for s in self.slopes),
                                 tuple(k * c for c in self.intercepts))

    def times_affine(self, slope, intercept):
        """Product with the affine function slope*x + intercept.

        Only defined when self is piecewise constant (otherwise the product
        is quadratic and leaves the class).
        """
        if any(s != 0 for s in self.slopes):
            raise ValueError("times_affine needs a piecewise-constant function")
        return PiecewiseAffineFn(self.breakpoints, tuple(c * slope for c in self.intercepts),
                                 tuple(c * intercept for c in self.intercepts))

    def compose_map(self, params: MapParams) -> "PiecewiseAffineFn":
        """g o T as a piecewise-affine function."""
        a, b = params.a, params.b
        bs = branch_set(params)
        pts, sl, ic = [bs.endpoints[0][0]], [], []
        for k, (lo, hi) in zip(bs.labels, bs.endpoints):
            # on the branch T(x) = a x + b - k; breakpoints c of g pull back
            inner = [(c + k - b) / a for c in self.breakpoints[1:-1]]
            cuts = [lo] + [x for x in inner if lo < x < hi] + [hi]
            for x0, x1 in zip(cuts[:-1], cuts[1:]):
                y = a * ((x0 + x1) / 2) + b - k
                j = self.piece_index(y)
                s, c = self.slopes[j], self.intercepts[j]
                sl.append(s * a)
                ic.append(s * (b - k) + c)
                pts.append(x1)
        return PiecewiseAffineFn.from_pieces(pts, sl, ic)


def apply_pf_affine(params: MapParams, f: PiecewiseAffineFn) -> PiecewiseAffineFn:
    """Transfer operator image (1/a) * sum over preimage sheets of f."""
    a, b = params.a, params.b
    exact = _is_exact(a) and _is_exact(b) and all(_is_exact(x) for x in f.breakpoints[1:-1])
    h = HALF if exact else 0.5
    lo_thr, hi_thr = -a * h + b, a * h + b

    def reduce(y):
        return y - math.floor(y + h)

    cand = {-h, h, reduce(lo_thr), reduce(hi_thr)}
    for c in f.breakpoints[1:-1]:
        cand.add(reduce(a * c + b))
    pts = sorted(cand)
    if not exact:
        merged = [pts[0]]
        for x in pts[1:]:
            if x - merged[-1] >= MERGE_EPS:
                merged.append(x)
        merged[-1] = h
        pts = merged
    inv_a = 1 / a if not exact else Fraction(1) / a
    sl, ic = [], []
    for x0, x1 in zip(pts[:-1], pts[1:]):
        mid = (x0 + x1) / 2
        s_tot, c_tot = 0 * inv_a, 0 * inv_a
        for m in range(math.ceil(lo_thr - mid), math.ceil(hi_thr - mid)):
            y = (mid + m - b) * inv_a
            if not -h <= y < h:
                continue
            j = f.piece_index(y)
            s, c = f.slopes[j], f.intercepts[j]
            # f((x + m - b)/a) = s/a * x + s (m - b)/a + c
            s_tot += s * inv_a
            c_tot += s * (m - b) * inv_a + c
        sl.append(s_tot * inv_a)
        ic.append(c_tot * inv_a)
    return PiecewiseAffineFn.from_pieces(pts, sl, ic, exact=exact)


def pf_iterate(params: MapParams, f: PiecewiseAffineFn, n: int) -> PiecewiseAffineFn:
    for _ in range(n):
        f = apply_pf_affine(params, f)
    return f


# ----------------------------------------------------------------------------
# Ulam discretisation
# ----------------------------------------------------------------------------

@dataclass
class GridDensity:
    """Cell averages of a density on M equal cells of I."""

    values: np.ndarray
    normalized: bool = True
    residual: float | None = None
    iterations: int | None = None

    @property
    def M(self) -> int:
        return len(self.values)

    @property
    def centers(self) -> np.ndarray:
        return cell_centers(self.M)

    def integral(self) -> float:
        return float(np.sum(self.values)) / self.M

    def total_variation(self) -> float:
        v = self.values
        return float(abs(v[0]) + np.sum(np.abs(np.diff(v))) + abs(v[-1]))


def cell_centers(M: int) -> np.ndarray:
    return (np.arange(M) + 0.5) / M - 0.5


@dataclass
class UlamMatrix:
    """Row-stochastic W with W[j, i] = m(C_j and T^-1 C_i) / m(C_j)."""

    matrix: sp.csr_matrix
    params: MapParams
    _pushT: sp.csr_matrix = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return self.matrix.shape[0]

    def push(self, v: np.ndarray) -> np.ndarray:
        """Push cell averages of a density (or signed measure) forward."""
        if self._pushT is None:
            self._pushT = self.matrix.T.tocsr()
        return self._pushT @ v

    def stationary(self, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
        return _power_iterate(self, tol, max_iter)[0]


def ulam_matrix(params: MapParams, M: int) -> UlamMatrix:
    """Analytic Ulam matrix: overlaps of each cell image with all cells.

    Cell j maps under the lift onto [s0, s0 + a) in units of cells, where
    s0 = (a x_j + b + 1/2) M and x_j is the left edge of the cell; the
    covered cells are taken mod M.
    """
    a, b = float(params.a), float(params.b)
    span = int(math.ceil(a)) + 2
    j = np.arange(M)
    left = j / M - 0.5
    s0 = (a * left + b + 0.5) * M
    s1 = s0 + a
    first = np.floor(s0).astype(np.int64)
    rows, cols, vals = [], [], []
    for t in range(span):
        cell = first + t
        lo = np.maximum(s0, cell)
        hi = np.minimum(s1, cell + 1)
        w = np.clip(hi - lo, 0.0, None) / a
        keep = w > 0
        rows.append(j[keep])
        cols.append(np.mod(cell[keep], M))
        vals.append(w[keep])
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(M, M))
    W.sum_duplicates()
    rs = np.asarray(W.sum(axis=1)).ravel()
    W = sp.diags(1.0 / rs) @ W
    return UlamMatrix(W.tocsr(), params)


def _power_iterate(U: UlamMatrix, tol, max_iter):
    M = U.M
    v = np.ones(M)
    res = np.inf
    for it in range(1, max_iter + 1):
        w = U.push(v)
        w *= M / w.sum()
        res = float(np.abs(w - v).sum()) / M
        v = w
        if res < tol:
            return v, res, it
    raise ConvergenceError(f"power iteration stalled at L1 residual {res:.3e}", res, max_iter)


def invariant_density(params: MapParams, M: int = 2**16, tol: float = 1e-12,
                      max_iter: int = 100_000, ulam: UlamMatrix | None = None) -> GridDensity:
    """Invariant density on M cells by power iteration from the uniform density."""
    params.require_expanding() if not params.is_integer_slope else None
    U = ulam if ulam is not None else ulam_matrix(params, M)
    v, res, it = _power_iterate(U, tol, max_iter)
    return GridDensity(v, True, res, it)


def density_variation_bound(params: MapParams) -> float:
    """Var(h) <= 2 C1 with C1 = 1 + a/(a-2)."""
    a = float(params.a)
    return 2.0 * (1.0 + a / (a - 2.0))


def total_variation(f) -> float:
    return f.total_variation()


# ----------------------------------------------------------------------------
# inequality checks
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class LasotaYorkeReport:
    lhs: object
    rhs: object
    passed: bool


def check_lasota_yorke(params: MapParams, f: PiecewiseAffineFn) -> LasotaYorkeReport:
    """Var(Pf) against (2/a) Var(f) + 2 |int f|, using the exact operator."""
    Pf = apply_pf_affine(params, f)
    lhs = Pf.total_variation()
    rhs = 2 * f.total_variation() / params.a + 2 * abs(f.integral())
    if _is_exact(lhs) and _is_exact(rhs):
        ok = lhs <= rhs
    else:
        ok = float(lhs) <= float(rhs) * (1 + 1e-12) + 1e-12
    return LasotaYorkeReport(lhs, rhs, bool(ok))


def duality_residual(params: MapParams, f: PiecewiseAffineFn, g: PiecewiseAffineFn):
    """|int (Pf) g - int f (g o T)|; zero in rational arithmetic."""
    return abs(apply_pf_affine(params, f).inner(g) - f.inner(g.compose_map(params)))


@dataclass(frozen=True)
class MixingReport:
    gamma_hat: float
    bound: float
    norms: np.ndarray
    fit_range: tuple
    passed: bool


def mixing_rate(params: MapParams, M: int = 2**16, n_max: int = 200, f=None,
                h: GridDensity | None = None, slack: float = 0.05,
                floor: float = 1e-11) -> MixingReport:
    """Decay rate of |P^n f|_1 for a mean-zero f on the Ulam grid.

    ``f`` defaults to x - E_h[x] * 1 projected to mean zero, i.e. a BV
    function with zero Lebesgue integral.  The rate is the exponential of
    the least-squares slope of ln |P^n f|_1 over the stretch before the
    norm reaches the rounding floor, skipping the first quarter.
    """
    U = ulam_matrix(params, M)
    x = cell_centers(M)
    if f is None:
        v = x.copy()
    elif callable(f):
        v = np.asarray(f(x), dtype=float)
    else:
        v = np.asarray(f, dtype=float)
    if h is not None:
        v = v - h.values * v.mean()
    else:
        v = v - v.mean()
    norms = [np.abs(v).sum() / M]
    for _ in range(n_max):
        v = U.push(v)
        norms.append(np.abs(v).sum() / M)
        if norms[-1] < floor * norms[0]:
            break
    norms = np.array(norms)
    n_end = len(norms)
    n0 = n_end // 4
    ns = np.arange(n0, n_end)
    if len(ns) < 3:
        ns = np.arange(n_end)
    slope = np.polyfit(ns, np.log(norms[ns]), 1)[0]
    g = float(np.exp(slope))
    bound = 2.0 / float(params.a)
    return MixingReport(g, bound, norms, (int(ns[0]), int(ns[-1])), g <= bound + slack)
