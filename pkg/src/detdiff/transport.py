"""Drift J and diffusion coefficient D.

Three routes:

* ``method="grid"``: Green-Kubo sum of correlations c_n of the centred
  displacement, with P realised by the Ulam matrix and a geometric tail
  bound at rate 2/a.
* ``method="exact"``: closed-form Green-Kubo solve on the invariant
  step-function space (see ``_pykernels``); valid for every a >= 2 and
  used for large parameter scans.
* piecewise-affine correlations when ``h`` is a ``PiecewiseAffineFn``
  (integer slopes, h = 1), rational when the inputs are.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, NumericalRefusal, ToleranceUnreachable
from .map_core import MapParams, Observable, psi
from .transfer_op import (GridDensity, PiecewiseAffineFn, UlamMatrix, apply_pf_affine,
                          cell_centers, invariant_density, ulam_matrix)

GRID_MIN_SLOPE = 2.0 + 1e-3


@dataclass
class CorrelationSeries:
    c: np.ndarray | list
    N: int
    tail_ratio: float
    tail_const: float

    @property
    def tail_bound(self) -> float:
        r = self.tail_ratio
        return self.tail_const * r ** (self.N + 1) / (1.0 - r)

    def green_kubo(self, upto: int | None = None):
        n = self.N if upto is None else upto
        c = self.c
        return c[0] / 2 + sum(c[1:n + 1])


@dataclass
class TransportResult:
    J: float
    D: float
    method: str
    error_estimate: float
    series: CorrelationSeries | None = None
    tail_bound: float = 0.0
    discretization: float | None = None
    info: dict = field(default_factory=dict)


def tail_constants(params: MapParams) -> tuple[float, float]:
    """(rate, constant) of |c_n| <= const * rate**n on the grid path.

    rate 2/a from the Lasota-Yorke contraction; const = 4 C1 C3^2 with
    C1 = 1 + a/(a-2) bounding Var(h) / 2 and C3 = 2(a+1) bounding Var(psi).
    """
    a = float(params.a)
    if a <= 2:
        raise DomainError("geometric tail needs a > 2")
    C1 = 1.0 + a / (a - 2.0)
    C3 = 2.0 * (a + 1.0)
    return 2.0 / a, 4.0 * C1 * C3**2


def integer_tail_constants(params: MapParams) -> tuple[float, float]:
    """Sharper bound at integer slope: |c_n| <= (a-1)^2/4 * a^-n."""
    a = float(params.a)
    return 1.0 / a, (a - 1.0) ** 2 / 4.0


def terms_for_tol(rate: float, const: float, tol: float) -> int:
    """Smallest N with const * rate^(N+1) / (1 - rate) < tol."""
    n = math.log(tol * (1.0 - rate) / const) / math.log(rate) - 1.0
    return max(1, int(math.ceil(n)) + 1)


def drift(params: MapParams, h: GridDensity) -> float:
    """b + (a-1) * integral of x h(x), integrated exactly cell by cell."""
    if not h.normalized:
        raise ValueError("density must be normalized")
    x = h.centers
    return float(params.b) + (float(params.a) - 1.0) * float(np.dot(h.values, x)) / h.M


def _grid_series(params: MapParams, h: GridDensity, psi_hat: Observable, N: int,
                 U: UlamMatrix | None = None) -> np.ndarray:
    M = h.M
    U = U if U is not None else ulam_matrix(params, M)
    x = cell_centers(M)
    ph = psi_hat(x)
    f = ph * h.values
    c = np.empty(N + 1)
    slope = float(psi_hat.slope_coeff)
    c[0] = float(np.dot(h.values, ph * ph + slope**2 / (12.0 * M * M))) / M
    for n in range(1, N + 1):
        f = U.push(f)
        c[n] = float(np.dot(f, ph)) / M
    return c


def correlation_series(params: MapParams, h, psi_hat: Observable | None = None, N: int = 50,
                       ulam: UlamMatrix | None = None) -> CorrelationSeries:
    """c_n = integral of P^n(psi_hat h) * psi_hat for n = 0..N."""
    if isinstance(h, PiecewiseAffineFn):
        if psi_hat is None:
            J = h.times_affine(params.a - 1, params.b).integral()
            psi_hat = psi(params).centered(J)
        f = h.times_affine(psi_hat.slope_coeff, psi_hat.offset - psi_hat.shift)
        mean = f.integral()
        if abs(float(mean)) > 1e-12:
            raise ValueError(f"psi_hat not centred: integral {float(mean):.3e}")
        g = PiecewiseAffineFn.affine(psi_hat.slope_coeff, psi_hat.offset - psi_hat.shift,
                                     exact=not isinstance(h.breakpoints[0], float))
        c = []
        for _ in range(N + 1):
            c.append(f.inner(g))
            f = apply_pf_affine(params, f)
        rate, const = integer_tail_constants(params) if params.is_integer_slope else tail_constants(params)
        return CorrelationSeries(c, N, rate, const)
    if psi_hat is None:
        psi_hat = psi(params).centered(drift(params, h))
    x = h.centers
    mean = float(np.dot(psi_hat(x), h.values)) / h.M
    if abs(mean) > 1e-12:
        raise ValueError(f"psi_hat not centred: integral {mean:.3e}")
    rate, const = tail_constants(params)
    return CorrelationSeries(_grid_series(params, h, psi_hat, N, ulam), N, rate, const)


def _grid_D(params, M, tol, max_terms, h=None):
    U = ulam_matrix(params, M)
    if h is None or h.M != M:
        h = invariant_density(params, M, ulam=U)
    J = drift(params, h)
    rate, const = tail_constants(params)
    N = terms_for_tol(rate, const, tol)
    if N > max_terms:
        achieved = const * rate ** (max_terms + 1) / (1.0 - rate)
        raise ToleranceUnreachable(f"tail bound {achieved:.3e} > tol {tol:.1e} within {max_terms} terms", achieved)
    series = CorrelationSeries(_grid_series(params, h, psi(params).centered(J), N, U), N, rate, const)
    return J, float(series.green_kubo()), series


def diffusion(params: MapParams, h=None, tol: float = 1e-10, M: int = 2**16,
              method: str = "grid", discretization: bool = True,
              max_terms: int = 20000) -> TransportResult:
    """Diffusion coefficient D = c_0/2 + sum_{n>=1} c_n and drift J.

    ``method="grid"`` truncates where the 2/a geometric tail drops below
    ``tol`` and, when ``discretization`` is set, repeats the computation on
    2M cells; the difference is reported as the discretisation estimate.
    ``method="exact"`` uses the step-space solver and ignores ``h``/``M``.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    if method == "exact":
        a, b = float(params.a), float(params.b)
        nt = kernels.default_nterms(a)
        J, D = kernels.transport_batch(np.array([a]), np.array([b]), nt)
        err = step_error_estimate(a, float(D[0]), nt)
        return TransportResult(float(J[0]), float(D[0]), "exact", err, info={"nterms": nt})
    if method != "grid":
        raise ValueError(f"unknown method {method!r}")
    if isinstance(h, PiecewiseAffineFn):
        rate, const = integer_tail_constants(params) if params.is_integer_slope else tail_constants(params)
        N = terms_for_tol(rate, const, tol)
        series = correlation_series(params, h, None, N)
        J = float(h.times_affine(params.a - 1, params.b).integral())
        return TransportResult(J, float(series.green_kubo()), "exact", series.tail_bound, series, series.tail_bound)
    if float(params.a) <= GRID_MIN_SLOPE:
        raise NumericalRefusal(f"grid path refuses a={float(params.a)} <= {GRID_MIN_SLOPE}")
    fparams = params.as_float()
    M = h.M if isinstance(h, GridDensity) else M
    J, D, series = _grid_D(fparams, M, tol, max_terms, h)
    disc = None
    if discretization:
        _, D2, _ = _grid_D(fparams, 2 * M, tol, max_terms)
        disc = abs(D2 - D)
    err = series.tail_bound + (disc or 0.0)
    return TransportResult(J, D, "grid", err, series, series.tail_bound, disc, {"M": M})


def step_error_estimate(a: float, D: float, nterms: int) -> float:
    """Heuristic error of the step-space solver: truncation plus rounding."""
    return (a + 1.0) ** 2 * a ** (-float(nterms)) + 1e-13 * (1.0 + abs(D))


def transport_scan(a, b, nterms: int | None = None):
    """Vectorised (J, D) over parameter arrays via the compiled kernel."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 2) or np.any(np.abs(b) > 0.5):
        raise DomainError("parameters outside a >= 2, |b| <= 1/2")
    return kernels.transport_batch(a, b, nterms)


def modulus_ell(k: int, u: float) -> float:
    """l_k(u) = u (1 + |ln u|)^k."""
    if not u > 0:
        raise DomainError("u must be positive")
    if k not in (1, 2):
        raise DomainError("k must be 1 or 2")
    return u * (1.0 + abs(math.log(u))) ** k


@dataclass(frozen=True)
class ModulusReport:
    u: float
    osc: float
    ratio1: float
    ratio2: float
    n_windows: int


def oscillation(x: np.ndarray, y: np.ndarray, u: float) -> tuple[float, int]:
    """Largest max-min of y over consecutive windows of width u tiling x."""
    idx = np.floor((x - x[0]) / u * (1 + 1e-12)).astype(np.int64)
    idx = np.minimum(idx, idx[-1])
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    hi = np.maximum.reduceat(y, starts)
    lo = np.minimum.reduceat(y, starts)
    return float(np.max(hi - lo)), len(starts)


def continuity_scan(axis: str, fixed: float, interval: tuple[float, float], n_points: int,
                    widths=None, quantity: str = "D", nterms: int | None = None) -> list[ModulusReport]:
    """Oscillation of J or D over windows of several widths.

    ``widths`` defaults to 10^-1 .. 10^-4 of the interval length.
    """
    lo, hi = interval
    if widths is None:
        widths = [(hi - lo) * 10.0**-k for k in range(1, 5)]
    if n_points < 2 * (hi - lo) / min(widths):
        raise DomainError("need at least 2 points in the smallest window")
    x = np.linspace(lo, hi, n_points)
    if axis == "a":
        J, D = transport_scan(x, np.full_like(x, fixed), nterms)
    elif axis == "b":
        J, D = transport_scan(np.full_like(x, fixed), x, nterms)
    else:
        raise DomainError("axis must be 'a' or 'b'")
    y = D if quantity == "D" else J
    out = []
    for u in widths:
        osc, nw = oscillation(x, y, u)
        out.append(ModulusReport(u, osc, osc / modulus_ell(1, u), osc / modulus_ell(2, u), nw))
    return out
