"""Ensembles of scaled diffusion differences and normality diagnostics.

The scaled variable is Z = (D(b+db) - D(b)) / (db sqrt(-ln db)) with b
drawn uniformly from a subinterval of [0, 1/2) and D evaluated on the
exact rational path.  Sample i depends only on (seed, i).
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from statistics import NormalDist

import numpy as np

from .errors import DomainError
from .exact_engine import diff_quotient, n_delta, quotient_terms, to_rational

# Largest safe prime below 2^61.  Every slope a >= 2 has multiplicative order
# >= (P-1)/2 modulo P, so b = k/P never has a short periodic orbit (with a
# Mersenne denominator 2^p - 1 all such b would be periodic points for a = 4).
ENSEMBLE_DENOM = 2305843009213691579
SW_MAX_N = 5000
_ND = NormalDist()


@dataclass(frozen=True)
class EnsembleSpec:
    a: int
    db: Fraction
    n_samples: int = 500
    b_range: tuple = (Fraction(0), Fraction(1, 2))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "db", to_rational(self.db))
        lo, hi = (to_rational(v) for v in self.b_range)
        object.__setattr__(self, "b_range", (lo, hi))
        if int(self.a) != self.a or self.a < 2:
            raise DomainError("a must be an integer >= 2")
        if not (0 <= lo < hi <= Fraction(1, 2)):
            raise DomainError("b_range must be a nonempty subinterval of [0, 1/2)")
        if self.db <= 0:
            raise DomainError("db must be positive")
        if n_delta(int(self.a), self.db / (int(self.a) - 1)) < 10:
            raise DomainError("db too large: N_delta < 10")
        if self.n_samples < 1:
            raise DomainError("n_samples must be positive")


def ensemble_b(spec: EnsembleSpec, i: int) -> Fraction:
    """The i-th ensemble point lo + (hi - lo) k / P, k from two Philox words."""
    bg = np.random.Philox(key=spec.seed)
    bg.advance(i // 2)
    raw = bg.random_raw(4)[2 * (i % 2):2 * (i % 2) + 2]
    k = ((int(raw[0]) << 64) | int(raw[1])) % ENSEMBLE_DENOM
    lo, hi = spec.b_range
    return lo + (hi - lo) * Fraction(k, ENSEMBLE_DENOM)


def _scaled_one(args) -> float:
    a, b, db, N, scale = args
    q = diff_quotient(a, b, db, n_terms=N, predict=False).quotient
    return float(q) / scale


def scaled_difference_ensemble(spec: EnsembleSpec, workers: int = 1, tol: float = 1e-8) -> np.ndarray:
    """Samples of (D(b+db) - D(b)) / (db sqrt(-ln db)), b uniform in ``b_range``."""
    a = int(spec.a)
    db = spec.db
    ln_db = math.log(db.numerator) - math.log(db.denominator)
    scale = math.sqrt(-ln_db)
    # one truncation index for the whole ensemble; the tail constant is
    # maximised over b by checking both range ends and the middle
    lo, hi = spec.b_range
    N = max(quotient_terms(a, b, db, tol) for b in (lo, (lo + hi) / 2, hi - db))
    jobs = [(a, ensemble_b(spec, i), db, N, scale) for i in range(spec.n_samples)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            out = list(ex.map(_scaled_one, jobs, chunksize=16))
    else:
        out = [_scaled_one(j) for j in jobs]
    return np.array(out)


@dataclass(frozen=True)
class NormalityReport:
    mean: float
    sd: float
    W: float
    p: float
    n: int

    @property
    def se(self) -> float:
        return self.sd / math.sqrt(self.n)


def _sw_coefficients(n: int) -> np.ndarray:
    """Royston's approximation to the Shapiro-Wilk weights (antisymmetric)."""
    if n == 3:
        return np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    m = np.array([_ND.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)])
    mm = float(np.dot(m, m))
    u = 1.0 / math.sqrt(n)
    a = np.empty(n)
    an = m[-1] / math.sqrt(mm) + np.polyval([-2.706056, 4.434685, -2.071190, -0.147981, 0.221157, 0.0], u)
    if n > 5:
        an1 = m[-2] / math.sqrt(mm) + np.polyval([-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, 0.0], u)
        eps = (mm - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an**2 - 2 * an1**2)
        a[:] = m / math.sqrt(eps)
        a[-1], a[-2], a[0], a[1] = an, an1, -an, -an1
    else:
        eps = (mm - 2 * m[-1] ** 2) / (1 - 2 * an**2)
        a[:] = m / math.sqrt(eps)
        a[-1], a[0] = an, -an
    return a


def _sw_pvalue(W: float, n: int) -> float:
    if n == 3:
        return max(0.0, min(1.0, 6.0 / math.pi * (math.asin(math.sqrt(W)) - math.pi / 3)))
    w1 = math.log1p(-W) if W < 1 else -math.inf
    if n <= 11:
        gamma = 0.459 * n - 2.273
        if w1 >= gamma:
            return 1e-19
        y = -math.log(gamma - w1)
        mu = np.polyval([-0.0006714, 0.025054, -0.39978, 0.544], n)
        sigma = math.exp(np.polyval([-0.0020322, 0.062767, -0.77857, 1.3822], n))
    else:
        y = w1
        ln_n = math.log(n)
        mu = np.polyval([0.0038915, -0.083751, -0.31082, -1.5861], ln_n)
        sigma = math.exp(np.polyval([0.0030302, -0.082676, -0.4803], ln_n))
    if y == -math.inf:
        return 1.0
    return 1.0 - _ND.cdf((y - mu) / sigma)


def shapiro_wilk(samples, seed: int = 0) -> NormalityReport:
    """Shapiro-Wilk W and p-value (Royston 1992/1995 approximations).

    Valid for 3 <= n <= 5000; larger samples are subsampled to 5000 with a
    warning (the subsample is drawn from ``seed``).
    """
    x = np.asarray(samples, dtype=float).ravel()
    n_all = x.size
    if n_all < 3:
        raise DomainError("Shapiro-Wilk needs at least 3 samples")
    mean, sd = float(np.mean(x)), float(np.std(x, ddof=1))
    if n_all > SW_MAX_N:
        warnings.warn(f"subsampling {n_all} values to {SW_MAX_N} for Shapiro-Wilk", stacklevel=2)
        rng = np.random.Generator(np.random.Philox(key=seed))
        x = x[np.sort(rng.choice(n_all, SW_MAX_N, replace=False))]
    n = x.size
    xs = np.sort(x)
    ss = float(np.sum((xs - xs.mean()) ** 2))
    if ss <= 0:
        raise DomainError("zero range: Shapiro-Wilk undefined for constant data")
    a = _sw_coefficients(n)
    W = float(np.dot(a, xs)) ** 2 / ss
    W = min(W, 1.0)
    return NormalityReport(mean, sd, W, float(_sw_pvalue(W, n)), n_all)


@dataclass(frozen=True)
class QQData:
    theoretical: np.ndarray
    sample: np.ndarray
    slope: float
    intercept: float
    degenerate: bool

    def line(self) -> np.ndarray:
        return self.intercept + self.slope * self.theoretical

    def max_deviation(self, trim: float = 0.0) -> float:
        """Largest |sample - line|, optionally ignoring a fraction ``trim`` at each end."""
        k = int(trim * self.sample.size)
        d = np.abs(self.sample - self.line())
        return float(np.max(d[k:d.size - k]))


def qq_quantiles(samples) -> QQData:
    """Order statistics against normal quantiles at (i - 3/8)/(n + 1/4)."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 10:
        raise DomainError("QQ data needs at least 10 samples")
    theo = np.array([_ND.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)])
    sd = float(np.std(x, ddof=1))
    return QQData(theo, x, sd, float(np.mean(x)), sd == 0.0)
