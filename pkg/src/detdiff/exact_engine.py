"""Exact rational transport at integer slopes.

For integer a the Lebesgue measure is invariant (h = 1) and J = b.  All
quantities are Fractions; only tail bounds and fitted slopes are floats.

``exact_diffusion`` sums the Green-Kubo series of the integer jump
m(x) = floor(ax+b+1/2), which is cohomologous to psi and so has the same
diffusion coefficient:

    D = 1/2 int (m-b)^2 + gamma0 * sum_{j>=0} a^-j F(T^{j+1}(-1/2)),
    gamma0 = (p+q)(a-1)/a^2,   F(c) = int_{-1/2}^{c} (m-b).

Each term is bounded by gamma0 * max|F| * a^-j, which gives a rigorous
tail.  ``series="correlation"`` sums c_n = (a-1)^2 int x P^n(x) dx instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

from .errors import DomainError, ToleranceUnreachable
from .map_core import HALF, MapParams
from .transfer_op import PiecewiseAffineFn, apply_pf_affine

BigRational = Fraction
MAX_TERMS = 5000


def render_decimal(q: Fraction, digits: int = 30) -> str:
    """q to ``digits`` significant digits."""
    with localcontext() as ctx:
        ctx.prec = digits
        return str(Decimal(q.numerator) / Decimal(q.denominator))


def rational_json(q: Fraction) -> dict:
    return {"num": str(q.numerator), "den": str(q.denominator)}


def to_rational(x) -> Fraction:
    """Exact conversion; strings like '1e-30' or '1/3' are parsed exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(x)


def _red(y: Fraction) -> Fraction:
    return y - math.floor(y + HALF)


def _up(q) -> float:
    """Float upper bound of a nonnegative rational."""
    x = float(q)
    return x if Fraction(x) >= q else math.nextafter(x, math.inf)


def _check_int_slope(a) -> int:
    if int(a) != a or a < 2:
        raise DomainError(f"exact path needs an integer slope >= 2, got {a}")
    return int(a)


@dataclass(frozen=True)
class _Branches:
    a: int
    b: Fraction
    p: int
    q: int
    first_len: Fraction

    @classmethod
    def of(cls, a: int, b: Fraction) -> "_Branches":
        p = math.ceil(Fraction(a + 1, 2) - b) - 1
        q = math.ceil(Fraction(a + 1, 2) + b) - 1
        return cls(a, b, p, q, (-p + HALF - b) / a + HALF)

    def label(self, c: Fraction) -> int:
        return min(max(math.floor(self.a * c + self.b + HALF), -self.p), self.q)

    def cum_m(self, c: Fraction) -> Fraction:
        """Integral of m over [-1/2, c)."""
        p = self.p
        k = self.label(c)
        if k == -p:
            return -p * (c + HALF)
        s = (k - 1) * k // 2 - (-p) * (-p + 1) // 2      # sum of -p+1 .. k-1
        return -p * self.first_len + Fraction(s, self.a) + k * (c - (k - HALF - self.b) / self.a)

    def F(self, c: Fraction) -> Fraction:
        return self.cum_m(c) - self.b * (c + HALF)

    def second_moment(self) -> Fraction:
        """Integral of (m - b)^2 over I."""
        tot = Fraction(0)
        for k in range(-self.p, self.q + 1):
            lo = -HALF if k == -self.p else (k - HALF - self.b) / self.a
            hi = HALF if k == self.q else (k + HALF - self.b) / self.a
            tot += (k - self.b) ** 2 * (hi - lo)
        return tot

    def abs_first_moment(self) -> Fraction:
        tot = Fraction(0)
        for k in range(-self.p, self.q + 1):
            lo = -HALF if k == -self.p else (k - HALF - self.b) / self.a
            hi = HALF if k == self.q else (k + HALF - self.b) / self.a
            tot += abs(k - self.b) * (hi - lo)
        return tot


def exact_drift(a: int, b) -> Fraction:
    """J = integral of the jump m over I (h = 1); equals b identically."""
    a = _check_int_slope(a)
    br = _Branches.of(a, to_rational(b))
    return br.cum_m(HALF)


def exact_correlation(a: int, b, n: int) -> Fraction:
    """c_n = (a-1)^2 * integral of x P^n(x) dx, by n exact operator steps."""
    return exact_correlations(a, b, n)[-1]


def exact_correlations(a: int, b, n: int) -> list:
    a = _check_int_slope(a)
    params = MapParams(a, to_rational(b))
    x = PiecewiseAffineFn.identity(exact=True)
    f = x
    out = [(a - 1) ** 2 * f.inner(x)]
    for _ in range(n):
        f = apply_pf_affine(params, f)
        out.append((a - 1) ** 2 * f.inner(x))
    return out


@dataclass(frozen=True)
class ExactDiffusion:
    value: Fraction
    tail_bound: float
    n_terms: int
    a: int
    b: Fraction
    J: Fraction
    series: str = "jump"

    def __float__(self):
        return float(self.value)


def jump_tail(a: int, b) -> tuple[Fraction, Fraction]:
    """(gamma0, max|F|) bound data for the jump series."""
    a = _check_int_slope(a)
    br = _Branches.of(a, to_rational(b))
    gamma0 = Fraction((br.p + br.q) * (a - 1), a * a)
    return gamma0, br.abs_first_moment() / 2


def jump_terms_for_tol(a: int, b, tol: float) -> int:
    gamma0, fmax = jump_tail(a, b)
    c = float(gamma0 * fmax) * a / (a - 1)
    if c == 0.0:
        return 1
    return max(1, int(math.ceil(math.log(c / tol) / math.log(a))))


def exact_diffusion(a: int, b, tol: float = 1e-12, n_terms: int | None = None,
                    series: str = "jump") -> ExactDiffusion:
    """D(a, b) as an exact partial sum plus a rigorous float tail bound."""
    a = _check_int_slope(a)
    b = to_rational(b)
    MapParams(a, b)
    J = exact_drift(a, b)
    if series == "correlation":
        N = n_terms or max(1, int(math.ceil(math.log((a - 1) ** 2 / 4 / (1 - 1 / a) / tol) / math.log(a))))
        if N > MAX_TERMS:
            raise ToleranceUnreachable("too many correlation terms", (a - 1) ** 2 / 4 * a ** -MAX_TERMS)
        c = exact_correlations(a, b, N)
        val = c[0] / 2 + sum(c[1:])
        tail = _up(Fraction((a - 1) ** 2, 4) / Fraction(a) ** (N + 1) / (1 - Fraction(1, a)))
        return ExactDiffusion(val, tail, N, a, b, J, "correlation")
    br = _Branches.of(a, b)
    gamma0 = Fraction((br.p + br.q) * (a - 1), a * a)
    fmax = br.abs_first_moment() / 2
    N = n_terms if n_terms is not None else jump_terms_for_tol(a, b, tol)
    if N > MAX_TERMS:
        raise ToleranceUnreachable(f"{N} terms exceed cap {MAX_TERMS}", float(gamma0 * fmax) * a ** -MAX_TERMS)
    v = _red(a * (-HALF) + b)
    s = Fraction(0)
    for j in range(N):
        # Horner: s = sum_j F(v_j) a^(N-1-j), scaled once at the end
        s = s * a + br.F(v)
        v = _red(a * v + b)
    s = s / Fraction(a) ** (N - 1)
    val = br.second_moment() / 2 + gamma0 * s
    tail = _up(gamma0 * fmax / Fraction(a) ** N / (1 - Fraction(1, a)))
    return ExactDiffusion(val, tail, N, a, b, J, "jump")


# ----------------------------------------------------------------------------
# difference quotients and the log-correction coefficient
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class OrbitCycle:
    a: int
    b: Fraction
    bhat: Fraction
    preperiod: tuple
    cycle: tuple
    cycle_contains_minus_half: bool
    cycle_contains_bhat: bool

    @property
    def clean(self) -> bool:
        return not (self.cycle_contains_minus_half or self.cycle_contains_bhat)


def orbit_of_bhat(a: int, b, max_len: int = 100_000) -> OrbitCycle:
    """Orbit of bhat = -1/2 + b/(a-1) under x -> a x mod 1, for 0 <= b <= 1/2.

    Raises DomainError when no repeat shows up within ``max_len`` points
    (rationals with large denominators have astronomically long cycles).
    """
    a = _check_int_slope(a)
    b = to_rational(b)
    if not 0 <= b <= HALF:
        raise DomainError("orbit_of_bhat expects 0 <= b <= 1/2 (use symmetry for b < 0)")
    bhat = -HALF + b / (a - 1)
    seen = {}
    pts = []
    x = bhat
    while x not in seen:
        if len(pts) >= max_len:
            raise DomainError(f"orbit of bhat longer than {max_len}")
        seen[x] = len(pts)
        pts.append(x)
        x = _red(a * x)
    i = seen[x]
    cyc = tuple(pts[i:])
    return OrbitCycle(a, b, bhat, tuple(pts[:i]), cyc, -HALF in cyc, bhat in cyc)


def g_b(orbit: OrbitCycle, x: Fraction, side: int = 1) -> Fraction:
    """g_b(x) = x + 1[-1/2, bhat)(x) - b/(a-1); left limit on the circle when side < 0."""
    shift = orbit.b / (orbit.a - 1)
    if side >= 0:
        return x + (1 if -HALF <= x < orbit.bhat else 0) - shift
    if x == -HALF:
        return HALF - shift
    return x + (1 if -HALF < x <= orbit.bhat else 0) - shift


def cycle_average_coefficient(a: int, b, side: int = 1) -> float:
    """(a-1)/ln a times the cycle average of g_b (one-sided at cycle points)."""
    orb = orbit_of_bhat(a, b)
    cb = sum((g_b(orb, x, side) for x in orb.cycle), Fraction(0)) / len(orb.cycle)
    return (a - 1) * float(cb) / math.log(a)


@dataclass(frozen=True)
class LogCoefficientPrediction:
    """C with D(b+d) - D(b) ~ C d ln(1/|d|); slope of the quotient vs ln|d| is -C."""

    value: float | None
    case: str
    side: int
    orbit: OrbitCycle

    @property
    def quotient_slope(self) -> float | None:
        return None if self.value is None else -self.value


def _special_constant(a: int, b: Fraction, side: int) -> float | None:
    la = math.log(a)
    if b == 0:
        if a % 2 == 0:
            return 0.0
        return -side * (a - 1) / (2 * la)
    if abs(b) == HALF:
        left_half = (a - 1) / (4 * la) if a % 2 else (a - 1) / (2 * la)
        # left_half is C(1/2, -); the other sides follow from D(b) = D(-b) and 1-periodicity
        if b == HALF:
            return left_half if side < 0 else -left_half
        return -left_half if side > 0 else left_half
    return None


def predict_log_coefficient(a: int, b, side: int = 1) -> LogCoefficientPrediction:
    """Coefficient of the (b'-b) ln|b'-b|^-1 term of D_a(b') - D_a(b).

    ``side`` is the sign of b' - b.  Clean cycles give (a-1) C_b / ln a
    independent of side; b in {0, +-1/2} use the hand-derived constants;
    other flagged cycles return value None.
    """
    a = _check_int_slope(a)
    b = to_rational(b)
    side = 1 if side >= 0 else -1
    sign = 1
    bb, ss = b, side
    if b < 0:
        # D(b) = D(-b): C(b, s) = -C(-b, -s)
        bb, ss, sign = -b, -side, -1
    special = _special_constant(a, b, side)
    try:
        orb = orbit_of_bhat(a, bb)
    except DomainError:
        if special is not None:
            return LogCoefficientPrediction(special, f"special:b={b}", side, None)
        return LogCoefficientPrediction(None, "no_prediction:long_orbit", side, None)
    if special is not None:
        return LogCoefficientPrediction(special, f"special:b={b}", side, orb)
    if orb.clean:
        cb = sum((g_b(orb, x) for x in orb.cycle), Fraction(0)) / len(orb.cycle)
        return LogCoefficientPrediction(sign * (a - 1) * float(cb) / math.log(a), "clean", side, orb)
    flags = []
    if orb.cycle_contains_minus_half:
        flags.append("cycle_contains_minus_half")
    if orb.cycle_contains_bhat:
        flags.append("cycle_contains_bhat")
    return LogCoefficientPrediction(None, "no_prediction:" + ",".join(flags), side, orb)


@dataclass(frozen=True)
class DiffQuotientAnalysis:
    a: int
    b: Fraction
    b2: Fraction
    delta: Fraction
    N_delta: int
    n_terms: int
    quotient: Fraction
    tail_bound: float
    predicted_slope: float | None


def n_delta(a: int, delta: Fraction) -> int:
    """ceil(ln|delta|^-1 / ln a), computed without float underflow."""
    d = abs(delta)
    lnd = math.log(d.numerator) - math.log(d.denominator)
    return int(math.ceil(-lnd / math.log(a)))


def quotient_terms(a: int, b, db, tol: float, margin: int = 20) -> int:
    """Shared truncation index: >= N_delta + margin and 2*tail < tol*|db|."""
    a = _check_int_slope(a)
    db = to_rational(db)
    nd = n_delta(a, db / (a - 1))
    g1, f1 = jump_tail(a, b)
    g2, f2 = jump_tail(a, to_rational(b) + db)
    c = float(max(g1 * f1, g2 * f2)) * a / (a - 1)
    ldb = math.log(abs(db).numerator) - math.log(abs(db).denominator)
    # 2 c a^-N < tol |db|
    need = (math.log(2 * c / tol) - ldb) / math.log(a) if c > 0 else 0
    return max(nd + margin, int(math.ceil(need)))


def diff_quotient(a: int, b, db, tol: float = 1e-8, margin: int = 20,
                  n_terms: int | None = None, D_b: ExactDiffusion | None = None,
                  predict: bool = True) -> DiffQuotientAnalysis:
    """(D(b+db) - D(b)) / db on the exact path with a shared truncation index."""
    a = _check_int_slope(a)
    b, db = to_rational(b), to_rational(db)
    if db == 0:
        raise DomainError("db must be nonzero")
    b2 = b + db
    if not (-HALF <= b <= HALF and -HALF <= b2 <= HALF):
        raise DomainError("b and b+db must lie in [-1/2, 1/2]")
    N = n_terms if n_terms is not None else quotient_terms(a, b, db, tol, margin)
    nd = n_delta(a, db / (a - 1))
    if N < nd + margin:
        raise ToleranceUnreachable(f"n_terms {N} below N_delta + margin = {nd + margin}", None)
    if N > MAX_TERMS:
        raise ToleranceUnreachable(f"{N} terms exceed cap {MAX_TERMS}", None)
    if D_b is None or D_b.n_terms != N or D_b.b != b:
        D_b = exact_diffusion(a, b, n_terms=N)
    D_b2 = exact_diffusion(a, b2, n_terms=N)
    quotient = (D_b2.value - D_b.value) / db
    tail = (D_b.tail_bound + D_b2.tail_bound) / abs(float(db)) if abs(db) > 1e-300 else math.inf
    pred = predict_log_coefficient(a, b, 1 if db > 0 else -1).quotient_slope if predict else None
    return DiffQuotientAnalysis(a, b, b2, db / (a - 1), nd, N, quotient, tail, pred)


@dataclass
class QuotientSlopeFit:
    slope: float
    ols_slope: float
    method: str
    period: float | None
    predicted: float | None
    ln_db: np.ndarray = field(repr=False)
    quotient: np.ndarray = field(repr=False)
    spread: float = 0.0


def _exp_rational(t: float, digits: int = 60) -> Fraction:
    with localcontext() as ctx:
        ctx.prec = digits
        return Fraction(Decimal(repr(t)).exp())


def quotient_slope(a: int, b, db_min=Fraction(1, 10**40), db_max=Fraction(1, 10**10),
                   side: int = 1, n_phase: int = 8, n_ols: int = 121,
                   tol: float = 1e-8) -> QuotientSlopeFit:
    """Slope of the exact difference quotient against ln|db|.

    The quotient minus its log-linear part is log-periodic with period
    L ln a, L the cycle length of bhat, so the fit is a line plus a free
    periodic component sampled at ``n_phase`` phases (one intercept per
    phase), using every period that fits in [db_min, db_max].  When the
    period is too long for that, a plain least-squares line over
    ``n_ols`` log-spaced points is used.  The plain line slope over the
    same samples is always reported as ``ols_slope``.
    """
    a = _check_int_slope(a)
    b = to_rational(b)
    db_min, db_max = to_rational(db_min), to_rational(db_max)
    side = 1 if side >= 0 else -1
    lo = math.log(db_min.numerator) - math.log(db_min.denominator)
    hi = math.log(db_max.numerator) - math.log(db_max.denominator)
    try:
        period = len(orbit_of_bhat(a, abs(b)).cycle) * math.log(a)
    except DomainError:
        period = math.inf
    pred = predict_log_coefficient(a, b, side).quotient_slope
    N = quotient_terms(a, b, side * db_min, tol)
    D0 = exact_diffusion(a, b, n_terms=N)

    def q(d: Fraction) -> float:
        return float(diff_quotient(a, b, side * d, n_terms=N, D_b=D0, predict=False).quotient)

    ts, qs, phase = [], [], []
    if 2 * period <= hi - lo:
        step = Fraction(1, a ** round(period / math.log(a)))
        for i in range(n_phase):
            t0 = hi - period * i / n_phase
            d = _exp_rational(t0)
            k = 0
            while True:
                t = t0 - k * period
                if t < lo - 1e-12:
                    break
                ts.append(t)
                qs.append(q(d))
                phase.append(i)
                d *= step
                k += 1
        ts, qs, phase = np.array(ts), np.array(qs), np.array(phase)
        X = np.zeros((len(ts), n_phase + 1))
        X[:, 0] = ts
        X[np.arange(len(ts)), 1 + phase] = 1.0
        coef, *_ = np.linalg.lstsq(X, qs, rcond=None)
        slope = float(coef[0])
        # spread: slopes from phase-wise secants (first vs last sample of each phase)
        secants = []
        for i in range(n_phase):
            sel = phase == i
            if sel.sum() >= 2:
                tt, qq = ts[sel], qs[sel]
                secants.append((qq[-1] - qq[0]) / (tt[-1] - tt[0]))
        spread = float(np.std(secants)) if secants else 0.0
        method = "periodic"
    else:
        ts = np.linspace(lo, hi, n_ols)
        qs = np.array([q(_exp_rational(t)) for t in ts])
        slope = float(np.polyfit(ts, qs, 1)[0])
        spread = 0.0
        method = "ols"
    ols = float(np.polyfit(ts, qs, 1)[0])
    return QuotientSlopeFit(slope, ols, method, period, pred, np.asarray(ts), np.asarray(qs), spread)
