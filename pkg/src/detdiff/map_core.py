"""The affine mod-1 map family T(x) = a x + b mod 1 on I = [-1/2, 1/2).

Everything here is generic over the numeric type: ints and Fractions give
exact results, floats give the usual rounding.  The reduction always goes
through ``m = floor(a x + b + 1/2)`` so the float and rational paths agree
branch by branch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

import numpy as np

from .errors import DomainError

HALF = Fraction(1, 2)


def _half_like(v):
    return HALF if isinstance(v, (int, Fraction)) else 0.5


@dataclass(frozen=True)
class MapParams:
    """Parameter point (a, b) with slope a >= 2 and bias b in [-1/2, 1/2]."""

    a: Real
    b: Real

    def __post_init__(self):
        if not self.a >= 2:
            raise DomainError(f"slope a={self.a} must be >= 2")
        if not -HALF <= self.b <= HALF:
            raise DomainError(f"bias b={self.b} must lie in [-1/2, 1/2]")

    @property
    def is_integer_slope(self) -> bool:
        return float(self.a).is_integer()

    @property
    def is_exact(self) -> bool:
        return all(isinstance(v, (int, Fraction)) for v in (self.a, self.b))

    def mirrored(self) -> "MapParams":
        return MapParams(self.a, -self.b)

    def as_float(self) -> "MapParams":
        return MapParams(float(self.a), float(self.b))

    def require_expanding(self):
        if not self.a > 2:
            raise DomainError(f"operation needs a > 2, got a={self.a}")


@dataclass(frozen=True)
class BranchSet:
    p: int
    q: int
    endpoints: tuple  # ((A_k, B_k) for k = -p..q)

    @property
    def labels(self) -> range:
        return range(-self.p, self.q + 1)

    def __len__(self):
        return self.p + self.q + 1


@dataclass(frozen=True)
class Observable:
    """psi(x) = slope_coeff * x + offset, optionally centred by a drift J."""

    slope_coeff: Real
    offset: Real
    shift: Real = 0

    def __call__(self, x):
        return self.slope_coeff * x + self.offset - self.shift

    def centered(self, J) -> "Observable":
        return Observable(self.slope_coeff, self.offset, J)

    def variation(self) -> Real:
        # extended by zero: |psi(-1/2)| + (a-1) + |psi(1/2)|
        h = _half_like(self.slope_coeff)
        return abs(self(-h)) + abs(self.slope_coeff) + abs(self(h))


def psi(params: MapParams) -> Observable:
    """Displacement observable psi(x) = (a-1) x + b."""
    return Observable(params.a - 1, params.b)


def _check_point(x):
    h = _half_like(x)
    if not -h <= x < h:
        raise DomainError(f"x={x} outside [-1/2, 1/2)")


def jump(params: MapParams, x):
    """Integer part m = floor(a x + b + 1/2) removed by the reduction."""
    return math.floor(params.a * x + params.b + _half_like(x))


def eval_map(params: MapParams, x):
    """T(x) = a x + b - floor(a x + b + 1/2), a point of [-1/2, 1/2)."""
    _check_point(x)
    y = params.a * x + params.b
    return y - math.floor(y + _half_like(y))


def eval_map_array(a: float, b: float, x: np.ndarray) -> np.ndarray:
    y = a * x + b
    out = y - np.floor(y + 0.5)
    # a rounding slip can land exactly on +1/2
    out[out >= 0.5] -= 1.0
    return out


def eval_lift(params: MapParams, x):
    """Lift a x + b on the real line; no reduction."""
    return params.a * x + params.b


def branch_set(params: MapParams) -> BranchSet:
    a, b = params.a, params.b
    h = _half_like(b) if isinstance(a, (int, Fraction)) else 0.5
    p = math.ceil((a + 1) * h - b) - 1
    q = math.ceil((a + 1) * h + b) - 1
    ends = []
    for k in range(-p, q + 1):
        lo = -h if k == -p else (k - h - b) / a
        hi = h if k == q else (k + h - b) / a
        ends.append((lo, hi))
    return BranchSet(p, q, tuple(ends))


def preimages(params: MapParams, x) -> list:
    """All y in I with T(y) = x, ordered by branch."""
    _check_point(x)
    a, b = params.a, params.b
    h = _half_like(x) if isinstance(a, (int, Fraction)) else 0.5
    lo, hi = -a * h + b, a * h + b
    out = []
    # one spare m on each side: float rounding of lo - x, hi - x can drop a sheet
    for m in range(math.ceil(lo - x) - 1, math.ceil(hi - x) + 1):
        y = (x + m - b) / a
        if -h <= y < h:
            out.append(y)
    # and can also keep both copies of a sheet that sits on the circle's seam
    while len(out) > math.ceil(a):
        out.pop(0 if abs(out[0]) > abs(out[-1]) else -1)
    return out


def breakpoint_shift(p1: MapParams, p2: MapParams) -> float:
    """Largest displacement between matched interior branch boundaries."""
    s1, s2 = branch_set(p1), branch_set(p2)
    starts1 = {k: e[0] for k, e in zip(s1.labels, s1.endpoints) if k > -s1.p}
    starts2 = {k: e[0] for k, e in zip(s2.labels, s2.endpoints) if k > -s2.p}
    common = starts1.keys() & starts2.keys()
    return max((abs(float(starts1[k]) - float(starts2[k])) for k in common), default=0.0)


def lipschitz_surrogate(p1: MapParams, p2: MapParams) -> float:
    a0 = min(float(p1.a), float(p2.a))
    return (abs(float(p1.a) - float(p2.a)) + abs(float(p1.b) - float(p2.b))) / a0
