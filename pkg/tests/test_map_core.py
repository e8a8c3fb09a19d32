import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from detdiff.errors import DomainError
from detdiff.map_core import (MapParams, branch_set, breakpoint_shift, eval_lift, eval_map,
                              eval_map_array, jump, lipschitz_surrogate, preimages, psi)

H = F(1, 2)
rationals_I = st.fractions(min_value=-H, max_value=H, max_denominator=10**6).filter(lambda x: x < H)
rational_b = st.fractions(min_value=-H, max_value=H, max_denominator=1000)
int_a = st.integers(2, 9)
float_a = st.floats(2.0, 9.0)


def test_eval_map_examples():
    assert eval_map(MapParams(3, 0), F(0)) == 0
    assert eval_map(MapParams(3, 0), -H) == -H
    assert eval_map(MapParams(3.5, 0.1), 0.3) == pytest.approx(0.15, abs=1e-15)


def test_eval_map_rejects_points_outside_interval():
    with pytest.raises(DomainError):
        eval_map(MapParams(3, 0), H)
    with pytest.raises(DomainError):
        eval_map(MapParams(3, 0), -0.6)


def test_params_validation():
    with pytest.raises(DomainError):
        MapParams(1.9, 0)
    with pytest.raises(DomainError):
        MapParams(3, 0.6)
    with pytest.raises(DomainError):
        MapParams(2, 0).require_expanding()


def test_eval_lift_examples():
    assert eval_lift(MapParams(3, 0), 1.0) == 3.0
    assert eval_lift(MapParams(4, 0.25), 0) == 0.25
    p = MapParams(3, 0)
    assert psi(p)(0.4) == pytest.approx(eval_lift(p, 0.4) - 0.4)


def test_branch_set_examples():
    bs = branch_set(MapParams(3, 0))
    assert (bs.p, bs.q, len(bs)) == (1, 1, 3)
    assert bs.endpoints[1] == (F(-1, 6), F(1, 6))
    bs = branch_set(MapParams(4, 0))
    assert (bs.p, bs.q, len(bs)) == (2, 2, 5)
    bs = branch_set(MapParams(3, H))
    assert (bs.p, bs.q) == (1, 2)


def test_preimage_examples():
    assert preimages(MapParams(3, 0), F(0)) == [F(-1, 3), F(0), F(1, 3)]
    got = preimages(MapParams(4, 0), 0.2)
    assert got == pytest.approx([-0.45, -0.2, 0.05, 0.3])


@given(int_a, rational_b)
def test_branches_cover_interval(a, b):
    bs = branch_set(MapParams(a, b))
    ends = bs.endpoints
    assert ends[0][0] == -H and ends[-1][1] == H
    for (lo, hi), (lo2, _) in zip(ends, ends[1:]):
        assert lo < hi == lo2
    # T is affine with slope a on each branch and maps into I
    for k, (lo, hi) in zip(bs.labels, ends):
        mid = (lo + hi) / 2
        assert jump(MapParams(a, b), mid) == k
        assert -H <= eval_map(MapParams(a, b), mid) < H


@given(float_a, st.floats(-0.5, 0.5))
def test_branch_formulas_float(a, b):
    bs = branch_set(MapParams(a, b))
    assert bs.p == math.ceil((a + 1) / 2 - b) - 1
    assert bs.q == math.ceil((a + 1) / 2 + b) - 1
    e = np.array(bs.endpoints, dtype=float)
    assert np.all(e[:, 1] > e[:, 0])


@given(int_a, rational_b, rationals_I)
def test_preimages_round_trip_exact(a, b, x):
    p = MapParams(a, b)
    ys = preimages(p, x)
    assert len(ys) == a
    assert all(eval_map(p, y) == x for y in ys)
    # one preimage per branch whose image contains x
    assert len({jump(p, y) for y in ys}) == len(ys)


@given(float_a, st.floats(-0.5, 0.5), st.floats(-0.5, 0.4999))
def test_preimage_count_float(a, b, x):
    ys = preimages(MapParams(a, b), x)
    assert len(ys) in (math.floor(a), math.ceil(a))
    for y in ys:
        z = eval_map(MapParams(a, b), y)
        assert min(abs(z - x), 1 - abs(z - x)) < 1e-12


@given(int_a, rational_b, rationals_I)
def test_conjugacy_symmetry(a, b, x):
    if x == -H:
        return
    lhs = eval_map(MapParams(a, b), -x)
    rhs = eval_map(MapParams(a, -b), x)
    if rhs == -H:
        assert lhs == -H      # -(-1/2) = 1/2 is identified with -1/2
    else:
        assert lhs == -rhs


@given(int_a, rational_b, rationals_I)
def test_psi_is_lift_displacement(a, b, x):
    p = MapParams(a, b)
    assert psi(p)(x) == eval_lift(p, x) - x
    assert eval_lift(p, x) - jump(p, x) == eval_map(p, x)


@given(float_a, st.floats(-0.5, 0.5), st.floats(-0.3, 0.3), st.floats(-0.1, 0.1))
def test_lipschitz_surrogate(a, b, da, db):
    p1 = MapParams(a, b)
    p2 = MapParams(min(max(a + da, 2.0), 9.0), min(max(b + db, -0.5), 0.5))
    assert breakpoint_shift(p1, p2) <= lipschitz_surrogate(p1, p2) + 1e-12


def test_array_map_agrees_with_scalar():
    x = np.linspace(-0.5, 0.5, 1001, endpoint=False)
    out = eval_map_array(3.7, -0.2, x)
    ref = [eval_map(MapParams(3.7, -0.2), float(v)) for v in x]
    assert np.allclose(out, ref, atol=1e-15)
    assert np.all((out >= -0.5) & (out < 0.5))
