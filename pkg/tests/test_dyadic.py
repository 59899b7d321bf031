import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import grid
from lloglog.dyadic import (
    DyadicCube, GridFunction, children, conditional_expectation, from_morton, pointwise_combine,
    support_set, to_morton,
)


def test_children_unit_interval():
    kids = children(DyadicCube(0, (0,)))
    assert [(c.level, c.coords) for c in kids] == [(1, (0,)), (1, (1,))]
    assert [tuple(c.lower()) for c in kids] == [(0.0,), (0.5,)]


def test_children_square_quadrants():
    kids = children(DyadicCube(0, (0, 0)))
    assert sorted(c.coords for c in kids) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert all(c.side == 0.5 for c in kids)


def test_children_of_quarter():
    kids = children(DyadicCube(2, (1,)))
    assert [(float(c.lower()[0]), float(c.upper()[0])) for c in kids] == [(0.25, 0.375), (0.375, 0.5)]


def test_laminar_exhaustive():
    cubes = [DyadicCube(l, (i,)) for l in range(0, 7) for i in range(1 << l)]
    for a, b in itertools.combinations(cubes[:127], 2):
        if a.intersects(b):
            assert a.contains(b) or b.contains(a)


def test_conditional_expectation_half_indicator():
    v = grid([1.0, 1.0, 0.0, 0.0])
    e = conditional_expectation(v, 0)
    assert np.all(e.values == 0.5)


def test_conditional_expectation_at_own_resolution_is_identity(rng):
    v = grid(rng.random(16))
    assert np.array_equal(conditional_expectation(v, v.resolution).values, v.values)


@given(arrays(np.float64, (16, 16), elements=st.floats(-1e3, 1e3, allow_nan=False)), st.integers(0, 4))
def test_conditional_expectation_preserves_integral(vals, n):
    v = grid(vals)
    e = conditional_expectation(v, n)
    # direct summation oracle
    assert abs(e.integral() - float(np.sum(vals)) / 256) <= 1e-12 * max(1.0, np.abs(vals).sum() / 256)


def test_conditional_expectation_rejects_finer_level():
    with pytest.raises(ValueError):
        conditional_expectation(grid([1.0, 0.0]), 3)


def test_support_set_examples():
    v = grid([1.0, 1.0, 0.0, 0.0])
    assert support_set(grid(np.zeros(4)), 1) == set()
    assert support_set(v, 0) == {DyadicCube(0, (0,))}
    assert support_set(v, 1) == {DyadicCube(1, (0,))}


@given(arrays(np.float64, (8, 8), elements=st.sampled_from([0.0, 0.0, 1.0, -2.0])), st.integers(0, 3))
def test_support_set_brute_force(vals, n):
    v = grid(vals)
    s = 1 << (3 - n)
    expect = {DyadicCube(n, (i, j)) for i in range(1 << n) for j in range(1 << n)
              if np.any(vals[i * s:(i + 1) * s, j * s:(j + 1) * s] != 0)}
    assert support_set(v, n) == expect


def test_pointwise_combine_identities(rng):
    v = grid(rng.standard_normal((8, 8)))
    z = grid(np.zeros((8, 8)))
    assert np.array_equal(pointwise_combine(v, z, "add").values, v.values)
    assert not np.any(pointwise_combine(v, v, "sub").values)
    pos, neg = pointwise_combine(v, op="sign-split")
    assert np.array_equal(pos.values - neg.values, v.values)
    assert not np.any(pos.values * neg.values)


def test_pointwise_combine_refines_to_common_grid():
    a = grid([1.0, 2.0])
    b = grid([1.0, 1.0, 1.0, 1.0])
    out = pointwise_combine(a, b, "add")
    assert np.array_equal(out.values, [2.0, 2.0, 3.0, 3.0])


def test_pointwise_combine_dimension_mismatch():
    with pytest.raises(ValueError):
        pointwise_combine(grid([1.0, 2.0]), grid(np.ones((2, 2))), "add")


@given(arrays(np.float64, (4, 4), elements=st.floats(-1e300, 1e300, allow_nan=False, allow_subnormal=True)))
def test_json_round_trip_bit_exact(vals):
    v = grid(vals)
    w = GridFunction.from_json(v.to_json())
    assert w.root == v.root and w.resolution == v.resolution
    assert w.values.tobytes() == v.values.tobytes()


def test_json_round_trip_keeps_negative_zero():
    v = grid([0.0, -0.0, 1.5, 0.0])
    w = GridFunction.from_json(v.to_json())
    assert w.values.tobytes() == v.values.tobytes()
    assert len(v.to_json_dict()["cells"]) == 2


def test_json_is_sparse_cells():
    doc = json.loads(grid([0.0, 3.0, 0.0, 0.0]).to_json())
    assert doc["dimension"] == 1 and doc["resolution"] == 2
    assert len(doc["cells"]) == 1


@pytest.mark.parametrize("d", [1, 2, 3])
def test_morton_round_trip(d, rng):
    a = rng.random((8,) * d)
    assert np.array_equal(from_morton(to_morton(a), d), a)


def test_morton_children_contiguous():
    a = np.arange(16.0).reshape(4, 4)
    m = to_morton(a)
    # first four entries are the lower-left 2x2 block
    assert sorted(m[:4]) == sorted(a[:2, :2].ravel())


def test_nonnegative_flag_enforced():
    from lloglog.dyadic import InvariantViolation

    with pytest.raises(InvariantViolation):
        grid([1.0, -1.0], nonnegative=True)
