import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import grid
from lloglog.content import ContentParams, length, thickness
from lloglog.czd import interval_index
from lloglog.decompose import (
    BadPiece, capped_minorant, thickness_split, iterate_split, iterate_split_until, stopping_time_split, reassemble,
)
from lloglog.dilation import DilationGroup
from lloglog.dyadic import DyadicCube, InvariantViolation

UNIT = DyadicCube(0, (0,))
SQUARE = DyadicCube(0, (0, 0))


def test_minorant_half_indicator():
    v = grid([1.0, 0.0])
    out = capped_minorant(v, UNIT, 1.0, 1)
    assert np.array_equal(out.v_I.values, v.values)
    assert not out.collection.cubes


def test_minorant_overloaded_leaf():
    # mass 4 * gamma * 2^-n on one level-2 cell, gamma = 1
    v = grid([0.0, 4.0, 0.0, 0.0])
    out = capped_minorant(v, UNIT, 1.0, 2)
    assert out.v_I.values[1] * 0.25 == pytest.approx(2 * 1.0 * 0.25)
    assert DyadicCube(2, (1,)) in out.collection.cubes


def test_minorant_zero():
    out = capped_minorant(grid(np.zeros(4)), UNIT, 1.0, 2)
    assert not out.v_I.values.any() and not out.collection.cubes


def test_minorant_rejects_bad_input():
    with pytest.raises(ValueError):
        capped_minorant(grid([1.0, 0.0]), UNIT, 0.0, 1)
    with pytest.raises(ValueError):
        capped_minorant(grid([1.0, -1.0]), UNIT, 1.0, 1)


def _covered(collection, v):
    m = np.zeros(v.shape, dtype=bool)
    for c in collection.cubes:
        lo = ((np.array(c.lower()) - v.root.lower()) / v.cell_side).astype(int)
        s = int(round(c.side / v.cell_side))
        m[tuple(slice(a, a + s) for a in lo)] = True
    return m


@given(arrays(np.float64, (8, 8), elements=st.one_of(st.just(0.0), st.floats(0.01, 50.0))),
       st.floats(0.05, 20.0), st.integers(0, 3))
def test_minorant_invariants(vals, gamma, n):
    v = grid(vals)
    out = capped_minorant(v, SQUARE, gamma, n)
    vi = out.v_I.values
    assert np.all(vi >= 0) and np.all(vi <= vals * (1 + 1e-12))
    assert thickness(out.v_I, ContentParams(n)) <= 2 * gamma * (1 + 1e-10)
    lhs = 2 * out.v_I.integral()
    free = v.cell_volume * vals[~_covered(out.collection, v)].sum()
    rhs = 2 * gamma * sum(c.side for c in out.collection.cubes) + free
    assert lhs >= rhs * (1 - 1e-10)


def test_split_half_indicator():
    v = grid([1.0, 0.0])
    g, h, cert = thickness_split(v, UNIT, 1)
    assert np.array_equal(g.values, v.values)
    assert not h.values.any()
    assert cert.constants_achieved["length_h_over_length_v"] == 0.0
    assert cert.constants_achieved["length_v_thickness_g_over_int_g"] == 1.0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_split_box(n):
    vals = np.zeros((16, 16))
    vals[0:4, 4:8] = 1.0
    v = grid(vals)
    g, h, _ = thickness_split(v, SQUARE, n)
    p = ContentParams(n)
    assert length(h, p) <= 0.5 * length(v, p)


def test_split_degenerate():
    with pytest.raises(ValueError):
        thickness_split(grid(np.zeros(4)), UNIT, 2)


@given(arrays(np.float64, (8, 8), elements=st.one_of(st.just(0.0), st.floats(1e-3, 1e3))), st.integers(0, 3))
def test_split_properties(vals, n):
    if not vals.any():
        return
    v = grid(vals)
    g, h, _ = thickness_split(v, SQUARE, n)
    p = ContentParams(n)
    assert np.array_equal(g.values + h.values, vals)
    assert np.all(g.values >= 0) and np.all(h.values >= 0)
    assert length(h, p) <= 0.5 * length(v, p) * (1 + 1e-12)
    assert length(v, p) * thickness(g, p) <= 8 * g.integral() * (1 + 1e-12)


def test_iterated_zero():
    pieces, h, _ = iterate_split(grid(np.zeros((4, 4))), 2, 3)
    assert all(not g.values.any() for g in pieces) and not h.values.any()


@given(arrays(np.float64, (8, 8), elements=st.floats(-100, 100)), st.integers(1, 3))
def test_iterated_signed_reconstruction_and_absorption(vals, n):
    f = grid(vals)
    pieces, h, cert = iterate_split(f, n, n)
    assert not h.values.any()
    assert np.array_equal(reassemble(pieces, h).values, vals)
    for g in pieces:
        assert np.all(g.values * np.sign(vals) >= 0)


def test_iterated_partial_iteration_length_decay(rng):
    f = grid(rng.exponential(1.0, (16, 16)) * (rng.random((16, 16)) < 0.3))
    pieces, h, cert = iterate_split(f, 4, 2)
    lam = cert.constants_achieved["length_history"]
    assert lam[2] <= 0.25 * lam[0] * (1 + 1e-12)
    assert cert.constants_achieved["max_thickness_length_ratio"] <= 8


def test_iterated_until_stops_by_n_plus_one(rng):
    f = grid(rng.exponential(1.0, (16, 16)) * (rng.random((16, 16)) < 0.2))
    for alpha in (0.01, 1.0, 100.0, 1e6):
        _, hL, L, _ = iterate_split_until(f, 3, alpha)
        assert L <= 4
        assert alpha * length(hL, ContentParams(3)) <= hL.abs_integral() * (1 + 1e-12)


# stopping-time split on the line: n = 2, l = -1 gives I = [-2, 0)

DIL1 = DilationGroup((1.0,))


def _piece(key, scale, lo, vals, res=6):
    N = 1 << res
    v = np.zeros(N)
    v[lo:lo + len(vals)] = vals
    m = np.zeros(N, dtype=bool)
    m[lo:lo + len(vals)] = True
    return BadPiece(key, scale, grid(v), m)


def _mean_zero(rng, size):
    x = rng.exponential(1.0, size) * (rng.random(size) < 0.5)
    return x - x.mean()


def test_stopping_empty_and_zero():
    assert stopping_time_split([], 2, -1, 1.0, DIL1).pieces == {}
    res = stopping_time_split([_piece("w", -2, 0, np.zeros(16))], 2, -1, 1.0, DIL1)
    assert all(not g.values.any() for g in res.pieces.values())


def test_stopping_large_alpha_takes_s_branch(rng):
    b = _piece("w", -2, 16, _mean_zero(rng, 16))
    res = stopping_time_split([b], 2, -1, 1e9, DIL1)
    for (key, kappa), g in res.pieces.items():
        if kappa == -2:
            assert np.array_equal(g.coarsen(6).values, b.function.values)
        else:
            assert not g.values.any()


def test_stopping_small_alpha_stops_at_top_scale(rng):
    b = _piece("w", -2, 16, _mean_zero(rng, 16))
    res = stopping_time_split([b], 2, -1, 1e-9, DIL1)
    kmax = max(res.kappas)
    for (key, kappa), g in res.pieces.items():
        assert np.array_equal(g.coarsen(6).values, b.function.values if kappa == kmax else 0 * b.function.values)


@pytest.mark.parametrize("seed", range(8))
def test_stopping_two_pieces_bounds(seed):
    rng = np.random.default_rng(seed)
    n, l = 2, -1
    alpha = float(rng.uniform(0.2, 4.0))
    pieces = [_piece(0, -2, 0, _mean_zero(rng, 16)), _piece(1, -1, 32, _mean_zero(rng, 32))]
    res = stopping_time_split(pieces, n, l, alpha, DIL1)
    m = res.measured
    assert m["additivity_relative_error"] == 0.0
    assert m["length_ratio_max"] <= 1.0
    assert m["thickness_over_alpha_max"] <= 16 * (n + 1)
    assert m["max_stop_length"] <= n + 1


def test_stopping_rejects_scale_outside_interval(rng):
    I, _ = interval_index(2, -1, DIL1)
    bad = _piece("w", I.stop, 0, _mean_zero(rng, 16))
    with pytest.raises(ValueError):
        stopping_time_split([bad], 2, -1, 1.0, DIL1)
    with pytest.raises(ValueError):
        stopping_time_split([_piece("w", -2, 0, _mean_zero(rng, 16))], 2, -1, 0.0, DIL1)


def test_stopping_rejects_oversized_dilation():
    b = BadPiece("w", -12, grid(np.zeros((64, 64))), np.ones((64, 64), dtype=bool))
    with pytest.raises(ValueError, match="dilated unit cubes"):
        stopping_time_split([b], 3, -4, 1.0, DilationGroup((1.0, 2.0)))
