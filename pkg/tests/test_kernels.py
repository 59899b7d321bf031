import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lloglog import _kernels as K


def _naive_convolve(a, offsets, weights):
    out = np.zeros_like(a)
    for idx in np.ndindex(a.shape):
        for off, w in zip(offsets, weights):
            src = tuple(i - int(m) for i, m in zip(idx, off))
            if all(0 <= s < n for s, n in zip(src, a.shape)):
                out[idx] += w * a[src]
    return out


@pytest.mark.parametrize("d", [1, 2])
def test_sparse_convolve_paths_match_naive(d, rng):
    a = rng.normal(size=(12,) * d)
    offsets = rng.integers(-14, 15, size=(9, d))
    weights = rng.normal(size=9)
    ref = _naive_convolve(a, offsets, weights)
    assert np.allclose(K.sparse_convolve_numpy(a, offsets, weights), ref, rtol=1e-13, atol=1e-13)
    assert np.allclose(K.sparse_convolve(a, offsets, weights), ref, rtol=1e-13, atol=1e-13)


@given(st.integers(1, 4), st.integers(0, 2**31))
def test_tree_min_paths_agree(depth, seed):
    rng = np.random.default_rng(seed)
    fan = 4
    leaves = rng.exponential(1.0, fan ** depth) * (rng.random(fan ** depth) < 0.5)
    costs = 2.0 ** -np.arange(depth + 1)[::-1]
    v1, s1 = K.tree_min_levels_numpy(leaves, costs, fan)
    v2, s2 = K.tree_min_levels(leaves, costs, fan)
    assert len(v1) == len(v2) == depth + 1
    for a, b in zip(v1, v2):
        assert np.allclose(a, b, rtol=1e-12, atol=0)
    for a, b in zip(s1[1:], s2[1:]):
        assert np.allclose(a, b, rtol=1e-12, atol=0)
    # root: min of its cost and the sum of the children
    assert v1[-1][0] == min(costs[-1], s1[-1][0])


def test_accumulate_separable_paths_agree(rng):
    T, r = 500, 5
    shape = (40, 30)
    s0 = rng.integers(0, shape[0] - r + 1, T)
    s1 = rng.integers(0, shape[1] - r + 1, T)
    w0 = rng.random((T, r))
    w1 = rng.random((T, r))
    c = rng.normal(size=T)
    ref = np.zeros(shape)
    for t in range(T):
        ref[s0[t]:s0[t] + r, s1[t]:s1[t] + r] += c[t] * np.outer(w0[t], w1[t])
    assert np.allclose(K.accumulate_separable_numpy(shape, s0, w0, s1, w1, c), ref, rtol=1e-12, atol=1e-12)
    assert np.allclose(K.accumulate_separable(shape, s0, w0, s1, w1, c), ref, rtol=1e-12, atol=1e-12)


_PROBE = """
import json
import numpy as np
from lloglog import JIT_ENABLED
from lloglog.content import ContentParams, length
from lloglog.families import random_sparse
from lloglog.operators import maximal_fn
from lloglog.surface import SurfaceMeasure
f = random_sparse(resolution=6, seed=2)
mu = SurfaceMeasure("parabola")
M = maximal_fn(mu, f, mu.natural_dilation(), range(-2, 1)).field.values
print(json.dumps({"jit": JIT_ENABLED, "length": length(f, ContentParams(4)), "M": float(M.sum())}))
"""


def _probe(flag):
    env = dict(os.environ, LLOGLOG_JIT=flag)
    res = subprocess.run([sys.executable, "-c", _PROBE], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def test_env_flag_selects_numpy_path():
    off = _probe("0")
    assert off["jit"] is False
    on = _probe("1")
    assert on["length"] == pytest.approx(off["length"], rel=1e-12)
    assert on["M"] == pytest.approx(off["M"], rel=1e-12)
