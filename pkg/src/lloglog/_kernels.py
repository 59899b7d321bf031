"""Hot inner loops, each with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``LLOGLOG_JIT`` is not set to
``0``/``false``/``off``. Both paths compute the same quantities; the test
suite checks them against each other and ``benchmarks/bench_kernels.py``
times them.
"""

import os

import numpy as np

_FLAG = os.environ.get("LLOGLOG_JIT", "1").strip().lower()

try:
    if _FLAG in ("0", "false", "off", "no"):
        raise ImportError("jit disabled by LLOGLOG_JIT")
    from numba import njit
except ImportError:
    njit = None

JIT_ENABLED = njit is not None


# --------------------------------------------------------------------------
# tree min-plus recursion on Morton-ordered leaves
# --------------------------------------------------------------------------

def tree_min_levels_numpy(leaf_vals, costs, fan):
    """Bottom-up ``node = min(cost[level], sum(children))``.

    ``leaf_vals`` is Morton ordered so the children of node ``i`` are the
    contiguous block ``[i*fan, (i+1)*fan)``. ``costs[j]`` is the cost of a
    node ``j`` levels above the leaves (``costs[0]`` is unused here: leaf
    values are taken as given). Returns ``(values, child_sums)``, lists
    indexed by height; ``child_sums[0]`` is None.
    """
    values = [np.asarray(leaf_vals, dtype=np.float64)]
    child_sums = [None]
    for j in range(1, len(costs)):
        s = values[-1].reshape(-1, fan).sum(axis=1)
        child_sums.append(s)
        values.append(np.minimum(costs[j], s))
    return values, child_sums


if JIT_ENABLED:

    @njit(cache=True)
    def _tree_min_flat(leaf_vals, costs, fan):
        n0 = leaf_vals.shape[0]
        depth = costs.shape[0] - 1
        total = 0
        size = n0
        for _ in range(depth + 1):
            total += size
            size //= fan
        vals = np.empty(total, dtype=np.float64)
        sums = np.zeros(total, dtype=np.float64)
        vals[:n0] = leaf_vals
        src = 0
        dst = n0
        size = n0
        for j in range(1, depth + 1):
            parents = size // fan
            c = costs[j]
            for i in range(parents):
                acc = 0.0
                base = src + i * fan
                for k in range(fan):
                    acc += vals[base + k]
                sums[dst + i] = acc
                vals[dst + i] = c if c < acc else acc
            src = dst
            dst += parents
            size = parents
        return vals, sums

    def tree_min_levels(leaf_vals, costs, fan):
        leaf_vals = np.ascontiguousarray(leaf_vals, dtype=np.float64)
        costs = np.ascontiguousarray(costs, dtype=np.float64)
        flat_v, flat_s = _tree_min_flat(leaf_vals, costs, fan)
        values, child_sums = [], []
        start, size = 0, leaf_vals.shape[0]
        for j in range(len(costs)):
            values.append(flat_v[start:start + size])
            child_sums.append(None if j == 0 else flat_s[start:start + size])
            start += size
            size //= fan
        return values, child_sums

else:
    tree_min_levels = tree_min_levels_numpy


# --------------------------------------------------------------------------
# sparse convolution: out[x] = sum_m w[m] * a[x - m], zero extension
# --------------------------------------------------------------------------

def sparse_convolve_numpy(a, offsets, weights):
    a = np.asarray(a, dtype=np.float64)
    out = np.zeros_like(a)
    shape = a.shape
    for off, w in zip(offsets, weights):
        dst, src = [], []
        empty = False
        for m, n in zip(off, shape):
            m = int(m)
            if abs(m) >= n:
                empty = True
                break
            if m >= 0:
                dst.append(slice(m, n))
                src.append(slice(0, n - m))
            else:
                dst.append(slice(0, n + m))
                src.append(slice(-m, n))
        if empty:
            continue
        out[tuple(dst)] += w * a[tuple(src)]
    return out


if JIT_ENABLED:

    @njit(cache=True)
    def _sparse_convolve_1d(a, offsets, weights):
        n = a.shape[0]
        out = np.zeros(n)
        for e in range(weights.shape[0]):
            m = offsets[e, 0]
            w = weights[e]
            lo = m if m > 0 else 0
            hi = n + m if m < 0 else n
            for i in range(lo, hi):
                out[i] += w * a[i - m]
        return out

    @njit(cache=True)
    def _sparse_convolve_2d(a, offsets, weights):
        n0, n1 = a.shape
        out = np.zeros((n0, n1))
        for e in range(weights.shape[0]):
            m0 = offsets[e, 0]
            m1 = offsets[e, 1]
            w = weights[e]
            lo0 = m0 if m0 > 0 else 0
            hi0 = n0 + m0 if m0 < 0 else n0
            lo1 = m1 if m1 > 0 else 0
            hi1 = n1 + m1 if m1 < 0 else n1
            for i in range(lo0, hi0):
                for j in range(lo1, hi1):
                    out[i, j] += w * a[i - m0, j - m1]
        return out

    def sparse_convolve(a, offsets, weights):
        a = np.ascontiguousarray(a, dtype=np.float64)
        offsets = np.ascontiguousarray(offsets, dtype=np.int64).reshape(-1, a.ndim)
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if a.ndim == 1:
            return _sparse_convolve_1d(a, offsets, weights)
        if a.ndim == 2:
            return _sparse_convolve_2d(a, offsets, weights)
        return sparse_convolve_numpy(a, offsets, weights)

else:
    sparse_convolve = sparse_convolve_numpy


# --------------------------------------------------------------------------
# separable accumulation: K[s0+i, s1+j] += c[t] * w0[t, i] * w1[t, j]
# --------------------------------------------------------------------------

def accumulate_separable_numpy(shape, starts0, w0, starts1, w1, coef, chunk=2048):
    out = np.zeros(shape)
    r0, r1 = w0.shape[1], w1.shape[1]
    i0 = starts0[:, None] + np.arange(r0)[None, :]
    i1 = starts1[:, None] + np.arange(r1)[None, :]
    for lo in range(0, coef.shape[0], chunk):
        sl = slice(lo, lo + chunk)
        block = coef[sl, None, None] * w0[sl, :, None] * w1[sl, None, :]
        flat = i0[sl, :, None] * shape[1] + i1[sl, None, :]
        np.add.at(out.reshape(-1), flat.ravel(), block.ravel())
    return out


if JIT_ENABLED:

    @njit(cache=True)
    def _accumulate_separable(n0, n1, starts0, w0, starts1, w1, coef):
        out = np.zeros((n0, n1))
        r0 = w0.shape[1]
        r1 = w1.shape[1]
        for t in range(coef.shape[0]):
            c = coef[t]
            s0 = starts0[t]
            s1 = starts1[t]
            for i in range(r0):
                a = c * w0[t, i]
                if a == 0.0:
                    continue
                for j in range(r1):
                    out[s0 + i, s1 + j] += a * w1[t, j]
        return out

    def accumulate_separable(shape, starts0, w0, starts1, w1, coef):
        return _accumulate_separable(
            int(shape[0]), int(shape[1]),
            np.ascontiguousarray(starts0, dtype=np.int64),
            np.ascontiguousarray(w0, dtype=np.float64),
            np.ascontiguousarray(starts1, dtype=np.int64),
            np.ascontiguousarray(w1, dtype=np.float64),
            np.ascontiguousarray(coef, dtype=np.float64),
        )

else:
    accumulate_separable = accumulate_separable_numpy
