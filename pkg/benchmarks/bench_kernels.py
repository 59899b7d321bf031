"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is run once to warm the JIT, then timed ``repeat`` times; the
best time is reported. Outputs of the two paths are compared as well, so a
speedup is never reported for a kernel that disagrees.
"""

import argparse
import json
import sys
import time

import numpy as np

from lloglog import _kernels as K


def _best(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a[0], b[0]))
    return bool(np.allclose(a, b, rtol=1e-12, atol=1e-12))


def cases(rng):
    d, depth = 2, 10
    leaves = rng.exponential(1.0, (1 << d) ** depth) * (rng.random((1 << d) ** depth) < 0.05)
    costs = 2.0 ** (-np.arange(depth + 1))
    yield ("tree_min_levels 4^10 leaves", lambda: K.tree_min_levels_numpy(leaves, costs, 1 << d),
           lambda: K.tree_min_levels(leaves, costs, 1 << d))

    a = rng.standard_normal((256, 256))
    offs = rng.integers(-20, 21, size=(400, 2))
    w = rng.standard_normal(400)
    yield ("sparse_convolve 256^2, 400 taps", lambda: K.sparse_convolve_numpy(a, offs, w),
           lambda: K.sparse_convolve(a, offs, w))

    T, r = 20000, 6
    s0 = rng.integers(0, 256 - r, T)
    s1 = rng.integers(0, 256 - r, T)
    w0 = rng.random((T, r))
    w1 = rng.random((T, r))
    c = rng.random(T)
    yield ("accumulate_separable 20000 x 6 x 6", lambda: K.accumulate_separable_numpy((256, 256), s0, w0, s1, w1, c),
           lambda: K.accumulate_separable((256, 256), s0, w0, s1, w1, c))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)

    if not K.JIT_ENABLED:
        print("numba path disabled (LLOGLOG_JIT=0 or numba missing); timing numpy only")
    rows = []
    print(f"{'kernel':40s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}  match")
    for name, np_fn, jit_fn in cases(np.random.default_rng(args.seed)):
        t_np = _best(np_fn, args.repeat)
        if K.JIT_ENABLED:
            t_jit = _best(jit_fn, args.repeat)
            match = _same(np_fn(), jit_fn())
        else:
            t_jit, match = float("nan"), True
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_jit, "match": match})
        jit_col = f"{1e3 * t_jit:11.2f} {t_np / t_jit:7.1f}x" if K.JIT_ENABLED else f"{'-':>11s} {'-':>8s}"
        print(f"{name:40s} {1e3 * t_np:11.2f} {jit_col}  {match}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"jit": K.JIT_ENABLED, "rows": rows}, fh, indent=1)
    return 0 if all(r["match"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
