"""Deterministic test-function families."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicCube, GridFunction


@dataclass(frozen=True)
class TestFamily:
    name: str
    params: dict = field(default_factory=dict, hash=False)
    seed: int = 0

    def build(self) -> GridFunction:
        fn = FAMILIES.get(self.name)
        if fn is None:
            raise ValueError(f"unknown family {self.name!r}; choose from {sorted(FAMILIES)}")
        return fn(seed=self.seed, **self.params)


def stacked_rectangles(n: int, seed: int = 0) -> GridFunction:
    """Indicator of the union over nu = 0..n of [nu, nu + 2^-nu) x [0, 1).

    Covering it needs total side length n + 1 while every dyadic cube
    carries mass at most its side length, and the integral stays below 2.
    The grid sits at resolution n on a root of side 2^ceil(log2(n + 1)).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    top = max(1, int(np.ceil(np.log2(n + 1))))
    root = DyadicCube(-top, (0, 0))
    side = 1 << (n + top)
    vals = np.zeros((side, side))
    cells = 1 << n
    for nu in range(n + 1):
        x0 = nu * cells
        vals[x0:x0 + (cells >> nu), :cells] = 1.0
    return GridFunction(root, n, vals, nonnegative=True)


def lambda_stack(j: int, resolution: int = 7, seed: int = 0) -> GridFunction:
    """2^j times the indicator of a stack of j + 1 parabolic boxes.

    Box i sits at height i / (j + 2) with sides 2^-(i+1) by 2^-2(i+1),
    so the set is thin at many parabolic scales and its measure shrinks
    only slowly while the height 2^j grows.
    """
    root = DyadicCube(0, (0, 0))
    N = 1 << resolution
    vals = np.zeros((N, N))
    for i in range(j + 1):
        w = max(1, N >> (i + 1))
        hgt = max(1, N >> (2 * (i + 1)))
        y0 = (i * N) // (j + 2)
        x0 = N // 4
        vals[x0:x0 + w, y0:y0 + hgt] = 1.0
    return GridFunction(root, resolution, float(2 ** j) * vals, nonnegative=True)


def indicator_stack(lam: float, resolution: int = 7, seed: int = 0) -> GridFunction:
    """lam times the indicator of a fixed central square."""
    root = DyadicCube(0, (0, 0))
    N = 1 << resolution
    vals = np.zeros((N, N))
    vals[3 * N // 8:5 * N // 8, 3 * N // 8:5 * N // 8] = lam
    return GridFunction(root, resolution, vals, nonnegative=True)


def dyadic_comb(levels: int, resolution: int = 7, amplitude: float = 2.0, seed: int = 0) -> GridFunction:
    """Random comb: at level i, a random set of cells of side 2^-i-2 with height amplitude^i."""
    rng = np.random.default_rng(seed)
    root = DyadicCube(0, (0, 0))
    N = 1 << resolution
    vals = np.zeros((N, N))
    for i in range(levels):
        s = max(1, N >> (i + 2))
        for _ in range(2):
            x, y = rng.integers(0, N - s + 1, size=2)
            vals[x:x + s, y:y + s] += amplitude ** i
    return GridFunction(root, resolution, vals, nonnegative=True)


def random_sparse(resolution: int = 6, density: float = 0.1, scale: float = 1.0, d: int = 2,
                  signed: bool = False, seed: int = 0) -> GridFunction:
    """Exponential values on a random fraction of cells of the unit cube."""
    rng = np.random.default_rng(seed)
    N = 1 << resolution
    shape = (N,) * d
    vals = rng.exponential(scale, shape) * (rng.random(shape) < density)
    if signed:
        vals *= rng.choice([-1.0, 1.0], shape)
    return GridFunction(DyadicCube(0, (0,) * d), resolution, vals, nonnegative=not signed)


def spike_train(m: int, resolution: int = 8, seed: int = 0) -> GridFunction:
    """Spikes lam_i = 2^(2^i) on cells of side 2^-(i+3) for i < m, summable in L log log L."""
    rng = np.random.default_rng(seed)
    root = DyadicCube(0, (0, 0))
    N = 1 << resolution
    vals = np.zeros((N, N))
    for i in range(m):
        s = max(1, N >> (i + 3))
        x, y = rng.integers(0, N - s + 1, size=2)
        vals[x:x + s, y:y + s] = 2.0 ** (2 ** i)
    return GridFunction(root, resolution, vals, nonnegative=True)


FAMILIES = {
    "stacked_rectangles": stacked_rectangles,
    "lambda_stack": lambda_stack,
    "indicator_stack": indicator_stack,
    "dyadic_comb": dyadic_comb,
    "random_sparse": random_sparse,
    "spike_train": spike_train,
}
