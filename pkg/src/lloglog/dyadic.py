"""Dyadic cubes, grid functions on a dyadic root, and the laminar tree.

A ``GridFunction`` stores a dense array of cell values at a fixed working
resolution inside an explicit root cube. The wire format is sparse (only
nonzero cells are written).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = "1"


class InvariantViolation(AssertionError):
    """A certified inequality or structural invariant failed at runtime."""


def fsum(a) -> float:
    return math.fsum(np.asarray(a, dtype=np.float64).ravel().tolist())


# --------------------------------------------------------------------------
# cubes
# --------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "level", int(self.level))
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def side(self) -> float:
        return math.ldexp(1.0, -self.level)

    @property
    def volume(self) -> float:
        return self.side ** self.dim

    def lower(self) -> np.ndarray:
        return np.array(self.coords, dtype=np.float64) * self.side

    def upper(self) -> np.ndarray:
        return (np.array(self.coords, dtype=np.float64) + 1.0) * self.side

    def center(self) -> np.ndarray:
        return (np.array(self.coords, dtype=np.float64) + 0.5) * self.side

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level - 1, tuple(c >> 1 for c in self.coords))

    def ancestor(self, level: int) -> "DyadicCube":
        if level > self.level:
            raise ValueError("ancestor level must not exceed cube level")
        s = self.level - level
        return DyadicCube(level, tuple(c >> s for c in self.coords))

    def contains(self, other: "DyadicCube") -> bool:
        if other.level < self.level or other.dim != self.dim:
            return False
        return other.ancestor(self.level) == self

    def intersects(self, other: "DyadicCube") -> bool:
        return self.contains(other) or other.contains(self)

    def contains_point(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower()) and np.all(x < self.upper()))

    def cells(self, level: int) -> tuple:
        """Index ranges (per axis, global indices) of the level-``level`` cells inside."""
        s = level - self.level
        if s < 0:
            raise ValueError("level coarser than the cube")
        return tuple((c << s, (c + 1) << s) for c in self.coords)

    def to_dict(self) -> dict:
        return {"level": self.level, "coords": list(self.coords)}

    @staticmethod
    def from_dict(d) -> "DyadicCube":
        return DyadicCube(int(d["level"]), tuple(d["coords"]))


def children(cube: DyadicCube) -> list:
    """The 2^d dyadic children of ``cube``, in lexicographic order."""
    out = []
    for bits in itertools.product((0, 1), repeat=cube.dim):
        out.append(DyadicCube(cube.level + 1, tuple(2 * c + b for c, b in zip(cube.coords, bits))))
    return out


def cube_containing(x, level: int) -> DyadicCube:
    x = np.asarray(x, dtype=np.float64)
    return DyadicCube(level, tuple(int(math.floor(math.ldexp(xi, level))) for xi in x))


def common_ancestor(a: DyadicCube, b: DyadicCube) -> DyadicCube:
    lev = min(a.level, b.level)
    a, b = a.ancestor(lev), b.ancestor(lev)
    while a != b:
        a, b = a.parent(), b.parent()
    return a


class CubeCollection:
    """Finite set of dyadic cubes, normalized to an antichain."""

    def __init__(self, cubes=(), normalize=True):
        cubes = set(cubes)
        if normalize:
            cubes = _maximal_elements(cubes)
        self.cubes = frozenset(cubes)

    def __iter__(self):
        return iter(sorted(self.cubes))

    def __len__(self):
        return len(self.cubes)

    def __contains__(self, c):
        return c in self.cubes

    def __eq__(self, other):
        return isinstance(other, CubeCollection) and self.cubes == other.cubes

    def __hash__(self):
        return hash(self.cubes)

    def __repr__(self):
        return f"CubeCollection({sorted(self.cubes)!r})"

    def total_length(self, beta: float = 1.0) -> float:
        return math.fsum(c.side ** beta for c in self.cubes)

    def covers(self, cube: DyadicCube) -> bool:
        return any(q.contains(cube) for q in self.cubes)

    def to_list(self) -> list:
        return [c.to_dict() for c in sorted(self.cubes)]


def _maximal_elements(cubes) -> set:
    kept = set()
    if not cubes:
        return kept
    top = min(c.level for c in cubes)
    for c in sorted(cubes, key=lambda c: c.level):
        if not any(c.ancestor(lev) in kept for lev in range(top, c.level)):
            kept.add(c)
    return kept


# --------------------------------------------------------------------------
# Morton (Z-order) layout: children of a node are contiguous blocks of 2^d
# --------------------------------------------------------------------------

def _morton_axes(d: int, depth: int):
    return [k * depth + b for b in range(depth) for k in range(d)]


def to_morton(a: np.ndarray) -> np.ndarray:
    d = a.ndim
    side = a.shape[0]
    depth = side.bit_length() - 1
    if depth == 0:
        return a.reshape(-1).copy()
    return np.ascontiguousarray(a.reshape((2,) * (d * depth)).transpose(_morton_axes(d, depth))).reshape(-1)


def from_morton(flat: np.ndarray, d: int) -> np.ndarray:
    total = flat.shape[0]
    depth = (total.bit_length() - 1) // d
    side = 1 << depth
    if depth == 0:
        return flat.reshape((1,) * d).copy()
    perm = _morton_axes(d, depth)
    inv = np.argsort(perm)
    return np.ascontiguousarray(flat.reshape((2,) * (d * depth)).transpose(inv)).reshape((side,) * d)


def block_sum(a: np.ndarray, factor: int) -> np.ndarray:
    """Sum over non-overlapping blocks of ``factor`` cells along every axis."""
    if factor == 1:
        return a
    d = a.ndim
    shape = []
    for s in a.shape:
        shape += [s // factor, factor]
    return a.reshape(shape).sum(axis=tuple(range(1, 2 * d, 2)))


def upsample(a: np.ndarray, factor: int) -> np.ndarray:
    out = a
    for ax in range(a.ndim):
        out = np.repeat(out, factor, axis=ax)
    return out


# --------------------------------------------------------------------------
# grid functions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridFunction:
    root: DyadicCube
    resolution: int
    values: np.ndarray
    nonnegative: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.resolution < self.root.level:
            raise ValueError("resolution must be at least the root level")
        side = 1 << (self.resolution - self.root.level)
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (side,) * self.root.dim:
            raise ValueError(f"values shape {v.shape} does not match root/resolution {(side,) * self.root.dim}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        if self.nonnegative and np.any(v < 0):
            raise InvariantViolation("nonnegative flag set but negative values present")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    # construction ---------------------------------------------------------

    @staticmethod
    def zeros(root: DyadicCube, resolution: int) -> "GridFunction":
        side = 1 << (resolution - root.level)
        return GridFunction(root, resolution, np.zeros((side,) * root.dim))

    @staticmethod
    def indicator(cube: DyadicCube, root: DyadicCube, resolution: int, value=1.0) -> "GridFunction":
        g = GridFunction.zeros(root, resolution)
        return g.with_values(_cube_mask(root, resolution, cube) * float(value))

    @staticmethod
    def from_callable(fn, root: DyadicCube, resolution: int) -> "GridFunction":
        """Sample ``fn`` at cell centers (``fn`` receives one array per axis)."""
        side = 1 << (resolution - root.level)
        h = math.ldexp(1.0, -resolution)
        axes = [(np.arange(side) + 0.5) * h + root.lower()[k] for k in range(root.dim)]
        grids = np.meshgrid(*axes, indexing="ij")
        vals = np.broadcast_to(np.asarray(fn(*grids), dtype=np.float64), (side,) * root.dim)
        return GridFunction(root, resolution, np.array(vals))

    def with_values(self, values, nonnegative=None) -> "GridFunction":
        nn = self.nonnegative if nonnegative is None else nonnegative
        if nn and np.any(np.asarray(values) < 0):
            nn = False
        return GridFunction(self.root, self.resolution, np.asarray(values, dtype=np.float64), nn)

    # geometry -------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.root.dim

    @property
    def cell_side(self) -> float:
        return math.ldexp(1.0, -self.resolution)

    @property
    def cell_volume(self) -> float:
        return math.ldexp(1.0, -self.resolution * self.dim)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def cell_offset(self) -> np.ndarray:
        """Global index of local cell 0 along each axis."""
        return np.array(self.root.coords, dtype=np.int64) << (self.resolution - self.root.level)

    def cell_centers(self, axis: int) -> np.ndarray:
        side = self.shape[0]
        return (np.arange(side) + 0.5) * self.cell_side + self.root.lower()[axis]

    # integrals ------------------------------------------------------------

    def integral(self) -> float:
        return fsum(self.values) * self.cell_volume

    def abs_integral(self) -> float:
        return fsum(np.abs(self.values)) * self.cell_volume

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def block_masses(self, n: int, absolute: bool = True) -> np.ndarray:
        """Masses of the level-``n`` cells inside root (``root.level <= n <= resolution``)."""
        if not self.root.level <= n <= self.resolution:
            raise ValueError(f"level {n} outside [{self.root.level}, {self.resolution}]")
        v = np.abs(self.values) if absolute else self.values
        return block_sum(v, 1 << (self.resolution - n)) * self.cell_volume

    # resolution and root changes --------------------------------------------

    def refine(self, resolution: int) -> "GridFunction":
        if resolution < self.resolution:
            raise ValueError("refine only increases resolution")
        if resolution == self.resolution:
            return self
        return GridFunction(self.root, resolution,
                            upsample(self.values, 1 << (resolution - self.resolution)),
                            self.nonnegative)

    def coarsen(self, resolution: int) -> "GridFunction":
        """Cell averages at a coarser resolution (the conditional expectation, stored coarsely)."""
        if resolution > self.resolution or resolution < self.root.level:
            raise ValueError("bad coarsening resolution")
        f = 1 << (self.resolution - resolution)
        vals = block_sum(self.values, f) / float(f ** self.dim)
        return GridFunction(self.root, resolution, vals, self.nonnegative)

    def lift(self, new_root: DyadicCube) -> "GridFunction":
        """Embed into a larger root cube, extending by zero."""
        if new_root == self.root:
            return self
        if not new_root.contains(self.root):
            raise ValueError("new root must contain the current root")
        out = np.zeros((1 << (self.resolution - new_root.level),) * self.dim)
        off = (np.array(self.root.coords) << (self.resolution - self.root.level)) - (
            np.array(new_root.coords) << (self.resolution - new_root.level))
        side = self.shape[0]
        out[tuple(slice(int(o), int(o) + side) for o in off)] = self.values
        return GridFunction(new_root, self.resolution, out, self.nonnegative)

    def restrict(self, cube: DyadicCube) -> "GridFunction":
        """Multiply by the indicator of ``cube`` (same root and resolution)."""
        return self.with_values(self.values * _cube_mask(self.root, self.resolution, cube))

    def crop(self, cube: DyadicCube) -> "GridFunction":
        """Re-root onto a sub-cube, discarding values outside it."""
        if not self.root.contains(cube):
            raise ValueError("crop cube must lie inside root")
        if cube.level > self.resolution:
            raise ValueError("crop cube finer than resolution")
        sl = _cube_slices(self.root, self.resolution, cube)
        return GridFunction(cube, self.resolution, self.values[sl].copy(), self.nonnegative)

    def support_box(self) -> DyadicCube:
        """Smallest dyadic cube inside root containing the support (root if zero)."""
        nz = np.argwhere(self.values != 0)
        if nz.size == 0:
            return self.root
        off = self.cell_offset()
        lo = DyadicCube(self.resolution, tuple(int(x) for x in nz.min(axis=0) + off))
        hi = DyadicCube(self.resolution, tuple(int(x) for x in nz.max(axis=0) + off))
        return common_ancestor(lo, hi)

    # serialization --------------------------------------------------------

    def to_json_dict(self) -> dict:
        off = self.cell_offset()
        # -0.0 is kept so the round trip is bit-exact
        idx = np.argwhere((self.values != 0) | np.signbit(self.values))
        cells = [[[int(i) + int(o) for i, o in zip(ix, off)], float(self.values[tuple(ix)])] for ix in idx]
        return {
            "version": FORMAT_VERSION,
            "dimension": self.dim,
            "root": self.root.to_dict(),
            "resolution": self.resolution,
            "nonnegative": bool(self.nonnegative),
            "cells": cells,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json_dict(d) -> "GridFunction":
        root = DyadicCube.from_dict(d["root"])
        if len(root.coords) != int(d["dimension"]):
            raise ValueError("root coords do not match dimension")
        res = int(d["resolution"])
        g = np.zeros((1 << (res - root.level),) * root.dim)
        off = np.array(root.coords, dtype=np.int64) << (res - root.level)
        for ix, val in d["cells"]:
            loc = tuple(int(i) - int(o) for i, o in zip(ix, off))
            if any(x < 0 or x >= g.shape[0] for x in loc):
                raise ValueError(f"cell {ix} lies outside the root cube")
            g[loc] = float(val)
        return GridFunction(root, res, g, bool(d.get("nonnegative", False)))

    @staticmethod
    def from_json(text: str) -> "GridFunction":
        return GridFunction.from_json_dict(json.loads(text))

    def __repr__(self):
        return (f"GridFunction(root={self.root}, resolution={self.resolution}, "
                f"nnz={int(np.count_nonzero(self.values))}, integral={self.integral():.6g})")


def _cube_slices(root: DyadicCube, resolution: int, cube: DyadicCube):
    s = resolution - max(cube.level, root.level)
    sl = []
    for c, r in zip(cube.coords, root.coords):
        if cube.level >= root.level:
            lo = (c << (resolution - cube.level)) - (r << (resolution - root.level))
            sl.append(slice(lo, lo + (1 << (resolution - cube.level))))
        else:
            sl.append(slice(0, 1 << s))
    return tuple(sl)


def _cube_mask(root: DyadicCube, resolution: int, cube: DyadicCube) -> np.ndarray:
    side = 1 << (resolution - root.level)
    m = np.zeros((side,) * root.dim)
    if cube.level > resolution:
        raise ValueError("cube finer than the grid resolution")
    if cube.contains(root):
        m[...] = 1.0
    elif root.contains(cube):
        m[_cube_slices(root, resolution, cube)] = 1.0
    return m


def common_grid(u: GridFunction, w: GridFunction):
    """Bring two grid functions onto a shared root and resolution."""
    if u.dim != w.dim:
        raise ValueError(f"incompatible dimensions {u.dim} and {w.dim}")
    res = max(u.resolution, w.resolution)
    root = common_ancestor(u.root, w.root)
    return u.refine(res).lift(root), w.refine(res).lift(root)


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------

def conditional_expectation(v: GridFunction, n: int) -> GridFunction:
    """E_n[v]: replace v by its level-``n`` cell averages (kept at v's resolution)."""
    if n > v.resolution:
        raise ValueError(f"level {n} finer than resolution {v.resolution}")
    if n < v.root.level:
        raise ValueError(f"level {n} coarser than the root")
    f = 1 << (v.resolution - n)
    avg = block_sum(v.values, f) / float(f ** v.dim)
    return v.with_values(upsample(avg, f))


def support_mask(v: GridFunction, n: int) -> np.ndarray:
    """Boolean array over level-``n`` cells: cell average of |v| nonzero."""
    return v.block_masses(n, absolute=True) > 0


def support_set(v: GridFunction, n: int) -> set:
    mask = support_mask(v, n)
    off = np.array(v.root.coords, dtype=np.int64) << (n - v.root.level)
    return {DyadicCube(n, tuple(int(i) + int(o) for i, o in zip(ix, off))) for ix in np.argwhere(mask)}


def pointwise_combine(u: GridFunction, w=None, op: str = "add", scalar: float = 1.0, cube=None):
    """Exact pointwise arithmetic on a common grid.

    ``op`` is one of add, sub, min, max, mul, scale, restrict, abs, sign-split.
    ``sign-split`` returns the pair (u+, u-).
    """
    if op == "scale":
        return u.with_values(u.values * float(scalar), nonnegative=u.nonnegative and scalar >= 0)
    if op == "abs":
        return u.with_values(np.abs(u.values), nonnegative=True)
    if op == "sign-split":
        return (u.with_values(np.maximum(u.values, 0.0), nonnegative=True),
                u.with_values(np.maximum(-u.values, 0.0), nonnegative=True))
    if op in ("restrict", "restrict-to-cube"):
        return u.restrict(cube)
    if w is None:
        raise ValueError(f"op {op!r} needs two operands")
    a, b = common_grid(u, w)
    if op == "add":
        vals = a.values + b.values
    elif op == "sub":
        vals = a.values - b.values
    elif op == "min":
        vals = np.minimum(a.values, b.values)
    elif op == "max":
        vals = np.maximum(a.values, b.values)
    elif op == "mul":
        vals = a.values * b.values
    else:
        raise ValueError(f"unknown op {op!r}")
    return GridFunction(a.root, a.resolution, vals)


def grid_sum(funcs) -> GridFunction:
    funcs = list(funcs)
    if not funcs:
        raise ValueError("empty sum")
    out = funcs[0]
    for g in funcs[1:]:
        out = pointwise_combine(out, g, "add")
    return out


def cubes_up_to_level(root: DyadicCube, level: int):
    """All dyadic cubes inside ``root`` with level at most ``level``."""
    out = [root]
    frontier = [root]
    for _ in range(root.level, level):
        frontier = [c for q in frontier for c in children(q)]
        out.extend(frontier)
    return out
