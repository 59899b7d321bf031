"""Length, thickness and critical thickness of grid functions.

All three are computed by passes over the dyadic tree below the root,
restricted to cubes of sidelength at least 2^-n. The tree is laid out in
Morton order so a node's children are a contiguous block of 2^d entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dyadic import (CubeCollection, DyadicCube, GridFunction, InvariantViolation,
                     cubes_up_to_level, fsum, from_morton, to_morton)

REL_TOL = 1e-12


@dataclass(frozen=True)
class ContentParams:
    n: int
    beta: float = 1.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")


@dataclass
class ThetaResult:
    theta: float
    minimizing_collection: CubeCollection
    residual_set: frozenset
    residual_mask: np.ndarray = None
    length: float = 0.0
    total: float = 0.0
    residual_mass: float = 0.0
    iterations: int = 0

    def identity_gap(self, beta: float = 1.0) -> float:
        """theta*Lambda - (2 theta sum l^beta + mass on the residual set); zero at the critical value."""
        return (self.theta * self.length
                - 2 * self.theta * self.minimizing_collection.total_length(beta) - self.residual_mass)


# --------------------------------------------------------------------------
# tree setup
# --------------------------------------------------------------------------

def _prepare(v: GridFunction, n: int) -> GridFunction:
    """Lift the root to level ``n`` if it is smaller than a level-n cell, refine if coarser than n."""
    if v.root.level > n:
        v = v.lift(v.root.ancestor(n))
    if v.resolution < n:
        v = v.refine(n)
    return v


class _Tree:
    """Leaf masses at level n in Morton order plus per-height sidelengths."""

    def __init__(self, v: GridFunction, p: ContentParams):
        v = _prepare(v, p.n)
        self.v = v
        self.n = p.n
        self.beta = p.beta
        self.d = v.dim
        self.fan = 1 << self.d
        self.depth = p.n - v.root.level
        masses = v.block_masses(p.n, absolute=True)
        self.leaf_grid = masses
        self.leaves = to_morton(masses)
        # side^beta of a node `j` levels above the leaves
        self.lengths = np.array([math.ldexp(1.0, -(p.n - j)) ** p.beta for j in range(self.depth + 1)])
        self.total = fsum(masses)

    def level_masses(self):
        vals = [self.leaves]
        for _ in range(self.depth):
            vals.append(vals[-1].reshape(-1, self.fan).sum(axis=1))
        return vals

    def cube_at(self, height: int, morton_index: int) -> DyadicCube:
        """DyadicCube for node ``morton_index`` at ``height`` above the leaves."""
        lvl = self.n - height
        coords = [0] * self.d
        idx = morton_index
        bit = 0
        while idx:
            for k in range(self.d - 1, -1, -1):
                coords[k] |= (idx & 1) << bit
                idx >>= 1
            bit += 1
        base = self.v.root.coords
        rel = lvl - self.v.root.level
        return DyadicCube(lvl, tuple((b << rel) + c for b, c in zip(base, coords)))


# --------------------------------------------------------------------------
# length and thickness
# --------------------------------------------------------------------------

def length(v: GridFunction, p: ContentParams) -> float:
    """Minimal sum of l(Q)^beta over dyadic covers of the level-n support of |v|."""
    t = _Tree(v, p)
    leaf = np.where(t.leaves > 0, t.lengths[0], 0.0)
    vals, _ = _kernels.tree_min_levels(leaf, t.lengths, t.fan)
    return float(vals[-1][0])


def length_cover(v: GridFunction, p: ContentParams) -> CubeCollection:
    """A minimal cover realizing ``length`` (prefers the larger cube on ties)."""
    t = _Tree(v, p)
    leaf = np.where(t.leaves > 0, t.lengths[0], 0.0)
    _, sums = _kernels.tree_min_levels(leaf, t.lengths, t.fan)
    chosen = _backtrace(t, t.lengths, sums, take_leaf=t.leaves > 0)
    return CubeCollection(t.cube_at(h, i) for h, i in chosen)


def thickness(v: GridFunction, p: ContentParams) -> float:
    """max over dyadic Q inside root, l(Q) >= 2^-n, of l(Q)^-beta * integral of |v| over Q."""
    t = _Tree(v, p)
    best = 0.0
    for j, m in enumerate(t.level_masses()):
        best = max(best, float(m.max()) / float(t.lengths[j]))
    return float(best)


def complementarity_check(v: GridFunction, p: ContentParams):
    """(integral of v, length*thickness); raises if the first exceeds the second."""
    lhs = v.abs_integral()
    rhs = length(v, p) * thickness(v, p)
    if lhs > rhs * (1 + REL_TOL) + 1e-300:
        raise InvariantViolation(f"integral {lhs!r} exceeds length*thickness {rhs!r}")
    return lhs, rhs


# --------------------------------------------------------------------------
# critical thickness
# --------------------------------------------------------------------------

def _F_levels(t: _Tree, gamma: float):
    costs = 2.0 * gamma * t.lengths
    leaf = np.minimum(costs[0], t.leaves)
    return _kernels.tree_min_levels(leaf, costs, t.fan)


def parametric_value(v: GridFunction, p: ContentParams, gamma: float) -> float:
    """F(gamma) = min over cube collections of 2 gamma sum l^beta + mass left uncovered."""
    t = _Tree(v, p)
    vals, _ = _F_levels(t, gamma)
    return float(vals[-1][0])


def _backtrace(t: _Tree, costs, sums, take_leaf):
    """Top-down: take a node when its cost does not exceed its children's sum.

    Returns (height, morton index) pairs of the chosen antichain.
    """
    chosen = []
    active = np.array([True])
    for h in range(t.depth, -1, -1):
        if h == 0:
            take = active & take_leaf
        else:
            take = active & (sums[h] > 0) & (costs[h] <= sums[h] * (1 + REL_TOL))
        chosen.extend((h, int(i)) for i in np.flatnonzero(take))
        if h > 0:
            active = np.repeat(active & ~take, t.fan)
    return chosen


def _collection_state(t: _Tree, gamma: float):
    costs = 2.0 * gamma * t.lengths
    vals, sums = _F_levels(t, gamma)
    take_leaf = (t.leaves > 0) & (costs[0] <= t.leaves * (1 + REL_TOL))
    chosen = _backtrace(t, costs, sums, take_leaf)
    covered = np.zeros(t.leaves.shape[0], dtype=bool)
    for h, i in chosen:
        block = t.fan ** h
        covered[i * block:(i + 1) * block] = True
    total_len = math.fsum(t.lengths[h] for h, _ in chosen)
    uncovered = fsum(t.leaves[~covered])
    cubes = [t.cube_at(h, i) for h, i in chosen]
    return float(vals[-1][0]), cubes, covered, total_len, uncovered


def critical_thickness(v: GridFunction, p: ContentParams, method: str = "ratio",
                       rtol: float = 1e-10) -> ThetaResult:
    """Largest gamma with gamma*Lambda <= F(gamma).

    ``method="ratio"`` runs the parametric ratio iteration (each step jumps to
    the exact ratio of the current minimizing collection, so it terminates at
    the critical value); ``method="bisect"`` brackets the root of the concave
    function F(gamma) - gamma*Lambda.
    """
    t = _Tree(v, p)
    if t.total <= 0:
        raise ValueError("degenerate: integral of v is zero")
    lam = length(v, p)
    if lam <= 0:
        raise InvariantViolation("length vanishes although the integral is positive")

    def g(gamma):
        vals, _ = _F_levels(t, gamma)
        return float(vals[-1][0]) - gamma * lam

    scale = t.total
    iters = 0
    if method == "ratio":
        gamma = t.total / lam
        while True:
            iters += 1
            F, chosen, covered, L, U = _collection_state(t, gamma)
            if F >= gamma * lam - REL_TOL * scale or iters > 200:
                break
            denom = lam - 2.0 * L
            new = U / denom
            if not new < gamma:
                break
            gamma = new
    elif method == "bisect":
        hi = t.total / lam
        if g(hi) >= -REL_TOL * scale:
            gamma = hi
        else:
            lo = 0.0
            while hi - lo > rtol * hi:
                iters += 1
                mid = 0.5 * (lo + hi)
                if g(mid) >= 0:
                    lo = mid
                else:
                    hi = mid
            gamma = lo
    else:
        raise ValueError(f"unknown method {method!r}")

    F, chosen, covered, L, U = _collection_state(t, gamma)
    if F < gamma * lam - 1e-8 * scale:
        raise InvariantViolation(f"critical thickness check failed: F={F!r} < gamma*Lambda={gamma * lam!r}")
    if gamma > t.total / lam * (1 + REL_TOL):
        raise InvariantViolation("critical thickness exceeds integral/length")
    resid_grid = from_morton(~covered, t.d)
    base = np.array(t.v.root.coords, dtype=np.int64) << (t.n - t.v.root.level)
    resid = frozenset(DyadicCube(t.n, tuple(int(i) + int(o) for i, o in zip(ix, base)))
                      for ix in np.argwhere(resid_grid & (t.leaf_grid > 0)))
    res = ThetaResult(theta=float(gamma), minimizing_collection=CubeCollection(chosen),
                      residual_set=resid, residual_mask=resid_grid, length=lam,
                      total=t.total, iterations=iters, residual_mass=U)
    return res


def residual_indicator(v: GridFunction, res: ThetaResult, n: int) -> np.ndarray:
    """0/1 array on v's grid for the residual set E_* (uncovered level-n cells)."""
    v2 = _prepare(v, n)
    f = 1 << (v2.resolution - n)
    m = res.residual_mask.astype(np.float64)
    for ax in range(m.ndim):
        m = np.repeat(m, f, axis=ax)
    return m


# --------------------------------------------------------------------------
# brute-force oracles
# --------------------------------------------------------------------------

MAX_ORACLE_NODES = 64
MAX_ORACLE_ANTICHAINS = 3_000_000


def _antichain_table(t: _Tree):
    """Arrays (sum l^beta, covered mass, covers-all-marked) over all antichains."""

    def count(h):
        if h == 0:
            return 2
        return count(h - 1) ** t.fan + 1

    if count(t.depth) > MAX_ORACLE_ANTICHAINS:
        raise ValueError("instance too large for exhaustive enumeration")
    nodes = sum(t.fan ** h for h in range(t.depth + 1))
    if nodes > MAX_ORACLE_NODES:
        raise ValueError("instance too large for exhaustive enumeration")
    masses = t.level_masses()

    def rec(h, i):
        if h == 0:
            m = t.leaves[i]
            return (np.array([t.lengths[0], 0.0]), np.array([m, 0.0]), np.array([True, m == 0]))
        L, M, C = None, None, None
        for k in range(t.fan):
            l2, m2, c2 = rec(h - 1, i * t.fan + k)
            if L is None:
                L, M, C = l2, m2, c2
            else:
                L = (L[:, None] + l2[None, :]).ravel()
                M = (M[:, None] + m2[None, :]).ravel()
                C = (C[:, None] & c2[None, :]).ravel()
        return (np.append(L, t.lengths[h]), np.append(M, masses[h][i]), np.append(C, True))

    return rec(t.depth, 0)


def brute_force_length(v: GridFunction, p: ContentParams) -> float:
    t = _Tree(v, p)
    L, _, C = _antichain_table(t)
    return float(L[C].min())


def brute_force_theta(v: GridFunction, p: ContentParams) -> float:
    """Minimum over antichains with 2 sum l^beta < Lambda of uncovered mass / (Lambda - 2 sum l^beta)."""
    t = _Tree(v, p)
    L, M, C = _antichain_table(t)
    lam = float(L[C].min())
    if t.total <= 0:
        raise ValueError("degenerate: integral of v is zero")
    denom = lam - 2.0 * L
    ok = denom > 0
    ratios = (t.total - M[ok]) / denom[ok]
    return float(ratios.min())


def brute_force_thickness(v: GridFunction, p: ContentParams) -> float:
    """Enumerates every admissible cube and integrates |v| over it directly."""
    v = _prepare(v, p.n)
    best = 0.0
    for c in cubes_up_to_level(v.root, p.n):
        best = max(best, v.restrict(c).abs_integral() / c.side ** p.beta)
    return best
