"""Curve measures in the plane and their grid kernels.

A measure is given parametrically, <mu, f> = int density(t) f(gamma(t)) dt.
Grid kernels hold the mass that the dilate mu_k (or its mollification
mu^n_k) puts in each cell-sized box, so that convolving cell values with the
kernel is exact for piecewise constant f sampled at cell centers.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ._kernels import accumulate_separable
from .dilation import DilationGroup, _bump, build_mollifier
from .dyadic import DyadicCube, GridFunction

CUTOFFS = ("bump", "uniform", "odd_bump")
KINDS = ("parabola", "circle", "graph")
_GL = {q: np.polynomial.legendre.leggauss(q) for q in (4, 8, 16)}

# mollification narrower than this fraction of a cell is treated as the identity
MOLLIFY_FLOOR = 1.0 / 64
# nodes per unit parameter for masses; the bump's flat ends need many
NORM_NODES = 4096


def _intervals(support):
    s = tuple(support)
    if len(s) == 2 and np.isscalar(s[0]):
        s = (s,)
    out = tuple((float(a), float(b)) for a, b in s)
    for a, b in out:
        if not b > a:
            raise ValueError(f"empty parameter interval ({a}, {b})")
    return out


@dataclass(frozen=True)
class SurfaceMeasure:
    """mu = chi(t) weight(t) dt pushed forward by a planar curve gamma.

    kind: parabola (t, |t|^b), circle radius*(cos 2 pi t, sin 2 pi t), or
    graph (t, psi(t)) with psi a spline through ``table``.
    normalize: "mass" scales to unit total mass, "abs" to unit total
    variation, "none" leaves the density as given.
    """

    kind: str = "parabola"
    b: float = 2.0
    cutoff: str = "bump"
    weight: str = None
    support: tuple = (-0.5, 0.5)
    radius: float = 0.5
    table: tuple = None
    normalize: str = "mass"
    nodes_per_unit: int = 64
    _norm: float = field(default=1.0, init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if self.cutoff not in CUTOFFS:
            raise ValueError(f"unknown cutoff {self.cutoff!r}")
        if self.weight not in (None, "inv_t"):
            raise ValueError(f"unknown kernel weight {self.weight!r}")
        object.__setattr__(self, "support", _intervals(self.support))
        if self.kind == "graph":
            if self.table is None:
                raise ValueError("graph surfaces need a (t, psi) table")
            t, psi = (tuple(float(x) for x in col) for col in self.table)
            object.__setattr__(self, "table", (t, psi))
        if self.weight == "inv_t" and any(a <= 0 <= b for a, b in self.support):
            raise ValueError("the 1/t weight needs parameter intervals avoiding 0")
        t, w = self.nodes(per_unit=NORM_NODES)
        raw = self._raw_density(t)
        total = math.fsum((w * raw).tolist())
        tv = math.fsum((w * np.abs(raw)).tolist())
        if self.normalize == "mass":
            if abs(total) <= 1e-12 * tv:
                raise ValueError("cannot normalize a measure with zero mass; use normalize='abs'")
            norm = 1.0 / total
        elif self.normalize == "abs":
            norm = 1.0 / tv
        elif self.normalize == "none":
            norm = 1.0
        else:
            raise ValueError(f"unknown normalization {self.normalize!r}")
        object.__setattr__(self, "_norm", norm)
        if self.max_radius() > 1.0 + 1e-12:
            raise ValueError("surface measure must be supported in the unit ball")

    # geometry ------------------------------------------------------------

    @property
    def dim(self) -> int:
        return 2

    def natural_dilation(self) -> DilationGroup:
        """Dilations that map the curve to itself (up to reparametrization)."""
        if self.kind == "parabola":
            return DilationGroup((1.0, self.b))
        return DilationGroup((1.0, 1.0))

    @functools.cached_property
    def _spline(self):
        t, psi = self.table
        return CubicSpline(np.array(t), np.array(psi))

    def curve(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "parabola":
            return np.stack([t, np.abs(t) ** self.b])
        if self.kind == "circle":
            return self.radius * np.stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)])
        return np.stack([t, self._spline(t)])

    def velocity(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "parabola":
            return np.stack([np.ones_like(t), self.b * np.sign(t) * np.abs(t) ** (self.b - 1)])
        if self.kind == "circle":
            c = 2 * np.pi * self.radius
            return c * np.stack([-np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)])
        return np.stack([np.ones_like(t), self._spline(t, 1)])

    def max_radius(self) -> float:
        t, _ = self.nodes()
        mask = self._raw_density(t) != 0
        if not mask.any():
            return 0.0
        return float(np.max(np.hypot(*self.curve(t[mask]))))

    # density -------------------------------------------------------------

    def _hull(self):
        return min(a for a, _ in self.support), max(b for _, b in self.support)

    def _raw_density(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        inside = np.zeros(t.shape, dtype=bool)
        for a, b in self.support:
            inside |= (t >= a) & (t < b)
        lo, hi = self._hull()
        s = (2 * t - lo - hi) / (hi - lo)
        if self.cutoff == "uniform":
            chi = np.ones_like(t)
        elif self.cutoff == "bump":
            chi = _bump(s, 1.0)
        else:
            chi = s * _bump(s, 1.0)
        if self.weight == "inv_t":
            with np.errstate(divide="ignore"):
                chi = chi / np.where(t == 0, np.inf, t)
        return np.where(inside, chi, 0.0)

    def density(self, t) -> np.ndarray:
        return self._norm * self._raw_density(t)

    def nodes(self, per_unit: int = None, order: int = 8):
        """Composite Gauss-Legendre nodes on the parameter intervals (split at 0)."""
        per_unit = self.nodes_per_unit if per_unit is None else per_unit
        x, w = _GL[order]
        ts, ws = [], []
        for a, b in self.support:
            cuts = [a, b] if not (a < 0 < b) else [a, 0.0, b]
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                panels = max(1, int(math.ceil((hi - lo) * per_unit / order)))
                edges = np.linspace(lo, hi, panels + 1)
                half = 0.5 * np.diff(edges)
                mid = 0.5 * (edges[1:] + edges[:-1])
                ts.append((mid[:, None] + half[:, None] * x[None, :]).ravel())
                ws.append((half[:, None] * w[None, :]).ravel())
        return np.concatenate(ts), np.concatenate(ws)

    def mass(self) -> float:
        t, w = self.nodes(per_unit=NORM_NODES)
        return math.fsum((w * self.density(t)).tolist())

    def total_variation(self) -> float:
        t, w = self.nodes(per_unit=NORM_NODES)
        return math.fsum((w * np.abs(self.density(t))).tolist())

    @property
    def cancellation(self) -> bool:
        return abs(self.mass()) <= 1e-12 * self.total_variation()

    def pair(self, func) -> float:
        """<mu, func> for a callable of points (2, N)."""
        t, w = self.nodes(per_unit=4 * self.nodes_per_unit)
        return math.fsum((w * self.density(t) * func(self.curve(t))).tolist())

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "b": self.b, "cutoff": self.cutoff, "weight": self.weight,
             "support": [list(x) for x in self.support], "radius": self.radius,
             "normalize": self.normalize, "nodes_per_unit": self.nodes_per_unit}
        if self.table is not None:
            d["table"] = [list(x) for x in self.table]
        return d

    @staticmethod
    def from_dict(d: dict) -> "SurfaceMeasure":
        d = dict(d)
        d["support"] = tuple(tuple(x) for x in d.get("support", ((-0.5, 0.5),)))
        if d.get("table") is not None:
            d["table"] = tuple(tuple(x) for x in d["table"])
        return SurfaceMeasure(**d)

    @staticmethod
    def parse(spec: str) -> "SurfaceMeasure":
        """'parabola:b=2', 'circle', 'hilbert:b=2', 'parabola:b=2,cutoff=odd_bump'."""
        name, _, rest = spec.partition(":")
        kw = {}
        for item in filter(None, rest.split(",")):
            key, _, val = item.partition("=")
            key = key.strip()
            if key in ("b", "radius"):
                kw[key] = float(val)
            elif key in ("cutoff", "normalize", "weight"):
                kw[key] = val.strip()
            else:
                raise ValueError(f"unknown surface option {key!r}")
        if name == "hilbert":
            return hilbert_block(kw.get("b", 2.0))
        if name == "circle":
            kw.setdefault("support", (0.0, 1.0))
            kw.setdefault("cutoff", "uniform")
        if name not in KINDS:
            raise ValueError(f"unknown surface {name!r}")
        if kw.get("cutoff") == "odd_bump":
            kw.setdefault("normalize", "abs")
        return SurfaceMeasure(kind=name, **kw)


def hilbert_block(b: float = 2.0) -> SurfaceMeasure:
    """Odd 1/t block on 0.35 <= |t| < 0.7; its lacunary dilates tile 1/t on t != 0."""
    return SurfaceMeasure("parabola", b=b, cutoff="uniform", weight="inv_t",
                          support=((-0.7, -0.35), (0.35, 0.7)), normalize="none")


def parabola_segment(r: float, b: float = 2.0) -> SurfaceMeasure:
    """Normalized arclength-parameter average over t in [0, r] (unit ball constraint: r^2 + r^{2b} <= 1)."""
    return SurfaceMeasure("parabola", b=b, cutoff="uniform", support=(0.0, float(r)), normalize="mass")


# --------------------------------------------------------------------------
# grid kernels
# --------------------------------------------------------------------------

@dataclass
class Kernel:
    """Stencil with out[x] = sum_m weights[m] * f[x - m]; offsets in cells."""

    offsets: np.ndarray        # (M, d) int
    weights: np.ndarray        # (M,)
    error: float = 0.0         # change under halved quadrature
    meta: dict = field(default_factory=dict)

    def mass(self) -> float:
        return math.fsum(self.weights.tolist())

    def dense(self):
        """(array, lowest offset) with array[j] = weight at offset lo + j."""
        if self.weights.size == 0:
            return np.zeros((1,) * self.offsets.shape[1]), np.zeros(self.offsets.shape[1], dtype=np.int64)
        lo = self.offsets.min(axis=0)
        hi = self.offsets.max(axis=0)
        out = np.zeros(tuple(hi - lo + 1))
        np.add.at(out, tuple((self.offsets - lo).T), self.weights)
        return out, lo


def _gather(cells: np.ndarray, vals: np.ndarray) -> tuple:
    if cells.size == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    uniq, inv = np.unique(cells, axis=0, return_inverse=True)
    w = np.bincount(inv.ravel(), weights=vals, minlength=uniq.shape[0])
    return uniq.astype(np.int64), w


def _crossings(fn, t, Y, axis):
    """Parameters where round(Y[axis]) changes between consecutive samples, by bisection."""
    M = np.floor(Y[axis] + 0.5)
    idx = np.nonzero(M[1:] != M[:-1])[0]
    if idx.size == 0:
        return np.zeros(0)
    a, b = t[idx].copy(), t[idx + 1].copy()
    ma = M[idx]
    for _ in range(60):
        mid = 0.5 * (a + b)
        same = np.floor(fn(mid)[axis] + 0.5) == ma
        a = np.where(same, mid, a)
        b = np.where(same, b, mid)
    return 0.5 * (a + b)


def _box_masses(mu: SurfaceMeasure, scale: np.ndarray, h: float, shift: float, order: int):
    fn = lambda s: mu.curve(s) * scale[:, None] / h - shift
    xg, wg = _GL[order]
    cells_all, vals_all = [], []
    for a, b in mu.support:
        probe = np.linspace(a, b, 513)
        sp = np.abs(mu.velocity(probe) * scale[:, None] / h).max()
        steps = int(min(max(64, math.ceil(sp * (b - a) * 4)), 1 << 24))
        t = np.linspace(a, b, steps + 1)
        Y = fn(t)
        bps = [t[[0, -1]]] + [_crossings(fn, t, Y, ax) for ax in range(2)]
        if a < 0 < b:
            bps.append(np.array([0.0]))
        edges = np.unique(np.concatenate(bps))
        lo, hi = edges[:-1], edges[1:]
        keep = hi > lo
        lo, hi = lo[keep], hi[keep]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        cells = np.floor(fn(mid) + 0.5).T.astype(np.int64)
        nodes = mid[:, None] + half[:, None] * xg[None, :]
        vals = (mu.density(nodes) * wg[None, :]).sum(axis=1) * half
        cells_all.append(cells)
        vals_all.append(vals)
    return _gather(np.concatenate(cells_all), np.concatenate(vals_all))


@functools.lru_cache(maxsize=512)
def box_kernel(mu: SurfaceMeasure, k: int, exponents: tuple, h: float, shift: float = 0.0) -> Kernel:
    """mu_k mass of the boxes {y : round(y/h - shift) = m}.

    With shift 0 this is the stencil for cell-center evaluation of mu_k * f.
    Breakpoints where the dilated curve leaves a box are found by bisection,
    and each piece is integrated by Gauss-Legendre.
    """
    scale = np.array([2.0 ** (k * p) for p in exponents])
    offs, w = _box_masses(mu, scale, h, shift, 8)
    offs4, w4 = _box_masses(mu, scale, h, shift, 4)
    ref = dict(zip(map(tuple, offs), w))
    for o, v in zip(map(tuple, offs4), w4):
        ref[o] = ref.get(o, 0.0) - v
    err = max((abs(v) for v in ref.values()), default=0.0)
    nz = w != 0
    return Kernel(offs[nz], w[nz], err, {"k": k, "n": None, "h": h})


@functools.lru_cache(maxsize=512)
def mollified_kernel(mu: SurfaceMeasure, n: int, k: int, exponents: tuple, h: float,
                     shift: float = 0.0) -> Kernel:
    """mu^n_k mass of the boxes {y : round(y/h - shift) = m}, mu^n = phi_n * mu.

    mu^n_k = 2^{-k tau} mu^n(delta_{-k} .) is the pushforward of phi_n * mu,
    so each curve point carries the dilated tensor-product mollifier with
    half-widths hw * 2^{k p_i - n}. Its box masses factor into 1-D CDF
    differences. When every dilated width is below MOLLIFY_FLOOR cells the
    exact box kernel of mu_k is returned instead.
    """
    scale = np.array([2.0 ** (k * p) for p in exponents])
    moll = build_mollifier(2)
    hw = moll.half_width
    widths = hw * scale * 2.0 ** (-n)          # physical half-widths per axis
    if np.all(widths < MOLLIFY_FLOOR * h):
        ker = box_kernel(mu, k, exponents, h, shift)
        return Kernel(ker.offsets, ker.weights, ker.error, {"k": k, "n": n, "h": h, "saturated": True})

    def build(per_cell):
        # nodes dense enough that the mollified profile is smooth between them
        step = min(widths.min(), h) / per_cell
        ts, ws = [], []
        for a, b in mu.support:
            probe = np.linspace(a, b, 513)
            sp = np.abs(mu.velocity(probe) * scale[:, None]).max()
            per_unit = max(mu.nodes_per_unit, int(math.ceil(8 * sp / step)))
            t, w = _panel_nodes(a, b, per_unit)
            ts.append(t)
            ws.append(w)
        t = np.concatenate(ts)
        w = np.concatenate(ws)
        coef = w * mu.density(t)
        keep = coef != 0
        t, coef = t[keep], coef[keep]
        y = mu.curve(t) * scale[:, None]
        starts, wts = [], []
        for ax in range(2):
            span = int(math.ceil(2 * widths[ax] / h)) + 2
            first = np.floor((y[ax] - widths[ax]) / h - shift + 0.5).astype(np.int64)
            m = first[:, None] + np.arange(span)[None, :]
            upper = ((m + shift + 0.5) * h - y[ax][:, None]) / (widths[ax] / hw)
            lower = ((m + shift - 0.5) * h - y[ax][:, None]) / (widths[ax] / hw)
            wts.append(moll.cdf(upper) - moll.cdf(lower))
            starts.append(first)
        lo = np.array([s.min() for s in starts])
        hi = np.array([s.max() + wt.shape[1] for s, wt in zip(starts, wts)])
        dense = accumulate_separable(tuple(hi - lo), starts[0] - lo[0], wts[0], starts[1] - lo[1], wts[1], coef)
        return dense, lo

    dense, lo = build(4)
    coarse, lo2 = build(2)
    err = _aligned_diff(dense, lo, coarse, lo2)
    idx = np.argwhere(dense != 0)
    return Kernel(idx + lo[None, :], dense[tuple(idx.T)], err, {"k": k, "n": n, "h": h, "saturated": False})


def _aligned_diff(a, lo_a, b, lo_b) -> float:
    lo = np.minimum(lo_a, lo_b)
    hi = np.maximum(lo_a + a.shape, lo_b + b.shape)
    big = np.zeros(tuple(hi - lo))
    big[tuple(slice(s, s + n) for s, n in zip(lo_a - lo, a.shape))] += a
    big[tuple(slice(s, s + n) for s, n in zip(lo_b - lo, b.shape))] -= b
    return float(np.abs(big).max())


def _panel_nodes(a, b, per_unit, order=8):
    x, w = _GL[order]
    panels = max(1, int(math.ceil((b - a) * per_unit / order)))
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x[None, :]).ravel(), (half[:, None] * w[None, :]).ravel()


def mollified_density(mu: SurfaceMeasure, n: int, resolution: int = None) -> GridFunction:
    """Cell averages of phi_n * mu translated by (2, 2) onto the root [0, 4)^2.

    No dyadic cube has the origin in its interior, hence the translation;
    it is recorded in ``meta["translation"]``. Default resolution is n + 3.
    """
    resolution = n + 3 if resolution is None else int(resolution)
    root = DyadicCube(-2, (0, 0))
    shift = np.array([2.0, 2.0])
    g = GridFunction.zeros(root, resolution)
    h = g.cell_side
    # boxes [m h, (m+1) h) are the shift = 1/2 boxes
    ker = mollified_kernel(mu, n, 0, (1.0, 1.0), h, 0.5)
    off = np.asarray(ker.offsets) + np.round(shift / h).astype(np.int64)[None, :]
    vals = np.zeros(g.shape)
    if not np.all((off >= 0) & (off < g.shape[0])):
        raise ValueError("mollified measure leaves the root cube")
    np.add.at(vals, tuple(off.T), ker.weights / g.cell_volume)
    return GridFunction(root, resolution, vals, meta={"translation": shift.tolist(), "n": n})
