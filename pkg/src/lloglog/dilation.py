"""Diagonal nonisotropic dilations, homogeneous distance, grid dilation and
the moment-vanishing mollifier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.special import roots_legendre

from .content import ContentParams, length, thickness
from .dyadic import DyadicCube, GridFunction, InvariantViolation


@dataclass(frozen=True)
class DilationGroup:
    """delta_k x = 2^{kP} x with P = diag(exponents)."""

    exponents: tuple
    guard: float = 0.1

    def __post_init__(self):
        p = tuple(float(x) for x in self.exponents)
        if not p or min(p) <= 0:
            raise ValueError("exponents must be positive")
        object.__setattr__(self, "exponents", p)
        if self.guard <= 0:
            raise ValueError("guard must be positive")

    @staticmethod
    def isotropic(d: int) -> "DilationGroup":
        return DilationGroup((1.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.exponents)

    @property
    def tau(self) -> float:
        return math.fsum(self.exponents)

    @property
    def eps(self) -> float:
        return min(self.guard, 0.5 * min(self.exponents))

    @property
    def a(self) -> float:
        return min(self.exponents) - self.eps

    @property
    def A(self) -> float:
        return max(self.exponents) + self.eps

    # |t^P x| >= t^min(p)|x| >= t^a |x| and <= t^max(p)|x| <= t^A|x| for t >= 1
    c1 = 1.0
    C1 = 1.0

    @property
    def integer(self) -> bool:
        return all(float(p).is_integer() for p in self.exponents)

    def shifts(self, k: int):
        """Per-axis binary exponents k*p_i (integers in exact mode)."""
        return [k * p for p in self.exponents]

    def apply(self, x, k):
        """delta_k x for points x of shape (..., d); k may be real."""
        x = np.asarray(x, dtype=np.float64)
        k = np.asarray(k, dtype=np.float64)[..., None]
        return x * np.exp2(k * np.array(self.exponents))

    def check_invariants(self, samples: int = 10000, seed: int = 0) -> int:
        """Spot-check the growth envelope; returns the number of violations."""
        if self.dim >= 2 and not (0 < self.a < min(self.exponents) <= max(self.exponents) < self.A < self.tau):
            raise InvariantViolation(f"need 0 < a < eigenvalues < A < tau, got a={self.a}, A={self.A}, tau={self.tau}")
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(samples, self.dim))
        x *= (1.0 + rng.exponential(2.0, size=(samples, 1))) / np.linalg.norm(x, axis=1, keepdims=True)
        t = 1.0 + rng.exponential(4.0, size=samples)
        tx = x * t[:, None] ** np.array(self.exponents)
        nx = np.linalg.norm(x, axis=1)
        ntx = np.linalg.norm(tx, axis=1)
        lo = self.c1 * t ** self.a * nx
        hi = self.C1 * t ** self.A * nx
        return int(np.count_nonzero((ntx < lo * (1 - 1e-12)) | (ntx > hi * (1 + 1e-12))))

    def to_dict(self) -> dict:
        return {"exponents": list(self.exponents), "guard": self.guard}

    @staticmethod
    def from_dict(d) -> "DilationGroup":
        return DilationGroup(tuple(d["exponents"]), float(d.get("guard", 0.1)))


def rho(x, dil: DilationGroup):
    """Homogeneous distance max_i |x_i|^(1/p_i); rho(delta_k x) = 2^k rho(x)."""
    x = np.asarray(x, dtype=np.float64)
    p = np.array(dil.exponents)
    return np.max(np.abs(x) ** (1.0 / p), axis=-1)


# --------------------------------------------------------------------------
# grid dilation
# --------------------------------------------------------------------------

def dilate_grid(f: GridFunction, k: int, dil: DilationGroup, measure: bool = False,
                exact: bool = True) -> GridFunction:
    """x -> f(delta_k x), or the mass-preserving 2^{-k tau} f(delta_{-k} x) when ``measure``.

    Exact mode re-indexes cells (needs integer k*p_i) and refines along the
    axes that shrink least so the result lives on a cube grid. Resample mode
    integrates the piecewise constant function over the target cells.
    """
    if dil.dim != f.dim:
        raise ValueError("dilation group and grid function dimensions differ")
    kk = -k if measure else k
    e = dil.shifts(kk)
    scale = 2.0 ** (-k * dil.tau) if measure else 1.0
    if all(x == 0 for x in e):
        return f if scale == 1.0 else f.with_values(f.values * scale)
    if all(float(x).is_integer() for x in e):
        out = _dilate_exact(f, [int(x) for x in e])
    elif exact:
        raise ValueError("non-integer exponents need resample mode (exact=False)")
    else:
        out = _dilate_resample(f, e)
    if scale != 1.0:
        out = out.with_values(out.values * scale)
    return out


def _dilate_exact(f: GridFunction, e) -> GridFunction:
    L, nw = f.root.level, f.resolution
    emax, emin = max(e), min(e)
    new_res = nw + emax
    new_level = L + emin
    coords = tuple(c >> (ei - emin) for c, ei in zip(f.root.coords, e))
    root = DyadicCube(new_level, coords)
    side = 1 << (new_res - new_level)
    vals = f.values
    for ax, ei in enumerate(e):
        r = 1 << (emax - ei)
        if r > 1:
            vals = np.repeat(vals, r, axis=ax)
    out = np.zeros((side,) * f.dim)
    sl = []
    for ax, (c, ei) in enumerate(zip(f.root.coords, e)):
        start = (c << (new_res - L - ei)) - (coords[ax] << (new_res - new_level))
        sl.append(slice(start, start + vals.shape[ax]))
    out[tuple(sl)] = vals
    return GridFunction(root, new_res, out, f.nonnegative)


def _dilate_resample(f: GridFunction, e) -> GridFunction:
    L, nw = f.root.level, f.resolution
    new_res = nw + int(math.ceil(max(e)))
    lo = f.root.lower() * np.exp2(-np.array(e))
    hi = f.root.upper() * np.exp2(-np.array(e))
    new_level = int(math.floor(-math.log2(max(hi - lo)))) if max(hi - lo) > 0 else L
    # find a dyadic cube at or above new_level containing the box
    while True:
        a = DyadicCube(new_level, tuple(int(math.floor(math.ldexp(x, new_level))) for x in lo))
        if np.all(a.upper() >= hi - 1e-15 * np.maximum(1.0, np.abs(hi))):
            break
        new_level -= 1
    root = a
    side = 1 << (new_res - new_level)
    vals = f.values
    h_new = math.ldexp(1.0, -new_res)
    for ax, ei in enumerate(e):
        # source cell edges in target coordinates
        n_src = vals.shape[ax]
        src_edges = (f.root.lower()[ax] + np.arange(n_src + 1) * f.cell_side) * 2.0 ** (-ei)
        tgt_edges = root.lower()[ax] + np.arange(side + 1) * h_new
        moved = np.moveaxis(vals, ax, 0)
        cum = np.concatenate([np.zeros((1,) + moved.shape[1:]),
                              np.cumsum(moved * np.diff(src_edges)[(slice(None),) + (None,) * (moved.ndim - 1)], axis=0)])
        idx = np.clip(tgt_edges, src_edges[0], src_edges[-1])
        flat = cum.reshape(cum.shape[0], -1)
        interp = np.stack([np.interp(idx, src_edges, flat[:, j]) for j in range(flat.shape[1])], axis=1)
        avg = np.diff(interp, axis=0) / h_new
        vals = np.moveaxis(avg.reshape((side,) + moved.shape[1:]), 0, ax)
    return GridFunction(root, new_res, vals)


def undilate_to(g: GridFunction, k: int, dil: DilationGroup, like: GridFunction) -> GridFunction:
    """Inverse of ``dilate_grid(., k)`` brought back onto the root of ``like``.

    The result keeps the finer of the two resolutions, so nothing is lost
    when the pieces were built on a finer grid than ``like``.
    """
    back = dilate_grid(g, -k, dil)
    res = max(back.resolution, like.resolution)
    back = back.refine(res)
    if back.root == like.root:
        return back
    if back.root.contains(like.root):
        return back.crop(like.root)
    return back.lift(like.root)


def coarsen_if_exact(g: GridFunction, resolution: int) -> GridFunction:
    """Coarsen to ``resolution`` when ``g`` is constant on the coarse cells."""
    if g.resolution <= resolution:
        return g
    c = g.coarsen(resolution)
    if np.array_equal(c.refine(g.resolution).values, g.values):
        return c
    return g


# --------------------------------------------------------------------------
# scaling of length and thickness
# --------------------------------------------------------------------------

def scaling_constants(dil: DilationGroup):
    """Constants in the thickness (2^d) and length (8 * 4^d) scaling bounds."""
    d = dil.dim
    return float(2 ** d), float(8 * 4 ** d)


def scaling_check(f: GridFunction, n: int, j: int, m: int, dil: DilationGroup, strict: bool = True) -> dict:
    """Thickness under compression by delta_j and length under expansion by delta_{-m}.

    Returns both sides of each inequality plus the measured constants
    (the smallest C that would make each inequality an equality).
    """
    if j < 0 or m < 0:
        raise ValueError("j and m must be nonnegative")
    p = ContentParams(n)
    c_theta, c_lambda = scaling_constants(dil)
    th = thickness(f, p)
    th_j = thickness(dilate_grid(f, j, dil), p)
    lam = length(f, p)
    lam_m = length(dilate_grid(f, -m, dil), p)
    theta_scale = 2.0 ** (-j * (dil.tau - dil.A)) * th
    lambda_scale = 2.0 ** (dil.A * m) * lam
    out = {
        "theta_lhs": th_j, "theta_bound": c_theta * theta_scale,
        "lambda_lhs": lam_m, "lambda_bound": c_lambda * lambda_scale,
        "theta_constant": th_j / theta_scale if theta_scale > 0 else 0.0,
        "lambda_constant": lam_m / lambda_scale if lambda_scale > 0 else 0.0,
        "C_theta": c_theta, "C_lambda": c_lambda,
    }
    if strict:
        if th_j > out["theta_bound"] * (1 + 1e-12):
            raise InvariantViolation(f"thickness scaling bound violated: {th_j} > {out['theta_bound']}")
        if lam_m > out["lambda_bound"] * (1 + 1e-12):
            raise InvariantViolation(f"length scaling bound violated: {lam_m} > {out['lambda_bound']}")
    return out


# --------------------------------------------------------------------------
# mollifier
# --------------------------------------------------------------------------

def _bump(x, h):
    x = np.asarray(x, dtype=np.float64)
    s = x / h
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class Mollifier:
    """Tensor product of a 1-D profile psi(x) = bump(x) * poly(x) on [-h, h].

    psi integrates to 1 and annihilates x^j for 1 <= j <= order, so the
    product phi(x) = prod_i psi(x_i) annihilates every monomial of total
    degree 1..order. h = 1/(2 sqrt(d)) keeps the support inside |x| <= 1/2.
    """

    dim: int
    order: int
    half_width: float
    coeffs: np.ndarray
    cdf_spline: object
    moment_residual: float

    def profile(self, x):
        x = np.asarray(x, dtype=np.float64)
        return _bump(x, self.half_width) * np.polynomial.polynomial.polyval(x / self.half_width, self.coeffs)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        h = self.half_width
        out = self.cdf_spline(np.clip(x, -h, h))
        return np.where(x >= h, 1.0, np.where(x <= -h, 0.0, out))

    def __call__(self, *xs):
        out = 1.0
        for x in xs:
            out = out * self.profile(x)
        return out

    def moments(self, max_degree=None) -> dict:
        """All multi-index moments up to ``max_degree`` (default: order)."""
        import itertools

        deg = self.order if max_degree is None else max_degree
        x, w = _profile_nodes(self.half_width)
        psi = self.profile(x)
        one_d = [math.fsum((w * psi * x ** j).tolist()) for j in range(deg + 1)]
        out = {}
        for beta in itertools.product(range(deg + 1), repeat=self.dim):
            if sum(beta) <= deg:
                out[beta] = float(np.prod([one_d[b] for b in beta]))
        return out


@lru_cache(maxsize=None)
def _profile_nodes(h, panels=64, order=40):
    t, w = roots_legendre(order)
    edges = np.linspace(-h, h, panels + 1)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (b - a) * t + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


@lru_cache(maxsize=None)
def build_mollifier(d: int, order: int = None, table_size: int = 4096) -> Mollifier:
    order = d if order is None else order
    h = 0.5 / math.sqrt(d)
    x, w = _profile_nodes(h)
    b = _bump(x, h)
    s = x / h
    # moment system in the rescaled variable s = x/h, which keeps it well scaled
    M = np.array([[math.fsum((w * b * s ** (i + j)).tolist()) for j in range(order + 1)] for i in range(order + 1)])
    rhs = np.zeros(order + 1)
    rhs[0] = 1.0
    coeffs = np.linalg.solve(M, rhs)
    psi = b * np.polynomial.polynomial.polyval(s, coeffs)
    res = max(abs(math.fsum((w * psi * x ** j).tolist()) - (1.0 if j == 0 else 0.0)) for j in range(order + 1))
    # CDF table: panel integrals by Gauss-Legendre, cubic Hermite interpolation with psi as derivative
    grid = np.linspace(-h, h, table_size + 1)
    tq, wq = roots_legendre(20)
    mid = 0.5 * (grid[:-1] + grid[1:])
    half = 0.5 * (grid[1:] - grid[:-1])
    pts = mid[:, None] + half[:, None] * tq[None, :]
    vals = _bump(pts, h) * np.polynomial.polynomial.polyval(pts / h, coeffs)
    panel = (vals * wq[None, :]).sum(axis=1) * half
    cdf = np.concatenate([[0.0], np.cumsum(panel)])
    cdf[-1] = 1.0 if abs(cdf[-1] - 1.0) < 1e-10 else cdf[-1]
    deriv = _bump(grid, h) * np.polynomial.polynomial.polyval(grid / h, coeffs)
    spline = CubicHermiteSpline(grid, cdf, deriv)
    return Mollifier(d, order, h, coeffs, spline, float(res))


def mollify(mu, n: int, resolution: int = None, **kw) -> GridFunction:
    """Grid realization of phi_n * mu (cell averages) at resolution >= n + 3."""
    from .surface import mollified_density

    return mollified_density(mu, n, resolution=resolution, **kw)
