"""Convolution with dilated curve measures and the operators built from them.

Every value is taken at cell centers, with f extended by zero outside its
root. Stencils come from ``surface`` and are applied by direct shift-add
when small or by FFT when large; both are linear, so splittings of f
split the outputs exactly up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from ._kernels import sparse_convolve
from .content import ContentParams, length, thickness
from .czd import cz_split, interval_index
from .dilation import DilationGroup
from .dyadic import GridFunction, InvariantViolation, fsum
from .surface import NORM_NODES, SurfaceMeasure, box_kernel, hilbert_block, mollified_kernel, parabola_segment

SPARSE_LIMIT = 4096


@dataclass
class OperatorResult:
    field: GridFunction
    k_range: range
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"k_range": [self.k_range.start, self.k_range.stop], "diagnostics": self.diagnostics,
                "field": self.field.to_json_dict()}


def default_k_range(f: GridFunction) -> range:
    """k from -n_work + 3 to 0, with n_work counted from the root."""
    nw = f.resolution - f.root.level
    return range(-nw + 3, 1)


def _check_dims(mu: SurfaceMeasure, f: GridFunction, dil: DilationGroup):
    if f.dim != 2 or dil.dim != 2:
        raise ValueError("curve measures act on planar grid functions")


def _resolvable(k: int, f: GridFunction, dil: DilationGroup):
    if f.cell_side > 2.0 ** (k * dil.a) / 8:
        raise ValueError(f"resolution {f.resolution} too coarse for scale k={k}: need cell side <= 2^(k a)/8")


def apply_kernel(a: np.ndarray, offsets: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """out[x] = sum_m w[m] a[x - m] on the same grid."""
    if weights.size == 0:
        return np.zeros_like(a)
    if weights.size <= SPARSE_LIMIT:
        return sparse_convolve(a, offsets, weights)
    lo = offsets.min(axis=0)
    hi = offsets.max(axis=0)
    K = np.zeros(tuple(hi - lo + 1))
    np.add.at(K, tuple((offsets - lo).T), weights)
    full = fftconvolve(a, K, mode="full")
    # full[i] = sum_j K[j] a[i - j]  and  out[x] = full[x - lo]
    out = np.zeros_like(a)
    src, dst = [], []
    for ax, n in enumerate(a.shape):
        s = -int(lo[ax])
        start = max(0, s)
        stop = min(full.shape[ax], s + n)
        if stop <= start:
            return out
        src.append(slice(start, stop))
        dst.append(slice(start - s, stop - s))
    out[tuple(dst)] = full[tuple(src)]
    return out


def kernel_for(mu: SurfaceMeasure, k: int, f: GridFunction, dil: DilationGroup, mollify_n: int = None):
    h = f.cell_side
    if mollify_n is None:
        return box_kernel(mu, int(k), dil.exponents, h)
    return mollified_kernel(mu, int(mollify_n), int(k), dil.exponents, h)


def convolve(mu: SurfaceMeasure, k: int, f: GridFunction, dil: DilationGroup, mollify_n: int = None,
             with_error: bool = False):
    """mu_k * f (or mu^n_k * f) at cell centers.

    The stencil holds the exact box masses of the dilated measure, so the
    result is exact for piecewise constant f up to the quadrature error of
    the masses; ``with_error`` also returns that error (from halving the
    quadrature order) propagated through sup|f|.
    """
    _check_dims(mu, f, dil)
    _resolvable(k, f, dil)
    ker = kernel_for(mu, k, f, dil, mollify_n)
    out = f.with_values(apply_kernel(f.values, ker.offsets, ker.weights))
    if with_error:
        err = ker.error * ker.weights.size * (f.sup() if not f.is_zero() else 0.0)
        return out, err
    return out


def _k_range(k_range, f) -> range:
    kr = default_k_range(f) if k_range is None else range(k_range.start, k_range.stop) if isinstance(k_range, range) \
        else range(int(k_range[0]), int(k_range[1]) + 1)
    if len(kr) == 0:
        raise ValueError("empty k range")
    return kr


def maximal_fn(mu: SurfaceMeasure, f: GridFunction, dil: DilationGroup, k_range=None,
               mollify_n: int = None) -> OperatorResult:
    """sup over k in k_range of |mu_k * f|."""
    kr = _k_range(k_range, f)
    best = np.zeros(f.shape)
    sups = {}
    for k in kr:
        v = np.abs(convolve(mu, k, f, dil, mollify_n).values)
        sups[k] = float(v.max()) if v.size else 0.0
        np.maximum(best, v, out=best)
    return OperatorResult(f.with_values(best, nonnegative=True), kr, {"sup_per_k": sups})


def radon_transform(mu: SurfaceMeasure, f: GridFunction, dil: DilationGroup, k_range=None) -> OperatorResult:
    """Partial sum over k in k_range of mu_k * f for a measure with vanishing integral."""
    if not mu.cancellation:
        raise ValueError("singular Radon transform needs a measure with vanishing integral")
    kr = _k_range(k_range, f)
    total = np.zeros(f.shape)
    sups = {}
    for k in kr:
        v = convolve(mu, k, f, dil).values
        sups[k] = float(np.abs(v).max()) if v.size else 0.0
        total += v
    return OperatorResult(f.with_values(total), kr, {"sup_per_k": sups})


def hilbert_parabola(f: GridFunction, b: float = 2.0, k_range=None) -> OperatorResult:
    """Lacunary block sum of the 1/t kernel along (t, |t|^b)."""
    return radon_transform(hilbert_block(b), f, DilationGroup((1.0, b)), k_range)


def parabola_average(f: GridFunction, r: float, b: float = 2.0) -> GridFunction:
    """(1/r) int_0^r f(x1 - t, x2 - t^b) dt at cell centers."""
    if r <= 0:
        raise ValueError("r must be positive")
    return convolve(parabola_segment(r, b), 0, f, DilationGroup((1.0, b)))


# --------------------------------------------------------------------------
# Fourier decay
# --------------------------------------------------------------------------

def fourier_transform(mu: SurfaceMeasure, xi: np.ndarray, per_oscillation: int = 32) -> np.ndarray:
    """mu^(xi) = int density(t) exp(-2 pi i xi . gamma(t)) dt for xi of shape (2, N)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    if xi.shape[0] != 2:
        xi = xi.T
    R = float(np.max(np.hypot(*xi))) if xi.size else 0.0
    speed = 0.0
    for a, b in mu.support:
        speed = max(speed, float(np.abs(mu.velocity(np.linspace(a, b, 1025))).max()))
    # the bump's flat ends need the dense rule even at low frequency
    per_unit = max(NORM_NODES, int(math.ceil(per_oscillation * max(R, 1.0) * speed)))
    t, w = mu.nodes(per_unit=per_unit)
    dens = w * mu.density(t)
    keep = dens != 0
    t, dens = t[keep], dens[keep]
    g = mu.curve(t)
    out = np.empty(xi.shape[1], dtype=np.complex128)
    chunk = max(1, 2_000_000 // max(1, t.size))
    for lo in range(0, xi.shape[1], chunk):
        x = xi[:, lo:lo + chunk]
        phase = -2 * np.pi * (x[0][:, None] * g[0][None, :] + x[1][:, None] * g[1][None, :])
        out[lo:lo + chunk] = np.exp(1j * phase) @ dens
    return out


def fourier_decay(mu: SurfaceMeasure, n_rays: int = 16, radii=(2.0 ** 4, 2.0 ** 10), points: int = 25,
                  window: int = 8, per_oscillation: int = 32):
    """Fit log |mu^| against log |xi| for the envelope over rays and a radius window.

    The envelope at R is the max over n_rays directions in [0, pi) and over
    ``window`` radii in [R, 2^{1/4} R], which smooths out zeros of the
    oscillation. Returns (slope, table) where the table lists R, envelope,
    the same envelope at doubled node density and the relative change.
    """
    theta = np.arange(n_rays) * np.pi / n_rays
    dirs = np.stack([np.cos(theta), np.sin(theta)])
    Rs = np.exp(np.linspace(np.log(radii[0]), np.log(radii[1]), points))
    rows = []
    converged = True
    for R in Rs:
        rr = R * 2.0 ** (np.arange(window) / (4.0 * window))
        xi = (dirs[:, :, None] * rr[None, None, :]).reshape(2, -1)
        env = float(np.abs(fourier_transform(mu, xi, per_oscillation)).max())
        env2 = float(np.abs(fourier_transform(mu, xi, 2 * per_oscillation)).max())
        rel = abs(env - env2) / max(env2, 1e-300)
        converged &= rel < 1e-6
        rows.append({"radius": float(R), "envelope": env, "envelope_refined": env2, "relative_change": rel})
    x = np.log([r["radius"] for r in rows])
    y = np.log([r["envelope_refined"] for r in rows])
    slope = float(np.polyfit(x, y, 1)[0])
    table = {"rows": rows, "slope": slope, "converged": bool(converged),
             "value_at_zero": float(abs(fourier_transform(mu, np.zeros((2, 1)))[0]))}
    return slope, table


# --------------------------------------------------------------------------
# mollified measures acting on compactly supported f (full output grids)
# --------------------------------------------------------------------------

def _dense(ker):
    lo = ker.offsets.min(axis=0)
    hi = ker.offsets.max(axis=0)
    K = np.zeros(tuple(hi - lo + 1))
    np.add.at(K, tuple((ker.offsets - lo).T), ker.weights)
    return K


def check_support_tube(mu: SurfaceMeasure, n: int, f: GridFunction, beta: float = 1.0) -> dict:
    """Support measure of mu^n * f against Lambda_n[f].

    The support is taken as supp f + supp(stencil), which contains the true
    support (cancellation can only shrink it).
    """
    if f.is_zero():
        return {"support_measure": 0.0, "length": 0.0, "ratio": 0.0}
    nz = np.argwhere(f.values != 0)
    extent = (nz.max(axis=0) - nz.min(axis=0) + 1) * f.cell_side
    if float(np.linalg.norm(extent)) > 10 + 1e-12:
        raise ValueError("f must be supported in a set of diameter at most 10")
    ker = mollified_kernel(mu, int(n), 0, (1.0, 1.0), f.cell_side)
    K = _dense(ker) != 0
    F = f.values != 0
    hit = fftconvolve(F.astype(np.float64), K.astype(np.float64), mode="full") > 0.5
    meas = float(np.count_nonzero(hit)) * f.cell_volume
    lam = length(f, ContentParams(int(n), beta))
    return {"support_measure": meas, "length": lam, "ratio": meas / lam if lam > 0 else math.inf}


def autocorrelation(mu: SurfaceMeasure, n: int, h: float) -> np.ndarray:
    """Cell masses of nu^n * reflected nu^n on the grid of side h (center at the middle index)."""
    K = _dense(mollified_kernel(mu, int(n), 0, (1.0, 1.0), h))
    return fftconvolve(K, K[::-1, ::-1], mode="full")


def check_autocorrelation(mu: SurfaceMeasure, n: int, f: GridFunction, beta: float = 1.0) -> dict:
    """sup |nu~^n * nu^n * f| / ((1 + n) Theta_n[f]) and the |x|^{-1} envelope of nu * nu~."""
    if f.dim != 2:
        raise ValueError("the autocorrelation check is planar")
    h = f.cell_side
    A = autocorrelation(mu, n, h)
    c = np.array(A.shape) // 2
    idx = np.indices(A.shape)
    r = np.hypot(*(idx - c[:, None, None])) * h
    dens = A / (h * h)
    band = (r >= 2.0 ** (-n)) & (r <= 1.0)
    envelope = float(np.max(np.abs(dens[band]) * r[band])) if band.any() else 0.0
    total = fsum(A)
    mass = mu.mass()
    out = {"envelope": envelope, "autocorrelation_mass": total, "mass_squared": mass * mass}
    if f.is_zero():
        out.update({"sup": 0.0, "thickness": 0.0, "ratio": 0.0})
        return out
    val = fftconvolve(f.values, A, mode="full")
    sup = float(np.abs(val).max())
    th = thickness(f, ContentParams(int(n), beta))
    out.update({"sup": sup, "thickness": th, "ratio": sup / ((1 + n) * th)})
    return out


# --------------------------------------------------------------------------
# splitting of the maximal function along a CZ decomposition
# --------------------------------------------------------------------------

TERMS = ("M_I1", "M_I2", "M_I3", "M_II", "M_III")


def split_maximal_terms(f: GridFunction, alpha: float, mu: SurfaceMeasure, dil: DilationGroup = None,
                        k_range=None, c: float = None, gamma: float = 0.5, rtol: float = 1e-9) -> dict:
    """The five terms dominating sup_k |mu_k * f| built from the CZ pieces of f.

    Sums over levels n and blocks l are finite on a grid (only the levels
    present in f occur), so no truncation is needed. Raises
    ``InvariantViolation`` if the domination fails anywhere beyond
    rtol * max of the bound.
    """
    dil = mu.natural_dilation() if dil is None else dil
    kr = _k_range(k_range, f)
    cz = cz_split(f, alpha, dil, c=c, gamma=gamma)
    zero = np.zeros(f.shape)

    def conv(u, k, n=None):
        return convolve(mu, k, u, dil, n).values

    terms = {name: zero.copy() for name in TERMS}
    total = zero.copy()
    for k in kr:
        np.maximum(total, np.abs(conv(f, k)), out=total)
        np.maximum(terms["M_I1"], np.abs(conv(cz.good, k)), out=terms["M_I1"])
    level_norms = {}
    for n in cz.levels:
        fn, gn = cz.f_n(n), cz.g_n(n)
        level_norms[n] = fn.abs_integral()
        m2 = zero.copy()
        m3 = zero.copy()
        for k in kr:
            np.maximum(m2, np.abs(conv(fn, k) - conv(fn, k, n)), out=m2)
            np.maximum(m3, np.abs(conv(gn, k, n)), out=m3)
        terms["M_I2"] += m2
        terms["M_I3"] += m3
        for l in cz.l_values(n):
            B = cz.B(n, l, dil)
            if B.is_zero():
                continue
            _, I_star = interval_index(n, l, dil)
            off = zero.copy()
            on = zero.copy()
            for k in kr:
                v = np.abs(conv(B, k, n))
                np.maximum(on if k in I_star else off, v, out=on if k in I_star else off)
            terms["M_II"] += off
            terms["M_III"] += on
    bound = sum(terms.values())
    slack = float(np.max(total - bound)) if total.size else 0.0
    scale = float(np.max(bound)) if bound.size else 0.0
    if slack > rtol * max(scale, 1e-300):
        raise InvariantViolation(f"sup_k |mu_k f| exceeds the sum of the five terms by {slack}")
    vol = f.cell_volume
    weighted = fsum([n * v for n, v in level_norms.items()])
    m3_l1 = fsum(terms["M_III"]) * vol
    out = {name: OperatorResult(f.with_values(v, nonnegative=True), kr) for name, v in terms.items()}
    out["total"] = OperatorResult(f.with_values(total, nonnegative=True), kr)
    out["diagnostics"] = {
        "domination_slack": slack, "bound_max": scale, "levels": cz.levels,
        "M_III_l1": m3_l1, "sum_n_n_fn_l1": weighted,
        "M_III_constant": m3_l1 / weighted if weighted > 0 else 0.0,
        "omega_measure": cz.measured["omega_measure"], "c": cz.c,
    }
    out["cz"] = cz
    return out
