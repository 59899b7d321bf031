"""Nonisotropic Calderon-Zygmund machinery on grids.

Balls are rho-balls for the max-form homogeneous distance, i.e. boxes with
half-widths r^{p_i}. Whitney regions are nonisotropic dyadic rectangles
prod_i [m_i 2^{j p_i}, (m_i + 1) 2^{j p_i}), which nest when the exponents
are integers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d

from .dilation import DilationGroup
from .dyadic import GridFunction, InvariantViolation, fsum


# --------------------------------------------------------------------------
# maximal function
# --------------------------------------------------------------------------

def _window_sum(a: np.ndarray, s: int, axis: int) -> np.ndarray:
    """Entry t holds sum of a[t-s+1 .. t] along ``axis`` (zero outside), length N+s-1."""
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    c = np.zeros((n + 2 * s - 1,) + a.shape[1:])
    c[s:s + n] = np.cumsum(a, axis=0)
    c[s + n:] = c[s + n - 1]
    out = c[s:] - c[:-s]
    return np.moveaxis(out, 0, axis)


def _forward_max(a: np.ndarray, s: int, axis: int, n: int) -> np.ndarray:
    """Entry x holds max a[x .. x+s-1] along ``axis``, for x < n."""
    out = maximum_filter1d(a, s, axis=axis, origin=-(s // 2), mode="constant", cval=-np.inf)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(0, n)
    return out[tuple(sl)]


def hl_radii(f: GridFunction, dil: DilationGroup):
    """Dyadic radii 2^j for which the ball spans at least one cell on every axis, up to the root size."""
    nw = f.resolution
    L = f.root.level
    p = dil.exponents
    jmin = max(math.ceil((-nw - 1) / pi) for pi in p)
    jmax = max(math.ceil((-L + 1) / pi) for pi in p)
    return range(jmin, jmax + 1)


def maximal_hl(f: GridFunction, dil: DilationGroup, j_range=None) -> GridFunction:
    """Uncentered sup of averages of |f| over rho-balls 2^j containing the cell.

    Ball corners sit on the grid, so a ball of radius 2^j is a box of
    2 * 2^{j p_i} / h cells on axis i. |f| itself is included as the
    vanishing-radius limit. f is extended by zero outside the root.
    """
    if dil.dim != f.dim:
        raise ValueError("dimension mismatch")
    a = np.abs(f.values)
    n = a.shape[0]
    h = f.cell_side
    best = a.copy()
    if not np.any(a):
        return f.with_values(best, nonnegative=True)
    js = hl_radii(f, dil) if j_range is None else j_range
    seen = set()
    for j in js:
        sizes = tuple(max(1, int(round(2.0 * 2.0 ** (j * pi) / h))) for pi in dil.exponents)
        if sizes in seen or all(s == 1 for s in sizes):
            continue
        seen.add(sizes)
        win = a
        for ax, s in enumerate(sizes):
            win = _window_sum(win, s, ax)
        win = win / float(np.prod(sizes))
        for ax, s in enumerate(sizes):
            win = _forward_max(win, s, ax, n)
        np.maximum(best, win, out=best)
    return f.with_values(best, nonnegative=True)


def weak11_ratio(f: GridFunction, dil: DilationGroup, alphas) -> np.ndarray:
    """alpha * |{M_HL f > alpha}| / ||f||_1 for each alpha."""
    M = maximal_hl(f, dil).values
    norm = f.abs_integral()
    return np.array([a * np.count_nonzero(M > a) * f.cell_volume / norm if norm > 0 else 0.0 for a in alphas])


# --------------------------------------------------------------------------
# Whitney decomposition
# --------------------------------------------------------------------------

@dataclass
class WhitneyCell:
    index: int
    scale: int                 # r(w) = j; the rectangle has sides 2^{j p_i}
    lower: tuple               # lower corner, in cells relative to the root
    shape: tuple               # rectangle size in cells
    center: np.ndarray         # x_w (physical coordinates)
    forced: bool = False       # finest-scale rectangle kept only to cover Omega

    @property
    def radius(self) -> float:
        """Radius of B; B* has radius 2^scale, B** has K2 times that."""
        return 0.5 * 2.0 ** self.scale

    def slices(self):
        return tuple(slice(lo, lo + s) for lo, s in zip(self.lower, self.shape))

    def cell_count(self) -> int:
        return int(np.prod(self.shape))


@dataclass
class WhitneyDecomposition:
    cells: list
    labels: np.ndarray         # cell -> Whitney index or -1
    omega: np.ndarray          # normalized Omega (union of finest rectangles meeting the input set)
    grid: GridFunction         # template (root/resolution)
    dil: DilationGroup
    K: float
    measured: dict = field(default_factory=dict)

    def region(self, w: WhitneyCell) -> np.ndarray:
        return self.labels == w.index

    def scales(self) -> np.ndarray:
        out = np.full(self.labels.shape, np.iinfo(np.int64).min, dtype=np.int64)
        for w in self.cells:
            out[w.slices()] = w.scale
        return out


def _rect_scales(grid: GridFunction, dil: DilationGroup):
    if not dil.integer:
        raise ValueError("Whitney rectangles need integer exponents")
    nw, L = grid.resolution, grid.root.level
    p = [int(x) for x in dil.exponents]
    jmin = max(math.ceil(-nw / pi) for pi in p)
    jmax = min(math.floor(-L / pi) for pi in p)
    return jmin, jmax, p


def _sat(mask: np.ndarray) -> np.ndarray:
    s = mask.astype(np.int64)
    for ax in range(s.ndim):
        s = np.cumsum(s, axis=ax)
    return np.pad(s, [(1, 0)] * s.ndim)


def _box_count(sat: np.ndarray, lo, hi) -> np.ndarray:
    """Number of marked cells in boxes [lo, hi) (arrays of shape (m, d))."""
    d = lo.shape[1]
    total = np.zeros(lo.shape[0], dtype=np.int64)
    for corner in itertools.product((0, 1), repeat=d):
        idx = tuple(np.where(c, hi[:, k], lo[:, k]) for k, c in enumerate(corner))
        sign = (-1) ** (d - sum(corner))
        total += sign * sat[idx]
    return total


def _ball_hits_complement(sat_c, n, centers, radius, p, h):
    """Whether the open rho-ball around each center meets the complement (outside root counts)."""
    half = np.array([radius ** pi for pi in p]) if np.ndim(radius) == 0 else radius[:, None] ** np.array(p)[None, :]
    half = half / h
    lo = np.floor(centers - half + 1e-12).astype(np.int64)
    hi = np.ceil(centers + half - 1e-12).astype(np.int64)
    outside = np.any(lo < 0, axis=1) | np.any(hi > n, axis=1)
    lo_c = np.clip(lo, 0, n)
    hi_c = np.clip(hi, 0, n)
    return outside | (_box_count(sat_c, lo_c, hi_c) > 0)


def whitney(omega: np.ndarray, grid: GridFunction, dil: DilationGroup, K: float = 2.0,
            check: bool = True) -> WhitneyDecomposition:
    """Partition Omega (boolean cell mask on ``grid``) into nonisotropic dyadic rectangles.

    A rectangle of scale j with center x is admissible when the rho-ball
    B(x, K 2^j) lies inside Omega and inside the root. Whitney regions are
    the maximal admissible rectangles; cells of Omega left uncovered are
    covered by finest-scale rectangles (flagged ``forced``).
    """
    omega = np.asarray(omega, dtype=bool)
    if omega.shape != grid.shape:
        raise ValueError("omega mask must match the grid shape")
    if omega.all():
        raise ValueError("omega is the whole domain; the complement must be nonempty")
    if K < 1:
        raise ValueError("K must be at least 1 (admissibility must pass to children)")
    jmin, jmax, p = _rect_scales(grid, dil)
    n = grid.shape[0]
    h = grid.cell_side
    d = grid.dim
    labels = np.full(omega.shape, -1, dtype=np.int64)
    cells = []
    if not omega.any():
        return WhitneyDecomposition(cells, labels, omega.copy(), grid, dil, K, {"K3": 0, "K2": 0.0})
    # normalize Omega to a union of finest rectangles
    fin = [1 << (jmin * pi + grid.resolution) for pi in p]
    coarse = omega.reshape([x for k in range(d) for x in (n // fin[k], fin[k])]).any(axis=tuple(range(1, 2 * d, 2)))
    om = coarse
    for ax in range(d):
        om = np.repeat(om, fin[ax], axis=ax)
    sat_c = _sat(~om)
    for j in range(jmax, jmin - 1, -1):
        size = [1 << (j * pi + grid.resolution) for pi in p]
        counts = [n // s for s in size]
        idx = np.stack(np.meshgrid(*[np.arange(c) for c in counts], indexing="ij"), axis=-1).reshape(-1, d)
        lower = idx * np.array(size)
        # skip rectangles already inside a larger region or outside Omega
        first = labels[tuple(lower.T)]
        fresh = first < 0
        inside = om[tuple(lower.T)]
        cand = fresh & inside
        if j == jmin:
            cand = fresh & (_box_count(sat_c, lower, lower + np.array(size)) < np.prod(size))
        if not cand.any():
            continue
        lower = lower[cand]
        centers = lower + 0.5 * np.array(size)
        hits = _ball_hits_complement(sat_c, n, centers, K * 2.0 ** j, p, h)
        take = ~hits
        forced = np.zeros_like(take)
        if j == jmin:
            forced = hits
            take = np.ones_like(take)
        for lo_r, is_forced in zip(lower[take], forced[take]):
            w = WhitneyCell(len(cells), j, tuple(int(x) for x in lo_r), tuple(size),
                            grid.root.lower() + (lo_r + 0.5 * np.array(size)) * h, bool(is_forced))
            labels[w.slices()] = w.index
            cells.append(w)
    dec = WhitneyDecomposition(cells, labels, om, grid, dil, K)
    dec.measured = whitney_properties(dec, check=check)
    return dec


def whitney_properties(dec: WhitneyDecomposition, check: bool = True) -> dict:
    """Measure properties (a)-(f); structural ones raise on violation when ``check``."""
    grid, dil, om = dec.grid, dec.dil, dec.omega
    p = [int(x) for x in dil.exponents]
    n, h, d = grid.shape[0], grid.cell_side, grid.dim
    out = {"count": len(dec.cells), "forced": sum(w.forced for w in dec.cells)}
    if not dec.cells:
        out.update({"K2": 0.0, "K3": 0, "B_star_outside_omega": 0})
        return out
    # (d): disjoint by construction of labels; coverage
    if not np.array_equal(dec.labels >= 0, om):
        raise InvariantViolation("Whitney regions do not cover Omega exactly")
    total = sum(w.cell_count() for w in dec.cells)
    if total != int(om.sum()):
        raise InvariantViolation("Whitney regions overlap")
    # (a)/(c): B inside w inside B*, checked on box extents (cell units)
    viol_c = 0
    for w in dec.cells:
        c = np.array(w.lower) + 0.5 * np.array(w.shape)
        rB = np.array([(w.radius) ** pi for pi in p]) / h
        rBs = np.array([(2.0 ** w.scale) ** pi for pi in p]) / h
        if np.any(c - rB < np.array(w.lower) - 1e-9) or np.any(c + rB > np.array(w.lower) + np.array(w.shape) + 1e-9):
            viol_c += 1
        if np.any(np.array(w.shape) * 0.5 > rBs + 1e-9):
            viol_c += 1
    if viol_c and check:
        raise InvariantViolation(f"B in w in B* fails for {viol_c} regions")
    out["containment_violations"] = viol_c
    # (e): smallest K2 with B(x_w, K2 2^j) meeting the complement, by bisection
    sat_c = _sat(~om)
    centers = np.array([np.array(w.lower) + 0.5 * np.array(w.shape) for w in dec.cells])
    scales = np.array([2.0 ** w.scale for w in dec.cells])
    lo = np.zeros(len(dec.cells))
    hi = np.full(len(dec.cells), 1.0)
    for _ in range(60):
        bad = ~_ball_hits_complement(sat_c, n, centers, hi * scales, p, h)
        if not bad.any():
            break
        hi[bad] *= 2
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        hit = _ball_hits_complement(sat_c, n, centers, mid * scales, p, h)
        hi = np.where(hit, mid, hi)
        lo = np.where(hit, lo, mid)
    k2 = hi
    out["K2"] = float(k2.max())
    out["K2_bound"] = 2 * dec.K + 1
    out["K2_admissible_min"] = float(min((k for k, w in zip(k2, dec.cells) if not w.forced), default=0.0))
    if check and out["K2"] > out["K2_bound"] * (1 + 1e-9):
        raise InvariantViolation(f"B** misses the complement: K2 = {out['K2']} > {out['K2_bound']}")
    # (b): overlap count of the B* boxes (cell-center containment) and how far they leave Omega
    diff = np.zeros(tuple(s + 1 for s in grid.shape), dtype=np.int64)
    outside = 0
    for w, c in zip(dec.cells, centers):
        half = np.array([(2.0 ** w.scale) ** pi for pi in p]) / h
        lo_i = np.clip(np.ceil(c - half - 0.5).astype(int), 0, n)
        hi_i = np.clip(np.ceil(c + half - 0.5).astype(int), 0, n)
        for corner in itertools.product((0, 1), repeat=d):
            ix = tuple(hi_i[k] if cc else lo_i[k] for k, cc in enumerate(corner))
            diff[ix] += (-1) ** sum(corner)
        box = tuple(slice(a, b) for a, b in zip(lo_i, hi_i))
        if np.any(~om[box]) or np.any(c - half < -1e-9) or np.any(c + half > n + 1e-9):
            outside += 1
    cnt = diff
    for ax in range(d):
        cnt = np.cumsum(cnt, axis=ax)
    cnt = cnt[tuple(slice(0, s) for s in grid.shape)]
    out["K3"] = int(cnt[om].max()) if om.any() else 0
    out["B_star_outside_omega"] = outside
    out["B_star_cover"] = bool(np.all(cnt[om] >= 1))
    if check and not out["B_star_cover"]:
        raise InvariantViolation("the B* balls do not cover Omega")
    # (f): B** inside {M_HL chi_Omega > (10 K2)^-tau}
    K2 = out["K2_bound"]
    chi = GridFunction(grid.root, grid.resolution, om.astype(np.float64))
    Mchi = maximal_hl(chi, dil).values
    star = Mchi > (10 * K2) ** (-dil.tau)
    miss = 0
    for w, c in zip(dec.cells, centers):
        half = np.array([(K2 * 2.0 ** w.scale) ** pi for pi in p]) / h
        lo_i = np.clip(np.ceil(c - half - 0.5).astype(int), 0, n)
        hi_i = np.clip(np.ceil(c + half - 0.5).astype(int), 0, n)
        box = tuple(slice(a, b) for a, b in zip(lo_i, hi_i))
        if not np.all(star[box]):
            miss += 1
    out["B_double_star_outside_omega_star"] = miss
    out["omega_star_measure"] = float(np.count_nonzero(star)) * grid.cell_volume
    if check and miss:
        raise InvariantViolation(f"{miss} enlarged balls leave Omega*")
    return out


# --------------------------------------------------------------------------
# Calderon-Zygmund split
# --------------------------------------------------------------------------

def default_c(gamma: float) -> float:
    """Level-split exponent strictly inside c < min(1, gamma)/2."""
    return min(1.0, gamma) / 4.0


@dataclass
class CZPieces:
    f: GridFunction
    alpha: float
    c: float
    whitney: WhitneyDecomposition
    good: GridFunction
    level: np.ndarray          # cell -> n >= 1 where f_w lives, 0 elsewhere
    means: dict                # (w index, n) -> mean of f^n_w over w
    measured: dict = field(default_factory=dict)

    @property
    def levels(self) -> list:
        return sorted({int(x) for x in np.unique(self.level) if x > 0})

    def scale_map(self) -> dict:
        return {w.index: w.scale for w in self.whitney.cells}

    def _grid(self, vals) -> GridFunction:
        return GridFunction(self.f.root, self.f.resolution, vals)

    def f_w(self, w: WhitneyCell) -> GridFunction:
        m = (self.whitney.labels == w.index) & (self.level > 0)
        return self._grid(np.where(m, self.f.values, 0.0))

    def f_n(self, n: int) -> GridFunction:
        return self._grid(np.where(self.level == n, self.f.values, 0.0))

    def g_n(self, n: int) -> GridFunction:
        vals = np.zeros(self.f.shape)
        for w in self.whitney.cells:
            mu = self.means.get((w.index, n))
            if mu:
                vals[w.slices()] = mu
        return self._grid(vals)

    def b_n(self, n: int) -> GridFunction:
        return self._grid(self.f_n(n).values - self.g_n(n).values)

    def piece(self, w: WhitneyCell, n: int):
        """(f^n_w, g^n_w, b^n_w)."""
        region = self.whitney.labels == w.index
        fv = np.where(region & (self.level == n), self.f.values, 0.0)
        gv = np.where(region, self.means.get((w.index, n), 0.0), 0.0)
        return self._grid(fv), self._grid(gv), self._grid(fv - gv)

    def B(self, n: int, l: int, dil: DilationGroup) -> GridFunction:
        """Sum of b^n_w over the w with r(w) in I^n_l."""
        I, _ = interval_index(n, l, dil)
        vals = np.zeros(self.f.shape)
        fn = np.where(self.level == n, self.f.values, 0.0)
        for w in self.whitney.cells:
            if w.scale in I:
                sl = w.slices()
                mu = self.means.get((w.index, n), 0.0)
                region = self.whitney.labels[sl] == w.index
                vals[sl] += np.where(region, fn[sl] - mu, 0.0)
        return self._grid(vals)

    def l_values(self, n: int) -> list:
        """Indices l with some w of scale in I^n_l carrying a level-n piece."""
        ls = set()
        for (wi, nn) in self.means:
            if nn == n:
                ls.add(self.whitney.cells[wi].scale // n)
        return sorted(ls)

    def bad_pieces(self, n: int, l: int, dil: DilationGroup):
        """The b^n_w with r(w) in I^n_l, as ``BadPiece`` records for the stopping-time split."""
        from .decompose import BadPiece

        I, _ = interval_index(n, l, dil)
        out = []
        for w in self.whitney.cells:
            if w.scale in I and (w.index, n) in self.means:
                _, _, b = self.piece(w, n)
                out.append(BadPiece(w.index, w.scale, b, self.whitney.labels == w.index))
        return out


def level_index(values: np.ndarray, alpha: float, c: float) -> np.ndarray:
    """n >= 1 with 2^{c(n-1)} alpha < |v| <= 2^{cn} alpha (0 where |v| <= alpha)."""
    a = np.abs(values)
    out = np.zeros(a.shape, dtype=np.int64)
    big = a > alpha
    if not big.any():
        return out
    n = np.ceil(np.log2(a[big] / alpha) / c).astype(np.int64)
    n = np.maximum(n, 1)
    # settle floating point at the thresholds exactly
    up = a[big] > 2.0 ** (c * n) * alpha
    n[up] += 1
    down = (n > 1) & (a[big] <= 2.0 ** (c * (n - 1)) * alpha)
    n[down] -= 1
    out[big] = n
    return out


def cz_split(f: GridFunction, alpha: float, dil: DilationGroup, c: float = None, gamma: float = 0.5,
             K: float = 2.0, check: bool = True) -> CZPieces:
    """f = g + sum_w f_w with f_w = f on w where |f| > alpha; f_w split into level pieces."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    c = default_c(gamma) if c is None else float(c)
    if not 0 < c < 0.5:
        raise ValueError("c must lie in (0, 1/2)")
    M = maximal_hl(f, dil).values
    omega = M > alpha
    dec = whitney(omega, f, dil, K=K, check=check)
    in_w = dec.labels >= 0
    bad = in_w & (np.abs(f.values) > alpha)
    level = np.where(bad, level_index(f.values, alpha, c), 0)
    good = f.with_values(np.where(bad, 0.0, f.values))
    means = {}
    vol = f.cell_volume
    for w in dec.cells:
        sl = w.slices()
        region = dec.labels[sl] == w.index
        lv = level[sl]
        fv = f.values[sl]
        area = float(np.count_nonzero(region))
        for n in np.unique(lv[region & (lv > 0)]):
            means[(w.index, int(n))] = fsum(fv[region & (lv == n)]) / area
    pieces = CZPieces(f, float(alpha), c, dec, good, level, means)
    pieces.measured = cz_measurements(pieces, check=check)
    return pieces


def cz_measurements(cz: CZPieces, check: bool = True) -> dict:
    f, alpha, dec = cz.f, cz.alpha, cz.whitney
    out = {"omega_measure": float(np.count_nonzero(dec.omega)) * f.cell_volume,
           "whitney_count": len(dec.cells), "levels": cz.levels}
    out["good_sup_over_alpha"] = cz.good.sup() / alpha
    # sum_n |g^n_w| on w, relative to alpha (uniform over x by disjointness)
    worst_g, worst_budget, worst_avg = 0.0, 0.0, 0.0
    vol = f.cell_volume
    for w in dec.cells:
        sl = w.slices()
        region = dec.labels[sl] == w.index
        area = float(np.count_nonzero(region)) * vol
        s = sum(abs(cz.means.get((w.index, n), 0.0)) for n in cz.levels)
        worst_g = max(worst_g, s / alpha)
        lv = cz.level[sl]
        fw = np.where(region & (lv > 0), f.values[sl], 0.0)
        int_w = fsum(np.abs(np.where(region, f.values[sl], 0.0))) * vol
        budget = 0.0
        for n in np.unique(lv[region & (lv > 0)]):
            mu = cz.means[(w.index, int(n))]
            fn = np.where(region & (lv == n), f.values[sl], 0.0)
            budget += abs(mu) * area + fsum(np.abs(np.where(region, fn - mu, 0.0))) * vol
            # mean zero of b^n_w
            resid = abs(fsum(np.where(region, fn - mu, 0.0)) * vol)
            if check and resid > 1e-12 * max(fsum(np.abs(fn)) * vol, 1e-300) + 1e-300:
                raise InvariantViolation(f"b^{n}_w has nonzero mean {resid}")
        if int_w > 0:
            worst_budget = max(worst_budget, budget / int_w)
        worst_avg = max(worst_avg, fsum(np.abs(fw)) * vol / area / alpha)
    out["sum_g_levels_over_alpha"] = worst_g
    out["budget_over_int_w"] = worst_budget
    out["avg_fw_over_alpha"] = worst_avg
    # reconstruction: g + sum_n sum_w f^n_w = f
    recon = cz.good.values + np.where(cz.level > 0, f.values, 0.0)
    err = float(np.max(np.abs(recon - f.values))) if f.values.size else 0.0
    out["reconstruction_error"] = err
    if check and err != 0.0:
        raise InvariantViolation(f"good + bad pieces differ from f by {err}")
    # off Omega |f| <= alpha (Lebesgue differentiation analogue on the grid)
    off = ~dec.omega
    out["sup_off_omega_over_alpha"] = float(np.max(np.abs(f.values[off]))) / alpha if off.any() else 0.0
    return out


# --------------------------------------------------------------------------
# index sets
# --------------------------------------------------------------------------

def interval_index(n: int, l: int, dil) -> tuple:
    """I^n_l = [ln, (l+1)n) and its enlargement [(l-1)n, (l+1+2/a)n] as integer ranges."""
    if n < 1:
        raise ValueError("n must be at least 1")
    a = dil.a if isinstance(dil, DilationGroup) else float(dil)
    I = range(l * n, (l + 1) * n)
    top = math.floor((l + 1 + 2.0 / a) * n + 1e-12)
    return I, range((l - 1) * n, top + 1)


# --------------------------------------------------------------------------
# polynomial projection
# --------------------------------------------------------------------------

def _monomials(d: int, degree: int):
    return [b for b in itertools.product(range(degree + 1), repeat=d) if sum(b) <= degree]


def _cell_avg_power(lo, hi, k):
    """Average of z^k over [lo, hi]."""
    return (hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * (hi - lo))


@dataclass
class Projection:
    projected: GridFunction
    residual: GridFunction
    fallback: bool
    sup_ratio: float           # sup |Pi h| / avg_w |h|
    basis_constant: float      # |w| * max_x sum_k |e_k(x)| * sup|e_k|
    moment_residual: float


def project_polynomial(h: GridFunction, region: np.ndarray, center, scale: int, dil: DilationGroup,
                       degree: int = None, cond_limit: float = 1e10) -> Projection:
    """L^2(w) projection onto polynomials of degree <= d in z = delta_{-r(w)}(x - x_w).

    The basis is the cell averages of the monomials, so the residual has
    exactly vanishing moments against every such polynomial.
    """
    d = h.dim
    degree = d if degree is None else degree
    region = np.asarray(region, dtype=bool)
    if np.any(h.values[~region]):
        raise ValueError("h must be supported in w")
    idx = np.argwhere(region)
    vol = h.cell_volume
    hs = h.cell_side
    lo_phys = h.root.lower()[None, :] + idx * hs
    center = np.asarray(center, dtype=np.float64)
    sc = np.array([2.0 ** (scale * p) for p in dil.exponents])
    zlo = (lo_phys - center) / sc
    zhi = (lo_phys + hs - center) / sc
    monos = _monomials(d, degree)
    A = np.ones((idx.shape[0], len(monos)))
    for col, beta in enumerate(monos):
        for ax, k in enumerate(beta):
            if k:
                A[:, col] *= _cell_avg_power(zlo[:, ax], zhi[:, ax], k)
    y = h.values[tuple(idx.T)]
    fallback = False
    Q, R = np.linalg.qr(A * math.sqrt(vol))
    diag = np.abs(np.diag(R))
    if idx.shape[0] < len(monos) or diag.min() <= diag.max() / cond_limit:
        fallback = True
        A = A[:, :1]
        Q, R = np.linalg.qr(A * math.sqrt(vol))
    coef = Q.T @ (y * math.sqrt(vol))
    proj = (Q @ coef) / math.sqrt(vol)
    out = np.zeros(h.shape)
    out[tuple(idx.T)] = proj
    resid = h.values - out
    # moments against the cell-averaged monomials
    mom = np.abs(A.T @ resid[tuple(idx.T)]) * vol
    scale_h = max(fsum(np.abs(y)) * vol, 1e-300)
    area = idx.shape[0] * vol
    avg = fsum(np.abs(y)) * vol / area
    sup_ratio = float(np.max(np.abs(proj))) / avg if avg > 0 else 0.0
    E = Q / math.sqrt(vol)   # orthonormal in L^2(w) on the grid
    basis_c = area * float(np.max(np.sum(np.abs(E), axis=1))) * float(np.max(np.abs(E)))
    return Projection(h.with_values(out), h.with_values(resid), fallback, sup_ratio, basis_c,
                      float(mom.max() / scale_h))


def project_on_cell(h: GridFunction, w: WhitneyCell, dec: WhitneyDecomposition, degree: int = None) -> Projection:
    return project_polynomial(h, dec.region(w), w.center, w.scale, dec.dil, degree)
