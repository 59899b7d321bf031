"""Constructive length/thickness decompositions.

``capped_minorant``      thickness-capped minorant of v on a cube (proportional scaling)
``thickness_split``      v = g + h with Lambda[h] <= Lambda[v]/2 and Lambda[v] Theta[g] <= 8 int g
``iterate_split``        repeated splitting of a signed function with sign reattachment
``stopping_time_split``  the multiscale stopping-time decomposition of the bad pieces
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .content import (ContentParams, ThetaResult, _prepare, _Tree, critical_thickness,
                      length, residual_indicator, thickness)
from .dilation import DilationGroup, coarsen_if_exact, dilate_grid, undilate_to
from .dyadic import (CubeCollection, DyadicCube, GridFunction, InvariantViolation, from_morton,
                     support_mask, upsample)

TOL = 1e-10
STOP_TOL = 1e-12


@dataclass
class CappedMinorant:
    v_I: GridFunction
    collection: CubeCollection


@dataclass
class DecompositionCertificate:
    constants_achieved: dict
    pieces: list
    residual: GridFunction
    extra: dict = field(default_factory=dict)

    def reconstruction_error(self, target: GridFunction) -> float:
        total = self.residual.values.copy() if self.residual is not None else 0.0
        for p in self.pieces:
            total = total + p.values
        return float(np.max(np.abs(total - target.values))) if target.values.size else 0.0

    def to_dict(self) -> dict:
        return {"constants_achieved": {k: _jsonable(v) for k, v in sorted(self.constants_achieved.items())},
                **{k: _jsonable(v) for k, v in sorted(self.extra.items())}}


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


# --------------------------------------------------------------------------
# thickness-capped minorant
# --------------------------------------------------------------------------

def capped_minorant(v: GridFunction, I: DyadicCube, gamma: float, n: int, beta: float = 1.0) -> CappedMinorant:
    """Bottom-up capping: a node whose (already capped) children carry more than
    2 gamma l^beta is scaled down proportionally to exactly 2 gamma l^beta.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if np.any(v.values < 0):
        raise ValueError("v must be nonnegative")
    if I.level > n:
        raise ValueError("I must have sidelength at least 2^-n")
    v = _prepare(v, n)
    if not v.root.contains(I):
        if I.contains(v.root):
            v = v.lift(I)
        else:
            raise ValueError("I must meet the root of v")
    vI = v.crop(I) if v.root != I else v
    if v.restrict(I).abs_integral() != v.abs_integral():
        raise ValueError("v must be supported in I")
    t = _Tree(vI, ContentParams(n, beta))
    costs = 2.0 * gamma * t.lengths
    leaf = np.minimum(costs[0], t.leaves)
    vals, sums = _kernels.tree_min_levels(leaf, costs, t.fan)
    # per-node scaling factor; product along the root-to-leaf path
    factor = np.ones(1)
    unscaled_above = np.ones(1, dtype=bool)
    chosen = []
    for h in range(t.depth, -1, -1):
        if h == 0:
            m = t.leaves
            own = np.where(m > leaf, leaf / np.where(m > 0, m, 1.0), 1.0)
            scaled = m > leaf
        else:
            s = sums[h]
            own = np.where(s > vals[h], vals[h] / np.where(s > 0, s, 1.0), 1.0)
            scaled = s > vals[h]
        # the collection is the topmost scaled nodes
        chosen.extend((h, int(i)) for i in np.flatnonzero(scaled & unscaled_above))
        factor = factor * own
        unscaled_above = unscaled_above & ~scaled
        if h > 0:
            factor = np.repeat(factor, t.fan)
            unscaled_above = np.repeat(unscaled_above, t.fan)
    grid = from_morton(factor, t.d)
    grid = upsample(grid, 1 << (vI.resolution - n))
    out_vals = vI.values * grid
    out = GridFunction(vI.root, vI.resolution, out_vals, nonnegative=True)
    if vI.root != v.root:
        out = out.lift(v.root) if v.root.contains(vI.root) else out
    coll = CubeCollection(t.cube_at(h, i) for h, i in chosen)
    return CappedMinorant(out, coll)


def check_capped_minorant(v: GridFunction, I: DyadicCube, gamma: float, n: int, out: CappedMinorant,
                          beta: float = 1.0) -> dict:
    """Measured slack of the three minorant invariants; raises on violation."""
    vv = _prepare(v, n)
    vi = out.v_I
    if vi.root != vv.root:
        vi = vi.lift(vv.root) if vv.root.contains(vi.root) else vi
        vv = vv if vi.root == vv.root else vv.lift(vi.root)
    vI = vv.restrict(I)
    if np.any(vi.values < 0) or np.any(vi.values > vI.values * (1 + TOL)):
        raise InvariantViolation("capped_minorant: 0 <= v_I <= v chi_I failed")
    th = thickness(vi, ContentParams(n, beta))
    if th > 2 * gamma * (1 + TOL):
        raise InvariantViolation(f"capped_minorant: thickness {th} exceeds 2 gamma = {2 * gamma}")
    covered = np.zeros(vv.shape, dtype=bool)
    for Q in out.collection:
        covered |= _mask(vv, Q)
    lhs = 2 * vi.integral()
    rhs = 2 * gamma * out.collection.total_length(beta) + float(np.sum(vI.values[~covered])) * vv.cell_volume
    if lhs < rhs * (1 - TOL):
        raise InvariantViolation(f"capped_minorant: 2 int v_I = {lhs} < {rhs}")
    return {"thickness_over_2gamma": th / (2 * gamma), "mass_ratio": lhs / rhs if rhs > 0 else 1.0}


def _mask(g: GridFunction, Q: DyadicCube) -> np.ndarray:
    return GridFunction.indicator(Q, g.root, g.resolution).values > 0


# --------------------------------------------------------------------------
# g/h split
# --------------------------------------------------------------------------

def thickness_split(v: GridFunction, q: DyadicCube, n: int, beta: float = 1.0, theta: ThetaResult = None,
                    check: bool = True):
    """Split nonnegative v supported in q into g + h (see module docstring)."""
    if np.any(v.values < 0):
        raise ValueError("v must be nonnegative")
    p = ContentParams(n, beta)
    v = _prepare(v, n)
    if v.root != q:
        if v.root.contains(q):
            v = v.crop(q) if v.restrict(q).abs_integral() == v.abs_integral() else None
            if v is None:
                raise ValueError("v must be supported in q")
        elif q.contains(v.root):
            v = v.lift(q)
        else:
            raise ValueError("q must contain the support of v")
    if v.integral() <= 0:
        raise ValueError("degenerate: integral of v is zero")
    res = critical_thickness(v, p) if theta is None else theta
    E = residual_indicator(v, res, n)
    vq = capped_minorant(v, q, res.theta, n, beta).v_I
    g_vals = np.clip(np.where(E > 0, v.values, vq.values), 0.0, v.values)
    # with 0 <= g <= v, h = fl(v - g) and then g = fl(v - h) make g + h == v bit for bit (Sterbenz)
    h_vals = v.values - g_vals
    g_vals = v.values - h_vals
    g = GridFunction(v.root, v.resolution, g_vals, nonnegative=True)
    h = GridFunction(v.root, v.resolution, h_vals, nonnegative=True)
    lam_v = res.length
    lam_h = length(h, p)
    th_g = thickness(g, p)
    int_g = g.integral()
    consts = {
        "theta": res.theta,
        "length_v": lam_v,
        "length_h_over_length_v": lam_h / lam_v,
        "length_v_thickness_g_over_int_g": lam_v * th_g / int_g if int_g > 0 else 0.0,
        "thickness_residual_over_2theta": thickness(v.with_values(v.values * E), p) / (2 * res.theta),
    }
    cert = DecompositionCertificate(consts, [g], h)
    if check:
        if consts["length_h_over_length_v"] > 0.5 * (1 + TOL):
            raise InvariantViolation(f"Lambda[h] / Lambda[v] = {consts['length_h_over_length_v']} > 1/2")
        if consts["length_v_thickness_g_over_int_g"] > 8 * (1 + TOL):
            raise InvariantViolation(f"Lambda[v] Theta[g] / int g = {consts['length_v_thickness_g_over_int_g']} > 8")
        if consts["thickness_residual_over_2theta"] > 1 + TOL:
            raise InvariantViolation("thickness of v on the residual set exceeds 2 theta")
        supp = upsample(support_mask(v, n), 1 << (v.resolution - n))
        if np.any(g.values[~supp]) or np.any(h.values[~supp]):
            raise InvariantViolation("g or h leaves the level-n support of v")
        err = np.max(np.abs(g.values + h.values - v.values))
        if err != 0.0:
            raise InvariantViolation(f"g + h differs from v by {err}")
    return g, h, cert


# --------------------------------------------------------------------------
# iterated split
# --------------------------------------------------------------------------

def to_unit_root(f: GridFunction) -> GridFunction:
    """Re-root f on the sidelength-1 dyadic cube containing its support."""
    if f.root.level > 0:
        return f.lift(f.root.ancestor(0))
    if f.root.level == 0:
        return f
    box = f.support_box()
    if box.level < 0:
        raise ValueError("unsupported root size: support does not fit in a unit dyadic cube")
    return f.crop(box.ancestor(0))


def iterate_split(f: GridFunction, n: int, m: int, beta: float = 1.0, check: bool = True):
    """f = h_m + sum_{nu<=m} g_nu; when m >= n the residual is absorbed (g_{m+1} = h_m, h_{m+1} = 0).

    Returns ``(g_pieces, residual, certificate)``.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    f0 = _prepare(to_unit_root(f), n)
    p = ContentParams(n, beta)
    lam_f = length(f0, p)
    pieces, prev = [], f0
    ratios, lam_hist = [], [lam_f]
    h = f0
    zero = f0.with_values(np.zeros(f0.shape))
    for nu in range(1, m + 1):
        if h.is_zero():
            g, h_new = zero, zero
        else:
            gt, ht, _ = thickness_split(h.with_values(np.abs(h.values), nonnegative=True), f0.root, n, beta,
                                        check=check)
            sgn = np.sign(f0.values)
            g, h_new = f0.with_values(gt.values * sgn), f0.with_values(ht.values * sgn)
        lam_prev = length(h, p)
        int_g = g.abs_integral()
        ratios.append(thickness(g, p) * lam_prev / int_g if int_g > 0 else 0.0)
        pieces.append(g)
        h = h_new
        lam_hist.append(length(h, p))
    if m >= n:
        pieces.append(h)
        int_g = h.abs_integral()
        ratios.append(thickness(h, p) * length(h, p) / int_g if int_g > 0 else 0.0)
        h = zero
        lam_hist.append(0.0)
    consts = {
        "max_thickness_length_ratio": max(ratios) if ratios else 0.0,
        "length_history": lam_hist,
        "length_f": lam_f,
    }
    cert = DecompositionCertificate(consts, pieces, h)
    if check:
        _check_iterated(f0, pieces, h, ratios, lam_hist, m, n)
    return pieces, h, cert


def _check_iterated(f, pieces, h, ratios, lam_hist, m, n):
    sgn = np.sign(f.values)
    for g in pieces + [h]:
        if np.any(g.values * sgn < 0) or np.any((sgn == 0) & (g.values != 0)):
            raise InvariantViolation("piece sign disagrees with f")
    if max(ratios, default=0.0) > 8 * (1 + TOL):
        raise InvariantViolation(f"Theta[g_nu] Lambda[h_nu-1] / int|g_nu| = {max(ratios)} > 8")
    for k, lam in enumerate(lam_hist[: m + 1]):
        if lam > 2.0 ** (-k) * lam_hist[0] * (1 + TOL):
            raise InvariantViolation(f"Lambda[h_{k}] = {lam} exceeds 2^-{k} Lambda[f]")
    err = float(np.max(np.abs(reassemble(pieces, h).values - f.values)))
    if err != 0.0:
        raise InvariantViolation(f"pieces do not reconstruct f (error {err})")


def reassemble(pieces, h: GridFunction) -> GridFunction:
    """g_1 + (g_2 + (... + (g_m + h))), the order in which every split was exact."""
    total = h.values
    for g in reversed(pieces):
        total = g.values + total
    return h.with_values(total)


def iterate_split_until(f: GridFunction, n: int, alpha: float, beta: float = 1.0):
    """Iterate until the first L with alpha * Lambda[h_L] <= int|h_L| (at most n + 1 steps).

    Returns ``(g_pieces, h_L, L, diagnostics)``.
    """
    f0 = _prepare(to_unit_root(f), n)
    p = ContentParams(n, beta)
    sgn = np.sign(f0.values)
    zero = f0.with_values(np.zeros(f0.shape))
    h = f0
    pieces = []
    g_thick = []
    for L in range(0, n + 2):
        lam = length(h, p)
        mass = h.abs_integral()
        if alpha * lam <= mass * (1 + STOP_TOL):
            return pieces, h, L, {"piece_thickness": g_thick}
        if L == n:
            # residual after n splits lives in one level-n cell: absorb it
            pieces.append(h)
            g_thick.append(thickness(h, p))
            h = zero
            continue
        gt, ht, _ = thickness_split(h.with_values(np.abs(h.values), nonnegative=True), f0.root, n, beta)
        g = f0.with_values(gt.values * sgn)
        pieces.append(g)
        g_thick.append(thickness(g, p))
        h = f0.with_values(ht.values * sgn)
    raise InvariantViolation("stopping rule did not trigger by step n + 1")


# --------------------------------------------------------------------------
# stopping-time split
# --------------------------------------------------------------------------

@dataclass
class BadPiece:
    """A mean-zero piece b^n_w tagged with its Whitney scale r(w)."""

    key: object
    scale: int
    function: GridFunction
    region: np.ndarray = None  # boolean mask of w on the function's grid; defaults to its support

    def mask(self) -> np.ndarray:
        return self.region if self.region is not None else self.function.values != 0


@dataclass
class StoppingResult:
    pieces: dict            # (key, kappa) -> GridFunction
    kappas: list
    H: dict                 # j -> GridFunction
    S: dict
    stop_lengths: dict      # (j, unit cube) -> L(j, q)
    measured: dict


def _unit_cubes(g: GridFunction):
    """Split into pieces re-rooted on the sidelength-1 dyadic cubes meeting the support."""
    if g.root.level >= 0:
        q = g.root.ancestor(0)
        return {q: g.lift(q)}
    masses = g.block_masses(0)
    base = np.array(g.root.coords, dtype=np.int64) << (0 - g.root.level)
    out = {}
    for ix in np.argwhere(masses > 0):
        q = DyadicCube(0, tuple(int(i) + int(o) for i, o in zip(ix, base)))
        out[q] = g.crop(q)
    return out


def _place(piece: GridFunction, like: GridFunction) -> GridFunction:
    """Put a unit-cube piece back onto the root of ``like`` (refining as needed)."""
    res = max(piece.resolution, like.resolution)
    piece = piece.refine(res)
    if like.root.contains(piece.root):
        return piece.lift(like.root)
    return piece.crop(like.root)


MAX_DILATED_LOG2_CELLS = 24


def stopping_time_split(bad_pieces, n: int, l: int, alpha: float, dil: DilationGroup, beta: float = 1.0,
                        check: bool = True) -> StoppingResult:
    """Distribute the bad pieces over the scales kappa in the enlarged index set.

    Works top-down from kappa_max: the part of the running remainder G on
    {r(w) = kappa} is peeled off as S, the rest is compressed by delta_kappa,
    cut into unit cubes and split (sign-preserving) until the stopping rule
    alpha * Lambda_n[h_L] <= int|h_L| fires; the residuals h_L form H and the
    split-off parts form the next remainder. Then f^{n,kappa}_w is H on w when
    r(w) < kappa and S on w when r(w) = kappa.
    """
    from .czd import interval_index

    if alpha <= 0:
        raise ValueError("alpha must be positive")
    bad_pieces = list(bad_pieces)
    I, I_star = interval_index(n, l, dil)
    for b in bad_pieces:
        if b.scale not in I:
            raise ValueError(f"r(w) = {b.scale} not in [{I.start}, {I.stop})")
    kappas = list(I_star)
    kmax = max(kappas)
    if not bad_pieces:
        return StoppingResult({}, kappas, {}, {}, {}, {})
    # common grid
    base = bad_pieces[0].function
    for b in bad_pieces[1:]:
        if b.function.root != base.root or b.function.resolution != base.resolution:
            raise ValueError("bad pieces must share root and resolution")
    res0 = base.resolution
    # per-axis log2 cell count of the dilated grid, or of a unit cube it is lifted to
    finest = 0
    for k in kappas:
        e = dil.shifts(k)
        top = res0 + int(np.ceil(max(e)))
        finest = max(finest, top - min(base.root.level + int(np.floor(min(e))), 0))
    if base.dim * finest > MAX_DILATED_LOG2_CELLS:
        raise ValueError(f"dilated unit cubes would need 2^{base.dim * finest} cells; "
                         f"use a coarser grid or smaller |l| (limit 2^{MAX_DILATED_LOG2_CELLS})")
    labels = np.full(base.shape, np.iinfo(np.int64).min, dtype=np.int64)
    for b in bad_pieces:
        m = b.mask()
        if np.any(labels[m] != np.iinfo(np.int64).min):
            raise ValueError("regions w must be disjoint")
        labels[m] = b.scale
    G = base.with_values(sum(b.function.values for b in bad_pieces))
    p = ContentParams(n, beta)
    H, S, stops = {}, {}, {}
    claim_ii = 0.0
    j = 0
    while True:
        kappa = kmax - j
        lab = labels if labels.shape == G.shape else upsample(labels, G.shape[0] // labels.shape[0])
        S_j = G.with_values(np.where(lab == kappa, G.values, 0.0))
        calG = G.with_values(np.where(lab == kappa, 0.0, G.values))
        H_j = calG.with_values(np.zeros(calG.shape))
        G_next = H_j
        if not calG.is_zero():
            D = dilate_grid(calG, kappa, dil)
            h_parts, g_parts = [], []
            for q, piece in sorted(_unit_cubes(D).items()):
                if piece.is_zero():
                    continue
                gs, hL, L, diag = iterate_split_until(piece, n, alpha, beta)
                stops[(j, q)] = L
                if L > n + 1:
                    raise InvariantViolation(f"L({j},{q}) = {L} > n + 1")
                for th in diag["piece_thickness"]:
                    claim_ii = max(claim_ii, th / alpha)
                h_parts.append(hL)
                g_parts.extend(gs)
            H_j = _sum_back(h_parts, kappa, dil, calG)
            G_next = _sum_back(g_parts, kappa, dil, calG)
        H[j], S[j] = H_j, S_j
        G = G_next
        if kappa <= I.start:
            break
        j += 1
    # common resolution for all outputs
    res = max([res0] + [x.resolution for x in list(H.values()) + list(S.values())])
    out = {}
    for b in bad_pieces:
        w = upsample(b.mask(), 1 << (res - res0)).astype(bool)
        for kappa in kappas:
            jj = kmax - kappa
            if b.scale < kappa and jj in H:
                src = H[jj].refine(res)
                out[(b.key, kappa)] = src.with_values(np.where(w, src.values, 0.0))
            elif b.scale == kappa and jj in S:
                src = S[jj].refine(res)
                out[(b.key, kappa)] = src.with_values(np.where(w, src.values, 0.0))
            else:
                out[(b.key, kappa)] = GridFunction.zeros(base.root, res)
    result = StoppingResult(out, kappas, H, S, stops, {"claim_ii_thickness_over_alpha": claim_ii})
    if check:
        result.measured.update(check_stopping(bad_pieces, result, n, alpha, dil, beta))
    return result


def _sum_back(parts, kappa, dil, like):
    if not parts:
        return like.with_values(np.zeros(like.shape))
    placed = []
    for part in parts:
        placed.append(undilate_to(part, kappa, dil, like))
    res = max(x.resolution for x in placed)
    total = np.zeros((1 << (res - like.root.level),) * like.dim)
    for x in placed:
        total = total + x.refine(res).values
    out = GridFunction(like.root, res, total)
    return coarsen_if_exact(out, like.resolution)


def check_stopping(bad_pieces, result: StoppingResult, n: int, alpha: float, dil: DilationGroup,
                   beta: float = 1.0) -> dict:
    """Measure additivity, the length bound and the thickness bound; raise on violation."""
    p = ContentParams(n, beta)
    kappas = result.kappas
    keys = [b.key for b in bad_pieces]
    # additivity of absolute values
    worst_add = 0.0
    for b in bad_pieces:
        parts = [result.pieces[(b.key, k)] for k in kappas]
        res = max(x.resolution for x in parts)
        target = np.abs(b.function.refine(res).values)
        acc = sum(np.abs(x.refine(res).values) for x in parts)
        scale = max(float(target.max()), 1e-300)
        worst_add = max(worst_add, float(np.max(np.abs(acc - target))) / scale)
        signed = sum(x.refine(res).values for x in parts)
        if np.max(np.abs(signed - b.function.refine(res).values)) > 1e-12 * scale * len(kappas):
            raise InvariantViolation("pieces do not sum to b^n_w")
    if worst_add > 1e-12 * len(kappas):
        raise InvariantViolation(f"sum_kappa |f^kappa_w| differs from |b_w| (relative {worst_add})")
    by_scale = {b.key: b.scale for b in bad_pieces}
    worst_len = 0.0
    worst_th = 0.0
    for kappa in kappas:
        below = [result.pieces[(k, kappa)] for k in keys if by_scale[k] < kappa]
        F = _grid_total(below)
        if F is not None and not F.is_zero():
            for q, piece in _unit_cubes(dilate_grid(F, kappa, dil)).items():
                mass = piece.abs_integral()
                lam = length(piece, p)
                if lam > 0:
                    ratio = alpha * lam / mass if mass > 0 else math.inf
                    worst_len = max(worst_len, ratio)
                    if ratio > 1 + 1e-9:
                        raise InvariantViolation(f"length bound fails at kappa={kappa}, q={q}: ratio {ratio}")
        upto = [result.pieces[(k, kappa)] for k in keys if by_scale[k] <= kappa]
        F = _grid_total(upto)
        if F is None or F.is_zero():
            continue
        for s in range(1, max(kappas) - kappa + 1):
            for q, piece in _unit_cubes(dilate_grid(F, kappa + s, dil)).items():
                th = thickness(piece, p) / alpha
                worst_th = max(worst_th, th)
                if th > 16 * (n + 1) * (1 + 1e-9):
                    raise InvariantViolation(f"thickness bound fails at kappa={kappa}, s={s}, q={q}: {th} alpha")
    return {"additivity_relative_error": worst_add, "length_ratio_max": worst_len,
            "thickness_over_alpha_max": worst_th, "thickness_bound": 16 * (n + 1),
            "max_stop_length": max(result.stop_lengths.values(), default=0)}


def _grid_total(funcs):
    funcs = [f for f in funcs if f is not None]
    if not funcs:
        return None
    res = max(f.resolution for f in funcs)
    vals = sum(f.refine(res).values for f in funcs)
    return GridFunction(funcs[0].root, res, vals)
