"""Empirical weak-type constants, convergence experiments and term budgets."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .czd import maximal_hl
from .dyadic import GridFunction, fsum
from .operators import OperatorResult, maximal_fn, parabola_average, split_maximal_terms
from .surface import SurfaceMeasure

E2 = math.e ** 2


def _phi_t(t):
    return t


def _phi_llog(t):
    return t * np.log(math.e + t)


def _phi_lloglog(t):
    return t * np.log(np.log(E2 + t))


PHIS = {"t": _phi_t, "tlog": _phi_llog, "tloglog": _phi_lloglog}


@dataclass(frozen=True)
class OrliczSpec:
    """Young-type function Phi with a searched constant C."""

    phi: str = "tloglog"
    C: float = 1.0

    def __post_init__(self):
        if self.phi not in PHIS:
            raise ValueError(f"unknown Phi {self.phi!r}; choose from {sorted(PHIS)}")

    def __call__(self, t):
        return PHIS[self.phi](np.asarray(t, dtype=np.float64))

    def check(self, grid=None) -> dict:
        """phi(0) = 0, monotone and convex on a sample grid (second differences)."""
        t = np.linspace(0, 1e4, 20001) if grid is None else np.asarray(grid, dtype=np.float64)
        v = self(t)
        d1 = np.diff(v)
        d2 = np.diff(v, 2)
        scale = np.abs(v).max()
        return {"zero": bool(abs(float(self(0.0))) == 0.0), "monotone": bool(np.all(d1 >= 0)),
                "convex": bool(np.all(d2 >= -1e-12 * scale))}


def default_alphas(f: GridFunction, points: int = 33) -> np.ndarray:
    """Geometric grid 2^-8 ... 2^8 times sup |f|."""
    s = f.sup()
    return s * 2.0 ** np.linspace(-8, 8, points)


def _field(op) -> np.ndarray:
    if isinstance(op, OperatorResult):
        return op.field.values
    if isinstance(op, GridFunction):
        return op.values
    return np.asarray(op, dtype=np.float64)


def weak_type_constant(op, f: GridFunction, spec: OrliczSpec, alphas=None, iters: int = 200):
    """Least C with |{|Of| > alpha}| <= int Phi(C |f| / alpha), maximized over alpha.

    The right side is nondecreasing in C, so bisection applies. Returns
    (C_min, table) with one row per alpha.
    """
    O = np.abs(_field(op))
    alphas = default_alphas(f) if alphas is None else np.asarray(alphas, dtype=np.float64)
    if np.any(alphas <= 0):
        raise ValueError("alphas must be positive")
    vol = f.cell_volume
    af = np.abs(f.values)
    af = af[af > 0]
    rows = []
    best = 0.0
    for a in alphas:
        lhs = float(np.count_nonzero(O > a)) * vol
        if lhs == 0.0:
            rows.append({"alpha": float(a), "lhs": 0.0, "C": 0.0})
            continue
        if af.size == 0:
            rows.append({"alpha": float(a), "lhs": lhs, "C": math.inf})
            best = math.inf
            continue
        rhs = lambda C: fsum(spec(C * af / a)) * vol
        lo, hi = 0.0, 1.0
        while rhs(hi) < lhs:
            lo, hi = hi, 2 * hi
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if rhs(mid) >= lhs:
                hi = mid
            else:
                lo = mid
        rows.append({"alpha": float(a), "lhs": lhs, "C": hi})
        best = max(best, hi)
    return best, rows


def distribution(op, f: GridFunction, alphas) -> np.ndarray:
    O = np.abs(_field(op))
    return np.array([np.count_nonzero(O > a) for a in alphas]) * f.cell_volume


def _workers(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("LLOGLOG_WORKERS", "1")))


def parallel_map(fn, items, workers=None) -> list:
    """Order-preserving map over a process pool (serial for one worker)."""
    items = list(items)
    w = _workers(workers)
    if w == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))


def _sweep_cell(args):
    family, j, mu, dil, phis = args
    f = family(j)
    M = maximal_fn(mu, f, dil)
    return {phi: weak_type_constant(M, f, OrliczSpec(phi))[0] for phi in phis}


def weak_type_sweep(family, js, mu: SurfaceMeasure = None, phis=("t", "tloglog"), dil=None, workers=None) -> dict:
    """C_min over the family f_j with lambda = 2^j, and the log-log slope in lambda per Phi."""
    mu = SurfaceMeasure("parabola") if mu is None else mu
    dil = mu.natural_dilation() if dil is None else dil
    js = list(js)
    cells = parallel_map(_sweep_cell, [(family, j, mu, dil, tuple(phis)) for j in js], workers)
    out = {"j": js, "lambda": [2.0 ** j for j in js]}
    loglam = np.array(js, dtype=np.float64) * math.log(2.0)
    for phi in phis:
        C = np.array([c[phi] for c in cells])
        out[phi] = C.tolist()
        ok = np.isfinite(C) & (C > 0)
        out[f"slope_{phi}"] = float(np.polyfit(loglam[ok], np.log(C[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
    return out


def convergence_experiment(f: GridFunction, r_sequence, b: float = 2.0, eps: float = 1e-3, samples: int = 256,
                           seed: int = 0) -> dict:
    """|P_r f(x) - f(x)| at sampled cell centers for a decreasing sequence of r."""
    rng = np.random.default_rng(seed)
    N = f.shape[0]
    margin = N // 8
    pts = rng.integers(margin, N - margin, size=(samples, f.dim))
    idx = tuple(pts.T)
    base = f.values[idx]
    rows = []
    for r in r_sequence:
        P = parabola_average(f, float(r), b)
        err = np.abs(P.values[idx] - base)
        rows.append({"r": float(r), "max_error": float(err.max()) if err.size else 0.0,
                     "mean_error": float(err.mean()) if err.size else 0.0,
                     "fraction_above_eps": float(np.mean(err > eps)) if err.size else 0.0})
    fr = [row["fraction_above_eps"] for row in rows]
    return {"rows": rows, "eps": eps, "nonincreasing": bool(all(b_ <= a_ + 1e-12 for a_, b_ in zip(fr, fr[1:])))}


def omega_star(cz) -> np.ndarray:
    """{M_HL chi_Omega > (10 K2)^-tau} on the grid of the CZ split."""
    dec = cz.whitney
    chi = cz.f.with_values(dec.omega.astype(np.float64))
    K2 = dec.measured.get("K2_bound", 2 * dec.K + 1)
    return maximal_hl(chi, dec.dil).values > (10 * K2) ** (-dec.dil.tau)


def term_budget_report(f: GridFunction, mu: SurfaceMeasure, dil=None, alpha: float = 1.0, k_range=None,
                       gamma: float = 0.5) -> dict:
    """Measured budgets of the five maximal terms against their bound forms.

    L^2 for the good terms (ratio ||M_I||_2 / sqrt(alpha ||f||_1)), L^1 off
    Omega* for the off-scale term (ratio to ||f||_1) and L^1 for the
    diagonal term (ratio to int |f| log(e + |f|/alpha)).
    """
    terms = split_maximal_terms(f, alpha, mu, dil, k_range=k_range, gamma=gamma)
    cz = terms["cz"]
    vol = f.cell_volume
    norm1 = f.abs_integral()
    good = sum(terms[k].field.values for k in ("M_I1", "M_I2", "M_I3"))
    l2 = math.sqrt(fsum(good ** 2) * vol)
    star = omega_star(cz)
    m2 = fsum(terms["M_II"].field.values[~star]) * vol
    m3 = fsum(terms["M_III"].field.values) * vol
    af = np.abs(f.values)
    llog = fsum(af * np.log(math.e + af / alpha)) * vol
    report = {
        "alpha": alpha, "l1_norm": norm1,
        "M_I_l2": l2, "M_I_ratio": l2 / math.sqrt(alpha * norm1) if norm1 > 0 else 0.0,
        "M_II_l1_off_omega_star": m2, "M_II_ratio": m2 / norm1 if norm1 > 0 else 0.0,
        "M_III_l1": m3, "M_III_ratio": m3 / llog if llog > 0 else 0.0,
        "omega_measure": cz.measured["omega_measure"],
        "omega_star_measure": float(np.count_nonzero(star)) * vol,
        "nonzero_terms": [k for k in ("M_I1", "M_I2", "M_I3", "M_II", "M_III") if not terms[k].field.is_zero()],
    }
    report.update({(k if k.startswith("domination") else f"split_{k}"): v for k, v in terms["diagnostics"].items()
                   if k != "levels"})
    return report
