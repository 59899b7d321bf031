"""The thirteen acceptance checks, shared by ``selftest`` and the test suite."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .content import (ContentParams, brute_force_length, brute_force_theta, critical_thickness, length,
                      thickness)
from .czd import interval_index, maximal_hl, whitney
from .decompose import BadPiece, thickness_split, iterate_split, stopping_time_split
from .dilation import DilationGroup, build_mollifier, scaling_check
from .dyadic import DyadicCube, GridFunction, InvariantViolation
from .families import lambda_stack, random_sparse, stacked_rectangles
from .harness import weak_type_sweep
from .operators import check_autocorrelation, fourier_decay, split_maximal_terms
from .surface import SurfaceMeasure

SELFTEST_BUDGET = 20 * 60.0


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.title}: {self.summary} ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed, "summary": self.summary,
                "details": self.details, "seconds": self.seconds}


def _slope(x, y) -> float:
    return float(np.polyfit(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64), 1)[0])


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300) if a != b else 0.0


# --------------------------------------------------------------------------
# instance generators
# --------------------------------------------------------------------------

def random_content_instance(rng):
    """Small nonnegative grid function with a tree small enough for the exhaustive oracle."""
    d = int(rng.integers(1, 3))
    n = int(rng.integers(1, 4))
    L = int(rng.integers(max(0, n - 3), n + 1)) if d == 1 else max(0, n - 2)
    res = n + int(rng.integers(0, 2))
    root = DyadicCube(L, tuple(int(x) for x in rng.integers(0, 1 << L, size=d)) if L > 0 else (0,) * d)
    side = 1 << (res - L)
    vals = rng.exponential(1.0, (side,) * d) * (rng.random((side,) * d) < rng.uniform(0.1, 0.7))
    beta = float(rng.choice([0.5, 1.0, 1.5]))
    return GridFunction(root, res, vals, nonnegative=True), ContentParams(n, beta)


def random_split_instance(rng):
    d = int(rng.integers(1, 3))
    n = int(rng.integers(1, 5))
    res = n + int(rng.integers(0, 2))
    side = 1 << res
    shape = (side,) * d
    vals = rng.exponential(1.0, shape) * (rng.random(shape) < rng.uniform(0.05, 0.6))
    if not vals.any():
        vals.flat[int(rng.integers(0, vals.size))] = 1.0
    return GridFunction(DyadicCube(0, (0,) * d), res, vals, nonnegative=True), n


def random_bad_pieces(rng, res: int = 8):
    """Disjoint dyadic intervals w with scales in I^n_l carrying random mean-zero functions (d = 1)."""
    dil = DilationGroup((1.0,))
    n = int(rng.integers(1, 4))
    l = int(rng.integers(-max(1, 6 // n), 0))
    I, _ = interval_index(n, l, dil)
    root = DyadicCube(0, (0,))
    N = 1 << res
    pieces, pos, key = [], 0, 0
    while pos < N:
        j = int(rng.choice(list(I)))
        if j + res < 0:
            pos += 1
            continue
        size = 1 << (j + res)
        if pos % size:
            pos += 1
            continue
        if pos + size > N:
            break
        if rng.random() < 0.6:
            v = np.zeros(N)
            seg = rng.exponential(1.0, size) * (rng.random(size) < 0.5) * rng.choice([-1.0, 1.0], size)
            seg -= seg.mean()
            v[pos:pos + size] = seg
            m = np.zeros(N, dtype=bool)
            m[pos:pos + size] = True
            pieces.append(BadPiece(key, j, GridFunction(root, res, v), m))
            key += 1
        pos += size
    return pieces, n, l, float(rng.uniform(0.2, 4.0)), dil


def random_omega(rng, res: int = 6, dil: DilationGroup = None):
    """Union of a few rho-balls, or a superlevel set of M_HL of a sparse function."""
    dil = DilationGroup((1.0, 2.0)) if dil is None else dil
    N = 1 << res
    g = GridFunction.zeros(DyadicCube(0, (0, 0)), res)
    if rng.random() < 0.5:
        x = (np.arange(N) + 0.5) / N
        X, Y = np.meshgrid(x, x, indexing="ij")
        om = np.zeros((N, N), dtype=bool)
        for _ in range(int(rng.integers(1, 5))):
            c = rng.uniform(0.2, 0.8, 2)
            r = rng.uniform(0.05, 0.3)
            om |= np.maximum(np.abs(X - c[0]) / r, np.abs(Y - c[1]) / r ** dil.exponents[1]) < 1
    else:
        f = random_sparse(res, density=0.02, seed=int(rng.integers(0, 2 ** 31)))
        om = maximal_hl(f, dil).values > float(rng.uniform(0.3, 2.0))
    if om.all():
        om[0, 0] = False
    return om, g


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------

def c01_content_oracle(instances: int = 200, seed: int = 1):
    rng = np.random.default_rng(seed)
    worst_len = worst_theta = 0.0
    fails = 0
    t0 = time.perf_counter()
    for _ in range(instances):
        v, p = random_content_instance(rng)
        if v.is_zero():
            v = v.with_values(np.ones(v.shape))
        a, b = length(v, p), brute_force_length(v, p)
        ta, tb = critical_thickness(v, p).theta, brute_force_theta(v, p)
        worst_len = max(worst_len, _rel(a, b))
        worst_theta = max(worst_theta, _rel(ta, tb))
        fails += (_rel(a, b) > 1e-9) + (_rel(ta, tb) > 1e-9)
    secs = time.perf_counter() - t0
    ok = fails == 0 and secs < 60
    return ok, f"{instances} instances, max rel err length {worst_len:.1e}, theta {worst_theta:.1e}, {secs:.1f}s < 60s", \
        {"worst_length": worst_len, "worst_theta": worst_theta, "failures": fails, "seconds": secs}


def c02_stacked_rectangles(ns=range(1, 7)):
    rows = []
    ok = True
    for n in ns:
        v = stacked_rectangles(n)
        p = ContentParams(n)
        lam, th, integral = length(v, p), thickness(v, p), v.integral()
        rows.append({"n": n, "length": lam, "thickness": th, "integral": integral})
        ok &= lam == n + 1 and th == 1.0 and integral < 2
    return ok, "Lambda = n+1, Theta = 1, integral < 2 for n = 1..6" if ok else f"mismatch: {rows}", {"rows": rows}


def c03_split(instances: int = 1000, seed: int = 3):
    rng = np.random.default_rng(seed)
    worst_h = worst_g = worst_rec = 0.0
    viol = 0
    for _ in range(instances):
        v, n = random_split_instance(rng)
        try:
            g, h, cert = thickness_split(v, v.root, n)
        except InvariantViolation:
            viol += 1
            continue
        c = cert.constants_achieved
        worst_h = max(worst_h, c["length_h_over_length_v"])
        worst_g = max(worst_g, c["length_v_thickness_g_over_int_g"])
        worst_rec = max(worst_rec, float(np.max(np.abs(g.values + h.values - v.values))))
        viol += (c["length_h_over_length_v"] > 0.5) + (c["length_v_thickness_g_over_int_g"] > 8.0)
        viol += worst_rec != 0.0
    ok = viol == 0
    return ok, f"{instances} instances, {viol} violations, max Lh/Lv {worst_h:.3f}, max Lv Th g/int g {worst_g:.3f}, " \
               f"reconstruction error {worst_rec:.0e}", \
        {"violations": viol, "worst_length_ratio": worst_h, "worst_thickness_ratio": worst_g,
         "reconstruction_error": worst_rec}


def c04_iterated(instances: int = 300, seed: int = 4):
    rng = np.random.default_rng(seed)
    bad = 0
    worst_id = 0.0
    for _ in range(instances):
        v, n = random_split_instance(rng)
        signs = rng.choice([-1.0, 1.0], v.shape)
        f = v.with_values(v.values * signs)
        pieces, h, cert = iterate_split(f, n, n)
        p = ContentParams(n)
        last = pieces[-1]
        lam = length(last, p)
        mass = last.abs_integral()
        ident = abs(thickness(last, p) * lam - mass) / mass if mass > 0 else 0.0
        worst_id = max(worst_id, ident)
        bad += (not h.is_zero()) + (lam > 2.0 ** (-n) * (1 + 1e-12)) + (ident > 1e-12)
    return bad == 0, f"{instances} instances, residual zero after step n+1 on all, max |Theta Lambda - int|/int " \
                     f"{worst_id:.1e}" if bad == 0 else f"{bad} failures", {"failures": bad, "identity_gap": worst_id}


def c05_stopping(instances: int = 100, seed: int = 5):
    rng = np.random.default_rng(seed)
    worst = {}
    viol = 0
    for _ in range(instances):
        pieces, n, l, alpha, dil = random_bad_pieces(rng)
        try:
            r = stopping_time_split(pieces, n, l, alpha, dil)
        except InvariantViolation:
            viol += 1
            continue
        for k, v in r.measured.items():
            worst[k] = max(worst.get(k, 0.0), v)
    ok = viol == 0
    return ok, f"{instances} instances, {viol} violations; additivity err {worst.get('additivity_relative_error', 0):.1e}, " \
               f"max alpha Lambda/int {worst.get('length_ratio_max', 0):.3f} <= 1, " \
               f"max Theta/alpha {worst.get('thickness_over_alpha_max', 0):.2f} <= 16(n+1)", \
        {"violations": viol, **worst}


def c06_scaling(instances: int = 6, seed: int = 6, jmax: int = 4):
    dil = DilationGroup((1.0, 2.0))
    th = np.zeros((instances, jmax + 1))
    la = np.zeros((instances, jmax + 1))
    for i in range(instances):
        f = random_sparse(5, density=0.05, seed=seed * 1000 + i)
        for j in range(jmax + 1):
            th[i, j] = scaling_check(f, 3, j, 0, dil)["theta_constant"]
            la[i, j] = scaling_check(f, 3, 0, j, dil)["lambda_constant"]
    s_th = _slope(range(jmax + 1), th.max(axis=0))
    s_la = _slope(range(jmax + 1), la.max(axis=0))
    ok = s_th < 0.05 and s_la < 0.05
    return ok, f"slope of measured thickness constant in j {s_th:.3f}, length constant in m {s_la:.3f} (< 0.05)", \
        {"theta_constants": th.max(axis=0).tolist(), "lambda_constants": la.max(axis=0).tolist(),
         "slope_theta": s_th, "slope_lambda": s_la}


def c07_mollifier(dims=(1, 2, 3)):
    worst0 = worst = 0.0
    for d in dims:
        m = build_mollifier(d)
        mom = m.moments()
        for beta, val in mom.items():
            if sum(beta) == 0:
                worst0 = max(worst0, abs(val - 1.0))
            else:
                worst = max(worst, abs(val))
    ok = worst0 < 1e-10 and worst < 1e-10
    return ok, f"|int phi - 1| = {worst0:.1e}, max moment of order 1..d = {worst:.1e} (d = {list(dims)})", \
        {"mass_error": worst0, "max_moment": worst}


def c08_whitney(instances: int = 50, seed: int = 8):
    rng = np.random.default_rng(seed)
    dil = DilationGroup((1.0, 2.0))
    K3 = K2 = 0.0
    bad = 0
    for _ in range(instances):
        om, g = random_omega(rng, 6, dil)
        if not om.any():
            continue
        try:
            dec = whitney(om, g, dil)
        except InvariantViolation:
            bad += 1
            continue
        m = dec.measured
        K3 = max(K3, m["K3"])
        K2 = max(K2, m["K2"])
        # every enlarged ball meets the complement: K2 finite and within its bound
        bad += not (math.isfinite(m["K2"]) and m["K2"] <= m["K2_bound"])
    ok = bad == 0 and K3 <= 8
    return ok, f"{instances} random Omega, {bad} failures, max K2 {K2:.2f}, max overlap K3 {int(K3)} <= 8", \
        {"failures": bad, "K2": K2, "K3": K3}


def c09_fourier():
    t0 = time.perf_counter()
    out = {}
    for name, mu in (("parabola", SurfaceMeasure("parabola", b=2.0)), ("circle", SurfaceMeasure.parse("circle"))):
        slope, table = fourier_decay(mu)
        out[name] = {"slope": slope, "converged": table["converged"]}
    secs = time.perf_counter() - t0
    ok = all(abs(v["slope"] + 0.5) <= 0.05 and v["converged"] for v in out.values()) and secs < 300
    return ok, f"slopes parabola {out['parabola']['slope']:.3f}, circle {out['circle']['slope']:.3f}, {secs:.0f}s", \
        {**out, "seconds": secs}


def _autocorrelation_inputs(n: int):
    res = n + 2
    N = 1 << res
    lo, hi = N // 4, 3 * N // 4
    single = np.zeros((N, N))
    single[N // 2:N // 2 + 4, N // 2:N // 2 + 4] = 1.0
    stack = np.zeros((N, N))
    for nu in range(n + 1):
        w = max(1, (N // 2) >> (nu + 1))
        x0 = lo + (nu * (N // 2)) // (n + 2)
        stack[x0:x0 + w, lo:hi] = 1.0
    rng = np.random.default_rng(n)
    rand = np.zeros((N, N))
    rand[lo:hi, lo:hi] = rng.exponential(1.0, (hi - lo, hi - lo)) * (rng.random((hi - lo, hi - lo)) < 0.05)
    root = DyadicCube(0, (0, 0))
    return [GridFunction(root, res, v) for v in (single, stack, rand)]


def c10_autocorrelation(ns=range(1, 7)):
    mu = SurfaceMeasure("parabola")
    ratios = []
    for n in ns:
        ratios.append(max(check_autocorrelation(mu, n, f)["ratio"] for f in _autocorrelation_inputs(n)))
    s = _slope(np.log1p(list(ns)), np.log(ratios))
    ok = s < 0.1 and all(math.isfinite(r) for r in ratios)
    return ok, f"ratio over n = 1..6: {', '.join(f'{r:.3f}' for r in ratios)}; log-log slope {s:.3f} < 0.1", \
        {"ratios": ratios, "slope": s}


def c11_weak_contrast(jmax: int = 10, resolution: int = 7):
    r = weak_type_sweep(partial(lambda_stack, resolution=resolution), range(0, jmax + 1))
    st, sl = r["slope_t"], r["slope_tloglog"]
    ok = sl < 0.1 and st > 0.3
    return ok, f"slope with Phi = t loglog {sl:.3f} (< 0.1), with Phi = t {st:.3f} (> 0.3)", r


def c12_domination(instances: int = 20, seed: int = 12):
    rng = np.random.default_rng(seed)
    mu = SurfaceMeasure("parabola")
    worst = -math.inf
    bad = 0
    for i in range(instances):
        f = random_sparse(6, density=float(rng.uniform(0.02, 0.2)), scale=float(rng.uniform(0.5, 4.0)),
                          signed=bool(rng.random() < 0.5), seed=int(rng.integers(0, 2 ** 31)))
        alpha = float(rng.uniform(0.5, 2.0))
        try:
            out = split_maximal_terms(f, alpha, mu)
        except InvariantViolation:
            bad += 1
            continue
        d = out["diagnostics"]
        worst = max(worst, d["domination_slack"] / max(d["bound_max"], 1e-300))
    return bad == 0, f"{instances} random f, {bad} failures, max (total - bound)/max bound {worst:.1e}", \
        {"failures": bad, "worst_relative_slack": worst}


CRITERIA = {
    1: ("content DP vs exhaustive oracle", c01_content_oracle),
    2: ("stacked rectangles", c02_stacked_rectangles),
    3: ("g/h split constants", c03_split),
    4: ("iterated split terminates", c04_iterated),
    5: ("stopping-time split", c05_stopping),
    6: ("dilation constants stable", c06_scaling),
    7: ("mollifier moments", c07_mollifier),
    8: ("Whitney properties", c08_whitney),
    9: ("Fourier decay", c09_fourier),
    10: ("autocorrelation bound", c10_autocorrelation),
    11: ("weak-type contrast", c11_weak_contrast),
    12: ("pointwise domination", c12_domination),
}


def run_criterion(number: int) -> CriterionResult:
    title, fn = CRITERIA[number]
    t0 = time.perf_counter()
    try:
        ok, summary, details = fn()
    except InvariantViolation as e:
        ok, summary, details = False, f"invariant violated: {e}", {}
    return CriterionResult(number, title, bool(ok), summary, details, time.perf_counter() - t0)


def run_all(selected=None, stream=print) -> list:
    """Run the selected criteria (default all) and finish with the total-time check."""
    selected = sorted(CRITERIA) if selected is None else sorted(int(x) for x in selected if int(x) in CRITERIA)
    t0 = time.perf_counter()
    results = []
    for k in selected:
        r = run_criterion(k)
        results.append(r)
        if stream:
            stream(r.line())
    total = time.perf_counter() - t0
    full = len(selected) == len(CRITERIA)
    ok = total < SELFTEST_BUDGET and full
    note = "" if full else " (partial run; budget applies to the full suite)"
    r13 = CriterionResult(13, "selftest wall time", ok if full else total < SELFTEST_BUDGET,
                          f"{total:.0f}s < {SELFTEST_BUDGET:.0f}s{note}", {"seconds": total, "full": full}, total)
    results.append(r13)
    if stream:
        stream(r13.line())
    return results
