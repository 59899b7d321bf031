import math

import numpy as np
import pytest
from scipy import integrate, optimize

from conftest import grid
from lloglog.dilation import DilationGroup
from lloglog.dyadic import DyadicCube, GridFunction
from lloglog.operators import (
    check_autocorrelation, check_support_tube, convolve, fourier_transform, hilbert_parabola, maximal_fn,
    parabola_average, radon_transform, split_maximal_terms,
)
from lloglog.surface import SurfaceMeasure, box_kernel, hilbert_block, mollified_kernel

PARA = DilationGroup((1.0, 2.0))
MU = SurfaceMeasure("parabola")
ODD = SurfaceMeasure.parse("parabola:cutoff=odd_bump")


def _square(res=7, lo=0.25, hi=0.75):
    n = 1 << res
    x = (np.arange(n) + 0.5) / n
    m = ((x >= lo) & (x < hi)).astype(float)
    return grid(np.outer(m, m))


# surface measures ----------------------------------------------------------

def test_parse_and_round_trip():
    mu = SurfaceMeasure.parse("parabola:b=3")
    assert mu.b == 3.0 and not mu.cancellation
    assert SurfaceMeasure.from_dict(mu.to_dict()) == mu
    assert SurfaceMeasure.parse("circle").kind == "circle"
    assert hilbert_block(2.0).cancellation and ODD.cancellation
    with pytest.raises(ValueError):
        SurfaceMeasure.parse("sphere")
    with pytest.raises(ValueError):
        SurfaceMeasure.parse("parabola:q=1")


def test_unit_ball_enforced():
    with pytest.raises(ValueError):
        SurfaceMeasure("circle", radius=1.5, support=(0.0, 1.0), cutoff="uniform")


def test_mass_by_adaptive_quadrature():
    for mu in (MU, SurfaceMeasure.parse("parabola:b=3"), SurfaceMeasure.parse("circle")):
        lo, hi = mu.support[0][0], mu.support[-1][1]
        val, _ = integrate.quad(lambda t: float(mu.density(np.array([t]))[0]), lo, hi, limit=200)
        assert val == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("k", [-3, -1, 0])
def test_box_kernel_mass_and_error(k):
    ker = box_kernel(MU, k, PARA.exponents, 2.0 ** -8)
    assert ker.mass() == pytest.approx(1.0, abs=1e-12)
    assert ker.error < 1e-7


def test_mollified_kernel_mass_and_cancellation():
    ker = mollified_kernel(MU, 3, -1, PARA.exponents, 2.0 ** -7)
    assert ker.mass() == pytest.approx(1.0, abs=1e-10)
    assert abs(mollified_kernel(ODD, 3, -1, PARA.exponents, 2.0 ** -7).mass()) < 1e-12


# convolution ---------------------------------------------------------------

def test_convolve_zero_and_constant():
    z = grid(np.zeros((128, 128)))
    assert not convolve(MU, -2, z, PARA).values.any()
    one = convolve(MU, -2, grid(np.ones((128, 128))), PARA)
    assert one.values[64, 64] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(one.values[40:88, 40:88], 1.0, atol=1e-12)


@pytest.mark.parametrize("cell", [(60, 64), (33, 90), (95, 31)])
def test_convolve_matches_adaptive_quadrature(cell):
    f = _square()
    k = -2
    g = convolve(MU, k, f, PARA)
    n = f.shape[0]
    x = (np.array(cell) + 0.5) / n

    def y(t):
        return x - np.array([2.0 ** k * t, 2.0 ** (2 * k) * t * t])

    # f is the indicator of the grid cells covering [1/4, 3/4)^2; split t at every edge crossing
    ts = np.linspace(-0.5, 0.5, 2001)
    cuts = [-0.5, 0.5]
    for ax in range(2):
        for edge in (0.25, 0.75):
            s = np.array([y(t)[ax] - edge for t in ts])
            for i in np.nonzero(np.sign(s[:-1]) != np.sign(s[1:]))[0]:
                cuts.append(optimize.brentq(lambda t: y(t)[ax] - edge, ts[i], ts[i + 1], xtol=1e-15))
    cuts = sorted(cuts)
    val = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if np.all((y(0.5 * (a + b)) >= 0.25) & (y(0.5 * (a + b)) < 0.75)):
            val += integrate.quad(lambda t: float(MU.density(np.array([t]))[0]), a, b, epsabs=1e-13)[0]
    assert g.values[cell] == pytest.approx(val, abs=1e-6)


def test_convolve_linear(rng):
    f = grid(rng.random((64, 64)))
    g = grid(rng.random((64, 64)))
    a, b = 2.5, -0.75
    lhs = convolve(MU, -1, f.with_values(a * f.values + b * g.values), PARA).values
    rhs = a * convolve(MU, -1, f, PARA).values + b * convolve(MU, -1, g, PARA).values
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_convolve_resolution_check():
    with pytest.raises(ValueError):
        convolve(MU, -6, grid(np.ones((16, 16))), PARA)


def test_convolve_error_estimate():
    _, err = convolve(MU, -2, _square(), PARA, with_error=True)
    assert 0 <= err < 1e-6


# maximal function and singular sums -----------------------------------------

def test_maximal_dominates_and_scales(rng):
    f = grid(rng.exponential(1.0, (64, 64)) * (rng.random((64, 64)) < 0.2))
    kr = range(-3, 1)
    M = maximal_fn(MU, f, PARA, kr).field.values
    assert np.all(M >= 0)
    for k in kr:
        assert np.all(M >= np.abs(convolve(MU, k, f, PARA).values))
    assert np.allclose(maximal_fn(MU, f.with_values(3.0 * f.values), PARA, kr).field.values, 3.0 * M, rtol=1e-12)
    bigger = f.with_values(f.values + (rng.random((64, 64)) < 0.1))
    assert np.all(maximal_fn(MU, bigger, PARA, kr).field.values >= M - 1e-12)


def test_maximal_of_square_near_one_inside():
    f = _square()
    M = maximal_fn(MU, f, PARA, range(-4, -1)).field.values
    assert M[64, 64] >= 1 - 1e-12


def test_maximal_rejects_empty_range():
    with pytest.raises(ValueError):
        maximal_fn(MU, _square(), PARA, range(0, 0))


def test_radon_zero_constant_and_flag():
    assert not radon_transform(ODD, grid(np.zeros((64, 64))), PARA).field.values.any()
    T = radon_transform(ODD, grid(np.ones((128, 128))), PARA, range(-3, 0)).field.values
    assert np.abs(T[48:80, 48:80]).max() < 1e-12
    with pytest.raises(ValueError):
        radon_transform(MU, grid(np.ones((64, 64))), PARA)


def test_radon_l2_bounded_as_range_widens():
    rng = np.random.default_rng(4)
    n = 256
    x = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    ratios = []
    for _ in range(2):
        c = rng.uniform(0.3, 0.7, 2)
        f = grid(np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2) / 0.005) * np.cos(40 * X + 17 * Y))
        for lo in (-1, -2, -3, -4, -5):
            T = radon_transform(ODD, f, PARA, range(lo, 1)).field.values
            ratios.append(np.linalg.norm(T) / np.linalg.norm(f.values))
    # partial sums stay bounded while the number of scales grows fivefold
    assert max(ratios) < 3.0


def test_hilbert_blocks_are_odd():
    f = _square()
    H = hilbert_parabola(f, 2.0, range(-3, 0)).field.values
    T = radon_transform(hilbert_block(2.0), f, PARA, range(-3, 0)).field.values
    assert np.array_equal(H, T)
    assert abs(hilbert_block(2.0).mass()) < 1e-12


def test_parabola_average_examples():
    one = parabola_average(grid(np.ones((128, 128))), 0.25)
    assert one.values[100, 100] == pytest.approx(1.0, abs=1e-12)
    f = _square()
    assert parabola_average(f, 2.0 ** -4).values[64, 64] == pytest.approx(1.0, abs=1e-12)
    # x one-eighth beyond the right edge of the square, r smaller than the gap
    P = parabola_average(f, 2.0 ** -4).values
    assert P[112, 64] == 0.0
    with pytest.raises(ValueError):
        parabola_average(f, 0.0)


# Fourier transform -----------------------------------------------------------

def test_fourier_at_origin_is_mass():
    for mu in (MU, ODD, SurfaceMeasure.parse("circle")):
        assert abs(fourier_transform(mu, np.zeros((2, 1)))[0]) == pytest.approx(abs(mu.mass()), abs=1e-12)


@pytest.mark.parametrize("xi", [(3.0, 1.0), (-20.0, 45.0), (100.0, 0.0)])
def test_fourier_matches_adaptive_quadrature(xi):
    xi = np.array(xi)

    def part(fn):
        return integrate.quad(lambda t: float(MU.density(np.array([t]))[0])
                              * fn(-2 * np.pi * (xi[0] * t + xi[1] * t * t)), -0.5, 0.5, limit=2000,
                              epsabs=1e-13)[0]

    ref = part(np.cos) + 1j * part(np.sin)
    got = fourier_transform(MU, xi[:, None])[0]
    assert abs(got - ref) < 1e-9


# mollified measures ----------------------------------------------------------

def _cell_indicator(n, res, cell=(0, 0)):
    root = DyadicCube(-2, (0, 0))
    c = DyadicCube(n, tuple(x + (2 << n) for x in cell))
    return GridFunction.indicator(c, root, res)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_support_tube_single_cell(n):
    out = check_support_tube(MU, n, _cell_indicator(n, n + 3))
    assert out["length"] == 2.0 ** -n
    # tube of width ~2^-n around a curve of length ~1
    assert out["support_measure"] <= 8 * 2.0 ** -n


def test_support_tube_zero_and_random_supports():
    root = DyadicCube(-2, (0, 0))
    assert check_support_tube(MU, 3, GridFunction.zeros(root, 6))["support_measure"] == 0.0
    rng = np.random.default_rng(0)
    ratios = []
    for _ in range(20):
        vals = np.zeros((256, 256))
        for _ in range(int(rng.integers(1, 6))):
            x, y = rng.integers(64, 190, 2)
            vals[x:x + int(rng.integers(1, 16)), y:y + 2] = 1.0
        f = GridFunction(root, 6, vals)
        ratios.append(check_support_tube(MU, 3, f)["ratio"])
    assert max(ratios) < 16


def test_autocorrelation_mass_and_envelope():
    env = []
    for n in range(1, 6):
        out = check_autocorrelation(MU, n, _cell_indicator(n, n + 3))
        assert out["autocorrelation_mass"] == pytest.approx(out["mass_squared"], rel=1e-10)
        assert math.isfinite(out["ratio"]) and out["ratio"] > 0
        env.append(out["envelope"])
    assert max(env) / min(env) < 4


# term splitting ---------------------------------------------------------------

def test_split_terms_empty_bad_set():
    f = grid(np.full((64, 64), 0.25))
    out = split_maximal_terms(f, 1.0, MU, PARA, k_range=range(-3, 1))
    assert not out["cz"].whitney.omega.any()
    for name in ("M_I2", "M_I3", "M_II", "M_III"):
        assert out[name].field.is_zero()
    M = maximal_fn(MU, f, PARA, range(-3, 1)).field.values
    assert np.allclose(out["M_I1"].field.values, M, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_split_terms_dominate(seed):
    rng = np.random.default_rng(seed)
    f = grid(rng.exponential(1.0, (64, 64)) * (rng.random((64, 64)) < 0.05) * rng.choice([-1, 1], (64, 64)))
    out = split_maximal_terms(f, 0.5, MU, PARA, k_range=range(-3, 1))
    M = maximal_fn(MU, f, PARA, range(-3, 1)).field.values
    total = sum(out[name].field.values for name in ("M_I1", "M_I2", "M_I3", "M_II", "M_III"))
    assert np.all(M <= total * (1 + 1e-9) + 1e-12)
    diag = out["diagnostics"]
    assert diag["M_III_l1"] <= diag["M_III_constant"] * diag["sum_n_n_fn_l1"] * (1 + 1e-12)
