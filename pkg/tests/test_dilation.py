import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from conftest import grid
from lloglog.content import ContentParams, thickness
from lloglog.dilation import DilationGroup, build_mollifier, dilate_grid, scaling_check, mollify, rho
from lloglog.dyadic import DyadicCube, GridFunction
from lloglog.surface import SurfaceMeasure

PARA = DilationGroup((1.0, 2.0))


def test_group_constants():
    assert PARA.tau == 3.0
    assert 0 < PARA.a < 1.0 and 2.0 < PARA.A < PARA.tau
    assert PARA.check_invariants(samples=10000) == 0


def test_group_rejects_nonpositive():
    with pytest.raises(ValueError):
        DilationGroup((1.0, 0.0))


def test_dilate_unit_square():
    f = grid(np.ones((8, 8)))
    g = dilate_grid(f, 1, PARA)
    expect = GridFunction.indicator(DyadicCube(2, (0, 0)), g.root, g.resolution)
    # chi of [0, 1/2) x [0, 1/4) is the union of the first two level-2 cells along the first axis
    expect2 = GridFunction.indicator(DyadicCube(2, (1, 0)), g.root, g.resolution)
    assert np.array_equal(g.values, expect.values + expect2.values)


def test_dilate_identity_and_round_trip(rng):
    f = grid(rng.random((8, 8)))
    assert np.array_equal(dilate_grid(f, 0, PARA).values, f.values)
    for k in (1, 2, -1):
        back = dilate_grid(dilate_grid(f, k, PARA), -k, PARA)
        if back.root != f.root:
            back = back.crop(f.root)
        assert np.array_equal(back.coarsen(f.resolution).values, f.values)


@pytest.mark.parametrize("k", [-2, -1, 1, 2])
def test_measure_dilation_preserves_mass(k, rng):
    f = grid(rng.random((8, 8)))
    g = dilate_grid(f, k, PARA, measure=True)
    assert g.integral() == pytest.approx(f.integral(), rel=1e-12)


def test_dilate_non_integer_needs_resample():
    with pytest.raises(ValueError):
        dilate_grid(grid(np.ones((4, 4))), 1, DilationGroup((1.0, 1.5)))


def test_rho_examples():
    assert rho([0.5, 0.25], PARA) == 0.5
    rng = np.random.default_rng(3)
    x = rng.normal(size=(200, 2))
    for k in (-3, -1, 2, 5):
        assert np.allclose(rho(PARA.apply(x, k), PARA), 2.0 ** k * rho(x, PARA), rtol=1e-12)


def test_rho_on_euclidean_sphere():
    t = np.linspace(0, 2 * np.pi, 1000)
    x = np.stack([np.cos(t), np.sin(t)], axis=1)
    r = rho(x, PARA)
    # on |x| = 1 the max-form distance lies between 2^-1/2 and 1
    assert r.min() >= 2 ** -0.5 - 1e-12 and r.max() <= 1 + 1e-12


def test_scaling_unit_square_compression():
    f = grid(np.ones((16, 16)))
    out = scaling_check(f, 2, 1, 0, PARA)
    assert out["theta_lhs"] == 0.25
    assert thickness(f, ContentParams(2)) == 1.0
    # within C 2^{-(tau - max p)} with C = 4
    assert out["theta_lhs"] <= 4 * 2.0 ** -(PARA.tau - 2.0)


def test_scaling_no_scaling():
    f = grid(np.random.default_rng(0).random((8, 8)))
    out = scaling_check(f, 2, 0, 0, PARA)
    assert out["theta_lhs"] == thickness(f, ContentParams(2))
    assert out["theta_bound"] == out["C_theta"] * out["theta_lhs"]


@given(arrays(np.float64, (8, 8), elements=st.one_of(st.just(0.0), st.floats(0.1, 10.0))),
       st.integers(0, 3), st.integers(0, 3))
def test_scaling_holds(vals, j, m):
    scaling_check(grid(vals), 2, j, m, PARA)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_mollifier_moments(d):
    mol = build_mollifier(d)
    mom = mol.moments()
    assert abs(mom[(0,) * d] - 1.0) < 1e-12
    assert max(abs(v) for b, v in mom.items() if sum(b) >= 1) < 1e-10
    assert mol.half_width * math.sqrt(d) <= 0.5 + 1e-15


@pytest.mark.parametrize("j", [0, 1, 2])
def test_mollifier_moments_adaptive_oracle(j):
    mol = build_mollifier(2)
    h = mol.half_width
    val, _ = integrate.quad(lambda x: float(mol.profile(np.array([x]))[0]) * x ** j, -h, h,
                            epsabs=1e-14, limit=200)
    assert val == pytest.approx(1.0 if j == 0 else 0.0, abs=1e-11)


def test_mollifier_cdf_matches_profile():
    mol = build_mollifier(2)
    h = mol.half_width
    x = np.linspace(-h, h, 41)
    ref = [integrate.quad(lambda s: float(mol.profile(np.array([s]))[0]), -h, xi, epsabs=1e-14)[0] for xi in x]
    assert np.allclose(mol.cdf(x), ref, atol=1e-10)


def test_mollified_mass_and_growth():
    mu = SurfaceMeasure("parabola")
    sups = []
    for n in range(1, 6):
        g = mollify(mu, n)
        assert g.integral() == pytest.approx(mu.mass(), abs=1e-10)
        sups.append(g.sup() / 2.0 ** n)
    # sup grows at most like 2^n
    assert max(sups) / min(sups) < 4


def test_mollified_cancellation():
    mu = SurfaceMeasure.parse("parabola:cutoff=odd_bump")
    assert mu.cancellation
    g = mollify(mu, 3)
    assert abs(g.integral()) < 1e-12
