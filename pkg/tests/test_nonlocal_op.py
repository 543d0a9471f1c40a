import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from nlheat import kernels as kn
from nlheat.grid import ExactTail, Field, Grid
from nlheat.nonlocal_op import (OperatorSpec, apply_levy, as_operator, bilinear_form,
                                eigen_check, heat_residual, plane_wave, second_difference)
from nlheat.testfunctions import Bump

G1 = Grid.default(1)
# (-Laplacian)^(1/2) exp(-x^2) by mpmath Fourier integral, 18 digits
HALF_LAPLACIAN_GAUSS = {0.0: 1.12837916709551257, 1.0: -0.0859362445872748843,
                        2.0: -0.231725701168752231}


def gaussian(grid):
    f = ExactTail(lambda p: np.exp(-np.asarray(p) ** 2))
    return Field(grid, np.exp(-grid.axis ** 2), f)


def test_half_laplacian_of_gaussian():
    Lu = apply_levy(kn.fractional(1.0), gaussian(G1))
    for x, v in HALF_LAPLACIAN_GAUSS.items():
        assert Lu.values[np.argmin(np.abs(G1.axis - x))] == pytest.approx(v, abs=1e-5)


def test_fractional_15_of_gaussian_at_origin():
    # (1/pi) int_0^inf xi^a sqrt(pi) e^{-xi^2/4} dxi = 2^a Gamma((a+1)/2) / sqrt(pi)
    a = 1.5
    exact = 2 ** a * special.gamma((a + 1) / 2) / np.sqrt(np.pi)
    Lu = apply_levy(kn.fractional(a), gaussian(G1))
    assert Lu.values[G1.origin_index] == pytest.approx(exact, rel=1e-5)


def test_constant_is_annihilated():
    u = Field(G1, np.ones(G1.shape), ExactTail(lambda p: np.ones(np.shape(p))))
    Lu = apply_levy(kn.log_corrected(1.0), u)
    assert np.max(np.abs(Lu.values)) < 1e-10


@pytest.mark.parametrize("spec", [kn.fractional(1.5), kn.log_corrected(1.0), kn.cosine_modulated(1.0)],
                         ids=lambda s: s.label)
def test_plane_wave_eigenfunction(spec):
    assert eigen_check(spec, G1, [2.0]) < 1e-3


def test_mixed_plane_wave_adds_xi_squared():
    op = OperatorSpec.mixed(kn.fractional(1.0))
    assert eigen_check(op, G1, [1.5]) < 1e-3


def test_plane_wave_rejects_bad_frequency():
    with pytest.raises(ValueError):
        plane_wave(G1, [1.0, 2.0])


@settings(max_examples=8)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(a, b):
    g = Grid(1, 1024, 16.0)
    u = Bump((0.5,), 2.0).field(g)
    v = Bump((-1.0,), 3.0).field(g)
    op = kn.fractional(1.2)
    lhs = apply_levy(op, Field(g, a * u.values + b * v.values)).values
    rhs = a * apply_levy(op, u).values + b * apply_levy(op, v).values
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * (1 + abs(a) + abs(b))


def test_leibniz_identity():
    # L(uv) = u L v + v L u - B(u, v)
    g = Grid(1, 1024, 16.0)
    u, v = Bump((0.5,), 2.0).field(g), Bump((-1.0,), 3.0).field(g)
    op = kn.fractional(1.0)
    uv = Field(g, u.values * v.values)
    lhs = apply_levy(op, uv).values
    rhs = (u.values * apply_levy(op, v).values + v.values * apply_levy(op, u).values
           - bilinear_form(op, u, v).values)
    assert np.max(np.abs(lhs - rhs)) < 1e-4


def test_bilinear_form_is_symmetric_and_nonnegative_on_diagonal():
    g = Grid(1, 1024, 16.0)
    u, v = Bump((0.5,), 2.0).field(g), Bump((-1.0,), 3.0).field(g)
    op = kn.fractional(1.5)
    np.testing.assert_allclose(bilinear_form(op, u, v).values, bilinear_form(op, v, u).values,
                               atol=1e-10)
    assert np.min(bilinear_form(op, u, u).values) > -1e-6


def test_second_difference_of_quadratic():
    g = Grid(1, 256, 8.0)
    u = Field(g, g.axis ** 2)
    # x^2 - ((x+y)^2 + (x-y)^2)/2 = -y^2
    np.testing.assert_allclose(second_difference(u, np.array([0.3, -1.0]), np.array([0.5, 1.0])),
                               [-0.25, -1.0], atol=1e-10)


def test_heat_residual_and_gaussian_control():
    op = OperatorSpec.pure_jump(kn.fractional(1.0))
    r = heat_residual(op, (1.0,), G1)
    assert r.relative < 1e-3
    bad = heat_residual(op, (1.0,), G1, family="gaussian")
    assert bad.relative > 1e-2
    with pytest.raises(ValueError):
        heat_residual(op, (0.0,), G1)


def test_operator_spec_validation():
    with pytest.raises(ValueError):
        OperatorSpec("weird", ((kn.fractional(1.0), (0,)),))
    with pytest.raises(ValueError):
        OperatorSpec.pure_jump(kn.fractional(1.0), order=2)
    with pytest.raises(ValueError):
        OperatorSpec.anisotropic([kn.fractional(1.0, 2)])
    with pytest.raises(TypeError):
        as_operator("fractional")
    with pytest.raises(ValueError):
        apply_levy(kn.fractional(1.0), Field(Grid(2, 8, 1.0), np.zeros((8, 8))))


def test_two_dimensional_radial_plane_wave():
    g = Grid(2, 256, 16.0)
    assert eigen_check(kn.fractional(1.0, 2), g, [1.0, 0.5]) < 1e-3


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 1.9])
def test_two_dimensional_fractional_of_gaussian(alpha):
    # (-Delta)^{a/2} exp(-|x|^2) at 0 in d = 2 is 2^a Gamma(1 + a/2)
    g = Grid(2, 256, 16.0)
    u = Field(g, np.exp(-g.radius() ** 2),
              ExactTail(lambda p: np.exp(-np.sum(np.asarray(p) ** 2, axis=-1))))
    v = apply_levy(kn.fractional(alpha, 2), u).values[g.N // 2, g.N // 2]
    assert v == pytest.approx(2 ** alpha * special.gamma(1 + alpha / 2), rel=1e-4)
