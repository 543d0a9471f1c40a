import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlheat import kernels as kn
from nlheat.grid import Grid
from nlheat.symbol import (QuadSettings, check_symbol_bounds, symbol_eval, symbol_grid,
                           symbol_table)

# mpmath quadrature of int (1 - cos(xi y)) K(y) dy with 2 sin^2 for 1 - cos, 18 digits
LOG_CORRECTED_1 = {1.0: 1.85160342515348577, 3.0: 7.20567438617958505}
LOG_DAMPED_15 = {0.5: 1.00918062213846903, 2.0: 10.7405539324836722}


def cosine_modulated_oracle(xi: float) -> float:
    """Closed form for K = 1/(|x|^2 (2 + cos x)) in d = 1.

    Expanding 1/(2 + cos r) in its Fourier series, only harmonics n < xi
    contribute: m = (2/sqrt 3) pi (xi/2 + sum_{1 <= n < xi} q^n (xi - n)),
    q = sqrt 3 - 2.
    """
    q = np.sqrt(3.0) - 2.0
    s = xi / 2 + sum(q ** n * (xi - n) for n in range(1, int(np.ceil(xi))))
    return float(2 / np.sqrt(3.0) * np.pi * s)


@pytest.mark.parametrize("xi", sorted(LOG_CORRECTED_1))
def test_log_corrected_symbol_oracle(xi):
    v = symbol_eval(kn.log_corrected(1.0), [xi])
    assert v.converged
    assert v.value == pytest.approx(LOG_CORRECTED_1[xi], rel=1e-7)


@pytest.mark.parametrize("xi", sorted(LOG_DAMPED_15))
def test_log_damped_symbol_oracle(xi):
    v = symbol_eval(kn.log_damped(1.5), [xi])
    assert v.value == pytest.approx(LOG_DAMPED_15[xi], rel=1e-6)


@pytest.mark.parametrize("xi", [0.5, 1.0, 2.5, 4.2])
def test_cosine_modulated_symbol_closed_form(xi):
    v = symbol_eval(kn.cosine_modulated(1.0), [xi])
    assert v.value == pytest.approx(cosine_modulated_oracle(xi), rel=1e-8)


def test_cosine_modulated_oracle_values():
    # spot values of the closed form itself (direct mpmath integration agrees)
    assert cosine_modulated_oracle(1.0) == pytest.approx(np.pi / np.sqrt(3), rel=1e-15)
    assert cosine_modulated_oracle(2.5) == pytest.approx(3.20670512122996924, rel=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_fractional_symbol_is_power(d, alpha):
    spec = kn.fractional(alpha, d)
    for x in (0.1, 2.0, 40.0):
        xi = np.zeros(d)
        xi[-1] = x
        assert symbol_eval(spec, xi).value == pytest.approx(x ** alpha, rel=1e-6)


def test_sum_fractional_is_additive():
    spec = kn.sum_fractional(0.6, 0.9)
    for x in (0.3, 1.0, 7.0):
        assert symbol_eval(spec, [x]).value == pytest.approx(x ** 0.6 + x ** 0.9, rel=1e-6)


def test_symbol_zero_and_bad_dimension():
    assert symbol_eval(kn.fractional(1.0), [0.0]).value == 0.0
    with pytest.raises(ValueError):
        symbol_eval(kn.fractional(1.0), [1.0, 2.0])


@settings(max_examples=10)
@given(st.floats(0.05, 30.0), st.floats(0.0, 2 * np.pi))
def test_radial_symbol_is_rotation_invariant(r, th):
    spec = kn.log_corrected(1.0, 2)
    a = symbol_eval(spec, [r, 0.0]).value
    b = symbol_eval(spec, [r * np.cos(th), r * np.sin(th)]).value
    assert b == pytest.approx(a, rel=1e-9)


@settings(max_examples=10)
@given(st.floats(0.05, 30.0))
def test_symbol_even_and_positive(x):
    spec = kn.cosine_modulated(1.0)
    a, b = symbol_eval(spec, [x]).value, symbol_eval(spec, [-x]).value
    assert a > 0 and a == pytest.approx(b, rel=1e-12)


@settings(max_examples=15)
@given(st.floats(1e-2, 200.0))
def test_table_matches_direct_evaluation(x):
    spec = kn.log_corrected(1.0)
    t = symbol_table(spec)
    assert float(t(np.array([x]))[0]) == pytest.approx(symbol_eval(spec, [x]).value, rel=1e-6)


def test_symbol_grid_shape_and_origin():
    g = Grid(2, 16, 4.0)
    sf = symbol_grid(kn.fractional(1.0, 2), g)
    assert sf.values.shape == g.shape
    assert sf.values[0, 0] == 0.0
    np.testing.assert_allclose(sf.values, g.dual_radius(), rtol=1e-6, atol=1e-12)


def test_symbol_bounds_fractional_tight():
    b = check_symbol_bounds(kn.fractional(1.5))
    assert b.passed
    assert b.C1 == pytest.approx(1.0, rel=1e-5) and b.C2 == pytest.approx(1.0, rel=1e-5)


def test_custom_quad_settings_still_accurate():
    v = symbol_eval(kn.fractional(1.0), [3.0], QuadSettings(nodes_per_decade=64))
    assert v.value == pytest.approx(3.0, rel=1e-6)


def test_symbol_bounds_sum_fractional_small_exponents():
    # m = |xi|^0.3 + |xi|^0.7, so both ratios are minimised/maximised at |xi| = 1 with value 2
    b = check_symbol_bounds(kn.sum_fractional(0.3, 0.7))
    assert b.passed
    assert b.C1 == pytest.approx(2.0, rel=1e-5) and b.C2 == pytest.approx(2.0, rel=1e-5)


@pytest.mark.parametrize("gap", [0.25, 0.5, 1.0, 1.9])
def test_symbol_bounds_log_damped_any_gap(gap):
    b = check_symbol_bounds(kn.log_damped(1.5, gap=gap))
    assert b.passed and b.beta1 == pytest.approx(2 - gap)
