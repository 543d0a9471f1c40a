import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from nlheat import kernels as kn
from nlheat.grid import Grid
from nlheat.heat_kernel import NyquistError, kernel_fourier_inversion
from nlheat.solver import (GrowthError, RadonMeasure, SolutionField, check_duhamel,
                           combine, constant_solution, duhamel_backward, gaussian_flow,
                           growth_check, growth_trend, lower_bound_check, smoothing_ratio_check,
                           solve_rf, t_min, trace_check, trace_times, very_weak_residual,
                           weak_times)
from nlheat.testfunctions import Bump, TestFunction, space_time_battery

CAUCHY = kn.fractional(1.0)
G1 = Grid(1, 4096, 64.0)


def cauchy(x, t):
    return t / (np.pi * (t * t + x * x))


def test_dirac_solution_is_the_cauchy_kernel():
    sol = solve_rf(RadonMeasure.dirac(0.0), CAUCHY, [0.5, 1.0, 2.0], G1)
    for t, f in zip(sol.times, sol.fields):
        assert np.max(np.abs(f.values - cauchy(G1.axis, t))) < 1e-9


def test_shifted_atoms_superpose():
    mu = RadonMeasure([((1.5,), 2.0), ((-3.0,), -0.5)])
    f = solve_rf(mu, CAUCHY, [1.0], G1).fields[0]
    exact = 2.0 * cauchy(G1.axis - 1.5, 1.0) - 0.5 * cauchy(G1.axis + 3.0, 1.0)
    assert np.max(np.abs(f.values - exact)) < 1e-8


def test_gaussian_data_gives_a_voigt_profile():
    sigma = 1.0
    sol = solve_rf(RadonMeasure.gaussian(G1, sigma), CAUCHY, [0.5, 1.5], G1)
    for t, f in zip(sol.times, sol.fields):
        exact = special.voigt_profile(G1.axis, sigma, t)
        mask = G1.trusted_mask(0.5)
        assert np.max(np.abs(f.values - exact)[mask]) < 1e-6


def test_mass_is_preserved_with_the_exterior():
    sol = solve_rf(RadonMeasure.dirac(0.0), CAUCHY, [0.5, 1.0, 2.0], G1)
    # about 1% of the Cauchy mass sits beyond |x| = 64 and is accounted separately
    assert np.all(np.array(sol.exterior) > 1e-3)
    assert np.allclose(sol.masses(), 1.0, atol=1e-6)


def test_linearity_and_combine():
    mu1, mu2 = RadonMeasure.dirac(0.0), RadonMeasure.dirac(2.0)
    times = [0.5, 1.0]
    a = solve_rf(mu1, CAUCHY, times, G1)
    b = solve_rf(mu2, CAUCHY, times, G1)
    both = solve_rf(mu1.scaled(2.0) + mu2.scaled(-1.0), CAUCHY, times, G1)
    c = combine(a, b, 2.0, -1.0)
    for u, v in zip(c.fields, both.fields):
        assert np.max(np.abs(u.values - v.values)) < 1e-12
    with pytest.raises(ValueError):
        combine(a, solve_rf(mu1, CAUCHY, [0.5, 2.0], G1))


def test_growth_check_and_errors():
    P1 = kernel_fourier_inversion(CAUCHY, 1.0, G1)
    r = growth_check(RadonMeasure.dirac(0.0), P1)
    assert r.passed and r.value == pytest.approx(1 / np.pi, rel=1e-9)
    with pytest.raises(GrowthError):
        growth_check(RadonMeasure.dirac(100.0), P1)
    with pytest.raises(GrowthError):
        growth_check(RadonMeasure.dirac((0.0, 0.0), d=2), P1)


def test_growth_trend_separates_summable_weights():
    P1 = kernel_fourier_inversion(CAUCHY, 1.0, G1)
    radii = np.arange(1.0, 200.0, 2.0)
    # P_1 ~ r^-2: unit weights give summable increments, weights ~ r^2 do not
    assert not growth_trend(P1, radii, np.ones_like(radii)).divergent
    assert growth_trend(P1, radii, radii ** 2).divergent


def test_times_below_the_trusted_minimum_are_refused():
    tm = t_min(CAUCHY, G1)
    assert tm > 0
    with pytest.raises(NyquistError):
        solve_rf(RadonMeasure.dirac(0.0), CAUCHY, [0.2 * tm], G1)


def test_solution_field_time_ordering():
    f = solve_rf(RadonMeasure.dirac(0.0), CAUCHY, [1.0], G1).fields[0]
    with pytest.raises(ValueError):
        SolutionField(G1, [1.0, 0.5], [f, f], RadonMeasure())
    sol = solve_rf(RadonMeasure.dirac(0.0), CAUCHY, [2.0, 1.0], G1)
    assert list(sol.times) == [1.0, 2.0]
    assert sol.at(2.0) is sol.fields[1]
    with pytest.raises(KeyError):
        sol.at(1.5)


def test_trace_of_a_dirac():
    mu = RadonMeasure.dirac(0.0)
    sol = solve_rf(mu, CAUCHY, trace_times(CAUCHY, G1), G1)
    tab = trace_check(sol)
    assert tab.passed
    for row in tab.rows:
        assert row.discrepancy[-1] < row.discrepancy[0]


def test_very_weak_identity_and_controls():
    bat = [th for th in space_time_battery(1) if th.fits(G1)]
    times = weak_times(bat)
    sol = solve_rf(RadonMeasure.dirac(0.0), CAUCHY, times, G1)
    assert very_weak_residual(sol, battery=bat).worst < 1e-3
    assert very_weak_residual(constant_solution(G1, times), CAUCHY, bat).worst < 1e-3
    # the classical heat flow is not a solution of the nonlocal equation
    ctrl = gaussian_flow(RadonMeasure.dirac(0.0), times, G1)
    assert very_weak_residual(ctrl, CAUCHY, bat).worst > 1e-2


def test_very_weak_rejects_short_time_range():
    th = TestFunction(Bump((0.0,), 1.0), 1.0, 0.5)
    sol = solve_rf(RadonMeasure.dirac(0.0), CAUCHY, [0.8, 1.0], G1)
    with pytest.raises(ValueError):
        very_weak_residual(sol, battery=[th])


def test_smoothing_inequality():
    sol = solve_rf(RadonMeasure.dirac(0.0), CAUCHY, [0.5, 1.0, 1.5, 2.0], G1)
    assert smoothing_ratio_check(sol, 2.5).passed
    assert not smoothing_ratio_check(sol, 0.01).passed


def test_duhamel_corrected_form_solves_the_backward_equation():
    th = TestFunction(Bump((0.0,), 1.0), 0.6, 0.3)
    g = Grid(1, 1024, 16.0)
    good = check_duhamel(duhamel_backward(th, CAUCHY, 1.0, g, form="corrected"), CAUCHY)
    bad = check_duhamel(duhamel_backward(th, CAUCHY, 1.0, g, form="printed"), CAUCHY)
    assert good.passed and np.isfinite(good.bound)
    assert not bad.passed
    with pytest.raises(ValueError):
        duhamel_backward(th, CAUCHY, 0.7, g)


def test_lower_bound_against_a_larger_candidate():
    mu = RadonMeasure.dirac(0.0)
    U = solve_rf(mu, CAUCHY, [0.5, 1.0], G1)
    assert lower_bound_check(U, spec=CAUCHY).passed
    bigger = combine(U, constant_solution(G1, U.times), 1.0, 1e-3)
    assert lower_bound_check(bigger, mu, CAUCHY).passed
    smaller = combine(U, U, 1.0, -0.5)
    r = lower_bound_check(smaller, mu, CAUCHY)
    assert not r.passed and r.node is not None


def test_radon_measure_json_round_trip_with_density():
    mu = RadonMeasure([((0.5,), 1.0)]) + RadonMeasure.gaussian(Grid(1, 64, 4.0), 0.7)
    back = RadonMeasure.from_json(json.dumps(mu.to_dict()))
    assert back.atoms == mu.atoms
    assert np.array_equal(back.density.values, mu.density.values)
    assert back.total_mass() == pytest.approx(mu.total_mass())


@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-5, 5)), min_size=1, max_size=6))
def test_radon_measure_round_trip_property(atoms):
    mu = RadonMeasure([((a,), w) for a, w in atoms], name="m")
    back = RadonMeasure.from_json(json.dumps(mu.to_dict()))
    assert back.atoms == mu.atoms
    assert back.total_mass() == pytest.approx(sum(w for _, w in atoms))
    assert back.nonnegative == all(w >= 0 for _, w in atoms)
