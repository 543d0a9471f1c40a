"""The thirteen acceptance criteria, each at its stated tolerance and time budget.

Every test prints one PASS/FAIL line; the lines are also repeated in the
terminal summary.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from nlheat import heat_kernel as hk
from nlheat import kernels as kn
from nlheat import solver as sv
from nlheat.comparison_phi import build_phi, build_phi_anisotropic, verify_phi_bounds
from nlheat.grid import Grid
from nlheat.mc_oracle import oracle_check
from nlheat.nonlocal_op import OperatorSpec, eigen_check, heat_residual
from nlheat.symbol import check_symbol_bounds, symbol_eval
from nlheat.testfunctions import space_time_battery

CATALOG = kn.catalog(1)


class Criterion:
    """Collects sub-results and timing for one criterion."""

    def __init__(self, number: int, title: str, budget: float):
        self.number, self.title, self.budget = number, title, budget
        self.failures: list[str] = []
        self.notes: list[str] = []

    def expect(self, ok, what: str):
        if not ok:
            self.failures.append(what)
        return ok

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        sec = time.perf_counter() - self.t0
        if exc_type is None:
            self.expect(sec < self.budget, f"time {sec:.1f}s over budget {self.budget:g}s")
        else:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        status = "PASS" if not self.failures else "FAIL"
        detail = "; ".join(self.failures or self.notes)
        line = (f"criterion {self.number:2d} {status} [{sec:6.1f}s / {self.budget:g}s] "
                f"{self.title}" + (f" :: {detail}" if detail else ""))
        print(line)
        ACCEPTANCE_LINES.append(line)
        if exc_type is None:
            assert not self.failures, line
        return False


def test_01_symbol_exactness():
    with Criterion(1, "fractional symbol matches |xi|^alpha", 10) as c:
        worst = 0.0
        for d in (1, 2):
            for alpha in (0.5, 1.0, 1.5):
                spec = kn.fractional(alpha, d)
                for x in np.geomspace(0.1, 50, 50):
                    xi = np.zeros(d)
                    xi[0] = x
                    worst = max(worst, abs(symbol_eval(spec, xi).value / x ** alpha - 1))
        c.expect(worst < 1e-5, f"relative error {worst:.2e}")
        c.notes.append(f"max relative error {worst:.2e}")


def test_02_symbol_bounds():
    with Criterion(2, "symbol bounds finite and refinement-stable", 30) as c:
        for spec in CATALOG:
            b = check_symbol_bounds(spec, refine=True)
            c.expect(np.isfinite(b.C1) and np.isfinite(b.C2) and b.C1 > 0,
                     f"{spec.label}: C1={b.C1} C2={b.C2}")
            c.expect(b.change is not None and b.change < 0.05,
                     f"{spec.label}: change {b.change}")
        c.notes.append(f"{len(CATALOG)} kernels")


@pytest.mark.parametrize("spec", CATALOG, ids=[s.label for s in CATALOG])
def test_03_kernel_mass_positivity(spec):
    with Criterion(3, f"mass 1 and positivity ({spec.label})", 10) as c:
        worst = 0.0
        for t in (0.5, 1.0, 2.0):
            P = hk.kernel_fourier_inversion(spec, t)
            worst = max(worst, abs(P.mass - 1))
            c.expect(P.positive(), f"t={t}: min {P.values.min():.2e}")
        c.expect(worst < 1e-4, f"mass error {worst:.2e}")
        c.notes.append(f"mass error {worst:.1e}")


def test_04_cauchy_cross_check():
    with Criterion(4, "Cauchy kernel: Fourier vs subordination vs closed form", 10) as c:
        g = Grid.default(1)
        F = hk.kernel_fourier_inversion(kn.fractional(1.0), 1.0, g).values
        S = hk.subordinated_fractional_kernel(1.0, g, 1.0).values
        exact = 1 / (np.pi * (1 + g.axis ** 2))
        errs = [np.max(np.abs(F - S)), np.max(np.abs(F - exact)), np.max(np.abs(S - exact))]
        c.expect(max(errs) < 1e-4, f"sup errors {errs}")
        c.notes.append("sup errors " + ", ".join(f"{e:.1e}" for e in errs))


def test_05_semigroup():
    with Criterion(5, "P_t * P_s = P_{t+s} across the catalog", 60) as c:
        worst = 0.0
        for spec in CATALOG:
            for t, s in ((0.5, 0.5), (1.0, 1.0), (0.5, 2.0)):
                r = hk.check_semigroup(spec, t, s, refinements=1)
                worst = max(worst, r.l1_error)
                c.expect(r.l1_error < 1e-3, f"{spec.label} ({t},{s}): L1 {r.l1_error:.1e}")
                c.expect(r.decreasing, f"{spec.label} ({t},{s}): errors {r.errors}")
        c.notes.append(f"worst L1 {worst:.1e}")


def test_06_comparability():
    with Criterion(6, "kernel comparability envelopes and Gaussian control", 60) as c:
        for spec in CATALOG:
            e1 = hk.check_kernel_levy_comparability(spec, (0.5, 2.0))
            e2 = hk.check_time_comparability(spec, 0.5, 2.0)
            c.expect(e1.passed, f"{spec.label}: P_t vs t K C={e1.C} change={e1.change}")
            c.expect(e2.passed, f"{spec.label}: P_t vs P_s C={e2.C} change={e2.change}")
        ctl = hk.check_kernel_levy_comparability(kn.fractional(1.0), (0.5, 2.0),
                                                 builder="gaussian", refine=False)
        c.expect(not ctl.passed or ctl.C > 1e6, f"Gaussian control C={ctl.C}")
        c.notes.append(f"Gaussian control C={ctl.C:.2e}")


def test_07_pde_residual():
    with Criterion(7, "d_t P + L P = 0 on the trusted region", 120) as c:
        ops = [OperatorSpec.pure_jump(kn.fractional(1.0)), OperatorSpec.pure_jump(kn.fractional(1.5)),
               OperatorSpec.mixed(kn.fractional(1.0))]
        for op in ops:
            r = heat_residual(op, (0.5, 1.0, 2.0), refine=True)
            c.expect(r.relative < 1e-3, f"{op}: residual {r.relative:.1e}")
            c.expect(r.halves, f"{op}: refinement ratio {r.ratio}")
            c.notes.append(f"{r.relative:.1e} (ratio {r.ratio:.2f})")


def test_08_derivative_bounds():
    with Criterion(8, "Cauchy derivative envelopes, first-derivative envelope vs closed form", 30) as c:
        r = hk.check_fractional_derivative_bounds(1.0)
        c.expect(len(r.items) == 6, f"items {sorted(r.items)}")
        c.expect(r.passed, f"items {r.items} stable {r.stable}")
        dev = abs(r.items["i"] / r.oracle_item1 - 1)
        c.expect(dev < 0.1, f"first-derivative deviation {dev:.2e}")
        c.notes.append(f"first-derivative deviation {dev:.1e}")


def test_09_phi_bounds():
    with Criterion(9, "|L phi| <= c phi, radial and anisotropic product", 60) as c:
        for spec in (kn.fractional(1.0), kn.log_corrected(1.0)):
            b = verify_phi_bounds(build_phi(spec), refine=True)
            c.expect(np.isfinite(b.c) and b.passed, f"{spec.label}: c={b.c} change={b.change}")
            c.notes.append(f"{spec.label} c={b.c:.3g}")
        phi = build_phi_anisotropic([kn.fractional(1.0), kn.fractional(1.5)])
        b = verify_phi_bounds(phi, refine=True)
        c.expect(b.passed and b.c_L <= 1.1 * sum(b.block_constants),
                 f"product c_L={b.c_L} blocks={b.block_constants}")


def test_10_rf_solver():
    with Criterion(10, "representation formula: trace, very weak, smoothing, positivity", 120) as c:
        spec, g = kn.fractional(1.0), Grid.default(1)
        tt = sv.trace_times(spec, g)
        mus = [sv.RadonMeasure.dirac((0.0,), 1),
               sv.RadonMeasure([((2.0,), 1.0), ((-2.0,), 1.0)], name="delta_a+delta_-a"),
               sv.RadonMeasure.gaussian(g)]
        for mu in mus:
            sol = sv.solve_rf(mu, spec, tt, g)
            tr = sv.trace_check(sol, last=4)
            c.expect(tr.passed, f"trace {mu.name}")
            c.expect(sol.nonnegative(), f"positivity {mu.name}: min {sol.min_value():.2e}")
        bat = [th for th in space_time_battery(1) if th.fits(g)]
        c.expect(len(bat) == 5, f"battery size {len(bat)}")
        wt = sv.weak_times(bat)
        rep = sv.very_weak_residual(sv.solve_rf(mus[0], spec, wt, g),
                                    OperatorSpec.pure_jump(spec), bat)
        c.expect(rep.passed(1e-3), f"very weak residual {rep.worst:.1e}")
        phi_c = verify_phi_bounds(build_phi(spec), refine=False).c
        st = np.unique(np.r_[sv.trace_times(spec, g, n=4), [1.5, 2.0]])
        sm = sv.smoothing_ratio_check(sv.solve_rf(mus[0], spec, st, g), phi_c)
        c.expect(sm.passed, f"smoothing violated at {sm.violation}")
        c.notes.append(f"very weak {rep.worst:.1e}, smoothing slack {sm.worst:.2f}")


def test_11_anisotropic_identity():
    with Criterion(11, "product kernel and additive symbol in d = 2", 60) as c:
        blocks = [kn.fractional(1.0), kn.fractional(1.5)]
        g = Grid(2, 512, 32.0)
        P = hk.anisotropic_kernel(blocks, 1.5, g, pad=4).values
        D = hk.kernel_fourier_inversion(blocks, 1.5, g, pad=4).values
        err = float(np.max(np.abs(P - D)))
        c.expect(err < 1e-4, f"product vs direct {err:.1e}")
        op = OperatorSpec.anisotropic(blocks)
        errs = [eigen_check(op, g, xi) for xi in ((1.0, 0.5), (2.0, 3.0), (0.7, 5.0))]
        c.expect(max(errs) < 1e-3, f"plane waves {errs}")
        c.notes.append(f"product {err:.1e}, plane wave {max(errs):.1e}")


def test_12_mixed_operator():
    with Criterion(12, "mixed operator envelope and condition ratios", 60) as c:
        spec = kn.fractional(1.0)
        env = hk.check_mixed_comparability(spec, (0.5, 2.0))
        c.expect(env.passed, f"envelope C={env.C} change={env.change}")
        r = hk.check_classical_conditions(spec, (0.5, 2.0), laplacian=True)
        c.expect(r.finite, f"ratios {r}")
        c.notes.append(f"C={env.C:.3g}, ratios ({r.dt_ratio:.3g}, {r.d2_ratio:.3g}, "
                       f"{r.levy_ratio:.3g})")


@pytest.mark.parametrize("spec", [kn.fractional(1.0), kn.log_corrected(1.0)],
                         ids=["fractional", "log_corrected"])
def test_13_mc_oracle(spec):
    with Criterion(13, f"Monte Carlo density vs FFT kernel ({spec.label})", 120) as c:
        r = oracle_check(spec, 1.0, n=1_000_000, delta=1e-3, seed=0)
        c.expect(r["distance"] < 0.02, f"L1 distance {r['distance']:.3g}")
        c.expect(r["wrong_time_exceeds"], "wrong-time control inside the CI")
        c.notes.append(f"L1 {r['distance']:.4f}")
