"""Named verification suites composed from the module checks."""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from . import heat_kernel as hk
from . import kernels as kn
from .comparison_phi import build_phi, build_phi_anisotropic, verify_phi_bounds
from .grid import Grid
from .mc_oracle import oracle_check
from .nonlocal_op import OperatorSpec, eigen_check, heat_residual
from .report import Check, InfrastructureError, Report, merge
from .symbol import check_symbol_bounds, symbol_eval
from . import solver as sv
from .testfunctions import space_time_battery

# property verified by each suite (printed by --list)
ANCHORS = {
    "symbol": "m(xi) = int (1 - cos<xi,y>) K(y) dy with two-sided power bounds",
    "kernel": "P_t = F^-1 exp(-t m) is a probability density",
    "semigroup": "P_t * P_s = P_{t+s}",
    "comparability": "P_t comparable to min(P_1(0), t K) and to P_s for t, s in a compact range",
    "derivative-bounds": "space and time derivative envelopes of the fractional heat kernel",
    "classical-conditions": "d_t P + L P = 0 pointwise with integrable derivative ratios",
    "phi": "comparison function with |L phi| <= c phi and |B(psi, phi)| <= c phi",
    "rf-solver": "U = int P_t(. - y) dmu0(y) is nonnegative, mass-preserving and recovers mu0",
    "trace": "int psi U(., t) -> int psi dmu0 as t -> 0+",
    "very-weak": "int int U (d_t theta - L theta) = 0 for compactly supported theta",
    "smoothing": "e^{-c|t-s|} |U(s)|_{L1(P_1)} <= |U(t)|_{L1(P_1)} <= e^{c|t-s|} |U(s)|_{L1(P_1)}",
    "anisotropic": "product kernel and additive symbol for axis-block operators",
    "mixed": "heat kernel of -Laplacian + L_K and its comparability",
    "oracle": "Monte Carlo density of the Levy process matches P_t",
}
SUITES = tuple(ANCHORS) + ("all",)


@dataclass
class Config:
    spec: str = "fractional:alpha=1"
    d: int = 1
    N: int | None = None
    L: float | None = None
    seed: int = 0
    times: tuple = (0.5, 2.0)
    refine: bool = True
    mc_n: int = 1_000_000
    mc_delta: float = 1e-3
    mc_t: float = 1.0
    jobs: int = 1

    @classmethod
    def from_dict(cls, doc: dict) -> "Config":
        names = {f.name for f in fields(cls)}
        bad = set(doc) - names
        if bad:
            raise ValueError(f"unknown config key(s): {sorted(bad)}")
        doc = dict(doc)
        if "times" in doc:
            doc["times"] = tuple(float(t) for t in doc["times"])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "Config":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"malformed config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["times"] = list(self.times)
        return out

    @property
    def kernel(self) -> kn.LevyKernelSpec:
        return kn.parse_spec(self.spec, self.d)

    @property
    def kernel1(self) -> kn.LevyKernelSpec:
        return kn.parse_spec(self.spec, 1)

    @property
    def grid(self) -> Grid:
        base = Grid.default(self.d)
        return Grid(self.d, self.N or base.N, self.L or base.L)


Task = Callable[[], Check]


def _fin(*xs) -> bool:
    return bool(np.all(np.isfinite(np.asarray(xs, dtype=float))))


# ---------------------------------------------------------------------------
# suites: each returns a list of independent tasks

def _symbol(cfg: Config) -> list[Task]:
    spec, a = cfg.kernel, ANCHORS["symbol"]

    def integrability():
        r = kn.check_levy_integrability(spec)
        return Check("levy-integrability", a, r.finite, {"value": r.value})

    def scaling():
        r = kn.check_scaling(spec)
        return Check("weak-scaling", a, r.passed, {"lambda1": r.lambda1, "lambda2": r.lambda2})

    def bounds():
        r = check_symbol_bounds(spec, refine=cfg.refine)
        return Check("symbol-bounds", a, bool(r.passed), {"C1": r.C1, "C2": r.C2,
                     "beta1": r.beta1, "beta2": r.beta2, "change": r.change}, tolerance=0.05)

    tasks = [integrability, scaling, bounds]
    if spec.kind == "fractional":
        alpha = dict(spec.params)["alpha"]

        def exact():
            xs = np.geomspace(0.1, 50, 50)
            err = 0.0
            for x in xs:
                e = np.zeros(spec.d)
                e[0] = x
                v = symbol_eval(spec, e)
                if not v.converged:
                    raise InfrastructureError(f"symbol quadrature did not converge at |xi| = {x}")
                err = max(err, abs(v.value / x ** alpha - 1))
            return Check("fractional-exactness", a, err < 1e-5, {}, err, 1e-5)
        tasks.append(exact)
    return tasks


def _kernel(cfg: Config) -> list[Task]:
    spec, g, a = cfg.kernel, cfg.grid, ANCHORS["kernel"]
    tasks = []
    for t in (0.5, 1.0, 2.0):
        def mass(t=t):
            P = hk.kernel_fourier_inversion(spec, t, g)
            err = abs(P.mass - 1)
            return Check(f"mass-positivity(t={t})", a, err < 1e-4 and P.positive(),
                         {"mass": P.mass, "min": float(P.values.min())}, err, 1e-4)
        tasks.append(mass)
    if spec.kind == "fractional" and spec.d == 1 and dict(spec.params)["alpha"] == 1.0:
        def cauchy():
            F = hk.kernel_fourier_inversion(spec, 1.0, g)
            S = hk.subordinated_fractional_kernel(1.0, g, 1.0)
            exact = 1 / (np.pi * (1 + g.axis ** 2))
            e = [float(np.max(np.abs(F.values - S.values))),
                 float(np.max(np.abs(F.values - exact))), float(np.max(np.abs(S.values - exact)))]
            return Check("cauchy-cross-check", a, max(e) < 1e-4,
                         {"fourier_vs_subordination": e[0], "fourier_vs_exact": e[1],
                          "subordination_vs_exact": e[2]}, max(e), 1e-4)
        tasks.append(cauchy)
    if spec.kind == "fractional":
        def selfsim():
            r = hk.check_self_similarity(dict(spec.params)["alpha"], 2.0, g)
            return Check("self-similarity", a, r.holds == "x t^(-1/alpha)",
                         {"exponent": r.exponent, "error_inverse": r.error_inverse,
                          "error_power": r.error_power}, note=r.holds)
        tasks.append(selfsim)
    return tasks


def _semigroup(cfg: Config) -> list[Task]:
    spec, g, a = cfg.kernel, cfg.grid, ANCHORS["semigroup"]
    tasks = []
    for t, s in ((0.5, 0.5), (1.0, 1.0), (0.5, 2.0)):
        def one(t=t, s=s):
            r = hk.check_semigroup(spec, t, s, g, refinements=1 if cfg.refine else 0)
            return Check(f"semigroup(t={t},s={s})", a, r.l1_error < 1e-3 and r.decreasing,
                         {"errors": r.errors, "commutation": r.commutation_error,
                          "noise_floor": r.noise_floor}, r.l1_error, 1e-3)
        tasks.append(one)
    return tasks


def _env_check(name, anchor, env, **extra) -> Check:
    return Check(name, anchor, env.passed, {"C": env.C, "refined_C": env.refined_C,
                 "change": env.change, **extra})


def _comparability(cfg: Config) -> list[Task]:
    spec, g, a = cfg.kernel, cfg.grid, ANCHORS["comparability"]
    lo, hi = cfg.times

    def levy():
        return _env_check("kernel-levy", a, hk.check_kernel_levy_comparability(
            spec, (lo, hi), g, refine=cfg.refine))

    def tcomp():
        return _env_check("time", a, hk.check_time_comparability(spec, lo, hi, g, refine=cfg.refine))

    def shape():
        P1 = hk.kernel_fourier_inversion(spec, 1.0, g)
        sc = hk.check_slowly_changing(P1, 1.0, 2.0)
        ad = hk.check_almost_decreasing(P1)
        tb = hk.check_translation_bound(P1, 1.0)
        ok = all(_fin(e.C) for e in (sc, ad, tb))
        return Check("slowly-changing/almost-decreasing/translation", a, ok,
                     {"slowly_changing": sc.C, "almost_decreasing": ad.C, "translation": tb.C})

    def control():
        env = hk.check_kernel_levy_comparability(spec, (lo, hi), g, builder="gaussian",
                                                 refine=False)
        return Check("gaussian-control-diverges", a, not env.passed or env.C > 1e6,
                     {"C": env.C}, note="negative control: must not be comparable")

    return [levy, tcomp, shape, control]


def _derivative(cfg: Config) -> list[Task]:
    spec, a = cfg.kernel1, ANCHORS["derivative-bounds"]
    alpha = dict(spec.params)["alpha"] if spec.kind == "fractional" else 1.0

    def run():
        r = hk.check_fractional_derivative_bounds(alpha, Grid.default(1))
        ok = r.passed
        dev = None
        if r.oracle_item1 is not None:
            dev = abs(r.items["i"] / r.oracle_item1 - 1)
            ok = ok and dev < 0.1
        return Check(f"fractional(alpha={alpha:g})", a, ok,
                     {"items": r.items, "stable": r.stable, "oracle_item1": r.oracle_item1,
                      "small_t": r.small_t}, dev, 0.1 if dev is not None else None)
    return [run]


def _classical(cfg: Config) -> list[Task]:
    spec, g, a = cfg.kernel, cfg.grid, ANCHORS["classical-conditions"]

    def ratios():
        r = hk.check_classical_conditions(spec, cfg.times, g)
        return Check("derivative-ratios", a, r.finite, {"dt": r.dt_ratio, "d2": r.d2_ratio,
                                                         "levy": r.levy_ratio})

    def residual():
        r = heat_residual(OperatorSpec.pure_jump(spec), (0.5, 1.0, 2.0), g, refine=cfg.refine)
        ok = r.relative < 1e-3 and (r.halves if cfg.refine else True)
        return Check("pde-residual", a, bool(ok), {"ratio": r.ratio, "per_time": r.per_time},
                     r.relative, 1e-3)
    return [ratios, residual]


def _phi_constant(spec: kn.LevyKernelSpec, refine: bool = False) -> float:
    return verify_phi_bounds(build_phi(spec), refine=refine).c


def _phi(cfg: Config) -> list[Task]:
    spec, g, a = cfg.kernel, cfg.grid, ANCHORS["phi"]

    def radial():
        phi = build_phi(spec)
        b = verify_phi_bounds(phi, grid=g, refine=cfg.refine)
        jumps = max(phi.jumps().values())
        return Check("radial", a, b.passed and jumps < 1e-8,
                     {"c_L": b.c_L, "c_B": b.c_B, "comparability": b.comparability,
                      "near": b.near, "far": b.far, "change": b.change, "jumps": jumps})

    tasks = [radial]
    if spec.d == 1:
        def product():
            phi = build_phi_anisotropic([spec, kn.fractional(1.5, 1)])
            b = verify_phi_bounds(phi, refine=cfg.refine)
            return Check("anisotropic-product", a, b.passed,
                         {"c_L": b.c_L, "block_constants": b.block_constants,
                          "comparability": b.comparability},
                         b.c_L / sum(b.block_constants), 1.1)
        tasks.append(product)
    return tasks


def _measures(g: Grid) -> list:
    z = (0.0,) * g.d
    a2 = (2.0,) + (0.0,) * (g.d - 1)
    return [sv.RadonMeasure.dirac(z, g.d),
            sv.RadonMeasure([(a2, 1.0), (tuple(-x for x in a2), 1.0)], name="delta_a+delta_-a"),
            sv.RadonMeasure.gaussian(g)]


def _rf(cfg: Config) -> list[Task]:
    spec, g, a = cfg.kernel, cfg.grid, ANCHORS["rf-solver"]
    tasks = []
    for mu in _measures(g):
        def one(mu=mu):
            tt = sv.trace_times(spec, g)
            sol = sv.solve_rf(mu, spec, tt, g)
            tr = sv.trace_check(sol)
            consts = {"min_value": sol.min_value(), "orders": [r.order for r in tr.rows]}
            ok = tr.passed and sol.nonnegative()
            res = None
            if sol.exterior:
                small = sol.times <= 1.0
                res = float(np.max(np.abs(sol.masses()[small] - mu.total_mass())))
                ok = ok and res < 1e-3
            return Check(f"trace/positivity/mass({mu.name})", a, ok, consts, res, 1e-3)
        tasks.append(one)

    def linear():
        m1, m2, m3 = _measures(g)
        tt = [0.5, 1.0]
        s = sv.solve_rf(m1.scaled(2.0) + m3.scaled(-0.5), spec, tt, g)
        u = sv.solve_rf(m1, spec, tt, g)
        w = sv.solve_rf(m3, spec, tt, g)
        err = max(float(np.max(np.abs(x.values - 2 * y.values + 0.5 * z.values)))
                  for x, y, z in zip(s.fields, u.fields, w.fields))
        return Check("linearity", a, err < 1e-12, {}, err, 1e-12)
    tasks.append(linear)
    return tasks


def _trace(cfg: Config) -> list[Task]:
    spec, g, a = cfg.kernel, cfg.grid, ANCHORS["trace"]
    e = (1.0,) + (0.0,) * (g.d - 1)
    mus = [sv.RadonMeasure.dirac((0.0,) * g.d, g.d),
           sv.RadonMeasure([(e, 1.0), (tuple(-3 * x for x in e), -1.0)], name="signed")]

    def one(mu):
        tt = sv.trace_times(spec, g)
        tr = sv.trace_check(sv.solve_rf(mu, spec, tt, g))
        return Check(f"trace({mu.name})", a, tr.passed,
                     {"times": tr.times, "final": [r.discrepancy[-1] for r in tr.rows],
                      "orders": [r.order for r in tr.rows]})
    return [lambda mu=mu: one(mu) for mu in mus]


def _very_weak(cfg: Config) -> list[Task]:
    spec, g, a = cfg.kernel, cfg.grid, ANCHORS["very-weak"]
    bat = [th for th in space_time_battery(g.d) if th.fits(g)]
    tt = sv.weak_times(bat)
    op = OperatorSpec.pure_jump(spec)

    def rf():
        rep = sv.very_weak_residual(sv.solve_rf(sv.RadonMeasure.dirac((0.0,) * g.d, g.d),
                                                spec, tt, g), op, bat)
        return Check("rf-delta", a, rep.passed(1e-3),
                     {"residuals": [i.residual for i in rep.items],
                      "integrability": [i.integrability for i in rep.items]}, rep.worst, 1e-3)

    def const():
        rep = sv.very_weak_residual(sv.constant_solution(g, tt), op, bat)
        return Check("constant", a, rep.passed(1e-3), {}, rep.worst, 1e-3)

    def control():
        rep = sv.very_weak_residual(sv.gaussian_flow(sv.RadonMeasure.dirac((0.0,) * g.d, g.d),
                                                     tt, g), op, bat)
        return Check("gaussian-flow-control", a, not rep.passed(1e-3), {}, rep.worst, 1e-3,
                     note="negative control: residual must exceed the tolerance")
    return [rf, const, control]


def _smoothing(cfg: Config) -> list[Task]:
    spec, g, a = cfg.kernel, cfg.grid, ANCHORS["smoothing"]

    def run():
        c = _phi_constant(spec)
        tt = np.r_[sv.trace_times(spec, g, n=4)[::-1], [1.5, 2.0]]
        sol = sv.solve_rf(sv.RadonMeasure.dirac((0.0,) * g.d, g.d), spec, np.unique(tt), g)
        r = sv.smoothing_ratio_check(sol, c)
        r2 = sv.smoothing_ratio_check(sol, 2 * c)
        return Check("delta", a, r.passed and r2.passed,
                     {"c": c, "f": r.f, "worst": r.worst}, r.worst, 0.0,
                     note="" if r.violation is None else f"violated at {r.violation}")
    return [run]


def _anisotropic(cfg: Config) -> list[Task]:
    a = ANCHORS["anisotropic"]
    blocks = [cfg.kernel1, kn.fractional(1.5, 1)]
    g = Grid(2, 512, 32.0)

    def product():
        P = hk.anisotropic_kernel(blocks, 1.5, g, pad=4)
        D = hk.kernel_fourier_inversion(blocks, 1.5, g, pad=4)
        err = float(np.max(np.abs(P.values - D.values)))
        return Check("product-vs-direct", a, err < 1e-4, {}, err, 1e-4)

    def plane():
        op = OperatorSpec.anisotropic(blocks)
        errs = [eigen_check(op, g, xi) for xi in ((1.0, 0.5), (2.0, 3.0), (0.7, 5.0))]
        return Check("plane-wave", a, max(errs) < 1e-3, {"errors": errs}, max(errs), 1e-3)
    return [product, plane]


def _mixed(cfg: Config) -> list[Task]:
    spec, g, a = cfg.kernel, cfg.grid, ANCHORS["mixed"]

    def comp():
        return _env_check("comparability", a, hk.check_mixed_comparability(
            spec, cfg.times, g, refine=cfg.refine))

    def ratios():
        r = hk.check_classical_conditions(spec, cfg.times, g, laplacian=True)
        return Check("condition-ratios", a, r.finite, {"dt": r.dt_ratio, "d2": r.d2_ratio,
                                                        "levy": r.levy_ratio})

    def residual():
        r = heat_residual(OperatorSpec.mixed(spec), (0.5, 1.0, 2.0), g, refine=cfg.refine)
        return Check("pde-residual", a, bool(r.relative < 1e-3), {"ratio": r.ratio},
                     r.relative, 1e-3)
    return [comp, ratios, residual]


def _oracle(cfg: Config) -> list[Task]:
    spec, a = cfg.kernel1, ANCHORS["oracle"]

    def run():
        r = oracle_check(spec, cfg.mc_t, Grid.default(1), n=cfg.mc_n, delta=cfg.mc_delta,
                         seed=cfg.seed)
        ok = r["distance"] < 0.02 and r["wrong_time_exceeds"]
        return Check("l1-distance", a, ok, r, r["distance"], 0.02)
    return [run]


_TASKS = {
    "symbol": _symbol, "kernel": _kernel, "semigroup": _semigroup,
    "comparability": _comparability, "derivative-bounds": _derivative,
    "classical-conditions": _classical, "phi": _phi, "rf-solver": _rf, "trace": _trace,
    "very-weak": _very_weak, "smoothing": _smoothing, "anisotropic": _anisotropic,
    "mixed": _mixed, "oracle": _oracle,
}


def run_suite(name: str, cfg: Config | None = None) -> Report:
    """Run one named suite (or 'all') and collect its report."""
    cfg = cfg or Config()
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    if name == "all":
        return merge([run_suite(s, cfg) for s in _TASKS], "all")
    cfg.kernel  # validate early
    t0 = time.perf_counter()
    tasks = _TASKS[name](cfg)
    if cfg.jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as ex:
            checks = list(ex.map(lambda f: f(), tasks))
    else:
        checks = [f() for f in tasks]
    return Report(name, cfg.spec, cfg.grid.to_dict(), checks, time.perf_counter() - t0, cfg.seed)
