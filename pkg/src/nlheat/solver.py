"""Cauchy problem u_t + L u = 0 with Radon-measure data via the representation formula.

U(x, t) = int P_t(x - y) dmu0(y).  Alongside the solver live the checks that
tie U back to its data: growth, initial trace, the very weak identity, the
smoothing inequality in L^1(P_1), the Duhamel backward problem and the
minimality (lower bound) of U among nonnegative solutions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .grid import ExactTail, Field, Grid, KernelField
from .heat_kernel import (_dual_values, anisotropic_kernel,
                          kernel_fourier_inversion, spatial_convolution)
from .kernels import LevyKernelSpec, eval_kernel
from .nonlocal_op import OperatorSpec, apply_levy, as_operator
from .symbol import symbol_eval
from .testfunctions import Bump, TestFunction, eta, space_time_battery, spatial_battery

Array = np.ndarray

RF_NYQUIST = 1e-8      # smallest trusted time: exp(-t m) at Nyquist below this


class GrowthError(ValueError):
    pass


# ---------------------------------------------------------------------------
# measures

@dataclass
class RadonMeasure:
    """Finitely many signed atoms plus an optional signed density on a grid."""

    atoms: list = field(default_factory=list)      # [(location tuple, weight)]
    density: Field | None = None
    name: str = "mu0"

    def __post_init__(self):
        self.atoms = [(tuple(np.atleast_1d(np.asarray(a, float)).tolist()), float(w))
                      for a, w in self.atoms]

    @classmethod
    def dirac(cls, a=0.0, d: int = 1, weight: float = 1.0) -> "RadonMeasure":
        loc = np.broadcast_to(np.asarray(a, float), (d,))
        return cls([(tuple(loc.tolist()), weight)], name=f"delta_{tuple(loc.tolist())}")

    @classmethod
    def gaussian(cls, grid: Grid, sigma: float = 1.0, mass: float = 1.0) -> "RadonMeasure":
        r2 = grid.radius() ** 2
        vals = mass * np.exp(-r2 / (2 * sigma ** 2)) / (2 * np.pi * sigma ** 2) ** (grid.d / 2)
        return cls(density=Field(grid, vals), name=f"gaussian(sigma={sigma})")

    @property
    def d(self) -> int:
        if self.atoms:
            return len(self.atoms[0][0])
        return self.density.grid.d if self.density is not None else 1

    @property
    def nonnegative(self) -> bool:
        ok = all(w >= 0 for _, w in self.atoms)
        return ok and (self.density is None or bool(np.all(self.density.values >= 0)))

    def total_mass(self) -> float:
        m = sum(w for _, w in self.atoms)
        return m + (self.density.integral() if self.density is not None else 0.0)

    def integrate(self, f) -> float:
        """int f dmu0 for a callable of points (shape (..., d))."""
        out = 0.0
        if self.atoms:
            locs = np.array([a for a, _ in self.atoms])
            w = np.array([w for _, w in self.atoms])
            out += float(w @ np.reshape(f(locs), -1))
        if self.density is not None:
            g = self.density.grid
            pts = g.points() if g.d > 1 else g.axis
            out += float(np.sum(self.density.values * f(pts)) * g.cell)
        return out

    def scaled(self, s: float) -> "RadonMeasure":
        dens = None if self.density is None else Field(self.density.grid, s * self.density.values)
        return RadonMeasure([(a, s * w) for a, w in self.atoms], dens, f"{s}*{self.name}")

    def __add__(self, other: "RadonMeasure") -> "RadonMeasure":
        dens = self.density
        if other.density is not None:
            dens = other.density if dens is None else Field(dens.grid, dens.values + other.density.values)
        return RadonMeasure(self.atoms + other.atoms, dens, f"{self.name}+{other.name}")

    def to_dict(self) -> dict:
        out = {"name": self.name, "atoms": [[list(a), w] for a, w in self.atoms]}
        if self.density is not None:
            out["density"] = {"grid": self.density.grid.to_dict(),
                              "values": self.density.values.ravel().tolist()}
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "RadonMeasure":
        dens = None
        if doc.get("density"):
            g = doc["density"]["grid"]
            grid = Grid(int(g["d"]), int(g["N"]), float(g["L"]))
            dens = Field(grid, np.asarray(doc["density"]["values"], float).reshape(grid.shape))
        return cls([(a, w) for a, w in doc.get("atoms", [])], dens, doc.get("name", "mu0"))

    @classmethod
    def from_json(cls, text: str) -> "RadonMeasure":
        return cls.from_dict(json.loads(text))


@dataclass
class SolutionField:
    grid: Grid
    times: Array
    fields: list
    measure: RadonMeasure
    spec: object = None
    exterior: list = field(default_factory=list)   # mass beyond the box per time (d = 1)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def at(self, t: float) -> Field:
        k = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[k], t, rtol=0, atol=1e-12):
            raise KeyError(f"no sample at t = {t}")
        return self.fields[k]

    def masses(self) -> Array:
        ext = self.exterior or [0.0] * len(self.fields)
        return np.array([f.integral() + e for f, e in zip(self.fields, ext)])

    def min_value(self) -> float:
        return float(min(f.values.min() for f in self.fields))

    def nonnegative(self) -> bool:
        return self.min_value() >= 0.0


# ---------------------------------------------------------------------------
# growth

@dataclass
class GrowthResult:
    value: float
    finite: bool

    @property
    def passed(self) -> bool:
        return self.finite


def growth_check(measure: RadonMeasure, P1: Field) -> GrowthResult:
    """int P_1 d|mu0| by atom sums and grid quadrature of the density."""
    g = P1.grid
    val = 0.0
    for a, w in measure.atoms:
        p = np.asarray(a)
        if p.size != g.d:
            raise GrowthError(f"atom {a} has dimension {p.size}, grid has {g.d}")
        if not bool(P1.inside(p[None])[0]):
            raise GrowthError(f"atom at {a} lies outside the box [-{g.L}, {g.L})^{g.d}")
        val += abs(w) * float(P1.evaluate(p[None])[0])
    if measure.density is not None:
        dg = measure.density.grid
        pts = dg.points() if dg.d > 1 else dg.axis
        pv = P1.values if dg == g else P1.evaluate(pts)
        val += float(np.sum(np.abs(measure.density.values) * pv) * dg.cell)
    return GrowthResult(val, bool(np.isfinite(val)))


@dataclass
class GrowthTrend:
    radii: Array
    partial: Array           # partial sums of int P_1 d|mu| over |x| <= radii
    slope: float             # log-log slope of the shell increments against the radius
    divergent: bool


def growth_trend(P1: Field, radii: Array, weights: Array, *, threshold: float = -0.1
                 ) -> GrowthTrend:
    """Partial sums of sum_k |w_k| P_1(r_k e_1) for atoms on growing shells.

    P_1 beyond the box comes from its tail model.  The increments of a
    convergent sum decay algebraically in the radius; a fitted slope above
    ``threshold`` flags a divergent (or marginally divergent) trend.
    """
    r = np.asarray(radii, float)
    w = np.abs(np.asarray(weights, float))
    pts = np.zeros((r.size, P1.grid.d))
    pts[:, 0] = r
    p = P1.evaluate(pts if P1.grid.d > 1 else r)
    inc = w * p
    half = r.size // 2
    good = inc[half:] > 0
    slope = float(np.polyfit(np.log(r[half:][good]), np.log(inc[half:][good]), 1)[0])
    return GrowthTrend(r, np.cumsum(inc), slope, slope > threshold)


# ---------------------------------------------------------------------------
# representation formula

def t_min(spec, grid: Grid, tol: float = RF_NYQUIST, laplacian: bool = False) -> float:
    """Smallest t with exp(-t m) < tol at the Nyquist frequency of ``grid``."""
    specs = spec if isinstance(spec, (list, tuple)) else [spec]
    worst = 0.0
    for s in specs:
        e = np.zeros(s.d)
        e[0] = grid.nyquist
        m = symbol_eval(s, e).value + (grid.nyquist ** 2 if laplacian else 0.0)
        worst = max(worst, np.log(1 / tol) / m)
    return float(worst)


def _kernel(spec, t: float, grid: Grid, laplacian: bool, tol: float) -> KernelField:
    if isinstance(spec, (list, tuple)):
        return anisotropic_kernel(spec, t, grid, nyquist_tol=tol)
    return kernel_fourier_inversion(spec, t, grid, laplacian=laplacian, nyquist_tol=tol)


def _cdf_1d(P: KernelField):
    """x -> int_{-inf}^x P_t on the padded, de-aliased box (kernels are even)."""
    big = P.meta["padded"]
    g = big.grid
    c = np.cumsum(big.values) * g.h
    left = 0.5 * (1.0 - c[-1])
    x = g.axis + 0.5 * g.h
    return lambda s: left + np.interp(s, x, c, left=0.0, right=c[-1])


def solve_rf(measure: RadonMeasure, spec, times: Sequence[float], grid: Grid | None = None,
             *, laplacian: bool = False, nyquist_tol: float = RF_NYQUIST) -> SolutionField:
    """U(., t) = int P_t(. - y) dmu0(y) at each requested time.

    Atoms add interpolated shifts of P_t; a density is convolved with P_t
    taken on a box twice as wide.  Times below the trusted minimum raise
    NyquistError.  ``spec`` may be a list of one-dimensional blocks.
    """
    d = measure.d
    grid = grid or (measure.density.grid if measure.density is not None else Grid.default(d))
    P1 = _kernel(spec, max(1.0, t_min(spec, grid, nyquist_tol, laplacian)), grid,
                 laplacian, nyquist_tol)
    gr = growth_check(measure, P1)
    if not gr.passed:
        raise GrowthError(f"int P_1 d|mu0| = {gr.value}")
    if measure.density is not None and measure.density.grid != grid:
        raise ValueError("the density must live on the solution grid")
    pts = grid.points() if grid.d > 1 else grid.axis
    times = np.sort(np.asarray(times, float))
    fields, ext = [], []
    for t in times:
        P = _kernel(spec, float(t), grid, laplacian, nyquist_tol)
        u = np.zeros(grid.shape)
        for a, w in measure.atoms:
            u += w * P.evaluate(pts - (np.asarray(a) if grid.d > 1 else a[0]))
        if measure.density is not None:
            u += spatial_convolution(measure.density, P.extended(2))
        tail = _rf_tail(measure, P) if measure.atoms and measure.density is None else None
        fields.append(Field(grid, u, tail))
        if grid.d == 1 and not isinstance(spec, (list, tuple)):
            F = _cdf_1d(P)
            L = grid.L
            e = sum(w * (1.0 - (F(L - a[0]) - F(-L - a[0]))) for a, w in measure.atoms)
            if measure.density is not None:
                x = grid.axis
                inside = F(L - x) - F(-L - x)
                e += float(np.sum(measure.density.values * (1.0 - inside)) * grid.h)
            ext.append(float(e))
    return SolutionField(grid, times, fields, measure, spec, ext)


def _rf_tail(measure: RadonMeasure, P: KernelField):
    atoms = [(np.asarray(a), w) for a, w in measure.atoms]
    d = P.grid.d

    def tail(p):
        p = np.asarray(p, float)
        return sum(w * P.evaluate(p - (a if d > 1 else a[0])) for a, w in atoms)

    return ExactTail(tail)


def rf_solution_series(measure, spec, times, grid=None, **kw) -> SolutionField:
    """Alias of solve_rf kept for readability at call sites that sweep time."""
    return solve_rf(measure, spec, times, grid, **kw)


# ---------------------------------------------------------------------------
# initial trace

@dataclass
class TraceRow:
    bump: Bump
    target: float
    discrepancy: Array
    order: float
    monotone: bool

    @property
    def converged(self) -> bool:
        return self.monotone and (self.order > 0 or self.discrepancy[-1] < 1e-12)


@dataclass
class TraceTable:
    times: Array             # decreasing towards t_min
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.converged for r in self.rows)

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(),
                "rows": [{"centre": list(r.bump.centre), "width": r.bump.width,
                          "target": r.target, "discrepancy": r.discrepancy.tolist(),
                          "order": r.order, "monotone": r.monotone} for r in self.rows]}


def trace_times(spec, grid: Grid, n: int = 8, t_max: float = 1.0, laplacian: bool = False
                ) -> Array:
    """Geometric sequence from t_max down to the smallest trusted time."""
    lo = t_min(spec, grid, RF_NYQUIST, laplacian) * 1.01
    return np.geomspace(t_max, lo, n)


def trace_check(solution: SolutionField, measure: RadonMeasure | None = None,
                battery: Sequence[Bump] | None = None, *, last: int = 4) -> TraceTable:
    """|int psi U(., t_k) - int psi dmu0| along t_k -> t_min, with a fitted order."""
    measure = measure or solution.measure
    g = solution.grid
    battery = battery or [b for b in spatial_battery(g.d) if b.support_radius() <= 0.5 * g.L]
    order = np.argsort(solution.times)[::-1]
    times = solution.times[order]
    rows = []
    for b in battery:
        psi = b.field(g).values
        target = measure.integrate(b)
        disc = np.array([abs(float(np.sum(psi * solution.fields[k].values) * g.cell) - target)
                         for k in order])
        tail = disc[-last:]
        mono = bool(np.all(np.diff(tail) <= 1e-15))
        ok = tail > 0
        p = float(np.polyfit(np.log(times[-last:][ok]), np.log(tail[ok]), 1)[0]) \
            if ok.sum() >= 2 else np.inf
        rows.append(TraceRow(b, target, disc, p, mono))
    return TraceTable(times, rows)


# ---------------------------------------------------------------------------
# very weak formulation

@dataclass
class WeakResidual:
    theta: TestFunction
    residual: float           # int int u (d_t theta - L theta)
    integrability: float      # int int |u| (|d_t theta| + |L theta|)

    @property
    def relative(self) -> float:
        return abs(self.residual) / self.integrability if self.integrability else abs(self.residual)


@dataclass
class WeakReport:
    items: list

    @property
    def worst(self) -> float:
        return max(i.relative for i in self.items)

    def passed(self, tol: float = 1e-3) -> bool:
        return all(np.isfinite(i.integrability) for i in self.items) and self.worst < tol


def weak_times(battery: Sequence[TestFunction], step: float = 0.0125) -> Array:
    lo = min(th.window[0] for th in battery)
    hi = max(th.window[1] for th in battery)
    n = int(np.ceil((hi - lo) / step))
    return np.linspace(lo, hi, n + 1)


class _ExteriorRule:
    """Nodes x and weights for int_{x outside the box} f(x) (L psi)(x) dx.

    Outside the box L psi(x) = -int psi(y) K(x - y) dy.  The exterior is cut
    into one cone per face, x = s (e_a + sum_b tau_b e_b) with |tau_b| <= 1
    and s >= L; with s = L / u the integrand is smooth on u in (0, 1] and in
    tau, so tensor Gauss-Legendre suffices.
    """

    def __init__(self, psi: Field, spec: LevyKernelSpec, n: int | None = None,
                 n_face: int | None = None):
        g = psi.grid
        d = g.d
        n = n or (256, 128, 48)[min(d, 3) - 1]
        n_face = n_face or (1, 32, 12)[min(d, 3) - 1]
        nz = np.abs(psi.values) > 0
        pts = g.points() if d > 1 else g.axis[:, None]
        y, wy = pts[nz], psi.values[nz] * g.cell
        u, wu = np.polynomial.legendre.leggauss(n)
        u, wu = 0.5 * (u + 1), 0.5 * wu
        s_, js = g.L / u, wu * g.L / u ** 2
        tau, wt = np.polynomial.legendre.leggauss(n_face)
        grids = np.meshgrid(*([tau] * (d - 1)), indexing="ij")
        tw = np.ones(1) if d == 1 else np.prod(np.meshgrid(*([wt] * (d - 1)), indexing="ij"),
                                                axis=0).ravel()
        tt = np.stack([t.ravel() for t in grids], axis=-1) if d > 1 else np.zeros((1, 0))
        xs, ws = [], []
        for a in range(d):
            for sign in (1.0, -1.0):
                dirs = np.empty((tt.shape[0], d))
                dirs[:, a] = sign
                dirs[:, [b for b in range(d) if b != a]] = tt
                xs.append((s_[:, None, None] * dirs[None]).reshape(-1, d))
                ws.append((js[:, None] * s_[:, None] ** (d - 1) * tw[None]).ravel())
        x, w = np.concatenate(xs), np.concatenate(ws)
        Lpsi = np.empty(len(x))
        step = max(1, 2_000_000 // max(len(y), 1))
        for k in range(0, len(x), step):
            diff = x[k:k + step, None, :] - y[None]
            Lpsi[k:k + step] = -eval_kernel(spec, diff if d > 1 else diff[..., 0]) @ wy
        self.x, self.w = (x if d > 1 else x[:, 0]), w * Lpsi

    def __call__(self, u: Field) -> float:
        if u.tail is None:
            return 0.0
        pts = self.x if self.x.ndim > 1 else self.x[:, None]
        return float(self.w @ np.reshape(u.tail(pts), -1))


def very_weak_residual(solution: SolutionField, op=None, battery: Sequence[TestFunction] | None = None
                       ) -> WeakReport:
    """int int u (d_t theta - L theta) over the separable test-function battery.

    theta = psi(x) eta(t) so L theta = eta(t) L psi; the time integral is a
    trapezoid rule over the solution's samples, which must cover each window.
    """
    g = solution.grid
    op = as_operator(op if op is not None else solution.spec)
    battery = battery or [th for th in space_time_battery(g.d) if th.fits(g)]
    t = solution.times
    out = []
    for th in battery:
        lo, hi = th.window
        if t[0] > lo + 1e-12 or t[-1] < hi - 1e-12:
            raise ValueError(f"solution times do not cover the window {th.window}")
        psi = th.bump.field(g)
        Lpsi = apply_levy(op, psi).values
        exterior = op.variant != "anisotropic" and (g.d == 1 or op.spec.radial)
        ext = _ExteriorRule(psi, op.spec) if exterior else None
        et = th.time_factor(t)
        dt = th.time_factor(t, 1)
        a = np.empty(t.size)
        b = np.empty(t.size)
        s_abs = np.empty(t.size)
        for k, u in enumerate(solution.fields):
            if et[k] == 0 and dt[k] == 0:
                a[k] = b[k] = s_abs[k] = 0.0
                continue
            pu = float(np.sum(u.values * psi.values) * g.cell)
            lu = float(np.sum(u.values * Lpsi) * g.cell)
            if ext is not None and et[k] != 0:
                lu += ext(u)
            a[k] = dt[k] * pu
            b[k] = et[k] * lu
            s_abs[k] = float(np.sum(np.abs(u.values) * (abs(dt[k]) * np.abs(psi.values)
                                                          + abs(et[k]) * np.abs(Lpsi))) * g.cell)
        res = float(integrate.trapezoid(a - b, t))
        scale = float(integrate.trapezoid(s_abs, t))
        out.append(WeakResidual(th, res, scale))
    return WeakReport(out)


def constant_solution(grid: Grid, times: Sequence[float], value: float = 1.0) -> SolutionField:
    """u == value, with its tail, as a steady solution."""
    f = Field(grid, np.full(grid.shape, value), ExactTail(lambda p: np.full(np.shape(p)[:1], value)))
    return SolutionField(grid, np.asarray(times), [f] * len(times), RadonMeasure(name="lebesgue"))


def gaussian_flow(measure: RadonMeasure, times: Sequence[float], grid: Grid) -> SolutionField:
    """Classical heat flow of a measure (negative control for the nonlocal identity)."""
    from .heat_kernel import gaussian_kernel
    pts = grid.points() if grid.d > 1 else grid.axis
    fields = []
    for t in times:
        G = gaussian_kernel(float(t), grid)
        u = np.zeros(grid.shape)
        for a, w in measure.atoms:
            u += w * G.evaluate(pts - (np.asarray(a) if grid.d > 1 else a[0]))
        fields.append(Field(grid, u, _rf_tail(measure, G)))
    return SolutionField(grid, np.asarray(times), fields, measure, "gaussian")


# ---------------------------------------------------------------------------
# smoothing inequality in L^1(P_1)

@dataclass
class SmoothingResult:
    times: Array
    f: Array                  # int u(., t) P_1
    c: float
    worst: float              # max over pairs of |log f(t)/f(tau)| - c |t - tau|
    violation: tuple | None

    @property
    def passed(self) -> bool:
        return self.violation is None


def weighted_norms(solution: SolutionField, P1: Field) -> Array:
    g = solution.grid
    return np.array([float(np.sum(np.abs(u.values) * P1.values) * g.cell) for u in solution.fields])


def smoothing_ratio_check(solution: SolutionField, c: float, P1: Field | None = None,
                          *, rtol: float = 1e-9) -> SmoothingResult:
    """e^{-c|t-tau|} f(tau) <= f(t) <= e^{c|t-tau|} f(tau) at all sampled pairs."""
    if not solution.nonnegative():
        raise ValueError("the smoothing check needs a nonnegative solution")
    if P1 is None:
        P1 = _kernel(solution.spec, 1.0, solution.grid, False, RF_NYQUIST)
    f = weighted_norms(solution, P1)
    lf = np.log(f)
    t = solution.times
    gap = np.abs(lf[:, None] - lf[None, :]) - c * np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(gap, -np.inf)
    worst = float(gap.max()) if t.size > 1 else 0.0
    viol = None
    if worst > rtol:
        i, j = np.unravel_index(np.argmax(gap), gap.shape)
        viol = (float(t[i]), float(t[j]))
    return SmoothingResult(t, f, c, worst, viol)


# ---------------------------------------------------------------------------
# Duhamel backward problem

@dataclass
class DuhamelField:
    grid: Grid                 # padded box the field lives on
    inner: Grid                # box of interest
    times: Array
    values: Array              # shape (len(times),) + grid.shape
    theta: TestFunction
    t0: float
    form: str
    tail_amp: Array            # phi ~ tail_amp(t) K(x) far out (d = 1)

    def field(self, k: int, spec: LevyKernelSpec | None = None) -> Field:
        tail = None
        if spec is not None and self.grid.d == 1:
            a = float(self.tail_amp[k])
            tail = ExactTail(lambda p, a=a: a * eval_kernel(spec, np.asarray(p, float)))
        return Field(self.grid, self.values[k], tail)

    def inner_values(self, k: int) -> Array:
        return self.values[k][self.grid.crop_slices(self.inner)]


def _exp_product_weights(m: Array, ds: float) -> tuple[Array, Array, Array]:
    """Weights for int_0^ds e^{-m s} (f0 (1 - s/ds) + f1 s/ds) ds."""
    z = m * ds
    small = z < 1e-4
    zs = np.where(small, 1.0, z)
    e = np.exp(-z)
    w0 = np.where(small, ds * (0.5 - z / 6 + z * z / 24), ds * (1 - (1 - e) / zs) / zs)
    w1 = np.where(small, ds * (0.5 - z / 3 + z * z / 8), ds * ((1 - e) / zs - e) / zs)
    return e, w0, w1


def duhamel_backward(theta: TestFunction, spec: LevyKernelSpec, t0: float,
                     grid: Grid | None = None, times: Sequence[float] | None = None, *,
                     pad: int = 4, ds: float = 1e-3, form: str = "corrected") -> DuhamelField:
    """phi(., t) = -int_t^{t0} P_{s-t} * theta(., s) ds, solving d_t phi - L phi = theta.

    ``form='printed'`` returns int_0^{t0-t} P_{t0-t-s} * theta(., s) ds
    instead, which solves the equation with the source reflected in time.
    The s-integral uses exponential product integration of a piecewise
    linear time profile, mode by mode.
    """
    lo, hi = theta.window
    if hi > t0 + 1e-12:
        raise ValueError("theta must vanish for s >= t0")
    grid = grid or Grid.default(spec.d)
    big = grid.enlarge(pad)
    times = np.asarray(times if times is not None else np.linspace(0.0, t0, 9)[:-1], float)
    m = _dual_values(spec, big)
    psi = theta.bump.field(big).values
    psi_hat = np.fft.fftn(np.fft.ifftshift(psi)) * big.cell
    mass = float(psi.sum() * big.cell)
    n = int(np.ceil(t0 / ds))
    s = np.linspace(0.0, t0, n + 1)
    step = s[1] - s[0]
    eta_s = theta.time_factor(s)
    e, w0, w1 = _exp_product_weights(m, step)
    # J(s_k) = int_{s_k}^{t0} e^{-(s - s_k) m} eta(s) ds by backward recursion
    want = {int(round(t / step)): t for t in times}
    J = np.zeros_like(m)
    snaps = {}
    if n in want:
        snaps[n] = J.copy()
    for k in range(n - 1, -1, -1):
        J = e * J + w0 * eta_s[k] + w1 * eta_s[k + 1]
        if k in want:
            snaps[k] = J.copy()
    if form == "printed":
        # int_0^{t0-t} e^{-(t0-t-s) m} eta(s) ds: forward recursion from s = 0
        Jf = np.zeros_like(m)
        fsnap = {0: Jf.copy()}
        for k in range(1, n + 1):
            Jf = e * Jf + w1 * eta_s[k] + w0 * eta_s[k - 1]
            fsnap[k] = Jf.copy()
    vals, amps = [], []
    for t in times:
        k = int(round(t / step))
        if form == "printed":
            spec_hat = psi_hat * fsnap[n - k]
            sgn, tt = 1.0, t0 - t
            prof = lambda sv: theta.time_factor(sv) * (tt - sv) * (sv <= tt)
            a = sgn * mass * integrate.trapezoid(prof(s), s)
        elif form == "corrected":
            spec_hat = -psi_hat * snaps[k]
            a = -mass * integrate.trapezoid(theta.time_factor(s) * np.clip(s - t, 0, None), s)
        else:
            raise ValueError(f"unknown form {form!r}")
        v = np.real(np.fft.fftshift(np.fft.ifftn(spec_hat))) / big.cell
        vals.append(v)
        amps.append(a)
    return DuhamelField(big, grid, times, np.array(vals), theta, t0, form, np.array(amps))


@dataclass
class DuhamelCheck:
    residual: float            # sup |d_t phi - L phi - theta| on the trusted region
    bound: float               # fitted C with |phi| <= C P_1

    @property
    def passed(self) -> bool:
        return self.residual < 1e-2 and np.isfinite(self.bound)


def check_duhamel(phi: DuhamelField, spec: LevyKernelSpec, *, frac: float = 0.5,
                  dt: float = 1e-3, at: Sequence[float] | None = None) -> DuhamelCheck:
    """Backward-equation residual (central difference in t) and the P_1 bound."""
    th = phi.theta
    g = phi.inner
    mask = g.trusted_mask(frac)
    op = OperatorSpec.pure_jump(spec)
    P1 = kernel_fourier_inversion(spec, 1.0, g, nyquist_tol=RF_NYQUIST).values
    inner_pts = g.points() if g.d > 1 else g.axis
    res = 0.0
    at = list(at) if at is not None else [t for t in phi.times if dt < t < phi.t0 - dt]
    for t in at:
        trip = duhamel_backward(th, spec, phi.t0, g, [t - dt, t, t + dt],
                                pad=phi.grid.N // g.N, form=phi.form)
        dphi = (trip.inner_values(2) - trip.inner_values(0)) / (2 * dt)
        Lphi = apply_levy(op, trip.field(1, spec), check=False)
        Lphi = Lphi.values[phi.grid.crop_slices(g)]
        r = dphi - Lphi - th(inner_pts, t)
        res = max(res, float(np.max(np.abs(r[mask]))))
    bound = max(float(np.max(np.abs(phi.inner_values(k))[mask] / P1[mask]))
                for k in range(len(phi.times)))
    return DuhamelCheck(res, bound)


# ---------------------------------------------------------------------------
# minimality

@dataclass
class LowerBound:
    slack: float               # min over nodes/times of u - U (relative to max U)
    node: tuple | None

    @property
    def passed(self) -> bool:
        return self.node is None


def lower_bound_check(candidate: SolutionField, measure: RadonMeasure | None = None,
                      spec=None, *, tol: float = 1e-6) -> LowerBound:
    """U = solve_rf(measure) satisfies U <= u + tol * max U at every node and time."""
    measure = measure or candidate.measure
    spec = spec if spec is not None else candidate.spec
    U = solve_rf(measure, spec, candidate.times, candidate.grid)
    worst, node = np.inf, None
    for k, (u, V) in enumerate(zip(candidate.fields, U.fields)):
        scale = float(np.max(np.abs(V.values))) or 1.0
        diff = (u.values - V.values) / scale
        i = int(np.argmin(diff))
        if diff.flat[i] < worst:
            worst = float(diff.flat[i])
        if diff.flat[i] < -tol and node is None:
            idx = np.unravel_index(i, diff.shape)
            node = (float(candidate.times[k]),) + tuple(
                float(candidate.grid.axis[j]) for j in idx)
    return LowerBound(worst, node)


def combine(a: SolutionField, b: SolutionField, sa: float = 1.0, sb: float = 1.0) -> SolutionField:
    """sa * a + sb * b sample by sample (same grid and times)."""
    if a.grid != b.grid or not np.array_equal(a.times, b.times):
        raise ValueError("solutions must share grid and times")
    fields = [Field(a.grid, sa * u.values + sb * v.values) for u, v in zip(a.fields, b.fields)]
    return SolutionField(a.grid, a.times, fields, a.measure.scaled(sa) + b.measure.scaled(sb),
                         a.spec)
