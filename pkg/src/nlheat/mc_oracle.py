"""Monte Carlo simulation of the pure-jump Levy process with Levy measure K(y) dy.

Jumps with |y| > delta form a compound Poisson process; the jumps below
delta are either dropped or replaced by a centred Gaussian with the same
covariance.  Randomness comes from counter-based Philox streams keyed by
(seed, chunk) so results do not depend on how work is split.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate, ndimage

from .grid import Field, Grid
from .kernels import LevyKernelSpec, sphere_area
from .symbol import _small_ball_moment

Array = np.ndarray
CHUNK = 1 << 14          # samples per random stream
TABLE_NODES = 4096
FINE_CELLS = 1 << 18


@dataclass(frozen=True)
class SimulationPlan:
    spec: LevyKernelSpec
    t: float
    n: int = 1_000_000
    delta: float = 1e-3
    seed: int = 0
    small: str = "gaussian"          # or "drop"

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("horizon must be positive")
        if self.n < 10_000:
            raise ValueError("at least 10^4 samples are required")
        if not self.delta > 0:
            raise ValueError("truncation must be positive")
        if self.small not in ("gaussian", "drop"):
            raise ValueError("small jumps are either 'gaussian' or 'drop'")
        if not self.spec.radial:
            raise ValueError("the simulator needs a radial kernel")


# ---------------------------------------------------------------------------
# radial jump law

@dataclass
class JumpTable:
    """Inverse CDF of the jump radius given |y| > delta.

    ``lam`` is the jump intensity int_{|y|>delta} K.  The radius is a
    function of v = -log(tail fraction), tabulated on log-spaced radii and
    interpolated monotonically (PCHIP); beyond the table log r is extended
    linearly in v.
    """

    lam: float
    v: Array
    logr: Array
    fine: Array          # radii on a uniform v grid (fast lookup)
    dv: float
    slope: float

    def radius(self, v: Array) -> Array:
        v = np.asarray(v, dtype=float)
        out = np.exp(interpolate.PchipInterpolator(self.v, self.logr)(np.minimum(v, self.v[-1])))
        far = v > self.v[-1]
        if np.any(far):
            out[far] = np.exp(self.logr[-1] + self.slope * (v[far] - self.v[-1]))
        return out

    def sample(self, rng: np.random.Generator, m: int) -> Array:
        v = rng.standard_exponential(m, dtype=np.float32)
        idx = (v * np.float32(1.0 / self.dv)).astype(np.int32)
        big = idx >= self.fine.size
        np.minimum(idx, self.fine.size - 1, out=idx)
        r = self.fine[idx]
        if np.any(big):
            r[big] = self.radius(v[big].astype(float))
        return r


def _tail_masses(spec: LevyKernelSpec, r: Array) -> Array:
    """int_{|y| > r_k} K at increasing radii r_k (log-spaced)."""
    S = sphere_area(spec.d)
    dens = lambda s: S * s ** spec.d * spec.profile(s)            # d(mass)/d(log s)
    lr = np.log(r)
    sub = 8
    fine = np.linspace(lr[0], lr[-1], (r.size - 1) * sub + 1)
    vals = dens(np.exp(fine))
    cum = integrate.cumulative_simpson(vals[::-1], dx=fine[1] - fine[0], initial=0.0)[::-1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        R = r[-1]
        beyond = integrate.quad(lambda s: R * S * (R * s) ** (spec.d - 1)
                                * float(spec.profile(np.array([R * s]))[0]),
                                1.0, np.inf, limit=400, epsabs=0, epsrel=1e-10)[0]
    return cum[::sub] + beyond


@lru_cache(maxsize=32)
def jump_table(spec: LevyKernelSpec, delta: float) -> JumpTable:
    r_hi = delta * 1e6
    while True:
        r = np.geomspace(delta, r_hi, TABLE_NODES)
        tail = _tail_masses(spec, r)
        if tail[-1] / tail[0] < 1e-13 or r_hi > delta * 1e18:
            break
        r_hi *= 1e3
    lam = float(tail[0])
    keep = tail > 0
    v = -np.log(tail[keep] / lam)
    logr = np.log(r[keep])
    # strictly increasing in v for the interpolant
    ok = np.r_[True, np.diff(v) > 0]
    v, logr = v[ok], logr[ok]
    slope = float((logr[-1] - logr[-9]) / (v[-1] - v[-9]))
    vmax = min(float(v[-1]), 40.0)
    dv = vmax / FINE_CELLS
    centres = (np.arange(FINE_CELLS) + 0.5) * dv
    fine = np.exp(interpolate.PchipInterpolator(v, logr)(centres)).astype(np.float32)
    return JumpTable(lam, v, logr, fine, dv, slope)


def small_jump_variance(spec: LevyKernelSpec, delta: float) -> float:
    """Per-coordinate variance rate int_{|y|<=delta} y_1^2 K dy."""
    return _small_ball_moment(spec, 2, delta) / spec.d


# ---------------------------------------------------------------------------
# simulation

def _stream(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & (2 ** 64 - 1), chunk]))


def _simulate_chunk(plan: SimulationPlan, table: JumpTable, sigma: float, chunk: int,
                    size: int) -> Array:
    rng = _stream(plan.seed, chunk)
    d = plan.spec.d
    counts = rng.poisson(table.lam * plan.t, size)
    if d == 1:
        up = rng.binomial(counts, 0.5)
        seg = np.empty(2 * size, dtype=np.int64)
        seg[0::2], seg[1::2] = up, counts - up
        total = int(seg.sum())
        r = table.sample(rng, total) if total else np.zeros(0, np.float32)
        starts = np.r_[0, np.cumsum(seg)[:-1]]
        sums = np.zeros(2 * size)
        nz = seg > 0
        if total:
            sums[nz] = np.add.reduceat(r, starts[nz], dtype=np.float64)
        x = sums[0::2] - sums[1::2]
        if sigma > 0:
            x += sigma * rng.standard_normal(size)
        return x
    total = int(counts.sum())
    r = table.sample(rng, total).astype(float)
    z = rng.standard_normal((total, d))
    z *= (r / np.linalg.norm(z, axis=1))[:, None]
    owner = np.repeat(np.arange(size), counts)
    x = np.zeros((size, d))
    for a in range(d):
        x[:, a] = np.bincount(owner, weights=z[:, a], minlength=size)
    if sigma > 0:
        x += sigma * rng.standard_normal((size, d))
    return x


def simulate_levy(plan: SimulationPlan) -> Array:
    """Samples of X_t; shape (n,) in d = 1 and (n, d) otherwise."""
    table = jump_table(plan.spec, plan.delta)
    sigma = 0.0
    if plan.small == "gaussian":
        sigma = float(np.sqrt(plan.t * small_jump_variance(plan.spec, plan.delta)))
    parts = []
    n_chunks = -(-plan.n // CHUNK)
    for c in range(n_chunks):
        size = min(CHUNK, plan.n - c * CHUNK)
        parts.append(_simulate_chunk(plan, table, sigma, c, size))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# density estimates

@dataclass
class DensityEstimate:
    field: Field
    counts: Array          # per-node histogram counts
    n: int
    outside: int           # samples beyond the box
    bandwidth: float

    @property
    def inside_fraction(self) -> float:
        return 1.0 - self.outside / self.n


def _histogram(samples: Array, grid: Grid) -> tuple[Array, int]:
    s = np.asarray(samples, dtype=float)
    if grid.d == 1:
        s = s.reshape(-1, 1)
    idx = np.rint((s + grid.L) / grid.h).astype(np.int64)
    ok = np.all((idx >= 0) & (idx < grid.N), axis=1)
    flat = np.ravel_multi_index(tuple(idx[ok].T), grid.shape)
    counts = np.bincount(flat, minlength=grid.N ** grid.d).reshape(grid.shape)
    return counts, int((~ok).sum())


def _smooth(counts: Array, n: int, grid: Grid, bandwidth: float) -> Array:
    dens = counts / (n * grid.cell)
    sm = ndimage.gaussian_filter(dens, bandwidth / grid.h, mode="constant")
    inside = counts.sum() / n
    tot = sm.sum() * grid.cell
    return sm * (inside / tot) if tot > 0 else sm


def empirical_density(samples: Array, grid: Grid, bandwidth: float | None = None
                      ) -> DensityEstimate:
    """Histogram on the grid cells, Gaussian smoothing, in-box mass preserved."""
    bandwidth = 3 * grid.h if bandwidth is None else float(bandwidth)
    if bandwidth < grid.h * (1 - 1e-12):
        raise ValueError("bandwidth must be at least one grid spacing")
    counts, outside = _histogram(samples, grid)
    n = int(np.asarray(samples).shape[0])
    vals = _smooth(counts, n, grid, bandwidth)
    return DensityEstimate(Field(grid, vals), counts, n, outside, bandwidth)


@dataclass
class DensityComparison:
    distance: float
    ci: tuple
    boot: Array = field(repr=False, default=None)

    def exceeds(self, other: "DensityComparison") -> bool:
        """True when this distance lies above the other's confidence interval."""
        return self.distance > other.ci[1]


def compare_density(emp: DensityEstimate, reference: Field, *, n_boot: int = 200,
                    seed: int = 0) -> DensityComparison:
    """L1 distance on the box with a bootstrap 95% interval.

    The estimate depends on the samples only through the bin counts, so a
    bootstrap resample is a multinomial draw over (bins, outside).
    """
    g = emp.field.grid
    if reference.grid != g:
        raise ValueError("reference lives on a different grid")
    ref = reference.values
    dist = float(np.sum(np.abs(emp.field.values - ref)) * g.cell)
    p = np.r_[emp.counts.ravel(), emp.outside] / emp.n
    rng = np.random.default_rng(seed)
    boot = np.empty(n_boot)
    for b in range(n_boot):
        c = rng.multinomial(emp.n, p)
        sm = _smooth(c[:-1].reshape(g.shape), emp.n, g, emp.bandwidth)
        boot[b] = np.sum(np.abs(sm - ref)) * g.cell
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return DensityComparison(dist, (float(lo), float(hi)), boot)


# ---------------------------------------------------------------------------
# studies

def oracle_check(spec: LevyKernelSpec, t: float = 1.0, grid: Grid | None = None, *,
                 n: int = 1_000_000, delta: float = 1e-3, seed: int = 0,
                 small: str = "gaussian", reference: Field | None = None,
                 wrong_time: bool = True) -> dict:
    """Simulate, estimate the density and compare with the Fourier kernel."""
    from .heat_kernel import kernel_fourier_inversion
    grid = grid or Grid.default(spec.d)
    plan = SimulationPlan(spec, t, n, delta, seed, small)
    samples = simulate_levy(plan)
    emp = empirical_density(samples, grid)
    ref = reference if reference is not None else kernel_fourier_inversion(spec, t, grid)
    cmp = compare_density(emp, ref, seed=seed)
    out = {"distance": cmp.distance, "ci": cmp.ci, "n": n, "delta": delta,
           "lambda": jump_table(spec, delta).lam, "samples_mean": float(np.mean(samples))}
    if wrong_time:
        wrong = compare_density(emp, kernel_fourier_inversion(spec, 2 * t, grid), seed=seed)
        out["wrong_time_distance"] = wrong.distance
        out["wrong_time_exceeds"] = wrong.exceeds(cmp)
    return out


def convergence_study(spec: LevyKernelSpec, t: float = 1.0, grid: Grid | None = None,
                      ns=(10_000, 100_000, 1_000_000), **kw) -> dict:
    """L1 distance to the Fourier kernel as the sample count grows."""
    from .heat_kernel import kernel_fourier_inversion
    grid = grid or Grid.default(spec.d)
    ref = kernel_fourier_inversion(spec, t, grid)
    out = {}
    for n in ns:
        r = oracle_check(spec, t, grid, n=n, reference=ref, wrong_time=False, **kw)
        out[n] = r["distance"]
    return out


def convolution_check(spec: LevyKernelSpec, reference: Field, t: float = 1.0, *,
                      sigma: float = 1.0, wrong: Field | None = None, n: int = 1_000_000,
                      delta: float = 1e-3, seed: int = 0) -> dict:
    """Density of X_t + Z, Z ~ N(0, sigma^2 I), against a solution field.

    ``reference`` is U(., t) for Gaussian initial data; ``wrong`` is an
    optional field that the samples should reject.
    """
    grid = reference.grid
    plan = SimulationPlan(spec, t, n, delta, seed)
    x = simulate_levy(plan)
    # the Gaussian shift gets its own stream, keyed past any chunk index
    z = _stream(seed, 1 << 40).standard_normal(x.shape) * sigma
    emp = empirical_density(x + z, grid)
    cmp = compare_density(emp, reference, seed=seed)
    out = {"distance": cmp.distance, "ci": cmp.ci, "n": n,
           "passed": cmp.distance <= cmp.ci[1]}
    if wrong is not None:
        w = compare_density(emp, wrong, seed=seed)
        out["wrong_distance"] = w.distance
        out["wrong_exceeds"] = w.exceeds(cmp)
    return out
