"""Heat kernels P_t = F^{-1}(exp(-t m)) and the kernel-level estimates.

Conventions: P_t(x) = (2 pi)^{-d} int exp(-t m(xi)) exp(-i <x, xi>) dxi, so every
kernel is a probability density.  The Fourier route works on a padded box
(same spacing, ``pad`` times wider) and crops; the periodic images then sit
``2 pad L`` away and the padding annulus supplies the exterior mass and the
data for the tail model attached to the cropped field.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, signal, special

from .grid import Grid, KernelField, Field, TailModel, ExactTail
from .kernels import LevyKernelSpec, fractional
from .symbol import SymbolField, symbol_grid, symbol_eval

Array = np.ndarray

SEMIGROUP_FLOOR = 1e-10   # L1 resolution of symbol tables built at rtol 1e-9
DEFAULT_PAD = {1: 8, 2: 2, 3: 1}


class NyquistError(ValueError):
    """exp(-t m) has not decayed at the Nyquist frequency."""

    def __init__(self, ratio: float, suggested_N: int | None):
        self.ratio = ratio
        self.suggested_N = suggested_N
        hint = f"; try N >= {suggested_N}" if suggested_N else ""
        super().__init__(f"exp(-t m) at Nyquist is {ratio:.3g} of its peak{hint}")


# ---------------------------------------------------------------------------
# symbols on dual grids

def _dual_values(symbol, grid: Grid) -> Array:
    """m on the dual grid of ``grid`` (FFT order) from a spec, field or callable."""
    if isinstance(symbol, LevyKernelSpec):
        return symbol_grid(symbol, grid).values
    if isinstance(symbol, SymbolField):
        if symbol.grid != grid:
            raise ValueError("symbol field lives on a different grid")
        return symbol.values
    if isinstance(symbol, (list, tuple)):
        # anisotropic: one spec per axis block, in order
        return product_symbol(symbol)(grid)
    if callable(symbol):
        return np.asarray(symbol(grid.dual_mesh()), dtype=float)
    raise TypeError(f"cannot interpret {type(symbol).__name__} as a symbol")


def product_symbol(specs: Sequence[LevyKernelSpec]) -> Callable[[Grid], Array]:
    """m(xi) = sum_j m_j(xi_j) for kernels acting on consecutive axis blocks."""
    def m(grid: Grid) -> Array:
        if sum(s.d for s in specs) != grid.d:
            raise ValueError("block dimensions do not add up to the grid dimension")
        out = np.zeros(grid.shape)
        k0 = 0
        for s in specs:
            sub = Grid(s.d, grid.N, grid.L)
            mj = symbol_grid(s, sub).values
            idx = [None] * grid.d
            for a in range(s.d):
                idx[k0 + a] = slice(None)
            out = out + mj.reshape([grid.N if i is not None else 1 for i in idx])
            k0 += s.d
        return out
    return m


def _spec_of(symbol) -> LevyKernelSpec | None:
    if isinstance(symbol, LevyKernelSpec):
        return symbol
    return getattr(symbol, "spec", None)


def _nyquist_ratio(decay: Array) -> float:
    """Largest value of exp(-t m) on the dual box boundary (peak is 1)."""
    n = decay.shape[0]
    worst = 0.0
    for ax in range(decay.ndim):
        worst = max(worst, float(np.max(np.take(decay, n // 2, axis=ax))))
    return worst


def _suggest_N(symbol, grid: Grid, t: float, tol: float, extra_laplacian: bool) -> int | None:
    spec = _spec_of(symbol)
    if spec is None:
        return None
    for k in (2, 4, 8, 16, 32, 64):
        w = k * grid.nyquist
        e = np.zeros(spec.d)
        e[0] = w
        m = symbol_eval(spec, e).value + (w * w if extra_laplacian else 0.0)
        if np.exp(-t * m) < tol:
            return grid.N * k
    return None


def _symbol_noise(symbol, grid: Grid, t: float, decay: Array) -> float:
    """Bound on sup |delta P_t| from the symbol's achieved quadrature tolerance.

    delta P ~ F^-1(t delta m exp(-t m)); zero when no tabulated symbol is used.
    """
    from .symbol import symbol_table
    spec = symbol if isinstance(symbol, LevyKernelSpec) else None
    if spec is None or not (spec.radial or spec.d == 1):
        return 0.0
    tab = symbol_table(spec)
    dm = tab.tol_at(grid.dual_radius())
    return float(np.sum(t * dm * decay) / (2 * grid.L) ** grid.d)


def _invert(decay: Array, grid: Grid) -> Array:
    """Node values of (2 pi)^-d sum exp(-t m) e^{-i x xi} dxi (periodised)."""
    vals = np.fft.ifftn(decay).real / grid.cell
    return np.fft.fftshift(vals)


class _Basis:
    """amp(x) cos(nu x_1): a smooth amplitude with an optional carrier."""

    def __init__(self, amp, nu: float, first):
        self.amp, self.nu, self.first = amp, nu, first

    def __call__(self, x):
        a = self.amp(x)
        return a if self.nu == 0 else a * np.cos(self.nu * self.first(x))


def _tail_basis(spec: LevyKernelSpec, d: int, rich: bool) -> list:
    """Functions spanning the large-|x| behaviour of P_t.

    P_t ~ t K to first order; the corrections used here are K r^-q for
    q in {b1, 2 b1, 2} and K r^-2 log r.  Oscillating kernels get one
    term per harmonic of the modulation instead of K itself.
    """
    b1 = spec.scale.beta1

    def rad(x):
        x = np.asarray(x, dtype=float)
        if d == 1:
            return np.abs(x[..., 0] if (x.ndim > 1 and x.shape[-1] == 1) else x)
        return np.linalg.norm(x, axis=-1)

    def first(x):
        x = np.asarray(x, dtype=float)
        return x if d == 1 and not (x.ndim > 1 and x.shape[-1] == 1) else x[..., 0]

    if "osc" in spec.extra:
        th = spec.extra["osc"](None)
        env = lambda x: spec.envelope(rad(x))  # noqa: E731
        if not rich:
            return [_Basis(env, 0.0, first)]
        out = []
        for n in range(4):
            for q in (0.0, b1):
                out.append(_Basis(lambda x, q=q: env(x) * rad(x) ** (-q), n * th, first))
        return out
    leads = [(spec.evaluator, 0.0)]
    if rich:
        corr = [lambda r, q=q: r ** (-q) for q in (b1, 2 * b1, 2.0)]
        corr.append(lambda r: r ** -2.0 * np.log(r))
        amp0 = leads[0][0]
        leads = leads + [(lambda x, c=c: amp0(x) * c(rad(x)), 0.0) for c in corr]
    return [_Basis(a, nu, first) for a, nu in leads]


def _image_sum(b: _Basis, x: Array, period: float, M: int = 512, n_coarse: int = 2049) -> Array:
    """sum_{n != 0} b(x + n period) for 1-d x.

    The image sums of the amplitude are smooth on the scale of the period,
    so they are formed on ``n_coarse`` points and splined.  Images beyond M
    are replaced by an integral of the local power law (non-oscillating
    terms only; oscillating remainders average out).
    """
    from scipy.interpolate import CubicSpline
    xs = np.linspace(x.min(), x.max(), n_coarse) if x.size > n_coarse else x
    k = np.arange(1, M + 1)
    sc = np.zeros_like(xs)
    ss = np.zeros_like(xs)
    for sgn in (1.0, -1.0):
        sh = sgn * k[:, None] * period
        a = b.amp(xs[None, :] + sh)
        if b.nu == 0:
            sc += a.sum(axis=0)
        else:
            sc += (a * np.cos(b.nu * sh)).sum(axis=0)
            ss += (a * np.sin(b.nu * sh)).sum(axis=0)
        if b.nu == 0:
            r0 = np.abs(xs + sgn * (M + 0.5) * period)
            fa, f2 = b.amp(r0), b.amp(2 * r0)
            with np.errstate(divide="ignore", invalid="ignore"):
                p = np.log(fa / f2) / np.log(2.0)
                sc += np.where(p > 1, r0 * fa / (p - 1), 0.0) / period
    if xs is not x:
        sc = CubicSpline(xs, sc)(x)
        ss = CubicSpline(xs, ss)(x) if b.nu else ss
    if b.nu == 0:
        return sc
    return sc * np.cos(b.nu * x) - ss * np.sin(b.nu * x)


def _fit_tail(spec: LevyKernelSpec | None, big: Grid, full: Array, grid: Grid):
    """Tail model fitted on the padding annulus, images included.

    In d = 1 the periodic images of each basis function are part of the fit,
    so the fitted model also gives the alias correction for the box values.
    Returns (tail, alias) with alias None where no correction is made.
    """
    if spec is None:
        return None, None
    if big.d == 1 and big.N > grid.N:
        x = big.axis
        sel = (np.abs(x) >= grid.L) & (np.abs(x) <= 0.75 * big.L)
        xs = x[sel]
        v = full[sel]
        basis = _tail_basis(spec, 1, True)
        P = 2 * big.L
        images = [_image_sum(b, x, P) for b in basis]
        A = np.stack([(b(xs) + im[sel]) / v for b, im in zip(basis, images)], axis=1)
        coef, *_ = np.linalg.lstsq(A, np.ones(len(xs)), rcond=1e-12)
        resid = float(np.max(np.abs(A @ coef - 1)))
        tail = TailModel(basis, coef, resid)
        alias = sum(c * im for c, im in zip(coef, images))
        return tail, alias
    pts = big.points().reshape(-1, big.d)
    rinf = np.max(np.abs(pts), axis=1)
    if big.N > grid.N:
        sel = (rinf >= grid.L) & (rinf < min(2 * grid.L, big.L / 2))
    else:
        sel = (rinf >= 0.75 * grid.L) & (rinf < grid.L)
    v = full.reshape(-1)[sel]
    p = pts[sel] if big.d > 1 else pts[sel, 0]
    ok = v > 0
    if ok.sum() < 4:
        return None, None
    basis = _tail_basis(spec, big.d, False)
    A = np.stack([b(p[ok]) / v[ok] for b in basis], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.ones(ok.sum()), rcond=1e-12)
    return TailModel(basis, coef, float(np.max(np.abs(A @ coef - 1)))), None


def _tail_mass(tail: TailModel, R: float) -> float:
    """int_{|x| > R} tail(x) dx in d = 1, term by term (carriers by QAWF)."""
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for c, b in zip(tail.coef, tail.basis):
            sc = float(R * b.amp(np.array([[R]]))[0]) or 1.0
            f = lambda x: float(b.amp(np.array([[x]]))[0]) / sc  # noqa: E731
            if b.nu == 0:
                v, _ = integrate.quad(lambda s: R * f(R * s), 1.0, np.inf, limit=500)
            else:
                v, _ = integrate.quad(f, R, np.inf, weight="cos", wvar=b.nu, limlst=200)
            total += c * v * sc
    return 2.0 * total


def kernel_fourier_inversion(symbol, t: float, grid: Grid | None = None, *,
                             pad: int | None = None, laplacian: bool = False,
                             nyquist_tol: float = 1e-12,
                             provenance: str = "fourier") -> KernelField:
    """P_t on ``grid`` by discrete Fourier inversion of exp(-t m).

    ``symbol`` is a LevyKernelSpec, a SymbolField on ``grid``, a list of
    specs (anisotropic sum over axis blocks) or a callable of the dual mesh.
    ``laplacian`` adds |xi|^2 (the mixed operator).  The transform runs on a
    box ``pad`` times wider at the same spacing and is cropped; the mass
    beyond the box is taken from the padding annulus.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if isinstance(symbol, SymbolField):
        grid = grid or symbol.grid
        pad = 1
    if grid is None:
        spec = _spec_of(symbol)
        grid = Grid.default(spec.d if spec is not None else 1)
    pad = pad or DEFAULT_PAD.get(grid.d, 1)
    big = grid.enlarge(pad) if pad > 1 else grid
    m = _dual_values(symbol, big)
    if laplacian:
        m = m + big.dual_radius() ** 2
    decay = np.exp(-t * m)
    ratio = _nyquist_ratio(decay)
    if ratio > nyquist_tol:
        raise NyquistError(ratio, _suggest_N(symbol, big, t, nyquist_tol, laplacian))
    full = _invert(decay, big)
    noise = _symbol_noise(symbol, big, t, decay)
    inner = big.crop_slices(grid) if pad > 1 else tuple(slice(None) for _ in range(grid.d))
    vals = full[inner].copy()
    spec = _spec_of(symbol)
    tail, alias = (_fit_tail(spec, big, full, grid) if not isinstance(symbol, (list, tuple))
                   else (None, None))
    if alias is not None:
        # de-aliased padded field; mass beyond it from the tail model
        full = full - alias
        vals = full[inner].copy()
        ext = float(full.sum() * big.cell - vals.sum() * grid.cell) + _tail_mass(tail, big.L)
    else:
        ext = float(full.sum() * big.cell - vals.sum() * grid.cell)
    return KernelField(grid, vals, tail, t=t, provenance=provenance, periodic=(pad == 1),
                       exterior_mass=ext,
                       meta={"pad": pad, "nyquist_ratio": ratio, "laplacian": laplacian,
                             "noise": noise,
                             "padded": Field(big, full, tail)})


def time_derivative(symbol, t: float, grid: Grid | None = None, *, pad: int | None = None,
                    laplacian: bool = False) -> Field:
    """d/dt P_t = F^{-1}(-m exp(-t m)) evaluated spectrally on the padded box."""
    spec = _spec_of(symbol)
    grid = grid or Grid.default(spec.d if spec else 1)
    pad = pad or DEFAULT_PAD.get(grid.d, 1)
    big = grid.enlarge(pad) if pad > 1 else grid
    m = _dual_values(symbol, big)
    if laplacian:
        m = m + big.dual_radius() ** 2
    full = _invert(-m * np.exp(-t * m), big)
    inner = big.crop_slices(grid) if pad > 1 else tuple(slice(None) for _ in range(grid.d))
    tail = None
    if not isinstance(symbol, (list, tuple)):
        # the derivative has a K-like tail too; remove its periodic images
        tail, alias = _fit_tail(spec, big, full, grid)
        if alias is not None:
            full = full - alias
    return Field(grid, full[inner].copy(), tail)


# ---------------------------------------------------------------------------
# closed-form and subordination routes

def gaussian_kernel(t: float, grid: Grid | None = None) -> KernelField:
    """G_t(x) = (4 pi t)^{-d/2} exp(-|x|^2 / 4t), the kernel of -Laplacian."""
    if not t > 0:
        raise ValueError("t must be positive")
    grid = grid or Grid.default(1)
    d = grid.d

    def G(pts):
        pts = np.asarray(pts, dtype=float)
        r2 = pts ** 2 if (d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1)) \
            else np.sum(pts ** 2, axis=-1)
        return (4 * np.pi * t) ** (-d / 2) * np.exp(-r2 / (4 * t))

    vals = (4 * np.pi * t) ** (-d / 2) * np.exp(-grid.radius() ** 2 / (4 * t))
    ext = 1.0 - special.erf(grid.L / (2 * np.sqrt(t))) ** d
    return KernelField(grid, vals, ExactTail(G), t=t, provenance="gaussian",
                       exterior_mass=float(ext))


def _mu1_density(s):
    """Density of the subordinating measure for alpha = 1."""
    return (4 * np.pi) ** -0.5 * s ** -1.5 * np.exp(-0.25 / s)


def subordinated_profile(r: Array, d: int = 1) -> Array:
    """P_1(r) = int_0^inf G(r, s) dmu_1(s) by adaptive quadrature in log s.

    Each radius is integrated in u = log(s / s_r), centred on the peak s_r of
    its integrand and scaled by the integrand there, so all components of the
    vector quadrature have comparable size.
    """
    r = np.asarray(r, dtype=float)
    flat = r.reshape(-1)
    sr = (1.0 + flat ** 2) / (2.0 * (d + 2))

    def f_at(s, rr):
        return (4 * np.pi * s) ** (-d / 2) * np.exp(-rr ** 2 / (4 * s)) * _mu1_density(s) * s

    scale = f_at(sr, flat)

    def f(u):
        s = sr * np.exp(u)
        return f_at(s, flat) / scale

    val, err = integrate.quad_vec(f, -60.0, 60.0, epsrel=1e-12, epsabs=0, limit=2000,
                                  points=[-5.0, 0.0, 5.0])
    if not np.all(np.isfinite(val)):
        raise FloatingPointError("subordination quadrature did not converge")
    return (val * scale).reshape(r.shape)


def _subordinated_exterior(Lbox: float, d: int) -> float:
    """Mass of P_1 outside [-Lbox, Lbox]^d: int mu_1(ds) P(|Gaussian_s|_inf > Lbox)."""
    def f(u):
        s = np.exp(u)
        return (1 - special.erf(Lbox / (2 * np.sqrt(s))) ** d) * _mu1_density(s) * s

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v, _ = integrate.quad(f, -40, 80, limit=500, epsabs=0, epsrel=1e-12,
                              points=[2 * np.log(Lbox) - 3, 2 * np.log(Lbox) + 3])
    return float(v)


def subordinated_fractional_kernel(t: float = 1.0, grid: Grid | None = None,
                                   alpha: float = 1.0) -> KernelField:
    """Fractional kernel for alpha = 1 through the Gaussian mixture over mu_1.

    t != 1 uses P_t(x) = t^{-d} P_1(x / t).
    """
    if alpha != 1.0:
        raise ValueError("only alpha = 1 has a closed-form subordinator; "
                         "use kernel_fourier_inversion")
    if not t > 0:
        raise ValueError("t must be positive")
    grid = grid or Grid.default(1)
    d = grid.d
    rad = grid.radius()
    u, inv = np.unique(np.round(rad / t, 12), return_inverse=True)
    vals = (subordinated_profile(u, d)[inv]).reshape(rad.shape) * t ** (-d)

    def tail(pts):
        pts = np.asarray(pts, dtype=float)
        r = np.abs(pts) if (d == 1 and (pts.ndim <= 1)) else np.linalg.norm(pts, axis=-1)
        return subordinated_profile(r / t, d) * t ** (-d)

    ext = _subordinated_exterior(grid.L / t, d)
    return KernelField(grid, vals, ExactTail(tail), t=t, provenance="subordination",
                       exterior_mass=ext)


# ---------------------------------------------------------------------------
# products and mixed operator

def anisotropic_kernel(specs: Sequence[LevyKernelSpec], t: float, grid: Grid | None = None,
                       pad: int | None = None, nyquist_tol: float = 1e-12) -> KernelField:
    """Tensor product of the block kernels P^j_t(x_j) on a common grid."""
    d = sum(s.d for s in specs)
    grid = grid or Grid.default(d)
    if grid.d != d:
        raise ValueError(f"block dimensions sum to {d}, grid has d={grid.d}")
    factors = [kernel_fourier_inversion(s, t, Grid(s.d, grid.N, grid.L), pad=pad,
                                        nyquist_tol=nyquist_tol) for s in specs]
    vals = factors[0].values
    for f in factors[1:]:
        vals = np.multiply.outer(vals, f.values)
    box = [f.integral() for f in factors]
    tot = [f.mass for f in factors]
    ext = float(np.prod(tot) - np.prod(box))
    dims = [s.d for s in specs]

    def tail(pts):
        pts = np.asarray(pts, dtype=float)
        out, k = 1.0, 0
        for f, dj in zip(factors, dims):
            blk = pts[..., k:k + dj]
            out = out * f.evaluate(blk if dj > 1 else blk[..., 0])
            k += dj
        return out

    return KernelField(grid, vals, tail, t=t, provenance="product",
                       periodic=all(f.periodic for f in factors), exterior_mass=ext,
                       meta={"factors": factors})


def mixed_kernel(spec: LevyKernelSpec, t: float, grid: Grid | None = None,
                 pad: int | None = None) -> KernelField:
    """Kernel of -Laplacian + L_K: exp(-t(m + |xi|^2)), i.e. P^K_t * G_t."""
    return kernel_fourier_inversion(spec, t, grid, pad=pad, laplacian=True,
                                    provenance="convolution")


def spatial_convolution(a: Field, b: Field) -> Array:
    """(a * b) on a's grid by linear (non-periodic) convolution of the samples."""
    g = a.grid
    full = signal.fftconvolve(a.values, b.values, mode="full") * g.cell
    off = b.grid.N // 2
    sl = tuple(slice(off, off + g.N) for _ in range(g.d))
    return full[sl]


# ---------------------------------------------------------------------------
# checks

def kernel_builder(spec, laplacian: bool = False, pad: int | None = None):
    """(t, grid) -> KernelField for a spec, list of specs or 'gaussian'."""
    if spec == "gaussian":
        return lambda t, g: gaussian_kernel(t, g)
    if isinstance(spec, (list, tuple)):
        return lambda t, g: anisotropic_kernel(spec, t, g, pad)
    return lambda t, g: kernel_fourier_inversion(spec, t, g, pad=pad, laplacian=laplacian)


def _as_builder(builder, spec):
    if builder is None:
        return kernel_builder(spec)
    return builder if callable(builder) else kernel_builder(builder)


@dataclass
class SemigroupResult:
    l1_error: float
    commutation_error: float
    errors: list = field(default_factory=list)     # one per box size
    decreasing: bool = True
    noise_floor: float = 0.0
    quadrature_bound: float = 0.0


def _trusted_l1(grid: Grid, diff: Array, frac: float = 0.5) -> float:
    return float(np.sum(np.abs(diff[grid.trusted_mask(frac)])) * grid.cell)


def _semigroup_once(spec, t, s, grid, pad, laplacian):
    Pt = kernel_fourier_inversion(spec, t, grid, pad=pad, laplacian=laplacian)
    Ps = Pt if s == t else kernel_fourier_inversion(spec, s, grid, pad=pad, laplacian=laplacian)
    Pts = kernel_fourier_inversion(spec, t + s, grid, pad=pad, laplacian=laplacian)
    A, B = Pt.meta["padded"], Ps.meta["padded"]
    ab = spatial_convolution(A, B)
    ba = spatial_convolution(B, A)
    big = A.grid
    inner = big.crop_slices(grid) if big.N > grid.N else tuple(slice(None) for _ in range(grid.d))
    err = _trusted_l1(grid, ab[inner] - Pts.values)
    com = _trusted_l1(grid, ab[inner] - ba[inner])
    # error attributable to the symbol quadrature alone
    vol = float(np.sum(grid.trusted_mask(0.5)) * grid.cell)
    floor = vol * (Pt.meta["noise"] + Ps.meta["noise"] + Pts.meta["noise"])
    return err, com, floor


def check_semigroup(spec, t: float, s: float, grid: Grid | None = None, *,
                    pad: int | None = None, laplacian: bool = False,
                    refinements: int = 1) -> SemigroupResult:
    """L1 distance of P_t * P_s to P_{t+s} on the trusted region |x| <= L/2.

    The convolution is linear (no wrap-around) on the padded fields.
    ``refinements`` repeats the check on boxes doubled at fixed spacing.
    """
    if not (t > 0 and s > 0):
        raise ValueError("times must be positive")
    spec0 = spec[0] if isinstance(spec, (list, tuple)) else spec
    grid = grid or Grid.default(spec0.d)
    errs, coms, floors = [], [], []
    g = grid
    for _ in range(refinements + 1):
        e, c, f = _semigroup_once(spec, t, s, g, pad, laplacian)
        errs.append(e)
        coms.append(c)
        floors.append(f)
        g = g.enlarge(2)
    # changes below the resolution of the tabulated symbol are not resolvable;
    # the per-node quadrature bound (floors) is pessimistic so it is only reported
    floor = SEMIGROUP_FLOOR
    dec = all(b < a or max(a, b) <= floor for a, b in zip(errs, errs[1:]))
    return SemigroupResult(errs[0], coms[0], errs, dec, floor, max(floors))


@dataclass
class Envelope:
    """Fitted two-sided constant C with C^-1 <= ratio <= C."""

    C: float
    sup: float
    inf: float
    refined_C: float | None = None
    change: float | None = None
    finite: bool = True
    stable: bool = True
    where: tuple | None = None
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.finite and self.stable


def _env_from(ratios: Array) -> tuple[float, float, float]:
    ratios = np.asarray(ratios, float)
    with np.errstate(divide="ignore"):
        sup, inf = float(np.max(ratios)), float(np.min(ratios))
        C = max(sup, 1.0 / inf if inf > 0 else np.inf)
    return C, sup, inf


def _stabilise(fn, grid: Grid, refine: bool, tol: float) -> Envelope:
    C, sup, inf = fn(grid)
    env = Envelope(C, sup, inf, finite=bool(np.isfinite(C)))
    if refine:
        C2, _, _ = fn(grid.enlarge(2))
        env.refined_C = C2
        env.change = abs(C2 / C - 1) if np.isfinite(C) and np.isfinite(C2) else np.inf
        env.stable = bool(env.change < tol)
    return env


def _radius_of(pts, d):
    return np.abs(pts[..., 0]) if d == 1 else np.linalg.norm(pts, axis=-1)


def check_kernel_levy_comparability(spec, times=(0.5, 2.0), grid: Grid | None = None, *,
                                    builder=None, kernel: LevyKernelSpec | None = None,
                                    n_times: int = 4, refine: bool = True,
                                    tol: float = 0.05) -> Envelope:
    """C with C^-1 K <= P_t <= C K on 1 <= |x| <= L/2 for t in [eps, T]."""
    K = kernel or (spec if isinstance(spec, LevyKernelSpec) else None)
    if K is None:
        raise ValueError("a Levy kernel is needed for the comparison")
    build = _as_builder(builder, spec)
    grid = grid or Grid.default(K.d)
    if grid.L < 8:
        raise ValueError("comparability needs a half-width L >= 8")
    ts = np.geomspace(times[0], times[1], n_times)

    def fn(g):
        pts = g.points().reshape(-1, g.d)
        r = _radius_of(pts, g.d)
        sel = (r >= 1) & (r <= g.L / 2)
        kx = K.evaluator(pts[sel] if g.d > 1 else pts[sel, 0])
        ratios = np.concatenate([build(t, g).values.reshape(-1)[sel] / kx for t in ts])
        return _env_from(ratios)

    return _stabilise(fn, grid, refine, tol)


def check_time_comparability(spec, t: float, s: float, grid: Grid | None = None, *,
                             builder=None, refine: bool = True, tol: float = 0.05) -> Envelope:
    """C with C^-1 P_t <= P_s <= C P_t over the whole box."""
    build = _as_builder(builder, spec)
    d = spec[0].d if isinstance(spec, (list, tuple)) else getattr(spec, "d", 1)
    grid = grid or Grid.default(d)

    def fn(g):
        a = build(t, g).values
        b = a if s == t else build(s, g).values
        return _env_from(np.r_[(b / a).ravel()])

    env = _stabilise(fn, grid, refine, tol)
    env.C = max(env.sup, 1 / env.inf)
    return env


def check_mixed_comparability(spec: LevyKernelSpec, times=(0.5, 2.0), grid: Grid | None = None,
                              *, n_times: int = 4, refine: bool = True, frac: float = 0.5,
                              tol: float = 0.05) -> Envelope:
    """C with C^-1 P^K_t <= P_t <= C P^K_t for the kernel of -Laplacian + L_K."""
    grid = grid or Grid.default(spec.d)
    ts = np.geomspace(times[0], times[1], n_times)

    def fn(g):
        mask = g.trusted_mask(frac)
        ratios = [(mixed_kernel(spec, t, g).values / kernel_fourier_inversion(spec, t, g).values)
                  [mask] for t in ts]
        return _env_from(np.concatenate(ratios))

    return _stabilise(fn, grid, refine, tol)


def _radial_samples(f: Field, r: Array, ndir: int = 8) -> Array:
    """Field values at radii ``r`` along ``ndir`` directions; shape (ndir, len(r))."""
    d = f.grid.d
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(12345)
        z = rng.standard_normal((ndir, d))
        dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
    pts = r[None, :, None] * dirs[:, None, :]
    return f.evaluate(pts if d > 1 else pts[..., 0])


def check_slowly_changing(fld: Field, rho1: float, rho2: float, *, n: int = 400,
                          r_max: float | None = None) -> Envelope:
    """C_{rho1,rho2} = max f(x)/f(y) over sampled pairs with rho1 <= |y|/|x| <= rho2."""
    if not 0 < rho1 <= rho2:
        raise ValueError("need 0 < rho1 <= rho2")
    g = fld.grid
    r_max = r_max or g.L / 2
    r = np.geomspace(g.h, r_max, n)
    if rho1 == rho2 == 1.0:
        r_pairs = [(r, r)]
    else:
        r_pairs = None
    vals = _radial_samples(fld, r)           # (ndir, n)
    lo = np.log(rho1) - 1e-12
    hi = np.log(rho2) + 1e-12
    lr = np.log(r)
    band = (lr[None, :] - lr[:, None] >= lo) & (lr[None, :] - lr[:, None] <= hi)
    if r_pairs is not None and not band.any():
        band = np.eye(n, dtype=bool)
    # pairs (x, y) across all direction combinations
    vmax = vals.max(axis=0)
    vmin = vals.min(axis=0)
    with np.errstate(divide="ignore", over="ignore"):
        up = vmax[:, None] / vmin[None, :]
        dn = vmin[:, None] / vmax[None, :]
    C = float(np.max(up[band]))
    inf = float(np.min(dn[band]))
    return Envelope(max(C, 1 / inf if inf > 0 else np.inf), C, inf,
                    finite=bool(np.isfinite(C) and inf > 0))


def check_almost_decreasing(fld: Field, *, n: int = 600, r_max: float | None = None) -> Envelope:
    """C = max P(z)/P(x) over sampled |x| <= |z|."""
    g = fld.grid
    r_max = r_max or g.L / 2
    r = np.r_[0.0, np.geomspace(g.h / 4, r_max, n)]
    vals = _radial_samples(fld, r)
    vmax = vals.max(axis=0)
    vmin = np.minimum.accumulate(vals.min(axis=0))
    C = float(np.max(vmax / vmin))
    return Envelope(C, C, 1.0, finite=bool(np.isfinite(C)))


def check_translation_bound(fld: Field, R: float, *, max_shifts: int = 200) -> Envelope:
    """C_R = max P(y - x)/P(y) over |x| <= R (grid shifts) and trusted y."""
    g = fld.grid
    k = int(np.floor(R / g.h + 1e-9))
    if g.d == 1:
        shifts = np.arange(-k, k + 1)[:, None]
    else:
        ax = np.arange(-k, k + 1)
        mesh = np.stack(np.meshgrid(*([ax] * g.d), indexing="ij"), -1).reshape(-1, g.d)
        shifts = mesh[np.linalg.norm(mesh, axis=1) * g.h <= R + 1e-12]
    if len(shifts) > max_shifts:
        idx = np.linspace(0, len(shifts) - 1, max_shifts).round().astype(int)
        shifts = np.unique(np.r_[shifts[idx], np.zeros((1, g.d), int)], axis=0)
    mask = g.trusted_mask(0.5)
    base = fld.values[mask]
    idx = np.argwhere(mask)
    C = 1.0
    for sh in shifts:
        j = idx - sh
        ok = np.all((j >= 0) & (j < g.N), axis=1)
        moved = fld.values[tuple(j[ok].T)]
        C = max(C, float(np.max(moved / base[ok])))
    return Envelope(C, C, 1.0, finite=bool(np.isfinite(C)))


# ---------------------------------------------------------------------------
# derivatives

_D1 = np.array([1, -8, 0, 8, -1]) / 12.0
_D2 = np.array([-1, 16, -30, 16, -1]) / 12.0


def fd_derivative(values: Array, h: float, axis: int, order: int = 1) -> Array:
    """Fourth-order central differences; the two outer layers are left as nan."""
    st = _D1 if order == 1 else _D2
    v = np.moveaxis(values, axis, 0)
    out = np.full_like(v, np.nan)
    out[2:-2] = sum(c * v[i:v.shape[0] - 4 + i] for i, c in enumerate(st) if c != 0)
    return np.moveaxis(out, 0, axis) / h ** order


def hessian_entry(values: Array, h: float, i: int, j: int) -> Array:
    if i == j:
        return fd_derivative(values, h, i, 2)
    return fd_derivative(fd_derivative(values, h, i, 1), h, j, 1)


@dataclass
class DerivativeBounds:
    items: dict                    # item -> envelope value on the base box
    refined: dict
    oracle_item1: float | None
    stable: dict
    small_t: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(np.isfinite(v) for v in self.items.values()) and all(self.stable.values())


def _derivative_items(alpha: float, grid: Grid, times: Sequence[float]) -> dict:
    spec = fractional(alpha, grid.d)
    h = grid.h
    P1 = kernel_fourier_inversion(spec, 1.0, grid)
    mask = grid.trusted_mask(0.5)
    pts = grid.points()
    r = grid.radius()
    p1 = P1.values
    d1 = fd_derivative(p1, h, 0, 1)
    d2 = hessian_entry(p1, h, 0, 0)
    if grid.d > 1:
        d2 = np.fmax(np.abs(d2), np.abs(hessian_entry(p1, h, 0, 1)))
    xgrad = sum(pts[..., a] * fd_derivative(p1, h, a, 1) for a in range(grid.d))
    with np.errstate(divide="ignore", invalid="ignore"):
        it = {
            "i": np.abs(d1) / (np.minimum(1, 1 / r) * p1),
            "ii": np.abs(d2) / (np.minimum(1, 1 / r ** 2) * p1),
            "iii": np.where(r == 0, 0.0, np.abs(xgrad) / (np.minimum(r, 1) * p1)),
        }
    out = {k: float(np.nanmax(v[mask])) for k, v in it.items()}
    iv = v_ = vi = 0.0
    for t in times:
        Pt = kernel_fourier_inversion(spec, t, grid)
        dt = time_derivative(spec, t, grid).values
        iv = max(iv, float(np.max((np.abs(dt) * t / Pt.values)[mask])))
        g1 = fd_derivative(Pt.values, h, 0, 1)
        g2 = np.abs(hessian_entry(Pt.values, h, 0, 0))
        with np.errstate(divide="ignore"):
            b5 = np.minimum(t ** -alpha, 1 / r) * p1
            b6 = np.minimum(t ** (-2 * alpha), 1 / r) * p1
        v_ = max(v_, float(np.nanmax((np.abs(g1) / b5)[mask])))
        vi = max(vi, float(np.nanmax((g2 / b6)[mask])))
    out.update({"iv": iv, "v": v_, "vi": vi})
    return out


def check_fractional_derivative_bounds(alpha: float, grid: Grid | None = None, *,
                                       times=(0.5, 1.0, 2.0), tol: float = 0.05,
                                       small_times=(0.05, 0.1, 0.2)) -> DerivativeBounds:
    """Envelopes for the six derivative bounds of the fractional heat kernel.

    Items (iv)-(vi) are sampled over ``times``; the stability test repeats
    everything on a box doubled at fixed spacing.  ``small_times`` records
    the (v)/(vi) envelopes for t -> 0 as a diagnostic (not part of pass/fail).
    """
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0,2)")
    grid = grid or Grid.default(1)
    base = _derivative_items(alpha, grid, times)
    ref = _derivative_items(alpha, grid.enlarge(2), times)
    stable = {k: bool(abs(ref[k] / base[k] - 1) < tol) if base[k] > 0 else ref[k] == 0
              for k in base}
    oracle = None
    if alpha == 1.0 and grid.d == 1:
        x = grid.axis[grid.trusted_mask(0.5)]
        oracle = float(np.max(2 * np.abs(x) / (1 + x * x) * np.maximum(1, np.abs(x))))
    small = {}
    if small_times:
        # spacing small enough for exp(-t |xi|^alpha) to vanish at Nyquist
        hmax = np.pi * (min(small_times) / 30.0) ** (1 / alpha)
        L = 8.0
        N = 1 << int(np.ceil(np.log2(2 * L / hmax)))
        sm = _derivative_items(alpha, Grid(grid.d, N, L), small_times)
        small = {"v": sm["v"], "vi": sm["vi"]}
    return DerivativeBounds(base, ref, oracle, stable, small)


@dataclass
class SelfSimilarity:
    exponent: float            # fitted gamma in P_t(x) = t^{-d/alpha} P_1(x t^{-gamma})
    error_inverse: float       # sup error with gamma = 1/alpha
    error_power: float         # sup error with gamma = alpha
    holds: str


def check_self_similarity(alpha: float, t: float = 2.0, grid: Grid | None = None
                          ) -> SelfSimilarity:
    """Decide empirically which argument scaling the fractional kernel obeys."""
    from scipy.optimize import minimize_scalar
    grid = grid or Grid.default(1)
    spec = fractional(alpha, grid.d)
    P1 = kernel_fourier_inversion(spec, 1.0, grid)
    Pt = kernel_fourier_inversion(spec, t, grid)
    mask = grid.trusted_mask(0.25)
    pts = grid.points()[mask]
    peak = float(P1.values.max())

    def err(g):
        pred = t ** (-grid.d / alpha) * P1.evaluate(pts * t ** (-g) if grid.d > 1
                                                    else pts[:, 0] * t ** (-g))
        return float(np.max(np.abs(pred - Pt.values[mask]))) / peak

    res = minimize_scalar(err, bounds=(0.0, 3.0), method="bounded",
                          options={"xatol": 1e-8})
    e_inv, e_pow = err(1 / alpha), err(alpha)
    holds = "x t^(-1/alpha)" if e_inv <= e_pow else "x t^(-alpha)"
    return SelfSimilarity(float(res.x), e_inv, e_pow, holds)


@dataclass
class ClassicalConditions:
    dt_ratio: float
    d2_ratio: float
    levy_ratio: float

    @property
    def finite(self) -> bool:
        return all(np.isfinite([self.dt_ratio, self.d2_ratio, self.levy_ratio]))


def check_classical_conditions(spec: LevyKernelSpec, times=(0.5, 2.0), grid: Grid | None = None,
                               *, laplacian: bool = False, n_times: int = 4,
                               family: Callable | None = None,
                               dt_family: Callable | None = None) -> ClassicalConditions:
    """sup_t sup_x of |d_t P_t|/P_1, |D^2 P_t|/P_1 and int |Lambda P_t| K / P_1.

    ``family``/``dt_family`` replace the heat kernel family (t -> Field) for
    custom inputs; the P_1 normaliser always comes from the kernel.
    """
    from .nonlocal_op import OperatorSpec, abs_levy_integral
    grid = grid or Grid.default(spec.d)
    P1 = kernel_fourier_inversion(spec, 1.0, grid, laplacian=laplacian).values
    mask = grid.trusted_mask(0.5)
    op = OperatorSpec.mixed(spec) if laplacian else OperatorSpec.pure_jump(spec)
    a = b = c = 0.0
    for t in np.geomspace(times[0], times[1], n_times):
        if family is None:
            Pt = kernel_fourier_inversion(spec, t, grid, laplacian=laplacian)
            dt = time_derivative(spec, t, grid, laplacian=laplacian).values
        else:
            Pt = family(t)
            dt = dt_family(t) if dt_family is not None else np.zeros(grid.shape)
        hess = max((np.abs(hessian_entry(Pt.values, grid.h, i, j))
                    for i in range(grid.d) for j in range(i, grid.d)),
                   key=lambda z: np.nanmax(z[mask]))
        lev = abs_levy_integral(op, Pt).values
        a = max(a, float(np.max(np.abs(dt)[mask] / P1[mask])))
        b = max(b, float(np.nanmax(hess[mask] / P1[mask])))
        c = max(c, float(np.nanmax(lev[mask] / P1[mask])))
    return ClassicalConditions(a, b, c)
