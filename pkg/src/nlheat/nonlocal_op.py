"""Nonlocal operators on grid fields.

L_K u(x) = int (u(x) - (u(x+y) + u(x-y))/2) K(y) dy, its anisotropic sum over
axis blocks, and the mixed operator -Laplacian + L_K.  Also the bilinear
form B(u, v), absolute Levy integrals and heat-equation residuals.

One-dimensional lines (d = 1 and every anisotropic block) use product
integration: the samples are interpolated by local Lagrange polynomials and
K is integrated exactly against each basis function on |y| > delta, which
turns the far region into a discrete convolution.  Inside |y| <= delta a
Taylor expansion with the moments int y^2 K and int y^4 K is used.

Isotropic kernels in d >= 2 split K with a smooth radial cutoff: the outer
part is a lattice convolution and the inner part an exact Fourier multiplier
(see ``_RadialRule``).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, interpolate, signal

from .grid import ExactTail, Field, Grid
from .kernels import LevyKernelSpec
from .symbol import _small_ball_moment

Array = np.ndarray
VARIANTS = ("pure_jump", "anisotropic", "mixed")

# central differences: second derivative (6th order), fourth derivative (4th order)
_D1 = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])
_D2 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
_D2_LO = np.array([0.0, -1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12, 0.0])
_D3 = np.array([1 / 8, -1.0, 13 / 8, 0.0, -13 / 8, 1.0, -1 / 8])
_D4 = np.array([-1 / 6, 2.0, -13 / 2, 28 / 3, -13 / 2, 2.0, -1 / 6])


class OperatorError(ValueError):
    """Raised when the operator cannot be applied at some node."""

    def __init__(self, msg: str, node=None):
        super().__init__(msg)
        self.node = node


@dataclass(frozen=True)
class OperatorSpec:
    """Which operator to apply and how to discretise it.

    ``blocks`` holds (kernel, axes) pairs.  ``delta`` is the radius of the
    near region in units of the grid spacing (for isotropic d >= 2 kernels,
    the start of the smooth cutoff); ``order`` the (odd) degree of
    the Lagrange interpolant in the far region; ``extend`` the factor by
    which fields are extended with their tails before convolving.
    """

    variant: str
    blocks: tuple
    delta: int = 2
    order: int = 3
    extend: int = 4

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.order % 2 == 0 or self.order < 1:
            raise ValueError("interpolation order must be odd")
        if self.delta < 1:
            raise ValueError("near radius must be at least one grid spacing")
        axes = sorted(a for _, ax in self.blocks for a in ax)
        if axes != list(range(len(axes))):
            raise ValueError("axis blocks must partition the coordinates")
        if self.variant == "anisotropic":
            for spec, ax in self.blocks:
                if spec.d != 1 or len(ax) != 1:
                    raise ValueError("anisotropic blocks must be one-dimensional")

    @classmethod
    def pure_jump(cls, spec: LevyKernelSpec, **kw) -> "OperatorSpec":
        return cls("pure_jump", ((spec, tuple(range(spec.d))),), **kw)

    @classmethod
    def mixed(cls, spec: LevyKernelSpec, **kw) -> "OperatorSpec":
        return cls("mixed", ((spec, tuple(range(spec.d))),), **kw)

    @classmethod
    def anisotropic(cls, specs: Sequence[LevyKernelSpec], **kw) -> "OperatorSpec":
        return cls("anisotropic", tuple((s, (i,)) for i, s in enumerate(specs)), **kw)

    @property
    def d(self) -> int:
        return sum(len(ax) for _, ax in self.blocks)

    @property
    def spec(self) -> LevyKernelSpec:
        return self.blocks[0][0]

    @property
    def laplacian(self) -> bool:
        return self.variant == "mixed"

    def refined(self) -> "OperatorSpec":
        """Same settings; delta is tied to h so it halves with the grid."""
        return self


def as_operator(op) -> OperatorSpec:
    if isinstance(op, OperatorSpec):
        return op
    if isinstance(op, LevyKernelSpec):
        return OperatorSpec.pure_jump(op)
    if isinstance(op, (list, tuple)):
        return OperatorSpec.anisotropic(op)
    raise TypeError(f"cannot build an operator from {type(op).__name__}")


# ---------------------------------------------------------------------------
# one-dimensional line rule

def _lagrange(tau: Array, offs: Array) -> Array:
    """Lagrange basis at nodes ``offs`` evaluated at ``tau``; shape (len(offs), len(tau))."""
    out = np.ones((offs.size, tau.size))
    for i, oi in enumerate(offs):
        for oj in offs:
            if oj != oi:
                out[i] *= (tau - oj) / (oi - oj)
    return out


def _mass_beyond(K, R: float) -> float:
    """int_R^inf K(y) dy (one side)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val = integrate.quad(lambda s: R * float(K(np.array([R * s]))[0]), 1.0, np.inf,
                             limit=200, epsabs=0, epsrel=1e-10)[0]
    return val


@dataclass
class _LineRule:
    h: float
    k: int                 # near radius in cells
    E: int                 # extension in nodes on each side
    w: Array               # weights for offsets -E..E
    Y: float               # far region handled by the convolution ends here
    ty: Array              # nodes on [Y, Ymax] for the tail correction
    tw: Array              # their weights times K
    rem: float             # int_{Ymax}^inf K (one side)
    Ymax: float
    mu2: float
    mu4: float
    K: Callable = None

    @property
    def beyond(self) -> float:
        """Two-sided K mass of |y| > Y as seen by the discrete tail rule."""
        return 2.0 * (float(self.tw.sum()) + self.rem)

    @property
    def total(self) -> float:
        return float(self.w.sum()) + self.beyond


@lru_cache(maxsize=64)
def _line_rule(spec: LevyKernelSpec, h: float, k: int, E: int, order: int) -> _LineRule:
    K = lambda y: spec.evaluator(np.asarray(y, float)[..., None]) if spec.d == 1 else None
    half = (order + 1) // 2
    offs = np.arange(-(half - 1), half + 1)            # stencil relative to left cell node
    n_cells = E - half + 1
    if n_cells <= k:
        raise OperatorError("grid too small for the near radius")
    gx, gw = np.polynomial.legendre.leggauss(10)
    tau, gw = 0.5 * (gx + 1), 0.5 * gw
    basis = _lagrange(tau, offs.astype(float))        # (p+1, G)
    m = np.arange(k, n_cells)
    y = (m[:, None] + tau[None, :]) * h
    Ky = K(y)
    contrib = h * (Ky * gw[None, :]) @ basis.T        # (cells, p+1)
    w_pos = np.zeros(E + 1)
    np.add.at(w_pos, (m[:, None] + offs[None, :]).ravel(), contrib.ravel())
    w = np.r_[w_pos[:0:-1], w_pos]                    # even kernel: w_{-j} = w_j
    w[E] += w_pos[0]                                  # node 0 collects both sides
    Y = n_cells * h
    # tail rule on [Y, Ymax]: Gauss on geometric panels
    Ymax = Y * 1e3
    edges = np.geomspace(Y, Ymax, 91)
    a, b = edges[:-1], edges[1:]
    gx8, gw8 = np.polynomial.legendre.leggauss(8)
    ty = (0.5 * (b - a)[:, None] * (gx8[None, :] + 1) + a[:, None]).ravel()
    tw = (0.5 * (b - a)[:, None] * gw8[None, :]).ravel() * K(ty)
    rem = _mass_beyond(K, Ymax)
    delta = k * h
    mu2 = _small_ball_moment(spec, 2, delta)
    mu4 = _small_ball_moment(spec, 4, delta)
    return _LineRule(h, k, E, w, Y, ty, tw, rem, Ymax, mu2, mu4, K)


def _rule_for(op: OperatorSpec, spec: LevyKernelSpec, grid: Grid) -> _LineRule:
    E = (op.extend - 1) * grid.N // 2
    return _line_rule(spec, grid.h, op.delta, E, op.order)


# ---------------------------------------------------------------------------
# extension of fields along one axis

def _tail_fn(u: Field) -> Callable | None:
    return u.tail


def _extend_axis(u: Field, axis: int, E: int) -> Array:
    """Samples on the box extended by E nodes on both ends of ``axis``."""
    g = u.grid
    shape = list(g.shape)
    shape[axis] = g.N + 2 * E
    out = np.zeros(shape)
    sl = [slice(None)] * g.d
    sl[axis] = slice(E, E + g.N)
    out[tuple(sl)] = u.values
    if u.tail is None or E == 0:
        return out
    ext_axis = -g.L + g.h * (np.arange(g.N + 2 * E) - E)
    outside = np.r_[np.arange(E), np.arange(E + g.N, g.N + 2 * E)]
    coords = [g.axis] * g.d
    coords[axis] = ext_axis[outside]
    mesh = np.meshgrid(*coords, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    vals = u.tail(pts if g.d > 1 else pts[..., 0])
    sl[axis] = outside
    out[tuple(sl)] = vals
    return out


def _stencil(arr: Array, coef: Array, axis: int, E: int, N: int, h: float, p: int) -> Array:
    """Apply a 7-point central stencil along ``axis`` at the inner N nodes."""
    out = 0.0
    for i, c in enumerate(coef):
        if c == 0:
            continue
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(E + i - 3, E + i - 3 + N)
        out = out + c * arr[tuple(sl)]
    return out / h ** p


def _inner(arr: Array, axis: int, E: int, N: int) -> Array:
    sl = [slice(None)] * arr.ndim
    sl[axis] = slice(E, E + N)
    return arr[tuple(sl)]


def _convolve_axis(arr: Array, w: Array, axis: int) -> Array:
    shape = [1] * arr.ndim
    shape[axis] = w.size
    return signal.fftconvolve(arr, w.reshape(shape), mode="valid", axes=axis)


def _tail_correction(tail: Callable, grid: Grid, axis: int, rule: _LineRule,
                     combine: Callable | None = None, n_coarse: int = 33) -> Array:
    """int_{|y| > Y} f(x + y e_axis) K(y) dy at every node.

    f is the tail model; ``combine(x_vals, f_plus, f_minus)`` may replace the
    integrand f(x+y) + f(x-y).  Evaluated on a coarse set of positions along
    the axis and splined (the result is smooth in x for |x| <= L << Y).
    """
    g = grid
    if combine is None and hasattr(tail, "line_integral"):
        return tail.line_integral(g, axis, rule)
    xs = np.linspace(-g.L, g.L, n_coarse)
    coords = [g.axis] * g.d
    coords[axis] = xs
    base = np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1)   # (..., d)
    ys = np.r_[rule.ty, rule.Ymax]
    wts = np.r_[rule.tw, rule.rem]
    acc = 0.0
    for y, wy in zip(np.array_split(ys, 8), np.array_split(wts, 8)):
        sh = np.zeros((y.size, g.d))
        sh[:, axis] = y
        pp = base[..., None, :] + sh
        pm = base[..., None, :] - sh
        fp = tail(pp if g.d > 1 else pp[..., 0])
        fm = tail(pm if g.d > 1 else pm[..., 0])
        vals = fp + fm if combine is None else combine(base, fp, fm)
        acc = acc + np.tensordot(vals, wy, axes=([-1], [0]))
    acc = np.asarray(acc, float) * np.ones(base.shape[:-1])
    spl = interpolate.CubicSpline(xs, acc, axis=axis)
    return spl(g.axis)


# ---------------------------------------------------------------------------
# line operator pieces

@dataclass
class _LineParts:
    """Ingredients for one axis: convolution with far weights and Taylor data."""

    conv: Array      # sum_j w_j f(x + j h)
    tail: Array      # int_{|y|>Y} f(x+y) K + f(x-y) K
    d1: Array
    d2: Array
    d3: Array
    d4: Array
    d2_lo: Array


def _line_parts(f: Field, axis: int, rule: _LineRule, need_odd: bool = False) -> _LineParts:
    g = f.grid
    ext = _extend_axis(f, axis, rule.E)
    conv = _convolve_axis(ext, rule.w, axis)
    if f.tail is not None:
        tail = _tail_correction(f.tail, g, axis, rule)
    else:
        tail = np.zeros(g.shape)
    st = lambda c, p: _stencil(ext, c, axis, rule.E, g.N, g.h, p)
    d1 = st(_D1, 1) if need_odd else None
    d3 = st(_D3, 3) if need_odd else None
    return _LineParts(conv, tail, d1, st(_D2, 2), d3, st(_D4, 4), st(_D2_LO, 2))


def _check_smooth(parts: _LineParts, grid: Grid, values: Array, name: str = "u") -> None:
    """Second differences must be finite and consistent between stencils."""
    d2, lo = parts.d2, parts.d2_lo
    if not np.all(np.isfinite(d2)):
        node = np.unravel_index(int(np.argmax(~np.isfinite(d2))), grid.shape)
        raise OperatorError(f"{name} has non-finite second differences at node {node}", node)
    noise = 1e3 * np.finfo(float).eps * float(np.max(np.abs(values))) / grid.h ** 2
    gap = np.abs(d2 - lo)
    bad = gap > 0.5 * float(np.max(np.abs(d2))) + noise
    if np.any(bad):
        node = np.unravel_index(int(np.argmax(gap)), grid.shape)
        raise OperatorError(
            f"near-region expansion diverges at node {node}: {name} is not twice "
            f"differentiable at grid scale", node)


def _line_apply(u: Field, axis: int, rule: _LineRule, check: bool = True) -> Array:
    p = _line_parts(u, axis, rule)
    if check:
        _check_smooth(p, u.grid, u.values)
    far = u.values * rule.total - p.conv - p.tail
    near = -0.5 * p.d2 * rule.mu2 - p.d4 * rule.mu4 / 24.0
    return near + far


def _spectral_laplacian(u: Field, E: int) -> Array:
    """-Laplacian by FFT on the field extended with its tail along each axis."""
    g = u.grid
    out = np.zeros(g.shape)
    for ax in range(g.d):
        ext = _extend_axis(u, ax, E)
        n = ext.shape[ax]
        k = 2 * np.pi * np.fft.fftfreq(n, d=g.h)
        shape = [1] * g.d
        shape[ax] = n
        lap = np.fft.ifft(np.fft.fft(ext, axis=ax) * (k ** 2).reshape(shape), axis=ax).real
        out += _inner(lap, ax, E, g.N)
    return out


def _spectral_grad(u: Field, E: int, ax: int) -> Array:
    g = u.grid
    ext = _extend_axis(u, ax, E)
    n = ext.shape[ax]
    k = 2 * np.pi * np.fft.fftfreq(n, d=g.h)
    shape = [1] * g.d
    shape[ax] = n
    der = np.fft.ifft(np.fft.fft(ext, axis=ax) * (1j * k).reshape(shape), axis=ax).real
    return _inner(der, ax, E, g.N)


# ---------------------------------------------------------------------------
# isotropic kernels in d >= 2 (blended lattice plus spectral near field)

def _blend(s: Array, a: float, b: float) -> Array:
    """C-infinity step: 0 for s <= a, 1 for s >= b."""
    z = np.clip((np.asarray(s, float) - a) / (b - a), 0.0, 1.0)

    def f(t):
        return np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    return f(z) / (f(z) + f(1.0 - z))


@dataclass
class _RadialRule:
    """Isotropic rule for d >= 2.

    K is split as chi K + (1 - chi) K with chi a smooth step from a*h to b*h.
    The smooth far part is summed on the lattice, tapered smoothly to zero
    over Y0 <= |y| <= Y; the near part is applied exactly as the Fourier
    multiplier int (1 - cos<xi,y>) (1 - chi) K dy; what the taper removes
    is the exterior mass.
    """

    spec: LevyKernelSpec
    h: float
    a: float
    b: float
    w: Array
    out_mass: float
    Y: float
    Y0: float
    table: Callable

    def near_symbol(self, rad: Array) -> Array:
        return self.table(rad)


def _near_symbol_values(spec: LevyKernelSpec, h: float, a: float, b: float, xi: Array) -> Array:
    from .kernels import one_minus_angular_mean, sphere_area
    d = spec.d
    r0 = 1e-3 * h
    # |y| < r0: Taylor with the small-ball moments
    tiny = (xi ** 2 / (2 * d) * _small_ball_moment(spec, 2, r0)
            - xi ** 4 / (8 * d * (d + 2)) * _small_ball_moment(spec, 4, r0))
    x, wt = np.polynomial.legendre.leggauss(200)
    lo, hi = np.log(r0), np.log(b * h)
    r = np.exp(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
    ww = 0.5 * (hi - lo) * wt * r
    g = sphere_area(d) * r ** (d - 1) * spec.profile(r) * (1.0 - _blend(r / h, a, b))
    return tiny + (one_minus_angular_mean(np.multiply.outer(xi, r), d) * (g * ww)).sum(-1)


@lru_cache(maxsize=32)
def _radial_rule(spec: LevyKernelSpec, h: float, delta: int, E: int, xi_max: float,
                 taper: float) -> _RadialRule:
    # blend over [delta, 8 delta] h: a transition many cells wide keeps the
    # lattice sum of chi K free of aliasing; shrunk on very coarse grids
    b = min(8.0 * delta, E / 4.0)
    a = min(float(delta), b / 2)
    j = np.arange(-E, E + 1) * h
    mesh = np.meshgrid(*([j] * spec.d), indexing="ij")
    r = np.sqrt(sum(m * m for m in mesh))
    Y = E * h
    Y0 = Y - taper
    w = np.zeros(r.shape)
    use = (r >= a * h) & (r < Y)
    pts = np.stack(mesh, axis=-1)
    w[use] = (h ** spec.d * spec.evaluator(pts[use]) * _blend(r[use] / h, a, b)
              * (1.0 - _blend(r[use], Y0, Y)))
    S = 2 * np.pi ** (spec.d / 2) / _gamma(spec.d / 2)

    def dens(q):
        return S * q ** (spec.d - 1) * float(spec.profile(np.array([q]))[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        # the smooth outer taper hands (1 - T) K on |y| > Y0 to the exterior term
        out_mass = (integrate.quad(lambda q: dens(q) * float(_blend(q, Y0, Y)), Y0, Y, limit=200)[0]
                    + integrate.quad(lambda s: Y * dens(Y * s), 1.0, np.inf, limit=200)[0])
    xs = np.linspace(0.0, 1.0001 * xi_max, 3000)
    table = interpolate.CubicSpline(xs, _near_symbol_values(spec, h, a, b, xs))
    return _RadialRule(spec, h, a, b, w, out_mass, Y, Y0, table)


def _gamma(x):
    from scipy.special import gamma
    return gamma(x)


def _shell_cos_mean(spec: LevyKernelSpec, w: float, Y0: float, Y: float) -> float:
    """int cos(<xi, y>) T_Y(|y|) K(y) dy for |xi| = w, radial K.

    T_Y is the exterior weight of the radial rule: 0 below Y0, a smooth
    rise to 1 at Y.
    """
    from .kernels import _oscillatory_tail, angular_cos_mean, sphere_area
    d = spec.d
    S = sphere_area(d)

    def g(r):
        r = np.atleast_1d(np.asarray(r, float))
        return S * r ** (d - 1) * spec.profile(r) * _blend(r, Y0, Y)

    R1 = max(Y, 500.0 / w) if w > 0 else Y
    n = max(int(np.ceil((R1 - Y0) * w / np.pi)), 8)
    edges = np.linspace(Y0, R1, n + 1)
    x, wt = np.polynomial.legendre.leggauss(16)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    rr = (mid[:, None] + half[:, None] * x).ravel()
    near = float(np.sum(np.repeat(half, 16) * np.tile(wt, n) * angular_cos_mean(w * rr, d) * g(rr)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if w == 0:
            far = integrate.quad(lambda r: float(g(r)[0]), R1, np.inf, limit=200)[0]
        else:
            far, _ = _oscillatory_tail(lambda r: g(r)[0] if np.ndim(r) == 0 else g(r), w, R1, d)
    return near + far


def _radial_apply(op: OperatorSpec, u: Field) -> Array:
    spec, g = op.spec, u.grid
    if not spec.radial:
        raise OperatorError("isotropic application needs a radial kernel")
    # box doubled: offsets up to L in every coordinate
    E = g.N // 2
    ue = u.extended(2)
    rad = ue.grid.dual_radius()
    rule = _radial_rule(spec, g.h, op.delta, E, float(rad.max()), 0.25 * g.L)
    conv = signal.fftconvolve(ue.values, rule.w, mode="valid")
    far = u.values * (float(rule.w.sum()) + rule.out_mass) - conv
    shell = getattr(u.tail, "shell_integral", None)
    if shell is not None:
        far = far - shell(g, rule.Y0, rule.Y, spec)
    elif u.tail is not None:
        # mass beyond Y sees the tail along the coordinate directions
        pts = g.points()
        acc = 0.0
        for a in range(g.d):
            for s in (1.0, -1.0):
                sh = np.zeros(g.d)
                sh[a] = s * rule.Y
                acc = acc + u.tail(pts + sh)
        far = far - rule.out_mass * acc / (2 * g.d)
    near = np.fft.ifftn(np.fft.fftn(ue.values) * rule.near_symbol(rad)).real
    return near[ue.grid.crop_slices(g)] + far


# ---------------------------------------------------------------------------
# public operations

def second_difference(u: Field, x, y) -> Array:
    """Lambda u(x, y) = u(x) - (u(x+y) + u(x-y))/2 with cubic interpolation off grid."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.grid.d == 1:
        x, y = np.broadcast_arrays(x, y)
        return u.evaluate(x) - 0.5 * (u.evaluate(x + y) + u.evaluate(x - y))
    return u.evaluate(x) - 0.5 * (u.evaluate(x + y) + u.evaluate(x - y))


def apply_levy(op, u: Field, *, check: bool = True) -> Field:
    """L u on the grid of ``u``; the result carries no tail."""
    op = as_operator(op)
    g = u.grid
    if g.d != op.d:
        raise ValueError(f"operator acts in d={op.d}, field has d={g.d}")
    if op.variant == "anisotropic" or g.d == 1:
        out = np.zeros(g.shape)
        for spec, ax in op.blocks:
            rule = _rule_for(op, spec, g)
            out += _line_apply(u, ax[0], rule, check)
    else:
        out = _radial_apply(op, u)
    if op.laplacian:
        out = out + _spectral_laplacian(u, (op.extend - 1) * g.N // 2)
    return Field(g, out)


def _product_field(u: Field, v: Field) -> Field:
    tail = None
    if u.tail is not None and v.tail is not None:
        tu, tv = u.tail, v.tail
        tail = ExactTail(lambda p: tu(p) * tv(p))
    return Field(u.grid, u.values * v.values, tail)


def bilinear_form(op, u: Field, v: Field) -> Field:
    """B(u, v)(x) = int (u(x)-u(x-y))(v(x)-v(x-y)) K(y) dy; mixed adds 2 grad u . grad v."""
    op = as_operator(op)
    g = u.grid
    uv = _product_field(u, v)
    out = np.zeros(g.shape)
    if op.variant == "anisotropic" or g.d == 1:
        for spec, ax in op.blocks:
            a = ax[0]
            rule = _rule_for(op, spec, g)
            pu = _line_parts(u, a, rule, need_odd=True)
            pv = _line_parts(v, a, rule, need_odd=True)
            pw = _line_parts(uv, a, rule)
            far = (uv.values * rule.total - u.values * (pv.conv + pv.tail)
                   - v.values * (pu.conv + pu.tail) + pw.conv + pw.tail)
            near = (pu.d1 * pv.d1 * rule.mu2
                    + (pu.d1 * pv.d3 / 6 + pu.d2 * pv.d2 / 4 + pu.d3 * pv.d1 / 6) * rule.mu4)
            out += far + near
    else:
        Lu = _radial_apply(OperatorSpec.pure_jump(op.spec, delta=op.delta, extend=op.extend), u)
        Lv = _radial_apply(OperatorSpec.pure_jump(op.spec, delta=op.delta, extend=op.extend), v)
        Luv = _radial_apply(OperatorSpec.pure_jump(op.spec, delta=op.delta, extend=op.extend), uv)
        out = u.values * Lv + v.values * Lu - Luv
    if op.laplacian:
        E = (op.extend - 1) * g.N // 2
        out = out + 2 * sum(_spectral_grad(u, E, a) * _spectral_grad(v, E, a)
                            for a in range(g.d))
    return Field(g, out)


def abs_levy_integral(op, u: Field, stride: int = 8, frac: float = 0.5,
                      band: tuple = (0.0, np.inf)) -> Field:
    """int |Lambda u(x, y)| nu(dy) at every ``stride``-th trusted node (NaN elsewhere).

    ``band`` restricts the jump sizes to lo <= |y| < hi (resolved at grid
    nodes).  Isotropic kernels in d >= 2 use a lattice sum over the disk
    |y| <= L, a Hessian ball for |y| < 4h and the exterior mass against the
    tail; the result is an estimate for integrability ratios, not a
    high-accuracy quadrature.
    """
    op = as_operator(op)
    g = u.grid
    if not (op.variant == "anisotropic" or g.d == 1):
        return _abs_radial(op, u, stride, frac, band)
    mask = g.trusted_mask(frac)
    sel = np.zeros(g.shape, dtype=bool)
    sel[tuple(slice(0, None, stride) for _ in range(g.d))] = True
    sel &= mask
    idx = np.argwhere(sel)
    out = np.full(g.shape, np.nan)
    total = np.zeros(len(idx))
    for spec, ax in op.blocks:
        a = ax[0]
        rule = _rule_for(op, spec, g)
        E = rule.E
        ext = _extend_axis(u, a, E)
        parts_d2 = _stencil(ext, _D2, a, E, g.N, g.h, 2)
        jj = np.arange(1, E + 1)
        inband = (jj * g.h >= band[0]) & (jj * g.h < band[1])
        wpos = np.where(inband, rule.w[E + 1:], 0.0)   # weights for j = 1..E
        use_near = band[0] <= 0.0
        use_beyond = band[1] > rule.Y
        for start in range(0, len(idx), 256):
            blk = idx[start:start + 256]
            lines = []
            centre = []
            for node in blk:
                sl = [int(c) for c in node]
                sl[a] = slice(None)
                line = ext[tuple(sl)]
                i = node[a] + E
                lines.append(line[i + jj] + line[i - jj])
                centre.append(line[i])
            lines = np.array(lines)
            centre = np.array(centre)
            lam = centre[:, None] - 0.5 * lines
            far = 2.0 * np.abs(lam) @ wpos
            # node 0 weight belongs to j = 0 where Lambda vanishes
            near = 0.5 * np.abs(parts_d2[tuple(blk.T)]) * rule.mu2 if use_near else 0.0
            beyond = _abs_beyond(u, blk, a, rule, centre) if use_beyond else 0.0
            total[start:start + len(blk)] += far + near + beyond
    out[tuple(idx.T)] = total
    return Field(g, out)


def _sphere_directions(d: int, n: int = 256) -> Array:
    if d == 2:
        th = np.pi * (np.arange(n) + 0.5) / n          # half circle suffices (even form)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    k = np.arange(n) + 0.5                             # Fibonacci points on S^2
    z = 1 - 2 * k / n
    ph = np.pi * (1 + 5 ** 0.5) * k
    rr = np.sqrt(1 - z * z)
    return np.stack([rr * np.cos(ph), rr * np.sin(ph), z], axis=-1)


def _abs_radial(op: OperatorSpec, u: Field, stride: int, frac: float, band: tuple) -> Field:
    spec, g = op.spec, u.grid
    if not spec.radial:
        raise NotImplementedError("absolute integrals need a radial kernel in d >= 2")
    h, d, E = g.h, g.d, g.N // 2
    Y, rho = E * h, 4.0 * h
    ue = u.extended(2)
    ext = ue.values
    off = (ue.grid.N - g.N) // 2
    j = np.arange(-E, E + 1) * h
    mesh = np.meshgrid(*([j] * d), indexing="ij")
    r = np.sqrt(sum(m * m for m in mesh))
    keep = (r >= rho) & (r <= Y) & (r >= band[0]) & (r < band[1])
    w = np.zeros(r.shape)
    w[keep] = h ** d * spec.evaluator(np.stack(mesh, axis=-1)[keep])
    flat = w.ravel() > 0
    wk = w.ravel()[flat]
    sel = np.zeros(g.shape, dtype=bool)
    sel[tuple(slice(0, None, stride) for _ in range(d))] = True
    sel &= g.trusted_mask(frac)
    idx = np.argwhere(sel)
    out = np.full(g.shape, np.nan)
    theta = _sphere_directions(d)
    mu2 = _small_ball_moment(spec, 2, rho) if band[0] <= 0.0 < band[1] else 0.0
    S = 2 * np.pi ** (d / 2) / _gamma(d / 2)
    if band[1] > Y:
        lo = max(Y, band[0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out_mass = integrate.quad(lambda q: S * q ** (d - 1) * float(spec.profile(np.array([q]))[0]),
                                      lo, np.inf, limit=200)[0]
    else:
        out_mass = 0.0
    eye = np.eye(d, dtype=int)
    for node in idx:
        c = node + off
        win = ext[tuple(slice(ci - E, ci + E + 1) for ci in c)]
        centre = win[(E,) * d]
        lam = centre - 0.5 * (win + win[(slice(None, None, -1),) * d])
        total = float(np.abs(lam).ravel()[flat] @ wk)
        if mu2:
            H = np.empty((d, d))
            for a in range(d):
                for b in range(d):
                    ea, eb = eye[a], eye[b]
                    f = lambda v: ext[tuple(c + v)]
                    H[a, b] = (f(ea + eb) - f(ea - eb) - f(eb - ea) + f(-ea - eb)) / (4 * h * h)
            quad_form = np.abs(np.einsum("ni,ij,nj->n", theta, H, theta)).mean()
            total += 0.5 * quad_form * mu2
        if out_mass:
            x = g.axis[node]
            if u.tail is None:
                total += abs(centre) * out_mass
            else:
                pts = np.array([x + s_ * Y * eye[a] for a in range(d) for s_ in (1, -1)])
                total += abs(centre - float(np.mean(u.tail(pts)))) * out_mass
        out[tuple(node)] = total
    return Field(g, out)


def _abs_beyond(u: Field, blk: Array, axis: int, rule: _LineRule, centre: Array) -> Array:
    g = u.grid
    if u.tail is None:
        return np.abs(centre) * rule.beyond
    x = g.axis[blk]                                    # (n, d)
    ys = np.r_[rule.ty, rule.Ymax]
    wts = np.r_[rule.tw, rule.rem]
    sh = np.zeros((ys.size, g.d))
    sh[:, axis] = ys
    pp = x[:, None, :] + sh
    pm = x[:, None, :] - sh
    fp = u.tail(pp if g.d > 1 else pp[..., 0])
    fm = u.tail(pm if g.d > 1 else pm[..., 0])
    lam = centre[:, None] - 0.5 * (fp + fm)
    return 2.0 * np.abs(lam) @ wts


# ---------------------------------------------------------------------------
# heat-equation residuals

@dataclass
class HeatResidual:
    sup: float                     # sup |dP/dt + L P| over trusted nodes and times
    relative: float                # sup / sup P_1
    per_time: dict = field(default_factory=dict)
    field: Field | None = None     # residual at the last time
    refined: float | None = None   # relative residual after N -> 2N
    ratio: float | None = None     # refined / relative

    @property
    def halves(self) -> bool:
        return self.ratio is not None and self.ratio <= 0.5


def _residual_once(op: OperatorSpec, times, grid: Grid, family: str, frac: float):
    from . import heat_kernel as hk
    spec = op.spec if op.variant != "anisotropic" else [s for s, _ in op.blocks]
    lap = op.laplacian
    P1 = _family_kernel(family, spec, 1.0, grid, lap)
    peak = float(P1.values.max())
    mask = grid.trusted_mask(frac)
    per, worst, last = {}, 0.0, None
    for t in times:
        P = _family_kernel(family, spec, t, grid, lap)
        if family == "gaussian":
            dt = _gaussian_dt(t, grid)
        else:
            dt = hk.time_derivative(spec, t, grid, laplacian=lap).values
        LP = apply_levy(op, P).values
        res = dt + LP
        s = float(np.max(np.abs(res[mask])))
        per[float(t)] = s
        worst = max(worst, s)
        last = Field(grid, res)
    return worst, worst / peak, per, last


def _family_kernel(family, spec, t, grid, lap):
    from . import heat_kernel as hk
    if family == "gaussian":
        return hk.gaussian_kernel(t, grid)
    if isinstance(spec, list):
        return hk.anisotropic_kernel(spec, t, grid)
    return hk.kernel_fourier_inversion(spec, t, grid, laplacian=lap)


def _gaussian_dt(t: float, grid: Grid) -> Array:
    """d/dt of exp(-|x|^2/4t)/(4 pi t)^(d/2) = G (|x|^2/(4t^2) - d/(2t))."""
    from . import heat_kernel as hk
    G = hk.gaussian_kernel(t, grid).values
    r2 = grid.radius() ** 2
    return G * (r2 / (4 * t * t) - grid.d / (2 * t))


def heat_residual(op, times=(1.0,), grid: Grid | None = None, *, family: str = "levy",
                  refine: bool = False, frac: float = 0.5) -> HeatResidual:
    """sup |dP/dt + L P| on |x| <= frac L for the operator's own heat kernel.

    ``family="gaussian"`` feeds the Gaussian heat kernel to the operator
    instead (a negative control: the residual is then of order one).
    ``refine`` repeats on N -> 2N at fixed L (delta = 2h halves with it).
    """
    op = as_operator(op)
    grid = grid or Grid.default(op.d)
    times = tuple(np.atleast_1d(times).astype(float))
    if min(times) <= 0:
        raise ValueError("times must be positive")
    sup, rel, per, last = _residual_once(op, times, grid, family, frac)
    out = HeatResidual(sup, rel, per, last)
    if refine:
        _, rel2, _, _ = _residual_once(op, times, grid.refine(), family, frac)
        out.refined = rel2
        out.ratio = rel2 / rel if rel > 0 else 0.0
    return out


class PlaneWaveTail(ExactTail):
    """Tail cos(<xi, x>); its far-line integrals separate exactly."""

    def __init__(self, xi, d: int):
        self.xi = np.asarray(xi, dtype=float)
        self.d = d
        super().__init__(self._eval)

    def _eval(self, p):
        p = np.asarray(p, float)
        return np.cos(self.xi[0] * p) if self.d == 1 else np.cos(p @ self.xi)

    def shell_integral(self, grid: Grid, Y0: float, Y: float, spec: LevyKernelSpec) -> Array:
        # int T(|y|) cos(<xi, x + y>) K(y) dy = cos(<xi,x>) int T cos(<xi,y>) K  (K even)
        base = self._eval(grid.points() if grid.d > 1 else grid.axis)
        return _shell_cos_mean(spec, float(np.linalg.norm(self.xi)), Y0, Y) * base

    def line_integral(self, grid: Grid, axis: int, rule: "_LineRule") -> Array:
        # int_{|y|>Y} cos(<xi, x + y e>) K(y) dy = cos(<xi,x>) 2 int_Y^inf cos(xi_a y) K
        nu = abs(float(self.xi[axis]))
        if nu == 0:
            one_side = 0.5 * rule.beyond
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                one_side = integrate.quad(lambda y: float(rule.K(np.array([y]))[0]), rule.Y,
                                          np.inf, weight="cos", wvar=nu, limlst=200)[0]
        base = self._eval(grid.points() if grid.d > 1 else grid.axis)
        return 2.0 * one_side * base


def plane_wave(grid: Grid, xi) -> Field:
    """cos(<xi, x>) with the plane wave itself as tail."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != grid.d:
        raise ValueError("frequency must have one entry per dimension")
    tail = PlaneWaveTail(xi, grid.d)
    return Field(grid, tail(grid.points() if grid.d > 1 else grid.axis), tail)


def eigen_check(op, grid: Grid, xi, frac: float = 0.5) -> float:
    """Relative error of L cos(<xi,x>) against m(xi) cos(<xi,x>) on trusted nodes."""
    from .symbol import symbol_eval
    op = as_operator(op)
    u = plane_wave(grid, xi)
    Lu = apply_levy(op, u).values
    xi = np.atleast_1d(np.asarray(xi, float))
    if op.variant == "anisotropic":
        m = sum(symbol_eval(s, xi[ax[0]]).value for s, ax in op.blocks)
    else:
        m = symbol_eval(op.spec, xi if op.d > 1 else xi[0]).value
    if op.laplacian:
        m += float(xi @ xi)
    mask = grid.trusted_mask(frac)
    return float(np.max(np.abs(Lu - m * u.values)[mask])) / abs(m)
