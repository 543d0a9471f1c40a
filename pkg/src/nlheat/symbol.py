"""Fourier symbol m(xi) = int (1 - cos<xi,y>) K(y) dy by singular quadrature.

The integral is split at |y| = delta and |y| = R_out:

* |y| < delta: fourth-order Taylor expansion of 1 - cos with a remainder bound,
  using small-ball moments of the kernel;
* delta <= |y| <= R_out: composite Gauss-Legendre on log-spaced panels, split
  further so that no panel spans more than a quarter period;
* |y| > R_out: non-oscillatory part by adaptive quadrature, oscillatory part
  by Fourier-weighted quadrature (Hankel asymptotics for even d).

Radial kernels are reduced to a single radial integral with the closed-form
angular mean of cos (cos, J0, sinc for d = 1, 2, 3; Gauss-Gegenbauer nodes
for d >= 4).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate, special

from .grid import Grid
from .kernels import (LevyKernelSpec, _algebraic_tail, _oscillatory_tail,
                      angular_cos_mean, one_minus_angular_mean, sphere_area, sphere_rule)

Array = np.ndarray


@dataclass(frozen=True)
class QuadSettings:
    delta: float | None = None      # inner cutoff; default min(1e-3, 0.1/|xi|)
    nodes_per_decade: int = 128
    order: int = 8                  # Gauss-Legendre nodes per panel
    s_out: float = 200 * np.pi      # R_out = s_out / |xi|
    rtol: float = 1e-9


@dataclass
class SymbolValue:
    value: float
    achieved_tol: float
    converged: bool
    parts: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


@dataclass
class SymbolField:
    """Symbol sampled on the dual grid of ``grid`` (FFT ordering)."""

    grid: Grid
    values: Array
    spec: LevyKernelSpec
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# building blocks

def _gegenbauer_mean(z: Array, d: int, n: int | None = None) -> Array:
    """Angular mean of cos(z cos(theta)) on S^{d-1} by Gauss-Gegenbauer nodes."""
    z = np.asarray(z, dtype=float)
    n = n or int(max(32, 1.2 * np.max(np.abs(z), initial=0) + 32))
    x, w = special.roots_gegenbauer(n, (d - 2) / 2)
    return (np.cos(np.multiply.outer(z, x)) @ w) / w.sum()


def _one_minus_mean(z: Array, d: int) -> Array:
    if d <= 3:
        return one_minus_angular_mean(z, d)
    z = np.asarray(z, dtype=float)
    small = z < 0.05
    out = one_minus_angular_mean(np.where(small, z, 0.0), d)
    big = 1.0 - _gegenbauer_mean(np.where(small, 0.0, z), d)
    return np.where(small, out, big)


@lru_cache(maxsize=512)
def _small_ball_moment(spec: LevyKernelSpec, j: int, delta: float,
                       direction: tuple | None = None) -> float:
    """int_0^delta r^j g(r) dr, with g the radially reduced kernel.

    Integrated in u = -log r; an algebraic tail in u (borderline kernels)
    is extrapolated rather than cut.
    """
    g = _radial_weight(spec, direction)
    u0 = -np.log(delta)
    umax = max(u0 + 40.0, min(200.0, 600.0 / (spec.d + j)))

    def f(u):
        r = np.exp(-u)
        return r ** (j + 1) * g(r)

    # linear panels up to umax/4, then 8 panels per octave, so that the tail
    # can be extrapolated from two cut points with proportional panel widths
    cuts = (umax / 4, umax / 2, umax)
    edges = list(np.linspace(u0, max(cuts[0], u0 + 1.0), 9))
    for c in cuts[1:]:
        lo = max(c / 2, edges[-1])
        edges += list(np.linspace(lo, c, 9)[1:])
    edges = np.array(edges)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pieces = np.array([integrate.quad(f, a, b, limit=200, epsabs=0, epsrel=1e-12)[0]
                           for a, b in zip(edges[:-1], edges[1:])])
    return _richardson_tail(edges, pieces, cuts[1:])


def _richardson_tail(edges: np.ndarray, pieces: np.ndarray, cuts) -> float:
    """Sum of the pieces plus an algebraic tail, Richardson-corrected.

    A pure power fitted to two panels leaves an error ~ c^(1 - 2p) when the
    integrand is only asymptotically algebraic (e.g. 1/(1 + u^p)); two cut
    points one octave apart cancel the leading term.
    """
    est = {}
    for c in cuts:
        k = int(np.argmin(np.abs(edges - c)))
        tail = _algebraic_tail(edges[k - 2:k + 1], pieces[k - 2:k])
        if tail is None:
            return float(pieces.sum())
        est[c] = (float(pieces[:k].sum()) + tail, edges[k])
    (i2, c2), (i1, c1) = est[cuts[0]], est[cuts[1]]
    a, b, c = edges[-3:]
    p1, p2 = pieces[-2:]
    try:
        from scipy.optimize import brentq
        p = brentq(lambda p: (a ** (1 - p) - b ** (1 - p)) / (b ** (1 - p) - c ** (1 - p))
                   - p1 / p2, 1.0 + 1e-9, 60.0)
    except ValueError:
        return i1
    k = 2 * p - 1
    return float((i1 * c1 ** k - i2 * c2 ** k) / (c1 ** k - c2 ** k))


def _radial_weight(spec: LevyKernelSpec, direction: tuple | None = None):
    d = spec.d
    if direction is not None:
        om = np.asarray(direction, dtype=float)
        return lambda r: np.asarray(r, float) ** (d - 1) * spec.evaluator(
            np.multiply.outer(np.asarray(r, float), om))
    S = sphere_area(d)
    return lambda r: S * np.asarray(r, float) ** (d - 1) * spec.profile(np.asarray(r, float))


def _panels(a: float, b: float, w: float, per_decade: int, order: int):
    """Gauss-Legendre nodes/weights on log panels in [a,b], max width pi/(2w)."""
    n_dec = np.log10(b / a)
    npan = max(1, int(np.ceil(n_dec * per_decade / order)))
    edges = np.geomspace(a, b, npan + 1)
    if a < 1.0 < b:     # most profiles switch branch at |y| = 1
        edges = np.union1d(edges, [1.0])
        npan = edges.size - 1
    widths = np.diff(edges)
    k = np.maximum(1, np.ceil(widths / (0.5 * np.pi / w)).astype(int))
    idx = np.repeat(np.arange(npan), k)
    j = np.arange(idx.size) - np.repeat(np.cumsum(k) - k, k)
    sub = widths[idx] / k[idx]
    left = edges[idx] + sub * j
    x, wt = np.polynomial.legendre.leggauss(order)
    half = 0.5 * sub
    nodes = (left + half)[:, None] + half[:, None] * x[None, :]
    wts = half[:, None] * wt[None, :]
    return nodes.ravel(), wts.ravel()


def _tail_parts(spec, g, w, R, dd, direction):
    """Plain and oscillatory parts of the |y| > R tail.

    Integrands are normalised by R g(R) so that the default absolute
    tolerances of QUADPACK do not swamp tiny tails.
    """
    hook = spec.extra.get("tail") if hasattr(spec.extra, "get") else None
    if hook is not None:
        return hook(w, R, direction)
    scale = float(R * g(R)) or 1.0
    gs = lambda r: g(r) / scale  # noqa: E731
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        plain, e1 = integrate.quad(lambda s: R * gs(R * s), 1.0, np.inf, limit=500)
        osc, e2 = _oscillatory_tail(gs, w, R, dd)
    return plain * scale, e1 * scale, osc * scale, e2 * scale


def _line_symbol(spec, w: float, qs: QuadSettings, d_eff: int, direction=None) -> SymbolValue:
    """int_0^inf (1 - A(w r)) g(r) dr for one radial line.

    ``d_eff`` selects the angular mean A (1 => plain cosine, used for single
    directions and for d = 1).
    """
    if w == 0:
        return SymbolValue(0.0, 0.0, True)
    g = _radial_weight(spec, direction)
    delta = qs.delta if qs.delta is not None else min(1e-3, 0.1 / w)
    # kernels oscillating along the line set their own frequency floor
    osc_fn = spec.extra.get("osc") if hasattr(spec.extra, "get") else None
    wq = max(w, osc_fn(direction)) if osc_fn is not None else w
    R = max(qs.s_out / wq, 10 * delta)
    dd = d_eff
    # inner ball: E[<e,w>^2] = 1/d, E[<e,w>^4] = 3/(d(d+2)) over the sphere
    M2 = _small_ball_moment(spec, 2, delta, direction)
    M4 = _small_ball_moment(spec, 4, delta, direction)
    inner = w ** 2 / (2 * dd) * M2 - w ** 4 / (8 * dd * (dd + 2)) * M4
    rem = w ** 6 * delta ** 2 / 720 * M4
    # middle range, two orders for an error estimate
    r, wt = _panels(delta, R, wq, qs.nodes_per_decade, qs.order)
    mid = float(np.sum(wt * _one_minus_mean(w * r, dd) * g(r)))
    r2, wt2 = _panels(delta, R, wq, qs.nodes_per_decade, qs.order - 2)
    mid2 = float(np.sum(wt2 * _one_minus_mean(w * r2, dd) * g(r2)))
    # outer tail
    plain, e1, osc, e2 = _tail_parts(spec, g, w, R, dd, direction)
    value = inner + mid + plain - osc
    tol = rem + abs(mid - mid2) + e1 + e2
    return SymbolValue(value, tol, tol <= qs.rtol * max(abs(value), 1e-300) * 1e3,
                       {"inner": inner, "mid": mid, "tail": plain - osc,
                        "delta": delta, "R_out": R})


def symbol_eval(spec: LevyKernelSpec, xi, quad: QuadSettings | None = None) -> SymbolValue:
    """m(xi) for a single frequency point (scalar allowed in d = 1)."""
    qs = quad or QuadSettings()
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != spec.d:
        raise ValueError(f"frequency must have {spec.d} components")
    w = float(np.linalg.norm(xi))
    if w == 0:
        return SymbolValue(0.0, 0.0, True)
    if spec.radial:
        return _line_symbol(spec, w, qs, spec.d)
    # non-radial: average single-direction lines over a sphere rule
    dirs, wts = sphere_rule(spec.d)
    total, tol = 0.0, 0.0
    for om, a in zip(dirs, wts):
        wd = abs(float(om @ xi))
        if wd < 1e-14 * w:
            continue
        sv = _line_symbol(spec, wd, qs, 1, tuple(om))
        total += a * sv.value
        tol += a * sv.achieved_tol
    return SymbolValue(total, tol, True)


# ---------------------------------------------------------------------------
# tables and grids

class SymbolTable:
    """Radial symbol profile on log-spaced |xi| with cubic interpolation in log-log.

    Exact for power laws; extended lazily when asked for larger |xi|.
    """

    def __init__(self, spec: LevyKernelSpec, lo: float = 1e-3, hi: float = 1e3,
                 quad: QuadSettings | None = None):
        if not (spec.radial or spec.d == 1):
            raise ValueError("tables need a radial kernel")
        self.spec = spec
        self.qs = quad or QuadSettings()
        self._build(lo, hi)

    def _build(self, lo, hi):
        per = self.qs.nodes_per_decade
        n = int(np.ceil(np.log10(hi / lo) * per)) + 1
        w = np.geomspace(lo, hi, n)
        # declared slope kinks split the table into separately splined pieces
        kinks = [k for k in self._kinks() if lo < k < hi]
        self.breaks = np.r_[lo, kinks, hi]
        w = np.unique(np.r_[w, kinks])
        self.w = w
        vals = [_line_symbol(self.spec, float(x), self.qs, self.spec.d) for x in w]
        self.m = np.array([v.value for v in vals])
        self.tol = np.array([v.achieved_tol for v in vals])
        self._spl = []
        for a, b in zip(self.breaks[:-1], self.breaks[1:]):
            sel = (w >= a) & (w <= b)
            self._spl.append(interpolate.CubicSpline(np.log(w[sel]), np.log(self.m[sel])))
        self.lo, self.hi = lo, hi

    def _kinks(self):
        fn = self.spec.extra.get("kinks") if hasattr(self.spec.extra, "get") else None
        return list(fn()) if fn is not None else []

    def _eval(self, lw: Array) -> Array:
        seg = np.clip(np.searchsorted(np.log(self.breaks), lw, side="right") - 1,
                      0, len(self._spl) - 1)
        out = np.empty_like(lw)
        for i, s in enumerate(self._spl):
            sel = seg == i
            if np.any(sel):
                out[sel] = s(lw[sel])
        return out

    def ensure(self, hi: float):
        if hi > self.hi:
            self._build(self.lo, max(hi * 1.5, 2 * self.hi))

    def __call__(self, w) -> Array:
        w = np.abs(np.asarray(w, dtype=float))
        self.ensure(float(np.max(w, initial=0.0)))
        out = np.zeros_like(w)
        pos = w > 0
        lw = np.log(np.clip(w[pos], self.lo, None))
        val = np.exp(self._eval(lw))
        # below the table: continue the power law with the end slope
        below = w[pos] < self.lo
        if np.any(below):
            s = float(self._spl[0](np.log(self.lo), 1))
            val[below] = self.m[0] * (w[pos][below] / self.lo) ** s
        out[pos] = val
        return out


    def tol_at(self, w) -> Array:
        """Achieved quadrature tolerance interpolated (log-linearly) at |xi|."""
        w = np.abs(np.asarray(w, dtype=float))
        lw = np.log(np.clip(w, self.lo, self.hi))
        return np.exp(np.interp(lw, np.log(self.w), np.log(np.maximum(self.tol, 1e-300))))


_TABLES: dict = {}


def symbol_table(spec: LevyKernelSpec, hi: float = 1e3) -> SymbolTable:
    t = _TABLES.get(spec.key)
    if t is None:
        t = _TABLES[spec.key] = SymbolTable(spec, hi=hi)
    t.ensure(hi)
    return t


def symbol_function(spec: LevyKernelSpec):
    """Callable |xi| -> m backed by the cached table (radial kernels)."""
    return symbol_table(spec)


def symbol_grid(spec: LevyKernelSpec, dual_grid: Grid, quad: QuadSettings | None = None,
                exact: bool = False) -> SymbolField:
    """m on the dual grid of ``dual_grid`` (FFT ordering).

    Radial kernels map the 1-d profile by |xi|; with ``exact`` every distinct
    |xi| gets its own quadrature instead of the interpolated table.
    Non-radial kernels in d >= 2 are evaluated node by node.
    """
    g = dual_grid
    if g.d != spec.d:
        raise ValueError("grid and kernel dimensions differ")
    rad = g.dual_radius()
    if spec.radial or spec.d == 1:
        if exact:
            u, inv = np.unique(rad, return_inverse=True)
            qs = quad or QuadSettings()
            vals = np.array([_line_symbol(spec, float(x), qs, spec.d).value for x in u])
            values = vals[inv].reshape(rad.shape)
        else:
            values = symbol_table(spec, hi=float(rad.max()) * 1.01)(rad)
    else:
        pts = np.stack(g.dual_mesh(), -1).reshape(-1, g.d)
        values = np.array([symbol_eval(spec, p, quad).value for p in pts]).reshape(rad.shape)
    return SymbolField(g, values, spec, {"exact": exact})


@dataclass
class SymbolBounds:
    C1: float
    C2: float
    beta1: float
    beta2: float
    xi_max: float
    passed: bool
    refined: tuple | None = None
    change: float | None = None


def check_symbol_bounds(field_or_spec, beta1: float | None = None, beta2: float | None = None,
                        xi_max: float = 100.0, n: int = 400, refine: bool = True,
                        tol: float = 0.05) -> SymbolBounds:
    """Fit C1 = inf m/|xi|^b1 and C2 = sup m/|xi|^b2 over |xi| >= 1.

    Given a spec, samples log-spaced |xi| in [1, xi_max]; given a SymbolField,
    uses its nodes with |xi| >= 1.  With ``refine`` the fit is repeated on a
    doubled range with doubled density and the relative change reported.
    """
    def fit(w, m, b1, b2):
        return float(np.min(m / w ** b1)), float(np.max(m / w ** b2))

    if isinstance(field_or_spec, SymbolField):
        f = field_or_spec
        b1 = beta1 if beta1 is not None else f.spec.scale.beta1
        b2 = beta2 if beta2 is not None else f.spec.scale.beta2
        rad = f.grid.dual_radius().ravel()
        sel = rad >= 1
        C1, C2 = fit(rad[sel], f.values.ravel()[sel], b1, b2)
        ok = np.isfinite(C1) and np.isfinite(C2) and 0 < C1 and C1 <= C2 * 1.0000001 \
            if b1 == b2 else np.isfinite(C1) and np.isfinite(C2) and C1 > 0
        return SymbolBounds(C1, C2, b1, b2, float(rad.max()), bool(ok))
    spec = field_or_spec
    b1 = beta1 if beta1 is not None else spec.scale.beta1
    b2 = beta2 if beta2 is not None else spec.scale.beta2

    def values(wmax, npts):
        w = np.geomspace(1.0, wmax, npts)
        if spec.radial or spec.d == 1:
            m = np.array([_line_symbol(spec, float(x), QuadSettings(), spec.d).value for x in w])
        else:
            e = np.zeros(spec.d)
            m = np.array([symbol_eval(spec, np.r_[x, e[1:]]).value for x in w])
        return w, m

    w, m = values(xi_max, n)
    C1, C2 = fit(w, m, b1, b2)
    ok = bool(np.isfinite(C1) and np.isfinite(C2) and C1 > 0)
    res = SymbolBounds(C1, C2, b1, b2, xi_max, ok)
    if refine:
        w2, m2 = values(2 * xi_max, 2 * n)
        R1, R2 = fit(w2, m2, b1, b2)
        change = max(abs(R1 / C1 - 1), abs(R2 / C2 - 1))
        res.refined, res.change = (R1, R2), float(change)
        res.passed = ok and change < tol
    return res
