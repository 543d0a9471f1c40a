"""The comparison function phi: 1 near the origin, the kernel envelope far out.

phi(x) = 1 for |x| <= 1 and 1/(|x|^d phi_tilde(|x|)) for |x| >= 2, joined by
a radial quintic Hermite bridge that matches value, first and second
derivative at both ends (so phi is C^2).  Anisotropic products multiply
one-dimensional factors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import ExactTail, Field, Grid
from .kernels import LevyKernelSpec
from .nonlocal_op import (OperatorSpec, abs_levy_integral, apply_levy, as_operator,
                          bilinear_form, _spectral_laplacian)
from .testfunctions import Bump, spatial_battery

Array = np.ndarray

# 7-point central stencils at step h: first and second derivative (6th order)
_C1 = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
_C2 = np.array([2, -27, 270, -490, 270, -27, 2]) / 180.0


class BridgeError(ValueError):
    pass


def _derivs(f, r0: float, h: float = 1e-2) -> tuple[float, float, float]:
    x = r0 + h * np.arange(-3, 4)
    v = np.asarray(f(x), dtype=float)
    return float(f(np.array([r0]))[0]), float(v @ _C1 / h), float(v @ _C2 / h ** 2)


def hermite_quintic(left: Sequence[float], right: Sequence[float]) -> Array:
    """Coefficients (ascending) of p on [0,1] with (p, p', p'') given at both ends."""
    A = np.zeros((6, 6))
    b = np.r_[left, right]
    for row, (s, k) in enumerate([(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]):
        for j in range(6):
            if j >= k:
                c = np.prod(np.arange(j - k + 1, j + 1)) if k else 1.0
                A[row, j] = c * s ** (j - k) if j > k or s != 0 else (c if j == k else 0.0)
    return np.linalg.solve(A, b)


@dataclass
class PhiFunction:
    """Radial phi for one kernel; ``c`` and ``comparability`` are filled by the checks."""

    spec: LevyKernelSpec
    coef: Array                       # bridge polynomial in s = r - 1
    c: float | None = None
    comparability: float | None = None
    bridge_min: float = 0.0

    @property
    def d(self) -> int:
        return self.spec.d

    def envelope(self, r):
        return self.spec.envelope(r)

    def radial(self, r, k: int = 0) -> Array:
        """phi as a function of r = |x|, or its k-th radial derivative (k <= 2)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r) if k else np.ones_like(r)
        mid = (r > 1) & (r < 2)
        far = r >= 2
        if np.any(mid):
            p = np.polynomial.polynomial.Polynomial(self.coef)
            out[mid] = p.deriv(k)(r[mid] - 1) if k else p(r[mid] - 1)
        if np.any(far):
            if k == 0:
                out[far] = self.envelope(r[far])
            else:
                out[far] = [_derivs(self.envelope, float(x))[k] for x in r[far]]
        return out

    def __call__(self, pts) -> Array:
        pts = np.asarray(pts, dtype=float)
        if self.d == 1:
            r = np.abs(pts[..., 0] if pts.ndim and pts.shape[-1:] == (1,) and pts.ndim > 1
                       else pts)
        else:
            r = np.linalg.norm(pts, axis=-1)
        return self.radial(r)

    def field(self, grid: Grid) -> Field:
        pts = grid.points() if grid.d > 1 else grid.axis
        return Field(grid, self(pts), ExactTail(self.__call__))

    def jumps(self) -> dict:
        """Jumps of phi, phi', phi'' across r = 1 and r = 2 (one-sided limits).

        Each jump is relative to the largest |phi^(k)| over the bridge.
        """
        p = np.polynomial.polynomial.Polynomial(self.coef)
        env = _derivs(self.envelope, 2.0)
        s = np.linspace(0, 1, 1001)
        out = {}
        for k in range(3):
            scale = max(float(np.max(np.abs(p.deriv(k)(s) if k else p(s)))), 1e-300)
            pk = p.deriv(k) if k else p
            out[(1.0, k)] = abs(float(pk(0.0)) - (1.0 if k == 0 else 0.0)) / scale
            out[(2.0, k)] = abs(float(pk(1.0)) - env[k]) / scale
        return out

    def to_dict(self) -> dict:
        return {"kernel": self.spec.label, "bridge": list(map(float, self.coef)),
                "c": self.c, "comparability": self.comparability}


def build_phi(spec: LevyKernelSpec) -> PhiFunction:
    """phi for a radial kernel with the quintic bridge on 1 <= |x| <= 2."""
    if not spec.radial:
        raise ValueError("phi needs a radial kernel (use build_phi_anisotropic for products)")
    v, d1, d2 = _derivs(spec.envelope, 2.0)
    coef = hermite_quintic((1.0, 0.0, 0.0), (v, d1, d2))
    s = np.linspace(0, 1, 2001)
    vals = np.polynomial.polynomial.polyval(s, coef)
    if np.min(vals) <= 0:
        raise BridgeError(f"bridge dips to {np.min(vals):.3g} at r = {1 + s[np.argmin(vals)]:.4f}")
    return PhiFunction(spec, coef, bridge_min=float(np.min(vals)))


@dataclass
class PhiProduct:
    """phi(x) = prod_j phi^j(x_j) over one-dimensional blocks."""

    factors: list
    c: float | None = None
    comparability: float | None = None

    @property
    def d(self) -> int:
        return len(self.factors)

    @property
    def spec(self) -> list:
        return [f.spec for f in self.factors]

    def __call__(self, pts) -> Array:
        pts = np.asarray(pts, dtype=float)
        out = 1.0
        for a, f in enumerate(self.factors):
            out = out * f.radial(np.abs(pts[..., a]))
        return out

    def field(self, grid: Grid) -> Field:
        return Field(grid, self(grid.points()), ExactTail(self.__call__))

    def to_dict(self) -> dict:
        return {"factors": [f.to_dict() for f in self.factors], "c": self.c,
                "comparability": self.comparability}


def build_phi_anisotropic(specs: Sequence[LevyKernelSpec]) -> PhiProduct:
    for s in specs:
        if s.d != 1:
            raise ValueError("anisotropic blocks must be one-dimensional")
    return PhiProduct([build_phi(s) for s in specs])


# ---------------------------------------------------------------------------
# verification

@dataclass
class PhiBounds:
    c_L: float                       # sup |L phi| / phi
    c_B: float                       # max over psi of sup |B(psi,phi)| / (max-norm * phi)
    comparability: float             # C with C^-1 P_1 <= phi <= C P_1
    near: float                      # sup int_{|y|<=1} |Lambda phi| K / phi
    far: float                       # sup int_{|y|>1} |Lambda phi| K / phi
    laplacian: float | None = None   # sup |Delta phi| / phi (mixed operator)
    refined_c_L: float | None = None
    change: float | None = None
    block_constants: list = field(default_factory=list)
    finite: bool = True
    stable: bool = True

    @property
    def c(self) -> float:
        return max(self.c_L, self.c_B)

    @property
    def passed(self) -> bool:
        ok = self.finite and self.stable
        if self.block_constants:
            ok = ok and self.c_L <= 1.1 * sum(self.block_constants)
        return ok


def _resolved_P1(spec, grid: Grid, laplacian: bool) -> Array:
    """P_1 at the nodes of ``grid``, built on a finer spacing if needed."""
    from .heat_kernel import NyquistError, kernel_fourier_inversion
    g, step = grid, 1
    while True:
        try:
            P = kernel_fourier_inversion(spec, 1.0, g, laplacian=laplacian).values
            break
        except NyquistError:
            if step >= 64:
                raise
            g, step = g.refine(), step * 2
    return P[tuple(slice(0, None, step) for _ in range(grid.d))]


def _comparability(phi, grid: Grid, laplacian: bool, frac: float) -> float:
    mask = grid.trusted_mask(frac)
    P1 = _resolved_P1(phi.spec, grid, laplacian)
    ratio = phi.field(grid).values[mask] / P1[mask]
    return float(max(ratio.max(), 1 / ratio.min()))


def _c_L(op: OperatorSpec, phi, grid: Grid, frac: float) -> tuple[float, Field, Field]:
    pf = phi.field(grid)
    L = apply_levy(op, pf)
    mask = grid.trusted_mask(frac)
    return float(np.max(np.abs(L.values[mask]) / pf.values[mask])), pf, L


def verify_phi_bounds(phi, op=None, grid: Grid | None = None, *, psis: Sequence[Bump] | None = None,
                      refine: bool = True, tol: float = 0.05, frac: float = 0.5,
                      stride: int = 4) -> PhiBounds:
    """Fitted constants for |L phi| <= c phi and |B(psi, phi)| <= c max(|psi|,|grad psi|) phi."""
    product = isinstance(phi, PhiProduct)
    if op is None:
        op = OperatorSpec.anisotropic(phi.spec) if product else OperatorSpec.pure_jump(phi.spec)
    op = as_operator(op)
    grid = grid or Grid.default(phi.d)
    mask = grid.trusted_mask(frac)
    cL, pf, _ = _c_L(op, phi, grid, frac)
    # B bound over the bump battery
    psis = list(psis) if psis is not None else [b for b in spatial_battery(grid.d)
                                                 if b.support_radius() <= frac * grid.L]
    cB = 0.0
    for b in psis:
        B = bilinear_form(op, b.field(grid), pf).values
        scale = max(b.sup_norms())
        cB = max(cB, float(np.max(np.abs(B[mask]) / (scale * pf.values[mask]))))
    # comparability with P_1; for products the ratio factorises over blocks
    if product:
        comp = float(np.prod([_comparability(f, Grid(1, grid.N, grid.L), False, frac)
                              for f in phi.factors]))
    else:
        comp = _comparability(phi, grid, op.laplacian, frac)
    # near / far parts of the absolute integral
    near = far = float("nan")
    if product or grid.d == 1:
        n_ = abs_levy_integral(op, pf, stride=stride, frac=frac, band=(0.0, 1.0)).values
        f_ = abs_levy_integral(op, pf, stride=stride, frac=frac, band=(1.0, np.inf)).values
        near = float(np.nanmax(n_ / pf.values))
        far = float(np.nanmax(f_ / pf.values))
    lap = None
    if op.laplacian:
        E = (op.extend - 1) * grid.N // 2
        lap = float(np.max(np.abs(_spectral_laplacian(pf, E))[mask] / pf.values[mask]))
    out = PhiBounds(cL, cB, comp, near, far, lap)
    vals = [cL, cB, comp] + ([lap] if lap is not None else [])
    out.finite = bool(np.all(np.isfinite(vals)))
    if refine:
        c2, _, _ = _c_L(op, phi, grid.refine(), frac)
        out.refined_c_L = c2
        out.change = abs(c2 / cL - 1)
        out.stable = out.change < tol
    if product:
        out.block_constants = [
            _c_L(OperatorSpec.pure_jump(f.spec, delta=op.delta, order=op.order, extend=op.extend),
                 f, Grid(1, grid.N, grid.L), frac)[0] for f in phi.factors]
    phi.c = out.c
    phi.comparability = comp
    return out
