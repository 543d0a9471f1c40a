"""Smooth compactly supported bumps and the fixed test-function battery."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid

Array = np.ndarray


def eta(z, k: int = 0) -> Array:
    """exp(1 - 1/(1 - z^2)) on |z| < 1 (peak 1) and its first two derivatives."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    m = np.abs(z) < 1
    zz = z[m]
    q = 1.0 - zz * zz
    e = np.exp(1.0 - 1.0 / q)
    if k == 0:
        out[m] = e
    elif k == 1:
        out[m] = e * (-2 * zz / q ** 2)
    elif k == 2:
        out[m] = e * (4 * zz * zz / q ** 4 - 2 / q ** 2 - 8 * zz * zz / q ** 3)
    else:
        raise ValueError("only derivatives up to order 2")
    return out


@dataclass(frozen=True)
class Bump:
    """psi(x) = prod_i eta((x_i - c_i) / w), a smooth bump in space."""

    centre: tuple
    width: float

    @property
    def d(self) -> int:
        return len(self.centre)

    def _z(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        return (pts - np.asarray(self.centre)) / self.width

    def __call__(self, pts) -> Array:
        return np.prod(eta(self._z(pts)), axis=-1)

    def grad(self, pts) -> Array:
        z = self._z(pts)
        e0 = eta(z)
        out = np.empty(z.shape)
        for a in range(self.d):
            f = e0.copy()
            f[..., a] = eta(z[..., a], 1) / self.width
            out[..., a] = np.prod(f, axis=-1)
        return out

    def support_radius(self) -> float:
        """Sup-norm distance from the origin to the edge of the support."""
        return float(np.max(np.abs(self.centre)) + self.width)

    def field(self, grid: Grid) -> Field:
        pts = grid.points() if grid.d > 1 else grid.axis
        return Field(grid, self(pts))

    def sup_norms(self) -> tuple[float, float]:
        """(||psi||_inf, ||grad psi||_inf)."""
        z = np.linspace(-1, 1, 4001)
        g1 = float(np.max(np.abs(eta(z, 1)))) / self.width
        return 1.0, g1


@dataclass(frozen=True)
class TestFunction:
    """theta(x, t) = amp * psi(x) * eta((t - tau) / s), compact in space and time."""

    __test__ = False          # keeps pytest from collecting the class by name

    bump: Bump
    tau: float
    s: float
    amp: float = 1.0

    def __post_init__(self):
        if self.tau - self.s <= 0:
            raise ValueError("time support must lie in t > 0")

    @property
    def window(self) -> tuple[float, float]:
        return self.tau - self.s, self.tau + self.s

    def time_factor(self, t, k: int = 0) -> Array:
        return self.amp * eta((np.asarray(t, float) - self.tau) / self.s, k) / self.s ** k

    def __call__(self, pts, t) -> Array:
        return self.bump(pts) * self.time_factor(t)

    def dt(self, pts, t) -> Array:
        return self.bump(pts) * self.time_factor(t, 1)

    def fits(self, grid: Grid, frac: float = 0.5) -> bool:
        return self.bump.support_radius() <= frac * grid.L


# placements and scales of the spatial bumps (centre offset, width)
_PLACEMENTS = ((0.0, 1.0), (0.0, 3.0), (2.0, 1.5), (-3.0, 2.0), (5.0, 4.0))


def spatial_battery(d: int = 1) -> list[Bump]:
    out = []
    for k, (c, w) in enumerate(_PLACEMENTS):
        centre = tuple(c if a == 0 else (-1) ** k * 0.5 * c for a in range(d))
        out.append(Bump(centre, w))
    return out


def space_time_battery(d: int = 1, T: float = 2.0) -> list[TestFunction]:
    """Five fixed test functions with time supports inside (0, T)."""
    windows = ((0.65, 0.35), (1.0, 0.5), (0.8, 0.4), (1.2, 0.6), (1.05, 0.7))
    return [TestFunction(b, tau * T / 2, s * T / 2)
            for b, (tau, s) in zip(spatial_battery(d), windows)]
