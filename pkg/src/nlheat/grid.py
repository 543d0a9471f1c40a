"""Uniform centred grids, sampled fields and tail models."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

Array = np.ndarray

DEFAULTS = {1: (4096, 64.0), 2: (512, 32.0), 3: (128, 16.0)}
MAGIC = b"NLHK"
HEADER = struct.Struct("<4sII4xdd")  # f64 fields 8-byte aligned: 32 bytes


@dataclass(frozen=True)
class Grid:
    """Tensor grid on [-L, L)^d with N nodes per axis; x = 0 is node N/2."""

    d: int
    N: int
    L: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if self.N < 4 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 4, got {self.N}")
        if self.L <= 0:
            raise ValueError("half-width must be positive")

    @classmethod
    def default(cls, d: int = 1) -> "Grid":
        N, L = DEFAULTS.get(d, (64, 8.0))
        return cls(d, N, L)

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def cell(self) -> float:
        return self.h ** self.d

    @property
    def axis(self) -> Array:
        return -self.L + self.h * np.arange(self.N)

    @property
    def origin_index(self) -> int:
        return self.N // 2

    @property
    def dual_spacing(self) -> float:
        return np.pi / self.L

    @property
    def nyquist(self) -> float:
        return np.pi / self.h

    def dual_axis(self) -> Array:
        """Frequencies in FFT order (spacing pi/L)."""
        return 2 * np.pi * np.fft.fftfreq(self.N, d=self.h)

    def mesh(self) -> list[Array]:
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    def points(self) -> Array:
        """Node coordinates with shape (N,)*d + (d,)."""
        return np.stack(self.mesh(), axis=-1)

    def radius(self) -> Array:
        if self.d == 1:
            return np.abs(self.axis)
        return np.sqrt(sum(m * m for m in self.mesh()))

    def dual_radius(self) -> Array:
        k = self.dual_axis()
        if self.d == 1:
            return np.abs(k)
        ks = np.meshgrid(*([k] * self.d), indexing="ij")
        return np.sqrt(sum(m * m for m in ks))

    def dual_mesh(self) -> list[Array]:
        k = self.dual_axis()
        return np.meshgrid(*([k] * self.d), indexing="ij")

    def trusted_mask(self, frac: float = 0.5) -> Array:
        """Nodes with |x|_inf <= frac * L."""
        m = np.ones(self.shape, dtype=bool)
        for c in self.mesh():
            m &= np.abs(c) <= frac * self.L + 1e-12
        return m

    def refine(self) -> "Grid":
        """Halve the spacing at fixed half-width."""
        return Grid(self.d, 2 * self.N, self.L)

    def enlarge(self, factor: int = 2) -> "Grid":
        """Grow the box at fixed spacing."""
        return Grid(self.d, factor * self.N, factor * self.L)

    def crop_slices(self, inner: "Grid") -> tuple:
        """Index slices of ``inner`` (same spacing, smaller box) inside self."""
        if not np.isclose(inner.h, self.h) or inner.N > self.N:
            raise ValueError("inner grid must share the spacing and fit inside")
        off = (self.N - inner.N) // 2
        return tuple(slice(off, off + inner.N) for _ in range(self.d))

    def to_dict(self) -> dict:
        return {"d": self.d, "N": self.N, "L": self.L, "h": self.h}


class TailModel:
    """Linear combination of basis functions describing a field beyond its box."""

    def __init__(self, basis: list[Callable[[Array], Array]], coef, residual: float = 0.0):
        self.basis = basis
        self.coef = np.asarray(coef, dtype=float)
        self.residual = residual

    def __call__(self, pts: Array) -> Array:
        out = 0.0
        for c, b in zip(self.coef, self.basis):
            out = out + c * b(pts)
        return out

    def scaled(self, s: float) -> "TailModel":
        return TailModel(self.basis, s * self.coef, self.residual)

    def __add__(self, other: "TailModel") -> "TailModel":
        return TailModel(self.basis + other.basis, np.r_[self.coef, other.coef],
                         self.residual + other.residual)


class ExactTail:
    """Tail given by a closed-form evaluator."""

    def __init__(self, fn: Callable[[Array], Array]):
        self.fn = fn
        self.residual = 0.0

    def __call__(self, pts):
        return self.fn(pts)


@dataclass
class Field:
    """Samples of a real function on a grid with an optional tail model."""

    grid: Grid
    values: Array
    tail: Callable | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.grid.shape}")

    def integral(self) -> float:
        return float(self.grid.cell * self.values.sum())

    def inside(self, pts: Array) -> Array:
        g = self.grid
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= -g.L - 1e-12) & (pts <= g.L - g.h + 1e-12), axis=-1)

    def evaluate(self, pts: Array) -> Array:
        """Cubic spline interpolation inside the box, tail model outside."""
        g = self.grid
        pts = np.asarray(pts, dtype=float)
        if g.d == 1 and (pts.ndim < 2 or pts.shape[-1] != 1):
            pts = pts[..., None]          # in d = 1 a flat array is a list of points
        shp = pts.shape[:-1]
        flat = pts.reshape(-1, g.d)
        idx = (flat + g.L) / g.h
        out = ndimage.map_coordinates(self.values, idx.T, order=3, mode="nearest",
                                      prefilter=True)
        ins = self.inside(flat)
        if not np.all(ins):
            outside = flat[~ins]
            out[~ins] = self.tail(outside if g.d > 1 else outside[:, 0]) \
                if self.tail is not None else 0.0
        return out.reshape(shp)

    def extended(self, factor: int) -> "Field":
        """Same spacing on a box ``factor`` times larger, filled with the tail."""
        big = self.grid.enlarge(factor)
        vals = np.zeros(big.shape)
        if self.tail is not None:
            pts = big.points()
            out = np.ones(big.shape, dtype=bool)
            out[big.crop_slices(self.grid)] = False
            p = pts[out]
            vals[out] = self.tail(p if big.d > 1 else p[:, 0])
        vals[big.crop_slices(self.grid)] = self.values
        return Field(big, vals, self.tail)

    def crop(self, inner: Grid) -> "Field":
        return Field(inner, self.values[self.grid.crop_slices(inner)].copy(), self.tail)


@dataclass
class KernelField(Field):
    """Heat kernel samples P_t with provenance.

    ``periodic`` marks values that are the periodisation over the box (the
    raw output of a discrete Fourier inversion); their cell sum is the mass.
    Otherwise the mass adds ``exterior_mass`` (mass beyond the box).
    """

    t: float = 1.0
    provenance: str = "fourier"
    periodic: bool = False
    exterior_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        m = self.integral()
        return m if self.periodic else m + self.exterior_mass

    def positive(self) -> bool:
        return bool(np.all(self.values > 0))

    def as_field(self) -> Field:
        return Field(self.grid, self.values, self.tail)


# ---------------------------------------------------------------------------
# binary field format

def write_field(path, grid: Grid, values: Array, t: float = 0.0) -> None:
    """32-byte header (magic, u32 d, u32 N, f64 L, f64 t) then f64 values."""
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, grid.d, grid.N, grid.L, t))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_field(path) -> tuple[Grid, Array, float]:
    with open(path, "rb") as fh:
        head = fh.read(32)
        magic, d, N, L, t = HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError("not a field file (bad magic)")
        grid = Grid(d, N, L)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != N ** d:
        raise ValueError(f"expected {N ** d} values, found {data.size}")
    return grid, data.reshape(grid.shape).copy(), t
