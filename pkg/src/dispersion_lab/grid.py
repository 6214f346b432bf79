"""Periodic-box discretization of R^d, spectral transforms and quadrature.

Conventions
-----------
The box has side ``L_i`` and ``n_i`` points along axis ``i``.  Physical
positions are stored in FFT order using wrapped coordinates, so index 0 is
the origin and the largest index is ``-dx``.  The frequency lattice is
``xi_j = j / L_i`` for ``j`` in ``{-n/2, ..., n/2 - 1}``, also in FFT order.

Coefficients approximate the continuous transform
``f_hat(xi) = int f(x) exp(-2 pi i x.xi) dx`` by ``dx^d * fftn(samples)``,
which makes the discrete Parseval identity read
``sum |f_hat|^2 dxi^d = sum |f|^2 dx^d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "Grid",
    "SpectralField",
    "SpaceTimeSample",
    "make_grid",
    "to_frequency",
    "to_space",
    "quadrature_lebesgue",
    "boundary_mass_fraction",
    "trapezoid_weights",
    "sobolev_weight",
]


def _is_fft_friendly(n: int) -> bool:
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class Grid:
    """A d-dimensional periodic box.

    Use :func:`make_grid` rather than the constructor; it validates and
    broadcasts scalar ``n`` and ``L`` to every axis.
    """

    d: int
    n: tuple[int, ...]
    L: tuple[float, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return math.prod(self.n)

    @property
    def isotropic(self) -> bool:
        return len(set(self.n)) == 1 and len(set(self.L)) == 1

    @property
    def dx(self) -> tuple[float, ...]:
        return tuple(L / n for n, L in zip(self.n, self.L))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.dx)

    @property
    def frequency_cell_volume(self) -> float:
        return 1.0 / math.prod(self.L)

    @property
    def volume(self) -> float:
        return math.prod(self.L)

    @property
    def nyquist(self) -> float:
        """Largest radius such that the centred ball fits inside the lattice."""
        return min((n // 2 - 1) / L for n, L in zip(self.n, self.L))

    @property
    def axis_nyquist(self) -> tuple[float, ...]:
        return tuple(n / (2 * L) for n, L in zip(self.n, self.L))

    @property
    def unit_lattice(self) -> bool:
        """True when Z^d embeds in the frequency lattice (integer side lengths)."""
        return all(abs(L - round(L)) < 1e-12 and round(L) >= 1 for L in self.L)

    def frequencies(self, axis: int) -> np.ndarray:
        return np.fft.fftfreq(self.n[axis], d=self.L[axis] / self.n[axis])

    def positions(self, axis: int) -> np.ndarray:
        return np.fft.fftfreq(self.n[axis], d=1.0 / self.L[axis])

    def frequency_mesh(self) -> list[np.ndarray]:
        """Broadcastable per-axis frequency arrays (sparse mesh)."""
        return np.meshgrid(*[self.frequencies(i) for i in range(self.d)], indexing="ij", sparse=True)

    def position_mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.positions(i) for i in range(self.d)], indexing="ij", sparse=True)

    @cached_property
    def xi_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.frequency_mesh())

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi_squared)

    @cached_property
    def x_squared(self) -> np.ndarray:
        return sum(x**2 for x in self.position_mesh())

    def padded(self, factor: int) -> "Grid":
        """Same box with ``factor`` times more points per axis."""
        return Grid(self.d, tuple(n * factor for n in self.n), self.L)


def make_grid(d: int, n: int | Sequence[int], L: float | Sequence[float], *, unit_lattice: bool = False) -> Grid:
    """Build a validated :class:`Grid`.

    Parameters
    ----------
    d : int
        Spatial dimension, at least 1.
    n : int or sequence of int
        Points per axis.  Must be even, at least 8 and a product of 2, 3, 5.
    L : float or sequence of float
        Box side lengths.
    unit_lattice : bool
        Require integer side lengths so that Z^d sits inside the frequency
        lattice (needed by unit-scale projections and randomization).
    """
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    ns = (int(n),) * d if np.isscalar(n) else tuple(int(v) for v in n)
    Ls = (float(L),) * d if np.isscalar(L) else tuple(float(v) for v in L)
    if len(ns) != d or len(Ls) != d:
        raise ValueError("n and L must be scalars or have one entry per axis")
    for v in ns:
        if v % 2:
            raise ValueError(f"points per axis must be even, got {v}")
        if v < 8:
            raise ValueError(f"points per axis must be at least 8, got {v}")
        if not _is_fft_friendly(v):
            raise ValueError(f"points per axis must factor into 2, 3 and 5, got {v}")
    for v in Ls:
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"box side must be positive, got {v}")
    grid = Grid(d, ns, Ls)
    if unit_lattice and not grid.unit_lattice:
        raise ValueError(f"unit lattice requires integer box sides, got L={Ls}")
    return grid


def _check_shape(arr: np.ndarray, grid: Grid, leading: int = 0) -> None:
    if arr.shape[leading:] != grid.shape:
        raise ValueError(f"array shape {arr.shape} does not match grid shape {grid.shape}")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex coefficients on the frequency lattice of ``grid`` (FFT order)."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        _check_shape(coeffs, self.grid)
        coeffs = np.array(coeffs, copy=True)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def to_space(self) -> np.ndarray:
        return to_space(self)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coeffs)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2) * self.grid.frequency_cell_volume))

    def sobolev_norm(self, S: float) -> float:
        """H^S norm with weight ``(1 + 4 pi^2 |xi|^2)^(S/2)``."""
        weight = sobolev_weight(self.grid, S)
        return float(np.sqrt(np.sum(np.abs(weight * self.coeffs) ** 2) * self.grid.frequency_cell_volume))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: complex) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))


def sobolev_weight(grid: Grid, S: float) -> np.ndarray:
    """Bessel-potential weight ``(1 + 4 pi^2 |xi|^2)^(S/2)`` on the lattice."""
    return (1.0 + 4 * np.pi**2 * grid.xi_squared) ** (S / 2)


def to_frequency(samples: np.ndarray, grid: Grid) -> SpectralField:
    """Forward transform of physical samples."""
    samples = np.asarray(samples)
    _check_shape(samples, grid)
    return SpectralField(grid, np.fft.fftn(samples) * grid.cell_volume)


def to_space(field: SpectralField) -> np.ndarray:
    """Inverse transform back to physical samples."""
    return np.fft.ifftn(field.coeffs) / field.grid.cell_volume


def quadrature_lebesgue(samples: np.ndarray, grid: Grid, p: float) -> float:
    """Riemann-sum L^p norm ``(sum |f|^p dx^d)^(1/p)``; ``p = inf`` is the grid max."""
    if not p >= 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    samples = np.asarray(samples)
    _check_shape(samples, grid)
    mag = np.abs(samples)
    if math.isinf(p):
        return float(mag.max(initial=0.0))
    scale = mag.max(initial=0.0)
    if scale == 0.0:
        return 0.0
    return float(scale * (np.sum((mag / scale) ** p) * grid.cell_volume) ** (1.0 / p))


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    """Trapezoid weights for (possibly non-uniform) sample times; one sample gets weight 0."""
    times = np.asarray(times, dtype=float)
    w = np.zeros_like(times)
    if times.size > 1:
        dt = np.diff(times)
        w[:-1] += dt / 2
        w[1:] += dt / 2
    return w


@dataclass(frozen=True, eq=False)
class SpaceTimeSample:
    """Physical-space values of a field on a time grid inside ``interval``."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray
    interval: tuple[float, float] | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("times must be a non-empty 1-d array")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        interval = self.interval
        if interval is None:
            interval = (float(times[0]), float(times[-1]))
        lo, hi = interval
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if times[0] < lo - tol or times[-1] > hi + tol:
            raise ValueError(f"sample times leave the interval {interval}")
        values = np.asarray(self.values, dtype=complex)
        if values.shape[0] != times.size:
            raise ValueError("values must have one slice per sample time")
        _check_shape(values, self.grid, leading=1)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "interval", (float(lo), float(hi)))

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.times)

    @property
    def duration(self) -> float:
        return self.interval[1] - self.interval[0]

    def __len__(self) -> int:
        return self.times.size

    def with_values(self, values: np.ndarray) -> "SpaceTimeSample":
        return SpaceTimeSample(self.grid, self.times, values, self.interval)

    def frequency_values(self) -> np.ndarray:
        axes = tuple(range(1, self.grid.d + 1))
        return np.fft.fftn(self.values, axes=axes) * self.grid.cell_volume

    def apply_multiplier(self, multiplier: np.ndarray) -> "SpaceTimeSample":
        """Apply a Fourier multiplier to every time slice."""
        axes = tuple(range(1, self.grid.d + 1))
        out = np.fft.ifftn(np.fft.fftn(self.values, axes=axes) * multiplier, axes=axes)
        return self.with_values(out)


def boundary_mass_fraction(values: np.ndarray, grid: Grid, margin: float = 0.1) -> float:
    """Share of L^2 mass within ``margin * L`` of the box faces.

    For a stack of slices the worst slice is reported.  Used as the
    wrap-around guard: fields that stay well inside the box behave as on R^d.
    """
    values = np.asarray(values)
    stacked = values.ndim == grid.d + 1
    mask = np.zeros(grid.shape, dtype=bool)
    for axis, x in enumerate(grid.position_mesh()):
        mask = mask | (np.abs(x) > (0.5 - margin) * grid.L[axis])
    mass = np.abs(values) ** 2
    if not stacked:
        mass = mass[None]
    axes = tuple(range(1, grid.d + 1))
    total = mass.sum(axis=axes)
    edge = (mass * mask).sum(axis=axes)
    frac = np.where(total > 0, edge / np.where(total > 0, total, 1.0), 0.0)
    return float(frac.max())
