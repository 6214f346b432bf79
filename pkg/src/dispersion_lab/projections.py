"""Frequency projections: dyadic shells, unit cells and group-velocity sectors.

All three families are real Fourier multipliers, so they commute with each
other and with the free evolution.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .grid import Grid, SpectralField
from .symbols import SymbolSpec

__all__ = [
    "smooth_step",
    "bump",
    "lp_multiplier",
    "lp_project",
    "chi_multiplier",
    "dyadic_neighbors",
    "unit_profile",
    "unit_multiplier",
    "unit_project",
    "microlocal_masks",
    "microlocal_project",
    "is_dyadic",
    "shell_support",
    "DEFAULT_WIDTH",
    "DyadicProjector",
    "UnitProjector",
    "MicrolocalProjector",
]

DEFAULT_WIDTH = 0.25


def smooth_step(y: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for ``y <= 0``, 1 for ``y >= 1``, ``s(y) + s(1-y) = 1``."""
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)
        b = np.where(y < 1, np.exp(-1.0 / np.where(y < 1, 1 - y, 1.0)), 0.0)
    return a / (a + b)


def bump(r: np.ndarray, width: float = DEFAULT_WIDTH) -> np.ndarray:
    """Radial cutoff equal to 1 on ``[0, 1]`` and 0 beyond ``1 + width``."""
    if not width > 0:
        raise ValueError(f"transition width must be positive, got {width}")
    return 1.0 - smooth_step((np.asarray(r, dtype=float) - 1.0) / width)


def is_dyadic(N) -> bool:
    if isinstance(N, float) and not N.is_integer():
        return False
    N = int(N)
    return N >= 1 and N & (N - 1) == 0


def _check_dyadic(N) -> int:
    if not is_dyadic(N):
        raise ValueError(f"dyadic scale must be a power of two, got {N}")
    return int(N)


def shell_support(N: int, width: float = DEFAULT_WIDTH) -> tuple[float, float]:
    """Radii outside of which the shell multiplier vanishes."""
    N = _check_dyadic(N)
    return (0.0 if N == 1 else N / 2, N * (1 + width))


def lp_multiplier(r: np.ndarray, N: int, width: float = DEFAULT_WIDTH) -> np.ndarray:
    """Shell cutoff at scale ``N``: ``bump(r)`` for ``N = 1``, else ``bump(r/N) - bump(2r/N)``."""
    N = _check_dyadic(N)
    if N == 1:
        return bump(r, width)
    return bump(np.asarray(r) / N, width) - bump(2 * np.asarray(r) / N, width)


def dyadic_neighbors(N: int) -> list[int]:
    N = _check_dyadic(N)
    return [M for M in (N // 2, N, 2 * N) if M >= 1]


def chi_multiplier(r: np.ndarray, N: int, width: float = DEFAULT_WIDTH) -> np.ndarray:
    """Sum of the shell cutoffs at ``N/2, N, 2N``; equals 1 on the support of shell ``N``."""
    return sum(lp_multiplier(r, M, width) for M in dyadic_neighbors(N))


def _check_band(grid: Grid, N: int, width: float) -> None:
    top = shell_support(N, width)[1]
    if top > grid.nyquist:
        raise ValueError(f"shell N={N} reaches radius {top:g}, above the grid limit {grid.nyquist:g}")


def lp_project(f: SpectralField, N: int, width: float = DEFAULT_WIDTH) -> SpectralField:
    """Restrict ``f`` to the dyadic shell at scale ``N``."""
    _check_band(f.grid, N, width)
    return f.with_coeffs(f.coeffs * lp_multiplier(f.grid.xi_abs, N, width))


def unit_profile(x: np.ndarray) -> np.ndarray:
    """Even 1-d profile supported in (-1, 1) whose integer translates sum to 1."""
    return smooth_step(1.0 - np.abs(np.asarray(x, dtype=float)))


def _check_unit_lattice(grid: Grid) -> None:
    if not grid.unit_lattice:
        raise ValueError(f"unit-cell projections need integer box sides, got L={grid.L}")


def unit_multiplier(grid: Grid, k) -> np.ndarray:
    """Tensor-product cell cutoff centred at the integer point ``k``."""
    _check_unit_lattice(grid)
    k = np.atleast_1d(np.asarray(k))
    if k.shape != (grid.d,) or not np.all(k == np.round(k)):
        raise ValueError(f"cell index must be {grid.d} integers, got {k}")
    for ki, top in zip(k, grid.axis_nyquist):
        if abs(ki) + 1 >= top:
            raise ValueError(f"cell {tuple(k)} leaves the frequency window (axis limit {top:g})")
    out = np.ones(grid.shape)
    for axis, (ki, xi) in enumerate(zip(k, grid.frequency_mesh())):
        out = out * unit_profile(xi - ki)
    return out


def unit_project(f: SpectralField, k) -> SpectralField:
    """Restrict ``f`` to the unit cell around integer frequency ``k``."""
    return f.with_coeffs(f.coeffs * unit_multiplier(f.grid, k))


def microlocal_masks(sym: SymbolSpec, grid: Grid) -> list[np.ndarray]:
    """Boolean sectors where the l-th velocity component dominates.

    Sector ``l`` holds ``|d_l symbol| > |grad symbol| / (2 sqrt(d))`` minus all
    earlier sectors, so ties go to the lowest axis.  Points with zero
    gradient belong to no sector.
    """
    grads = sym.gradient_on_grid(grid)
    norm = np.sqrt(sum(g**2 for g in grads))
    threshold = norm / (2 * math.sqrt(grid.d))
    taken = np.zeros(grid.shape, dtype=bool)
    masks = []
    for g in grads:
        m = (np.abs(g) > threshold) & ~taken
        masks.append(m)
        taken |= m
    return masks


def microlocal_project(f: SpectralField, sym: SymbolSpec, l: int) -> SpectralField:
    """Sharp restriction of ``f`` to sector ``l`` (1-based axis index)."""
    if not 1 <= l <= f.grid.d:
        raise ValueError(f"direction must be in 1..{f.grid.d}, got {l}")
    return f.with_coeffs(np.where(microlocal_masks(sym, f.grid)[l - 1], f.coeffs, 0))


class _FieldTransformer(TransformerMixin, BaseEstimator):
    """Shared fit: remember the grid and check it against the parameters."""

    def fit(self, X: SpectralField, y=None):
        if not isinstance(X, SpectralField):
            raise TypeError(f"expected a SpectralField, got {type(X).__name__}")
        self._validate(X.grid)
        self.grid_ = X.grid
        return self

    def _validate(self, grid: Grid) -> None:
        pass

    def _check_fitted(self, X: SpectralField) -> None:
        if not hasattr(self, "grid_"):
            raise AttributeError(f"{type(self).__name__} is not fitted")
        if X.grid != self.grid_:
            raise ValueError("field lives on a different grid than the one seen in fit")


class DyadicProjector(_FieldTransformer):
    """Transformer form of :func:`lp_project`.

    Parameters
    ----------
    N : int
        Dyadic scale.
    width : float
        Transition width of the radial cutoff.
    """

    def __init__(self, N: int = 1, width: float = DEFAULT_WIDTH):
        self.N = N
        self.width = width

    def _validate(self, grid):
        _check_band(grid, _check_dyadic(self.N), self.width)

    def transform(self, X: SpectralField) -> SpectralField:
        self._check_fitted(X)
        return lp_project(X, self.N, self.width)


class UnitProjector(_FieldTransformer):
    """Transformer form of :func:`unit_project` for cell index ``k``."""

    def __init__(self, k=(0,)):
        self.k = k

    def _validate(self, grid):
        unit_multiplier(grid, self.k)

    def transform(self, X: SpectralField) -> SpectralField:
        self._check_fitted(X)
        return unit_project(X, self.k)


class MicrolocalProjector(_FieldTransformer):
    """Transformer form of :func:`microlocal_project`."""

    def __init__(self, symbol: SymbolSpec | None = None, l: int = 1):
        self.symbol = symbol
        self.l = l

    def _validate(self, grid):
        if self.symbol is None:
            raise ValueError("MicrolocalProjector needs a symbol")
        if not 1 <= self.l <= grid.d:
            raise ValueError(f"direction must be in 1..{grid.d}, got {self.l}")

    def transform(self, X: SpectralField) -> SpectralField:
        self._check_fitted(X)
        return microlocal_project(X, self.symbol, self.l)
