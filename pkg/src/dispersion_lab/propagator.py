"""Free evolution ``exp(-i t symbol(D))`` and the frequency-localized kernels.

The kernel at scale ``N`` is

    K_N(t, x) = int exp(2 pi i x.xi - i t symbol(xi)) chi_N(xi)^2 dxi

with no extra normalizing constant: constants are irrelevant for the
exponent fits built on top of it.  Radial symbols use a one-dimensional
Hankel-type integral, other symbols a zero-padded lattice sum.
"""

from __future__ import annotations

import math
from typing import Iterator, Sequence

import numpy as np
from scipy import special
from sklearn.base import BaseEstimator, TransformerMixin

from .grid import Grid, SpaceTimeSample, SpectralField, make_grid
from .projections import DEFAULT_WIDTH, chi_multiplier, shell_support
from .symbols import SymbolSpec

__all__ = [
    "evolve",
    "propagator_multiplier",
    "free_evolution",
    "stream_free_evolution",
    "kernel_KN",
    "kernel_radial_profile",
    "kernel_fft",
    "chi_support",
    "sphere_area",
    "kernel_directional_norm",
    "kernel_sweep_rows",
    "dispersive_decay",
    "FreeEvolution",
]


def propagator_multiplier(sym: SymbolSpec, grid: Grid, t: float) -> np.ndarray:
    return np.exp(-1j * t * sym.on_grid(grid))


def evolve(f: SpectralField, sym: SymbolSpec, t: float) -> SpectralField:
    """Free evolution of ``f`` to time ``t``."""
    return f.with_coeffs(f.coeffs * propagator_multiplier(sym, f.grid, t))


def stream_free_evolution(f: SpectralField, sym: SymbolSpec, times: Sequence[float]) -> Iterator[np.ndarray]:
    """Yield physical-space slices of the free evolution one time at a time."""
    lam = sym.on_grid(f.grid)
    scale = 1.0 / f.grid.cell_volume
    for t in times:
        yield np.fft.ifftn(f.coeffs * np.exp(-1j * t * lam)) * scale


def free_evolution(
    f: SpectralField, sym: SymbolSpec, times: Sequence[float], interval: tuple[float, float] | None = None
) -> SpaceTimeSample:
    """Free evolution sampled at ``times`` as a :class:`SpaceTimeSample`."""
    times = np.asarray(times, dtype=float)
    values = np.empty((times.size,) + f.grid.shape, dtype=complex)
    for i, slice_ in enumerate(stream_free_evolution(f, sym, times)):
        values[i] = slice_
    return SpaceTimeSample(f.grid, times, values, interval)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def chi_support(N: int, width: float = DEFAULT_WIDTH) -> tuple[float, float]:
    """Radii between which the squared neighbour cutoff at scale ``N`` lives."""
    lo = shell_support(max(N // 2, 1), width)[0] if N > 1 else 0.0
    return lo, shell_support(2 * N, width)[1]


def _bessel_average(nu: float, z: np.ndarray) -> np.ndarray:
    """Spherical average of ``exp(i z e.w)`` over unit ``w``: ``Gamma(nu+1) (2/z)^nu J_nu(z)``."""
    if nu == -0.5:
        return np.cos(z)
    if nu == 0.5:
        return np.sinc(z / np.pi)
    out = np.ones_like(z)
    nz = z > 1e-8
    zz = z[nz]
    out[nz] = math.gamma(nu + 1) * (2 / zz) ** nu * special.jv(nu, zz)
    return out


def kernel_radial_profile(
    sym: SymbolSpec,
    N: int,
    d: int,
    t: np.ndarray | float,
    rho: np.ndarray,
    *,
    width: float = DEFAULT_WIDTH,
    phase_step: float = math.pi / 8,
    max_nodes: int = 1 << 22,
    chunk: int = 1 << 22,
) -> np.ndarray:
    """``K_N(t, x)`` at radii ``rho = |x|`` for a radial symbol.

    The radial integrand is smooth and vanishes to infinite order at both
    ends of the cutoff support, so the trapezoid rule on a node spacing that
    keeps the phase increment below ``phase_step`` converges very fast.

    Returns an array of shape ``(len(t), len(rho))``.
    """
    if not sym.is_radial:
        raise ValueError(f"{sym.name} is not radial; use kernel_fft")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    lo, hi = chi_support(N, width)
    speed = float(sym.group_speed(np.linspace(lo, hi, 257)).max())
    rate = np.abs(t).max() * speed + 2 * math.pi * np.abs(rho).max()
    # the cutoff itself varies on the scale width * N / 2
    nodes = int(max(256, math.ceil((hi - lo) * max(rate / phase_step, 64 / (width * max(N // 2, 1))))))
    if nodes > max_nodes:
        raise ValueError(f"kernel quadrature would need {nodes} radial nodes (limit {max_nodes}); reduce t or |x|")
    r = np.linspace(lo, hi, nodes + 1)
    dr = r[1] - r[0]
    base = r ** (d - 1) * chi_multiplier(r, N, width) ** 2 * dr * sphere_area(d)
    lam = sym.radial.g(r)
    nu = d / 2 - 1
    out = np.empty((t.size, rho.size), dtype=complex)
    step = max(1, chunk // r.size)
    for j in range(0, rho.size, step):
        avg = _bessel_average(nu, 2 * math.pi * r[:, None] * np.abs(rho[None, j : j + step]))
        for i, ti in enumerate(t):
            out[i, j : j + step] = (base * np.exp(-1j * ti * lam)) @ avg
    return out


def kernel_fft(
    sym: SymbolSpec,
    N: int,
    t: float,
    d: int,
    L: float,
    *,
    padding: int = 4,
    width: float = DEFAULT_WIDTH,
) -> tuple[Grid, np.ndarray]:
    """Lattice-sum kernel on a periodic box of side ``L``.

    The lattice covers the cutoff support ``padding`` times over.  Values are
    only trusted in the central window ``|x_i| <= L / 8``; the phase increment
    per frequency cell ``t max|grad| / L`` must stay below ``pi / 4``.
    """
    if padding < 4:
        raise ValueError(f"zero-padding factor must be at least 4, got {padding}")
    top = chi_support(N, width)[1]
    speed = sym.max_gradient(top, d)
    if abs(t) * speed / L > math.pi / 4:
        raise ValueError(
            f"phase step {abs(t) * speed / L:.3g} per frequency cell exceeds pi/4; enlarge L to at least {4 * abs(t) * speed / math.pi:.4g}"
        )
    n = int(2 ** math.ceil(math.log2(2 * padding * top * L / 2)))
    n = max(n, 8)
    grid = make_grid(d, n, L)
    chi = chi_multiplier(grid.xi_abs, N, width)
    mult = chi**2 * np.exp(-1j * t * sym.on_grid(grid))
    values = np.fft.ifftn(mult) * grid.size / grid.volume
    return grid, values


def kernel_KN(
    sym: SymbolSpec,
    N: int,
    t: float,
    x,
    *,
    width: float = DEFAULT_WIDTH,
    method: str = "auto",
    L: float | None = None,
) -> complex | np.ndarray:
    """Kernel value at time ``t`` and point(s) ``x`` of shape ``(d,)`` or ``(m, d)``.

    ``method="radial"`` (default for radial symbols) integrates the radial
    profile; ``method="fft"`` sums over a padded lattice of side ``L`` directly
    at the requested points.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    d = pts.shape[-1]
    if method == "auto":
        method = "radial" if sym.is_radial else "fft"
    if method == "radial":
        rho = np.linalg.norm(pts, axis=-1)
        vals = kernel_radial_profile(sym, N, d, t, rho, width=width)[0]
    elif method == "fft":
        top = chi_support(N, width)[1]
        speed = sym.max_gradient(top, d)
        if L is None:
            L = max(8 * np.abs(pts).max() + 1.0, 4 * abs(t) * speed / math.pi, 8.0 / N)
        if np.abs(pts).max() > L / 8:
            raise ValueError(f"points leave the trusted window |x_i| <= L/8 = {L / 8:g}")
        if abs(t) * speed / L > math.pi / 4:
            raise ValueError(f"phase step per frequency cell exceeds pi/4; need L >= {4 * abs(t) * speed / math.pi:.4g}")
        k = np.arange(-math.ceil(top * L), math.ceil(top * L) + 1) / L
        if k.size**d > 1 << 24:
            raise ValueError(f"lattice sum would visit {k.size**d} frequencies; reduce t, |x| or N")
        mesh = np.stack(np.meshgrid(*([k] * d), indexing="ij"), axis=-1).reshape(-1, d)
        r = np.linalg.norm(mesh, axis=-1)
        keep = r <= top
        mesh, r = mesh[keep], r[keep]
        amp = chi_multiplier(r, N, width) ** 2 * np.exp(-1j * t * sym.evaluate(mesh)) / L**d
        vals = np.exp(2j * math.pi * pts @ mesh.T) @ amp
    else:
        raise ValueError(f"unknown kernel method {method!r}")
    return complex(vals[0]) if single else vals


def _default_rho_grid(N: int, X: float, samples_per_unit: int = 16) -> np.ndarray:
    count = int(math.ceil(X * N * samples_per_unit)) + 1
    return np.linspace(0.0, X, max(count, 64))


def kernel_directional_norm(
    sym: SymbolSpec,
    N: int,
    d: int,
    T: float,
    X: float,
    *,
    n_times: int = 129,
    width: float = DEFAULT_WIDTH,
    rho_extent: float | None = None,
) -> float:
    """``int_{|x_1| <= X} sup_{|t| <= T, x'} |K_N(t, x_1, x')| dx_1`` for a radial symbol.

    For a radial kernel ``sup_{x'} |K(t, x_1, x')| = sup_{rho >= |x_1|} |k(t, rho)|``
    and ``|K(-t, x)| = |K(t, x)|``, so only ``t >= 0`` and a radial grid are
    needed.  The radial supremum is taken over ``rho`` up to ``rho_extent``
    (default ``2 X``).
    """
    rho_max = 2 * X if rho_extent is None else rho_extent
    rho = _default_rho_grid(N, rho_max)
    times = np.linspace(0.0, T, n_times)
    k = np.abs(kernel_radial_profile(sym, N, d, times, rho, width=width))
    sup_t = k.max(axis=0)
    # suffix maximum over rho >= |x_1|
    envelope = np.maximum.accumulate(sup_t[::-1])[::-1]
    inside = rho <= X
    return float(2 * np.trapezoid(envelope[inside], rho[inside]))


def kernel_sweep_rows(sym: SymbolSpec, N: int, d: int, t: float, x1: np.ndarray, width: float = DEFAULT_WIDTH):
    """CSV rows ``(N, t, x1, |K_N|, region)`` along the first axis.

    Regions: ``core`` within ``1/N`` of the origin, ``cone`` inside the
    distance reached at the fastest group speed, ``tail`` beyond it.
    """
    x1 = np.asarray(x1, dtype=float)
    vals = np.abs(kernel_radial_profile(sym, N, d, t, np.abs(x1), width=width)[0])
    lo, hi = chi_support(N, width)
    reach = abs(t) * float(sym.group_speed(np.linspace(lo, hi, 257)).max()) / (2 * math.pi)
    rows = []
    for x, v in zip(x1, vals):
        tag = "core" if abs(x) <= 1.0 / N else ("cone" if abs(x) <= reach else "tail")
        rows.append((N, float(t), float(x), float(v), tag))
    return rows


def dispersive_decay(
    sym: SymbolSpec, N: int, d: int, times: Sequence[float], *, width: float = DEFAULT_WIDTH
) -> tuple[np.ndarray, float]:
    """``sup_x |K_N(t, x)|`` at each time and the fitted log-log slope.

    The radial grid extends past the farthest point the fastest frequency
    reaches, plus a margin, and resolves the shortest wavelength.
    """
    times = np.asarray(times, dtype=float)
    lo, hi = chi_support(N, width)
    speed = float(sym.group_speed(np.linspace(lo, hi, 257)).max())
    reach = times.max() * speed / (2 * math.pi) + 4.0 / N
    rho = np.linspace(0.0, reach, int(math.ceil(reach * hi * 8)) + 64)
    sup = np.abs(kernel_radial_profile(sym, N, d, times, rho, width=width)).max(axis=1)
    slope = float(np.polyfit(np.log(times), np.log(sup), 1)[0])
    return sup, slope


class FreeEvolution(TransformerMixin, BaseEstimator):
    """Transformer from a datum to its sampled free evolution.

    Parameters
    ----------
    symbol : SymbolSpec
        Dispersion symbol.
    times : sequence of float
        Sample times.
    """

    def __init__(self, symbol: SymbolSpec | None = None, times=(0.0,)):
        self.symbol = symbol
        self.times = times

    def fit(self, X: SpectralField, y=None):
        if self.symbol is None:
            raise ValueError("FreeEvolution needs a symbol")
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be a non-empty strictly increasing sequence")
        self.grid_ = X.grid
        return self

    def transform(self, X: SpectralField) -> SpaceTimeSample:
        if not hasattr(self, "grid_"):
            raise AttributeError("FreeEvolution is not fitted")
        return free_evolution(X, self.symbol, self.times)
