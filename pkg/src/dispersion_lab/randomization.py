"""Unit-cell randomization of data and Monte Carlo tail oracles.

The random datum is ``sum_k g_k Q_k f`` where ``Q_k`` is the unit-cell
projection around integer frequency ``k`` and the ``g_k`` are independent,
mean zero, with ``E|g|^2 = 1``.  Coefficients come from a counter-based
generator keyed by ``(seed, k)``, so a given cell always receives the same
coefficient no matter how the lattice is traversed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, TransformerMixin

from .grid import SpectralField, sobolev_weight
from .projections import unit_profile

__all__ = [
    "LAWS",
    "keyed_uniforms",
    "keyed_coefficients",
    "randomization_multiplier",
    "randomize",
    "overlap_factor",
    "expected_sobolev_square",
    "second_moment_check",
    "SecondMomentResult",
    "TailTable",
    "deviation_oracle",
    "subgaussian_slope",
    "fit_tail_envelope",
    "envelope_violations",
    "wilson_interval",
    "exponential_tail",
    "Randomizer",
]

LAWS = ("gaussian", "phase")

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _key(seed: int, index: np.ndarray) -> np.ndarray:
    """Hash ``(seed, index)`` to 64 bits; ``index`` has shape ``(..., m)``."""
    index = np.asarray(index, dtype=np.int64)
    h = np.full(index.shape[:-1], _splitmix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)), dtype=np.uint64)
    for j in range(index.shape[-1]):
        h = _splitmix(h ^ index[..., j].astype(np.uint64))
    return h


def keyed_uniforms(seed: int, index: np.ndarray, stream: int) -> np.ndarray:
    """Uniform numbers in [0, 1) determined by ``(seed, index, stream)``."""
    h = _splitmix(_key(seed, index) ^ _splitmix(np.uint64(stream)))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def keyed_coefficients(seed: int, index: np.ndarray, law: str = "gaussian") -> np.ndarray:
    """Coefficients for integer indices of shape ``(..., m)``.

    ``gaussian`` is the complex standard normal (real and imaginary parts
    N(0, 1/2)), built by Box-Muller.  ``phase`` draws a uniform point on the
    unit circle.  Both have mean zero and unit second moment.
    """
    angle = np.exp(2j * np.pi * keyed_uniforms(seed, index, 2))
    if law == "phase":
        return angle
    if law != "gaussian":
        raise ValueError(f"unknown law {law!r}; choose one of {LAWS}")
    u = keyed_uniforms(seed, index, 1)
    return np.sqrt(-np.log1p(-u)) * angle


def _corner_data(grid):
    """Lower cell corner and per-axis weights of the two neighbouring cells."""
    floors, weights = [], []
    for xi in grid.frequency_mesh():
        m = np.floor(xi)
        floors.append(m.astype(np.int64))
        weights.append((unit_profile(xi - m), unit_profile(xi - m - 1)))
    return floors, weights


def randomization_multiplier(grid, seed: int, law: str = "gaussian") -> np.ndarray:
    """``sum_k g_k psi(xi - k)`` on the lattice, summing the 2^d cells around each point."""
    if not grid.unit_lattice:
        raise ValueError(f"randomization needs integer box sides, got L={grid.L}")
    floors, weights = _corner_data(grid)
    out = np.zeros(grid.shape, dtype=complex)
    for corner in product((0, 1), repeat=grid.d):
        idx = np.stack(np.broadcast_arrays(*[m + c for m, c in zip(floors, corner)]), axis=-1)
        w = np.ones(())
        for axis, c in enumerate(corner):
            w = w * weights[axis][c]
        out += w * keyed_coefficients(seed, idx, law)
    return out


def randomize(f: SpectralField, seed: int, law: str = "gaussian") -> SpectralField:
    """Randomized datum ``sum_k g_k(seed) Q_k f``."""
    return f.with_coeffs(f.coeffs * randomization_multiplier(f.grid, seed, law))


def overlap_factor(grid) -> np.ndarray:
    """``sum_k psi(xi - k)^2`` on the lattice, the pointwise variance of the multiplier."""
    if not grid.unit_lattice:
        raise ValueError(f"randomization needs integer box sides, got L={grid.L}")
    _, weights = _corner_data(grid)
    out = np.ones(())
    for w0, w1 in weights:
        out = out * (w0**2 + w1**2)
    return np.broadcast_to(out, grid.shape)


def expected_sobolev_square(f: SpectralField, S: float) -> float:
    """Exact ``E ||f^omega||_{H^S}^2 = sum_k ||Q_k f||_{H^S}^2``."""
    w = sobolev_weight(f.grid, S)
    dens = np.abs(w * f.coeffs) ** 2 * overlap_factor(f.grid)
    return float(dens.sum() * f.grid.frequency_cell_volume)


@dataclass
class SecondMomentResult:
    mean: float
    stderr: float
    analytic: float
    overlap: float

    @property
    def z_score(self) -> float:
        return (self.mean - self.analytic) / self.stderr if self.stderr > 0 else 0.0


def second_moment_check(f: SpectralField, S: float, seeds, law: str = "gaussian") -> SecondMomentResult:
    """Monte Carlo mean of ``||f^omega||_{H^S}^2`` against its exact value.

    ``overlap`` is the ratio of the exact value to ``||f||_{H^S}^2``.
    """
    vals = np.array([randomize(f, int(s), law).sobolev_norm(S) ** 2 for s in seeds])
    analytic = expected_sobolev_square(f, S)
    base = f.sobolev_norm(S) ** 2
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return SecondMomentResult(float(vals.mean()), se, analytic, analytic / base if base else float("nan"))


def wilson_interval(k: np.ndarray, n: int, z: float = 1.96) -> tuple[np.ndarray, np.ndarray]:
    """Wilson score interval for binomial proportions ``k / n``."""
    k = np.asarray(k, dtype=float)
    p = k / n
    denom = 1 + z**2 / n
    centre = (p + z**2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return centre - half, centre + half


@dataclass
class TailTable:
    """Empirical tail of ``|sum c_n g_n|`` and its normalized moments.

    ``moment_ratios[gamma]`` is ``||F||_{L^gamma} / (sqrt(gamma) ||c||_2)``.
    """

    lambdas: np.ndarray
    tail: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    samples: int
    coeff_norm: float
    moment_ratios: dict = field(default_factory=dict)

    def rows(self):
        for lam, p, lo, hi in zip(self.lambdas, self.tail, self.lower, self.upper):
            yield (float(lam), float(p), float(lo), float(hi))

    @property
    def moment_constant(self) -> float:
        return max(self.moment_ratios.values())


def deviation_oracle(
    c,
    lambdas,
    M: int = 100_000,
    seed: int = 0,
    law: str = "gaussian",
    gammas=(2, 4, 6, 8),
    batch: int = 20_000,
) -> TailTable:
    """Sample ``F = sum_n c_n g_n`` ``M`` times and tabulate ``P(|F| > lambda)``.

    Samples are drawn in batches from the keyed generator with index
    ``(sample, n)``, so the table depends only on ``(c, M, seed, law)``.
    """
    c = np.asarray(c, dtype=complex).ravel()
    norm = float(np.sqrt(np.sum(np.abs(c) ** 2)))
    if c.size == 0 or norm == 0:
        raise ValueError("coefficient sequence must have positive l2 norm")
    if M < 10_000:
        raise ValueError(f"need at least 10^4 samples, got {M}")
    lambdas = np.asarray(lambdas, dtype=float)
    exceed = np.zeros(lambdas.size, dtype=np.int64)
    moments = {g: 0.0 for g in gammas}
    n_idx = np.arange(c.size)
    for start in range(0, M, batch):
        stop = min(M, start + batch)
        idx = np.stack(np.broadcast_arrays(np.arange(start, stop)[:, None], n_idx[None, :]), axis=-1)
        F = np.abs(keyed_coefficients(seed, idx, law) @ c)
        exceed += (F[:, None] > lambdas[None, :]).sum(axis=0)
        for g in gammas:
            moments[g] += float(np.sum(F**g))
    tail = exceed / M
    lo, hi = wilson_interval(exceed, M)
    ratios = {g: (moments[g] / M) ** (1 / g) / (math.sqrt(g) * norm) for g in gammas}
    return TailTable(lambdas, tail, lo, hi, M, norm, ratios)


def subgaussian_slope(table: TailTable, min_count: int = 50) -> float:
    """Slope of ``log tail`` against ``lambda^2 / ||c||^2`` over well-populated points."""
    x = table.lambdas**2 / table.coeff_norm**2
    keep = table.tail * table.samples >= min_count
    if keep.sum() < 3:
        raise ValueError("too few populated tail points to fit a slope")
    slope, _ = np.polyfit(x[keep], np.log(table.tail[keep]), 1)
    return float(slope)


def fit_tail_envelope(table: TailTable) -> tuple[float, float]:
    """Fit ``(C1, c)`` so that ``C1 exp(-c lambda^2 / K^2)`` dominates the tail.

    ``K`` is the moment constant times ``||c||_2``; ``c`` comes from the log-tail
    slope and ``C1`` is the smallest prefactor covering every point.
    """
    K = table.moment_constant * table.coeff_norm
    keep = table.tail > 0
    x = table.lambdas[keep] ** 2 / K**2
    slope, _ = np.polyfit(x, np.log(table.tail[keep]), 1)
    rate = -float(slope)
    C1 = float(np.max(table.tail[keep] * np.exp(rate * x)))
    return C1, rate


def envelope_violations(table: TailTable, C1: float, rate: float, n_sigma: float = 3.0) -> int:
    """Count tail points above the envelope by more than ``n_sigma`` Monte Carlo errors."""
    K = table.moment_constant * table.coeff_norm
    env = C1 * np.exp(-rate * table.lambdas**2 / K**2)
    err = np.sqrt(np.maximum(table.tail * (1 - table.tail), 1.0 / table.samples) / table.samples)
    return int(np.sum(table.tail > env + n_sigma * err))


def exponential_tail(lambdas) -> np.ndarray:
    """Closed-form ``P(|g| > lambda) = exp(-lambda^2)`` for the complex standard normal."""
    return stats.expon.sf(np.asarray(lambdas, dtype=float) ** 2)


class Randomizer(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`randomize`.

    Parameters
    ----------
    seed : int
        Key of the coefficient generator.
    law : {"gaussian", "phase"}
        Coefficient distribution.
    """

    def __init__(self, seed: int = 0, law: str = "gaussian"):
        self.seed = seed
        self.law = law

    def fit(self, X: SpectralField, y=None):
        if not isinstance(X, SpectralField):
            raise TypeError(f"expected a SpectralField, got {type(X).__name__}")
        if not X.grid.unit_lattice:
            raise ValueError(f"randomization needs integer box sides, got L={X.grid.L}")
        if self.law not in LAWS:
            raise ValueError(f"unknown law {self.law!r}; choose one of {LAWS}")
        self.grid_ = X.grid
        self.overlap_ = float(
            np.sum(np.abs(X.coeffs) ** 2 * overlap_factor(X.grid)) / max(np.sum(np.abs(X.coeffs) ** 2), 1e-300)
        )
        return self

    def transform(self, X: SpectralField) -> SpectralField:
        if not hasattr(self, "grid_"):
            raise AttributeError("Randomizer is not fitted")
        return randomize(X, self.seed, self.law)
