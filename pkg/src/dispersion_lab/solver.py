"""Two solvers for the cubic equation ``(i d/dt - L) u = sign |u|^2 u``.

* :func:`splitstep_solve` advances ``u`` by Strang splitting between the
  exact linear multiplier flow and the exact pointwise phase rotation
  ``u -> exp(-i sign |u|^2 dt) u``.
* :func:`picard_solve` iterates the Duhamel map for the remainder
  ``v = u - F`` forced by a given free evolution ``F``::

      v(t) = -i sign int_0^t exp(-i (t - s) L) |F + v|^2 (F + v)(s) ds

  with the time integral by the trapezoid rule on the sample grid.

The two are independent routes to the same solution and serve as each
other's oracle (:func:`cross_validate`).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .grid import SpaceTimeSample, SpectralField, boundary_mass_fraction
from .norms import DEFAULT_EPS, composite_norm
from .propagator import free_evolution
from .randomization import randomize
from .symbols import SymbolSpec, s_crit

__all__ = [
    "SolveConfig",
    "BlowupError",
    "ContractionError",
    "PicardTrace",
    "splitstep_solve",
    "picard_solve",
    "mass",
    "energy",
    "conservation_drift",
    "self_convergence_ratio",
    "reversibility_error",
    "cross_validate",
    "ScanTable",
    "existence_scan",
    "SplitStepSolver",
    "PicardSolver",
]

MEMORY_GATE = 2**28


class BlowupError(RuntimeError):
    """The split-step solution stopped being finite."""

    def __init__(self, last_time: float, message: str = ""):
        super().__init__(message or f"non-finite solution after t={last_time:g}")
        self.last_time = last_time


class ContractionError(RuntimeError):
    """Picard increments failed to shrink."""

    def __init__(self, message: str, forcing_norm: float, trace: "PicardTrace"):
        super().__init__(f"{message}; ||F||_Y = {forcing_norm:.4g}")
        self.forcing_norm = forcing_norm
        self.trace = trace


@dataclass(frozen=True)
class SolveConfig:
    """Settings shared by both solvers.

    Attributes
    ----------
    symbol : SymbolSpec
    sign : int
        ``+1`` for the defocusing, ``-1`` for the focusing equation.
    interval : tuple of float
        Time window ``(t0, t1)``; its length may not exceed ``T0``.
    dt : float
        Split-step time step.
    save_every : int
        Split-step steps between stored samples.
    tolerance : float
        Picard stopping threshold on the increment.
    max_iter : int
    delta : float
        Smallness threshold for the forcing norm.
    T0 : float
    S, s : float or None
        Regularities of the forcing and remainder norms; ``s`` defaults to
        ``s_crit + 0.05`` when ``d > sigma`` (and 0 otherwise).
    eps : float
    increment_norm : {"X", "L2"}
        Norm used for the Picard stopping rule and trace.  ``"L2"`` is the
        cheap ``L^inf_t L^2_x`` fallback.
    wrap_tolerance : float or None
        When set, the split-step run fails if the mass share near the box
        faces exceeds it.
    """

    symbol: SymbolSpec
    sign: int = 1
    interval: tuple = (0.0, 0.1)
    dt: float = 1e-3
    save_every: int = 1
    tolerance: float = 1e-10
    max_iter: int = 50
    delta: float = 0.05
    T0: float = 1.0
    S: float = 0.4
    s: float | None = None
    eps: float = DEFAULT_EPS
    increment_norm: str = "X"
    wrap_tolerance: float | None = None

    def __post_init__(self):
        if self.sign not in (1, -1, 0):
            raise ValueError(f"sign must be +1, -1 (or 0 for the linear check), got {self.sign}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        lo, hi = self.interval
        if not hi > lo:
            raise ValueError(f"empty interval {self.interval}")
        if hi - lo > self.T0 * (1 + 1e-12):
            raise ValueError(f"interval length {hi - lo:g} exceeds T0={self.T0:g}")
        if self.save_every < 1 or self.max_iter < 1:
            raise ValueError("save_every and max_iter must be positive")
        if self.increment_norm not in ("X", "L2"):
            raise ValueError(f"increment_norm must be 'X' or 'L2', got {self.increment_norm!r}")

    def remainder_regularity(self, d: int) -> float:
        if self.s is not None:
            return self.s
        return s_crit(self.symbol.sigma, d) + 0.05 if d > self.symbol.sigma else 0.0

    @property
    def length(self) -> float:
        return self.interval[1] - self.interval[0]


# split-step


def mass(u: np.ndarray, grid) -> float:
    """``||u||_{L^2}^2`` of one physical slice."""
    return float(np.sum(np.abs(u) ** 2) * grid.cell_volume)


def energy(u: np.ndarray, grid, sym: SymbolSpec, sign: int) -> float:
    """``int conj(u) L u + sign/2 int |u|^4`` of one physical slice."""
    hat = np.fft.fftn(u) * grid.cell_volume
    kinetic = float(np.sum(sym.on_grid(grid) * np.abs(hat) ** 2) * grid.frequency_cell_volume)
    return kinetic + 0.5 * sign * float(np.sum(np.abs(u) ** 4) * grid.cell_volume)


def splitstep_solve(f0: SpectralField, cfg: SolveConfig) -> SpaceTimeSample:
    """Strang split-step solution with ``u(t0) = f0``.

    Samples are stored every ``cfg.save_every`` steps, including both ends.
    Raises :class:`BlowupError` on non-finite values and ``RuntimeError``
    when the wrap-around guard is active and violated.
    """
    grid = f0.grid
    steps = _step_count(cfg.length, cfg.dt)
    if steps % cfg.save_every:
        raise ValueError(f"{steps} steps are not a multiple of save_every={cfg.save_every}")
    dt = cfg.length / steps
    half = np.exp(-0.5j * dt * cfg.symbol.on_grid(grid))
    hat = f0.coeffs / grid.cell_volume  # unnormalized FFT of the samples
    u = np.fft.ifftn(hat)
    out = [u]
    for k in range(1, steps + 1):
        hat = np.fft.fftn(u) * half
        u = np.fft.ifftn(hat)
        if cfg.sign:
            u = u * np.exp(-1j * cfg.sign * dt * np.abs(u) ** 2)
        u = np.fft.ifftn(np.fft.fftn(u) * half)
        if not np.all(np.isfinite(u)):
            raise BlowupError(cfg.interval[0] + (k - 1) * dt)
        if k % cfg.save_every == 0:
            out.append(u)
    values = np.stack(out)
    if cfg.wrap_tolerance is not None:
        worst = boundary_mass_fraction(values, grid)
        if worst > cfg.wrap_tolerance:
            raise RuntimeError(f"wrap-around guard: {worst:.3g} of the mass reached the box faces")
    times = cfg.interval[0] + dt * cfg.save_every * np.arange(values.shape[0])
    times[-1] = cfg.interval[1]
    return SpaceTimeSample(grid, times, values, cfg.interval)


def _step_count(length: float, dt: float) -> int:
    steps = int(round(length / dt))
    if steps < 1 or abs(steps * dt - length) > 1e-9 * max(length, 1.0):
        raise ValueError(f"interval length {length:g} is not a multiple of dt={dt:g}")
    return steps


def conservation_drift(u: SpaceTimeSample, sym: SymbolSpec, sign: int) -> tuple[float, float]:
    """Largest relative drift of mass and energy over the stored samples."""
    m = np.array([mass(x, u.grid) for x in u.values])
    e = np.array([energy(x, u.grid, sym, sign) for x in u.values])
    m_drift = float(np.max(np.abs(m - m[0])) / m[0]) if m[0] > 0 else 0.0
    e_drift = float(np.max(np.abs(e - e[0])) / abs(e[0])) if e[0] != 0 else 0.0
    return m_drift, e_drift


def _final(f0: SpectralField, cfg: SolveConfig, dt: float) -> np.ndarray:
    steps = _step_count(cfg.length, dt)
    c = SolveConfig(**{**cfg.__dict__, "dt": dt, "save_every": steps})
    return splitstep_solve(f0, c).values[-1]


def self_convergence_ratio(f0: SpectralField, cfg: SolveConfig) -> float:
    """``||u_dt - u_dt/2|| / ||u_dt/2 - u_dt/4||`` at the final time (4 for second order)."""
    a, b, c = (_final(f0, cfg, cfg.dt / k) for k in (1, 2, 4))
    den = np.linalg.norm(b - c)
    return float(np.linalg.norm(a - b) / den) if den > 0 else math.inf


def reversibility_error(f0: SpectralField, cfg: SolveConfig) -> float:
    """Relative L^2 error of solve, conjugate, solve again, conjugate."""
    grid = f0.grid
    uT = _final(f0, cfg, cfg.dt)
    back = SpectralField(grid, np.fft.fftn(np.conj(uT)) * grid.cell_volume)
    u0 = np.conj(_final(back, cfg, cfg.dt))
    ref = np.fft.ifftn(f0.coeffs / grid.cell_volume)
    return float(np.linalg.norm(u0 - ref) / np.linalg.norm(ref))


# Picard iteration


@dataclass
class PicardTrace:
    """Increment history of a Picard run."""

    forcing_norm: float
    small_data: bool
    increments: list = field(default_factory=list)
    converged: bool = False
    residual: float = math.nan

    @property
    def ratios(self) -> list:
        inc = self.increments
        return [inc[k] / inc[k - 1] if inc[k - 1] > 0 else 0.0 for k in range(1, len(inc))]

    def rows(self):
        r = [math.nan] + self.ratios
        for k, (a, b) in enumerate(zip(self.increments, r), start=1):
            yield (k, a, b)


def _uniform_step(times: np.ndarray) -> float:
    steps = np.diff(times)
    if steps.size == 0:
        raise ValueError("need at least two time samples")
    if np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
        raise ValueError("Picard iteration needs uniformly spaced samples")
    return float(steps[0])


def duhamel(F: SpaceTimeSample, v: np.ndarray, sym: SymbolSpec, sign: int) -> np.ndarray:
    """One application of the Duhamel map by the exponential trapezoid rule.

    The integrand ``exp(-i (t_j - s) L) G(s)`` is summed with trapezoid
    weights on the sample grid, written as a recursion over ``j``.
    """
    grid = F.grid
    dt = _uniform_step(F.times)
    prop = np.exp(-1j * dt * sym.on_grid(grid))
    out = np.empty_like(v)
    u = F.values[0] + v[0]
    g_prev = np.fft.fftn(np.abs(u) ** 2 * u)
    acc = np.zeros(grid.shape, dtype=complex)
    out[0] = 0.0
    for j in range(1, F.times.size):
        u = F.values[j] + v[j]
        g = np.fft.fftn(np.abs(u) ** 2 * u)
        acc = prop * (acc + 0.5 * dt * g_prev) + 0.5 * dt * g
        out[j] = np.fft.ifftn(-1j * sign * acc)
        g_prev = g
    return out


def _increment(diff: SpaceTimeSample, cfg: SolveConfig) -> float:
    if cfg.increment_norm == "L2":
        return float(np.sqrt(np.max(np.sum(np.abs(diff.values) ** 2, axis=tuple(range(1, diff.values.ndim)))) * diff.grid.cell_volume))
    value, _ = composite_norm(diff, "X", cfg.symbol, cfg.remainder_regularity(diff.grid.d), cfg.eps)
    return value


def forcing_norm(F: SpaceTimeSample, cfg: SolveConfig) -> float:
    """``||F||_{Y^{S,eps}(I)}`` with the configured regularity."""
    value, _ = composite_norm(F, "Y", cfg.symbol, cfg.S, cfg.eps)
    return value


def picard_solve(F: SpaceTimeSample, cfg: SolveConfig) -> tuple[SpaceTimeSample, PicardTrace]:
    """Fixed point of the Duhamel map forced by ``F``, starting from ``v = 0``.

    Stops when the increment (in ``cfg.increment_norm``) is at most
    ``cfg.tolerance``.  If ``||F||_Y`` exceeds ``cfg.delta`` a warning is
    issued and the iteration proceeds.  Three consecutive increment ratios
    of at least 1 raise :class:`ContractionError`.
    """
    grid = F.grid
    if F.values.size > MEMORY_GATE:
        raise MemoryError(f"{F.values.size} stored entries exceed the gate {MEMORY_GATE}")
    fnorm = forcing_norm(F, cfg)
    small = fnorm <= cfg.delta
    if not small:
        warnings.warn(f"forcing norm {fnorm:.4g} exceeds delta={cfg.delta:g}; proceeding", RuntimeWarning, stacklevel=2)
    trace = PicardTrace(fnorm, small)
    v = np.zeros_like(F.values)
    bad = 0
    for _ in range(cfg.max_iter):
        nxt = duhamel(F, v, cfg.symbol, cfg.sign)
        inc = _increment(F.with_values(nxt - v), cfg)
        trace.increments.append(inc)
        v = nxt
        if not np.all(np.isfinite(v)):
            raise ContractionError("iterates became non-finite", fnorm, trace)
        if inc <= cfg.tolerance:
            trace.converged = True
            break
        if len(trace.increments) >= 2 and trace.ratios[-1] >= 1:
            bad += 1
            if bad >= 3:
                raise ContractionError("increment ratio stayed at or above 1 for 3 iterations", fnorm, trace)
        else:
            bad = 0
    sol = F.with_values(v)
    res = duhamel(F, v, cfg.symbol, cfg.sign) - v
    scale = max(np.max(np.abs(v)), 1e-300)
    trace.residual = float(np.max(np.abs(res)) / scale) if np.any(v) else float(np.max(np.abs(res)))
    return sol, trace


def _linf_l2(values: np.ndarray, grid) -> float:
    axes = tuple(range(1, values.ndim))
    return float(np.sqrt(np.max(np.sum(np.abs(values) ** 2, axis=axes)) * grid.cell_volume))


def cross_validate(f: SpectralField, cfg: SolveConfig, samples: int) -> dict:
    """Gap between ``u_split - exp(-itL) f`` and the Picard remainder.

    The split-step run stores its solution on the ``samples``-point Picard
    grid; the gap is relative in ``L^inf_t L^2_x``.
    """
    steps = _step_count(cfg.length, cfg.dt)
    if steps % (samples - 1):
        raise ValueError(f"{samples - 1} sample intervals must divide the {steps} split-step steps")
    c = SolveConfig(**{**cfg.__dict__, "save_every": steps // (samples - 1)})
    u = splitstep_solve(f, c)
    F = free_evolution(f, cfg.symbol, u.times, cfg.interval)
    v, trace = picard_solve(F, cfg)
    diff = (u.values - F.values) - v.values
    ref = _linf_l2(v.values, f.grid)
    gap = _linf_l2(diff, f.grid) / ref if ref > 0 else _linf_l2(diff, f.grid)
    return {"gap": gap, "trace": trace, "remainder_norm": ref, "samples": samples, "dt": cfg.dt}


# existence scan


@dataclass
class ScanTable:
    """Per ``(S, seed)`` admissible interval lengths and Picard outcomes."""

    rows: list = field(default_factory=list)

    @staticmethod
    def header() -> list[str]:
        return ["S", "seed", "length", "forcing_norm", "halvings", "picard_converged"]

    def lengths(self, S: float) -> np.ndarray:
        return np.array([r[2] for r in self.rows if r[0] == S])

    def summary(self) -> list[tuple]:
        """``(S, median length, min, max, success rate)`` per regularity."""
        out = []
        for S in sorted({r[0] for r in self.rows}):
            sel = [r for r in self.rows if r[0] == S]
            lengths = np.array([r[2] for r in sel])
            ok = np.mean([bool(r[5]) for r in sel])
            out.append((S, float(np.median(lengths)), float(lengths.min()), float(lengths.max()), float(ok)))
        return out


def _scan_one(args) -> tuple:
    f, S, seed, cfg, law, samples, max_halvings, run_picard = args
    c = SolveConfig(**{**cfg.__dict__, "S": S})
    fw = randomize(f, seed, law)
    lo = cfg.interval[0]
    length = cfg.T0
    for h in range(max_halvings + 1):
        times = np.linspace(lo, lo + length, samples)
        F = free_evolution(fw, cfg.symbol, times)
        value = forcing_norm(F, c)
        if value <= c.delta:
            ok = False
            if run_picard:
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", RuntimeWarning)
                        _, trace = picard_solve(F, SolveConfig(**{**c.__dict__, "interval": (lo, lo + length)}))
                    ok = trace.converged
                except ContractionError:
                    ok = False
            return (S, seed, length, value, h, ok)
        length /= 2
    return (S, seed, 0.0, value, max_halvings, False)


def existence_scan(
    f: SpectralField,
    S_values,
    seeds,
    cfg: SolveConfig,
    *,
    law: str = "gaussian",
    samples: int = 17,
    max_halvings: int = 12,
    run_picard: bool = True,
    workers: int = 1,
) -> ScanTable:
    """Largest dyadically bisected window on which the randomized forcing is small.

    Starting from ``T0`` the window ``[t0, t0 + T]`` is halved until
    ``||exp(-itL) f^omega||_{Y^{S,eps}}`` is at most ``delta``; a window is
    reported as 0 when ``max_halvings`` halvings do not suffice.  The energy
    component does not shrink with the window, so only data that is already
    small in that component can succeed.  Rows are ordered by ``(S, seed)``
    whatever the worker count.
    """
    jobs = [(f, float(S), int(seed), cfg, law, samples, max_halvings, run_picard) for S in S_values for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scan_one, jobs))
    else:
        rows = [_scan_one(j) for j in jobs]
    return ScanTable(rows)


# estimator wrappers


class SplitStepSolver(BaseEstimator):
    """Estimator wrapper of :func:`splitstep_solve`.

    ``fit(f0)`` solves and stores ``solution_`` together with the mass and
    energy drifts.
    """

    def __init__(self, symbol: SymbolSpec | None = None, sign: int = 1, interval=(0.0, 0.1), dt: float = 1e-3, save_every: int = 1):
        self.symbol = symbol
        self.sign = sign
        self.interval = interval
        self.dt = dt
        self.save_every = save_every

    def _config(self) -> SolveConfig:
        if self.symbol is None:
            raise ValueError("SplitStepSolver needs a symbol")
        lo, hi = self.interval
        return SolveConfig(self.symbol, self.sign, (lo, hi), self.dt, self.save_every, T0=max(1.0, hi - lo))

    def fit(self, X: SpectralField, y=None):
        cfg = self._config()
        self.solution_ = splitstep_solve(X, cfg)
        self.mass_drift_, self.energy_drift_ = conservation_drift(self.solution_, cfg.symbol, cfg.sign)
        return self

    def predict(self, X: SpectralField) -> SpaceTimeSample:
        return splitstep_solve(X, self._config())


class PicardSolver(BaseEstimator):
    """Estimator wrapper of :func:`picard_solve`; ``fit(F)`` stores ``remainder_`` and ``trace_``."""

    def __init__(
        self,
        symbol: SymbolSpec | None = None,
        sign: int = 1,
        tolerance: float = 1e-10,
        max_iter: int = 50,
        delta: float = 0.05,
        S: float = 0.4,
        eps: float = DEFAULT_EPS,
        increment_norm: str = "X",
    ):
        self.symbol = symbol
        self.sign = sign
        self.tolerance = tolerance
        self.max_iter = max_iter
        self.delta = delta
        self.S = S
        self.eps = eps
        self.increment_norm = increment_norm

    def fit(self, X: SpaceTimeSample, y=None):
        if self.symbol is None:
            raise ValueError("PicardSolver needs a symbol")
        lo, hi = X.interval
        cfg = SolveConfig(
            self.symbol, self.sign, (lo, hi), dt=_uniform_step(X.times), tolerance=self.tolerance,
            max_iter=self.max_iter, delta=self.delta, T0=max(1.0, hi - lo), S=self.S, eps=self.eps,
            increment_norm=self.increment_norm,
        )
        self.remainder_, self.trace_ = picard_solve(X, cfg)
        return self
