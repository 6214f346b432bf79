"""Real dispersion symbols, their derivatives and hypothesis audits.

A symbol maps a frequency ``xi`` in R^d to a real number; the linear flow is
the Fourier multiplier ``exp(-i t symbol(xi))``.  Built-in symbols are radial,
``symbol(xi) = g(|xi|)``, and carry closed-form derivatives of the profile
``g``.  User symbols may supply only the evaluator; gradient and Hessian then
fall back to central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid

__all__ = [
    "RadialProfile",
    "SymbolSpec",
    "laplacian",
    "bilaplacian_mixed",
    "fractional",
    "get_symbol",
    "audit_symbol",
    "AuditReport",
    "check_derivatives",
    "s_min",
    "s_crit",
]

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class RadialProfile:
    """Profile ``g`` with ``g'``, ``g''`` and the regular quotient ``g'(r)/r``."""

    g: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray]
    d2g: Callable[[np.ndarray], np.ndarray]
    dg_over_r: Callable[[np.ndarray], np.ndarray]


def _fd_step(xi: np.ndarray) -> np.ndarray:
    return 1e-4 * (1.0 + np.linalg.norm(xi, axis=-1, keepdims=True))


@dataclass(frozen=True)
class SymbolSpec:
    """A real dispersion symbol of declared order ``sigma``.

    Parameters
    ----------
    name : str
        Identifier used in reports and the CLI.
    sigma : float
        Declared order; the symbol grows like ``|xi|^sigma``.
    validity_radius : float
        Radius beyond which the growth, gradient and curvature bounds are
        expected to hold.
    radial : RadialProfile, optional
        Closed-form radial profile.  Either this or ``evaluator`` is required.
    evaluator : callable, optional
        ``xi -> value`` on arrays of shape ``(..., d)``, for non-radial symbols.
    params : dict
        Parameters recorded for reproducibility.
    """

    name: str
    sigma: float
    validity_radius: float = 1.0
    radial: RadialProfile | None = None
    evaluator: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.radial is None and self.evaluator is None:
            raise ValueError("a symbol needs a radial profile or an evaluator")
        if not self.sigma >= 2:
            raise ValueError(f"order must be at least 2, got {self.sigma}")

    def __reduce__(self):
        # built-ins hold closures; rebuild them from their factory arguments
        recipe = getattr(self, "_recipe", None)
        if recipe is None:
            return super().__reduce__()
        return recipe

    @property
    def is_radial(self) -> bool:
        return self.radial is not None

    # pointwise evaluation on arrays of shape (..., d)

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.radial is not None:
            return self.radial.g(np.linalg.norm(xi, axis=-1))
        return np.asarray(self.evaluator(xi), dtype=float)

    def gradient(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.radial is not None:
            r = np.linalg.norm(xi, axis=-1, keepdims=True)
            return self.radial.dg_over_r(r) * xi
        return self._fd_gradient(xi)

    def hessian(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        d = xi.shape[-1]
        if self.radial is not None:
            r = np.linalg.norm(xi, axis=-1)[..., None, None]
            q = self.radial.dg_over_r(r)
            safe = np.where(r > 0, r, 1.0)
            unit = xi[..., :, None] * xi[..., None, :] / safe**2
            h = q * np.eye(d) + (self.radial.d2g(r) - q) * unit
            return np.where(r > 0, h, self.radial.d2g(r) * np.eye(d))
        return self._fd_hessian(xi)

    def _fd_gradient(self, xi: np.ndarray) -> np.ndarray:
        h = _fd_step(xi)
        d = xi.shape[-1]
        out = np.empty(xi.shape)
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            out[..., i] = (self.evaluate(xi + h * e) - self.evaluate(xi - h * e)) / (2 * h[..., 0])
        return out

    def _fd_hessian(self, xi: np.ndarray) -> np.ndarray:
        h = _fd_step(xi)
        d = xi.shape[-1]
        out = np.empty(xi.shape + (d,))
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            out[..., i, :] = (self._fd_gradient(xi + h * e) - self._fd_gradient(xi - h * e)) / (2 * h)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    # lattice evaluation

    def on_grid(self, grid: Grid) -> np.ndarray:
        """Symbol values on the frequency lattice (FFT order)."""
        if self.radial is not None:
            return self.radial.g(grid.xi_abs)
        return self.evaluate(np.stack(np.broadcast_arrays(*grid.frequency_mesh()), axis=-1))

    def gradient_on_grid(self, grid: Grid) -> list[np.ndarray]:
        """Per-axis partial derivatives on the lattice."""
        if self.radial is not None:
            q = self.radial.dg_over_r(grid.xi_abs)
            return [q * k for k in grid.frequency_mesh()]
        grad = self.gradient(np.stack(np.broadcast_arrays(*grid.frequency_mesh()), axis=-1))
        return [grad[..., i] for i in range(grid.d)]

    def group_speed(self, radii: np.ndarray) -> np.ndarray:
        """``|grad symbol|`` at the given radii (radial symbols only)."""
        if self.radial is None:
            raise ValueError(f"group speed by radius needs a radial symbol, {self.name} is not")
        return np.abs(self.radial.dg(np.asarray(radii, dtype=float)))

    def max_gradient(self, radius: float, d: int) -> float:
        """Upper bound of ``|grad symbol|`` on the ball of given radius."""
        if self.radial is not None:
            r = np.linspace(0.0, radius, 513)
            return float(self.group_speed(r).max())
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(4096, d))
        pts *= (radius * rng.random((4096, 1)) ** (1 / d)) / np.linalg.norm(pts, axis=1, keepdims=True)
        return float(np.linalg.norm(self.gradient(pts), axis=-1).max())


def _tag(spec: SymbolSpec, factory, *args) -> SymbolSpec:
    object.__setattr__(spec, "_recipe", (factory, args))
    return spec


def laplacian() -> SymbolSpec:
    """``4 pi^2 |xi|^2``, order 2."""
    c = TWO_PI**2
    prof = RadialProfile(
        g=lambda r: c * r**2,
        dg=lambda r: 2 * c * r,
        d2g=lambda r: 2 * c * np.ones_like(r),
        dg_over_r=lambda r: 2 * c * np.ones_like(r),
    )
    return _tag(SymbolSpec("laplacian", 2.0, 1.0, radial=prof), laplacian)


def bilaplacian_mixed(mu: int = 0) -> SymbolSpec:
    """``16 pi^4 |xi|^4 - mu 4 pi^2 |xi|^2``, order 4, ``mu`` in {-1, 0, 1}."""
    if mu not in (-1, 0, 1):
        raise ValueError(f"mu must be -1, 0 or 1, got {mu}")
    a, b = TWO_PI**4, mu * TWO_PI**2
    prof = RadialProfile(
        g=lambda r: a * r**4 - b * r**2,
        dg=lambda r: 4 * a * r**3 - 2 * b * r,
        d2g=lambda r: 12 * a * r**2 - 2 * b,
        dg_over_r=lambda r: 4 * a * r**2 - 2 * b,
    )
    return _tag(SymbolSpec("bilaplacian_mixed", 4.0, 2.0 if mu else 1.0, radial=prof, params={"mu": mu}), bilaplacian_mixed, mu)


def fractional(sigma: float) -> SymbolSpec:
    """``(2 pi |xi|)^sigma`` for real ``sigma >= 2``."""
    sigma = float(sigma)
    if sigma < 2:
        raise ValueError(f"fractional order must be at least 2, got {sigma}")
    c = TWO_PI**sigma
    prof = RadialProfile(
        g=lambda r: c * r**sigma,
        dg=lambda r: sigma * c * r ** (sigma - 1),
        d2g=lambda r: sigma * (sigma - 1) * c * r ** (sigma - 2),
        dg_over_r=lambda r: sigma * c * r ** (sigma - 2),
    )
    return _tag(SymbolSpec("fractional", sigma, 1.0, radial=prof, params={"sigma": sigma}), fractional, sigma)


def get_symbol(name: str, mu: int = 0, sigma: float | None = None) -> SymbolSpec:
    """Look up a built-in symbol by CLI name."""
    key = name.strip().lower()
    if key == "laplacian":
        return laplacian()
    if key in ("bilaplacian", "bilaplacian_mixed"):
        return bilaplacian_mixed(int(mu))
    if key == "fractional":
        if sigma is None:
            raise ValueError("fractional symbol needs an order")
        return fractional(sigma)
    raise ValueError(f"unknown symbol {name!r}; choose laplacian, bilaplacian or fractional")


def s_crit(sigma: float, d: int) -> float:
    """Energy-critical regularity ``(d - sigma) / 2``."""
    if d <= sigma:
        raise ValueError(f"need d > sigma, got d={d}, sigma={sigma}")
    return (d - sigma) / 2


def s_min(sigma: float, d: int) -> float:
    """Regularity threshold for almost-sure local solvability.

    ``(d - sigma)/2 * 1/3`` when ``sigma >= (d + 2)/3`` and
    ``(d - sigma)/2 * (d + 1 - 2 sigma)/(d - 1)`` otherwise.
    """
    crit = s_crit(sigma, d)
    if (d + 2) / 3 <= sigma:
        return crit / 3
    return crit * (d + 1 - 2 * sigma) / (d - 1)


def check_derivatives(sym: SymbolSpec, points: np.ndarray) -> tuple[float, float]:
    """Largest relative gaps of gradient and Hessian against central differences.

    The step is ``1e-4 * (1 + |xi|)``.  Gaps are measured relative to the
    local derivative scale (norm of the closed-form quantity).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grad = sym.gradient(points)
    hess = sym.hessian(points)
    fd_grad = sym._fd_gradient(points)
    fd_hess = sym._fd_hessian(points)
    g_scale = np.maximum(np.linalg.norm(grad, axis=-1), 1e-300)
    h_scale = np.maximum(np.linalg.norm(hess, axis=(-2, -1)), 1e-300)
    g_err = np.linalg.norm(grad - fd_grad, axis=-1) / g_scale
    h_err = np.linalg.norm(hess - fd_hess, axis=(-2, -1)) / h_scale
    return float(g_err.max()), float(h_err.max())


# audit

_FD_STENCILS = {
    1: ([-1, 1], [-0.5, 0.5]),
    2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
    3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
    4: ([-2, -1, 0, 1, 2], [1.0, -4.0, 6.0, -4.0, 1.0]),
}


def _directional_derivative(sym: SymbolSpec, xi: np.ndarray, v: np.ndarray, order: int) -> np.ndarray:
    offsets, weights = _FD_STENCILS[order]
    h = 2e-2 * (1.0 + np.linalg.norm(xi, axis=-1))
    total = np.zeros(xi.shape[:-1])
    for o, w in zip(offsets, weights):
        total = total + w * sym.evaluate(xi + (o * h)[..., None] * v)
    return total / h**order


@dataclass
class AuditReport:
    """Shell-by-shell audit of growth, derivative, gradient and curvature bounds.

    Attributes
    ----------
    rows : list of tuple
        ``(radius, quantity, min value, max value)`` per shell.
    exponents : dict
        Fitted log-log exponent per quantity.
    targets : dict
        Expected exponent per quantity.
    constants : dict
        ``(c, C)`` with ``c r^target <= value <= C r^target`` over all shells.
    violations : dict
        Shell radii where a quantity strays beyond a factor 10 of its fit.
    first_valid_radius : float or None
        Smallest shell from which every quantity stays within the factor.
    """

    symbol: str
    d: int
    rows: list = field(default_factory=list)
    exponents: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)
    first_valid_radius: float | None = None

    def csv_rows(self):
        for q in self.exponents:
            c, C = self.constants[q]
            yield (q, self.targets[q], self.exponents[q], c, C, len(self.violations[q]))


def audit_symbol(
    sym: SymbolSpec,
    grid: Grid,
    radius_range: tuple[float, float],
    *,
    n_shells: int = 8,
    samples_per_shell: int = 64,
    seed: int = 0,
) -> AuditReport:
    """Sample shells ``|xi| = r`` and fit the exponent of each bound.

    Quantities: ``value`` (``|symbol|``, target ``sigma``), ``grad_lower``
    (shell minimum of ``|grad|``, target ``sigma - 1``), ``det_hessian``
    (target ``d (sigma - 2)``) and ``deriv_k`` for ``k`` up to
    ``min(floor(d / sigma) + 2, 4)`` (shell maximum over sampled directions of
    the k-th directional derivative, target ``sigma - k``).

    Shell radii are log-spaced over ``radius_range``, which must sit inside
    ``(validity_radius, nyquist)`` of ``grid``.  Points are sampled on the
    continuous sphere rather than snapped to lattice points, which would
    leave most shells empty on coarse grids.
    """
    lo, hi = radius_range
    if not (hi > lo > 0):
        raise ValueError(f"empty sampling range {radius_range}")
    if lo < sym.validity_radius or hi > grid.nyquist:
        raise ValueError(
            f"sampling range {radius_range} must lie within ({sym.validity_radius}, {grid.nyquist:.4g})"
        )
    d = grid.d
    rng = np.random.default_rng(seed)
    radii = np.geomspace(lo, hi, n_shells)
    directions = rng.normal(size=(samples_per_shell, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    probe = np.vstack([np.eye(d), rng.normal(size=(2 * d, d))])
    probe /= np.linalg.norm(probe, axis=1, keepdims=True)
    max_order = min(int(math.floor(d / sym.sigma)) + 2, 4)

    targets = {"value": sym.sigma, "grad_lower": sym.sigma - 1, "det_hessian": d * (sym.sigma - 2)}
    for k in range(1, max_order + 1):
        targets[f"deriv_{k}"] = sym.sigma - k
    values: dict[str, list[float]] = {q: [] for q in targets}
    report = AuditReport(sym.name, d, targets=targets)

    for r in radii:
        pts = r * directions
        val = np.abs(sym.evaluate(pts))
        grad = np.linalg.norm(sym.gradient(pts), axis=-1)
        det = np.abs(np.linalg.det(sym.hessian(pts)))
        shell = {"value": (val.min(), val.max()), "grad_lower": (grad.min(), grad.max()), "det_hessian": (det.min(), det.max())}
        for k in range(1, max_order + 1):
            dd = np.max([np.abs(_directional_derivative(sym, pts, v, k)) for v in probe], axis=0)
            # below difference-quotient noise the derivative is taken as vanishing
            dd = np.where(dd < 1e-6 * val.max() / r**k, 0.0, dd)
            shell[f"deriv_{k}"] = (dd.min(), dd.max())
        for q, (vmin, vmax) in shell.items():
            report.rows.append((float(r), q, float(vmin), float(vmax)))
            # lower bounds use the shell minimum, upper bounds the maximum
            values[q].append(float(vmin if q in ("grad_lower", "det_hessian") else vmax))

    logr = np.log(radii)
    for q, target in targets.items():
        v = np.asarray(values[q])
        if np.any(v <= 0):
            # vanishing upper-bound quantities satisfy their bound trivially
            lower = q in ("grad_lower", "det_hessian")
            report.exponents[q] = float("nan")
            report.constants[q] = (0.0, float(np.max(v / radii**target)))
            report.violations[q] = [float(r) for r, x in zip(radii, v) if x <= 0] if lower else []
            continue
        slope, intercept = np.polyfit(logr, np.log(v), 1)
        report.exponents[q] = float(slope)
        ratio = v / radii**target
        report.constants[q] = (float(ratio.min()), float(ratio.max()))
        fit = np.exp(intercept + slope * logr)
        report.violations[q] = [float(r) for r, x, f in zip(radii, v, fit) if not (0.1 <= x / f <= 10)]

    bad = sorted({r for rs in report.violations.values() for r in rs})
    ok = [r for r in radii if all(b < r for b in bad)]
    report.first_valid_radius = float(ok[0]) if ok else None
    return report
