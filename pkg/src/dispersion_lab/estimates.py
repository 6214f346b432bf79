"""Dyadic scaling sweeps for the linear and multilinear estimates.

Each sweep evaluates a left-hand side and a right-hand side over a range of
dyadic scales, fits the log-log slope of their ratio and compares it with a
target exponent.  The outcome is a :class:`ScalingReport`.

Two data families are used.

* random shell data: keyed complex Gaussians on the lattice, cut to a
  dyadic shell (stationary in space);
* focusing data: ``phi_N(xi) exp(i t0 symbol(xi)) exp(-2 pi i x0.xi)``, whose
  free evolution concentrates at ``x0`` at time ``t0``.

Local smoothing is a non-compact phenomenon: on a periodic box a wave
packet keeps re-crossing every plane.  The smoothing sweep therefore uses,
per scale, a box that is long in ``x_l`` and short in the other axes, a
spatially localized packet, and a time window long enough for the slowest
part of the packet to cross the plane and short enough for the fastest
part not to wrap around.  A boundary-mass guard certifies the second
condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .grid import Grid, SpaceTimeSample, SpectralField, boundary_mass_fraction, make_grid, trapezoid_weights
from .norms import (
    DEFAULT_EPS,
    BlockNormAccumulator,
    MixedNormAccumulator,
    admissible_check,
    directional,
    isotropic,
)
from .projections import DEFAULT_WIDTH, lp_multiplier, microlocal_masks, shell_support, smooth_step, unit_multiplier
from .propagator import chi_support, kernel_directional_norm, kernel_radial_profile, stream_free_evolution
from .randomization import keyed_coefficients
from .symbols import SymbolSpec

__all__ = [
    "ScalingReport",
    "fit_slope",
    "uniform_times",
    "shell_gaussian",
    "focusing_datum",
    "sector_packet",
    "sweep_strichartz",
    "sweep_maximal",
    "sweep_smoothing",
    "smoothing_grid",
    "sweep_unit_maximal",
    "sweep_bilinear",
    "bilinear_exponents",
    "quadrilinear_form",
    "quadrilinear_bound_check",
    "kernel_origin_sweep",
    "kernel_tail_fit",
    "kernel_l1inf_sweep",
    "dispersive_probe",
]


# reports


def fit_slope(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of ``log y`` against ``log x`` and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points to fit a slope")
    if np.any(y <= 0) or np.any(x <= 0):
        raise ValueError("slope fits need positive values")
    res = stats.linregress(np.log(x), np.log(y))
    se = float(res.stderr) if x.size > 2 else 0.0
    return float(res.slope), se


@dataclass
class ScalingReport:
    """Per-scale ratios, fitted slope and verdict of one sweep.

    Attributes
    ----------
    experiment : str
    symbol : str
    d : int
    scales : list of float
        Dyadic scale (or frequency size) per point.
    lhs, rhs : list of float
        Both sides of the inequality per point; ``ratio = lhs / rhs``.
    target : float
        Target exponent of the ratio.
    tolerance : float
    mode : {"upper", "band"}
        ``upper`` passes when ``slope <= target + tolerance``; ``band`` when
        ``|slope - target| <= tolerance``.
    box : list of tuple
        Box side lengths used at each point.
    diagnostics : dict
        Guards, refinement checks and other notes.
    """

    experiment: str
    symbol: str
    d: int
    scales: list
    lhs: list
    rhs: list
    target: float
    tolerance: float = 0.2
    mode: str = "upper"
    box: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    min_points: int = 4

    def __post_init__(self):
        if len(self.scales) < self.min_points:
            raise ValueError(f"a scaling fit needs at least {self.min_points} points, got {len(self.scales)}")
        if self.mode not in ("upper", "band"):
            raise ValueError(f"unknown verdict mode {self.mode!r}")
        if np.any(self.ratios <= 0):
            raise ValueError(f"{self.experiment}: ratios must be positive")

    @property
    def ratios(self) -> np.ndarray:
        return np.asarray(self.lhs, dtype=float) / np.asarray(self.rhs, dtype=float)

    @property
    def fit(self) -> tuple[float, float]:
        return fit_slope(self.scales, self.ratios)

    @property
    def slope(self) -> float:
        return self.fit[0]

    @property
    def stderr(self) -> float:
        return self.fit[1]

    @property
    def passed(self) -> bool:
        if self.mode == "upper":
            return self.slope <= self.target + self.tolerance
        return abs(self.slope - self.target) <= self.tolerance

    @property
    def bounded_ratio(self) -> bool:
        """Every ratio within a factor 2 of the one at the smallest scale."""
        r = self.ratios
        if self.mode == "upper":
            return bool(np.all(r <= 2 * r[0] * (np.asarray(self.scales) / self.scales[0]) ** self.target))
        return bool(np.all(np.abs(np.log(r / r[0]) - self.target * np.log(np.asarray(self.scales) / self.scales[0])) <= math.log(2)))

    def tightened(self, delta: float = 0.5) -> "ScalingReport":
        """The same measurements judged against a target moved by ``delta``.

        For upper bounds the target is lowered; for two-sided bands it is
        shifted down.  A sweep with discriminating power fails this check.
        """
        return replace(self, target=self.target - delta, diagnostics=dict(self.diagnostics))

    def verdict_line(self) -> str:
        op = "<=" if self.mode == "upper" else "~="
        tag = "PASS" if self.passed else "FAIL"
        return (
            f"{tag} {self.experiment} [{self.symbol}, d={self.d}] slope={self.slope:.4f} "
            f"(se {self.stderr:.3f}) {op} {self.target:.4g} tol {self.tolerance:g}"
        )

    def rows(self):
        for i, (N, a, b) in enumerate(zip(self.scales, self.lhs, self.rhs)):
            box = self.box[i] if i < len(self.box) else ()
            yield (self.experiment, self.symbol, self.d, N, a, b, a / b, ";".join(f"{v:.6g}" for v in box))

    @staticmethod
    def header() -> list[str]:
        return ["experiment", "symbol", "d", "scale", "lhs", "rhs", "ratio", "box"]


# sampling helpers


def uniform_times(interval: tuple[float, float], m: int) -> np.ndarray:
    lo, hi = interval
    if not hi > lo:
        raise ValueError(f"empty interval {interval}")
    if m < 2:
        raise ValueError("need at least two time samples")
    return np.linspace(lo, hi, m)


def _lattice_index(grid: Grid) -> np.ndarray:
    ints = [np.rint(np.fft.fftfreq(n) * n).astype(np.int64) for n in grid.n]
    mesh = np.meshgrid(*ints, indexing="ij")
    return np.stack(mesh, axis=-1)


def shell_gaussian(grid: Grid, N: int, seed: int, width: float = DEFAULT_WIDTH, salt: int = 0) -> SpectralField:
    """Keyed complex Gaussian coefficients cut to shell ``N``.

    The key combines ``seed``, ``salt``, ``N`` and the integer lattice index,
    so the datum is reproducible and independent across scales and salts.
    """
    idx = _lattice_index(grid)
    extra = np.broadcast_to(np.array([N, salt], dtype=np.int64), idx.shape[:-1] + (2,))
    g = keyed_coefficients(seed, np.concatenate([idx, extra], axis=-1))
    return SpectralField(grid, g * lp_multiplier(grid.xi_abs, N, width))


def focusing_datum(
    grid: Grid, sym: SymbolSpec, N: int, t0: float, x0=None, width: float = DEFAULT_WIDTH
) -> SpectralField:
    """Datum whose free evolution focuses at ``x0`` at time ``t0``."""
    x0 = np.zeros(grid.d) if x0 is None else np.asarray(x0, dtype=float)
    phase = sum(k * c for k, c in zip(grid.frequency_mesh(), x0))
    coeffs = lp_multiplier(grid.xi_abs, N, width) * np.exp(1j * t0 * sym.on_grid(grid) - 2j * np.pi * phase)
    return SpectralField(grid, coeffs)


def _band(r: np.ndarray, lo: float, hi: float, edge: float) -> np.ndarray:
    return smooth_step((r - lo) / edge) * smooth_step((hi - r) / edge)


def sector_cosine(d: int) -> float:
    """Direction cosine above which a frequency sits strictly inside one sector.

    If ``|grad_l| / |grad| > sqrt(1 - 1/(4d))`` every other component is below
    ``|grad| / (2 sqrt d)``, so the sharp sector cutoff of axis ``l`` leaves
    the datum untouched whatever the tie-breaking order.
    """
    return math.sqrt(1 - 1 / (4 * d))


def sector_packet(
    grid: Grid,
    sym: SymbolSpec,
    N: int,
    l: int,
    seed: int,
    envelope: float,
    band: tuple[float, float] = (0.65, 0.95),
    salt: int = 0,
) -> SpectralField:
    """Localized random packet inside shell ``N`` and strictly inside sector ``l``.

    White noise is windowed by a Gaussian of standard deviation ``envelope``
    in ``x_l`` and then filtered by a smooth radial band (inside the region
    where the shell cutoff equals 1) times a smooth cone around ``+-e_l``.
    Both the shell projection and the sector projection act as the identity
    on the result.
    """
    axis = l - 1
    idx = _lattice_index(grid)
    extra = np.broadcast_to(np.array([N, salt, 7], dtype=np.int64), idx.shape[:-1] + (3,))
    noise = keyed_coefficients(seed, np.concatenate([idx, extra], axis=-1))
    x_l = grid.position_mesh()[axis]
    window = np.exp(-(x_l**2) / (2 * envelope**2))
    hat = np.fft.fftn(noise * window)
    grads = sym.gradient_on_grid(grid)
    gnorm = np.sqrt(sum(g**2 for g in grads))
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(gnorm > 0, np.abs(grads[axis]) / np.where(gnorm > 0, gnorm, 1.0), 0.0)
    c0 = sector_cosine(grid.d) + 0.004
    cone = smooth_step((cos - c0) / (1 - c0) * 2)
    r = grid.xi_abs
    radial = _band(r, band[0] * N, band[1] * N, 0.1 * N)
    return SpectralField(grid, hat * radial * cone * grid.cell_volume)


def _l2(f: SpectralField) -> float:
    return f.l2_norm()


def _check_dyadic_list(Ns: Sequence[int], min_points: int = 4) -> list[int]:
    Ns = [int(N) for N in Ns]
    if len(Ns) < min_points:
        raise ValueError(f"need at least {min_points} dyadic points, got {len(Ns)}")
    return Ns


GridSource = Grid | Callable[[int], Grid]


def _grid_at(grids: GridSource, N: int) -> Grid:
    return grids(N) if callable(grids) else grids


def _check_shell_fits(grid: Grid, N: int, width: float) -> None:
    top = shell_support(N, width)[1]
    if top > grid.nyquist:
        raise ValueError(f"shell N={N} (radius {top:g}) exceeds the grid limit {grid.nyquist:g} for box {grid.L}")


# linear sweeps


def sweep_strichartz(
    sym: SymbolSpec,
    pairs: Sequence[tuple[float, float]],
    Ns: Sequence[int],
    grids: GridSource,
    interval: tuple[float, float] = (0.0, 0.05),
    m: int = 65,
    seeds: Sequence[int] = (0,),
    tolerance: float = 0.15,
    refine: bool = False,
    amplitude: float = 1.0,
    width: float = DEFAULT_WIDTH,
) -> list[ScalingReport]:
    """Ratio ``||exp(-itL) P_N f||_{L^p_t L^q_x(I)} / ||P_N f||_{L^2}`` per scale.

    Random shell data, averaged over ``seeds``.  The verdict is a fitted
    slope of at most ``tolerance`` (target 0).  With ``refine`` the largest
    scale is recomputed on ``2m - 1`` time samples and the relative change
    is stored in the diagnostics.
    """
    d = _grid_at(grids, Ns[0]).d
    for p, q in pairs:
        if not admissible_check(p, q, sym.sigma, d):
            raise ValueError(f"pair (p={p}, q={q}) is not admissible for sigma={sym.sigma}, d={d}")
    Ns = _check_dyadic_list(Ns)
    lhs = {pq: [] for pq in pairs}
    rhs, boxes = [], []
    refinement = {}

    def measure(grid, N, times):
        accs = {pq: [] for pq in pairs}
        norms = []
        w = trapezoid_weights(times)
        for s in seeds:
            f = shell_gaussian(grid, N, s, width) * amplitude
            a = {pq: MixedNormAccumulator(isotropic(pq[0], pq[1]), grid) for pq in pairs}
            for wt, u in zip(w, stream_free_evolution(f, sym, times)):
                for acc in a.values():
                    acc.push(float(wt), u)
            for pq in pairs:
                accs[pq].append(a[pq].result())
            norms.append(_l2(f))
        return {pq: float(np.mean(v)) for pq, v in accs.items()}, float(np.mean(norms))

    for N in Ns:
        grid = _grid_at(grids, N)
        _check_shell_fits(grid, N, width)
        vals, norm = measure(grid, N, uniform_times(interval, m))
        for pq in pairs:
            lhs[pq].append(vals[pq])
        rhs.append(norm)
        boxes.append(grid.L)
    if refine:
        N = Ns[-1]
        vals2, _ = measure(_grid_at(grids, N), N, uniform_times(interval, 2 * m - 1))
        refinement = {pq: abs(vals2[pq] - lhs[pq][-1]) / lhs[pq][-1] for pq in pairs}
    reports = []
    for pq in pairs:
        p, q = pq
        label = f"strichartz(p={'inf' if math.isinf(p) else f'{p:.4g}'},q={q:.4g})"
        diag = {"interval": interval, "samples": m, "seeds": list(seeds)}
        if refine:
            diag["refinement_change"] = refinement[pq]
        reports.append(
            ScalingReport(label, sym.name, d, list(Ns), lhs[pq], list(rhs), 0.0, tolerance, "upper", boxes, diag)
        )
    return reports


def sweep_maximal(
    sym: SymbolSpec,
    Ns: Sequence[int],
    grids: GridSource,
    l: int = 1,
    duration: float = 0.02,
    m: int = 65,
    tolerance: float = 0.2,
    amplitude: float = 1.0,
    width: float = DEFAULT_WIDTH,
) -> ScalingReport:
    """Ratio ``||exp(-itL) P_N f||_{L^{2,inf}_{e_l}} / ||P_N f||_{L^2}`` on focusing data.

    The datum focuses at the origin at the middle sample of ``[0, duration]``
    (``m`` is forced odd).  Target exponent ``(d - 1) / 2``.
    """
    Ns = _check_dyadic_list(Ns)
    m = m if m % 2 else m + 1
    times = uniform_times((0.0, duration), m)
    t0 = float(times[m // 2])
    w = trapezoid_weights(times)
    lhs, rhs, boxes = [], [], []
    d = _grid_at(grids, Ns[0]).d
    for N in Ns:
        grid = _grid_at(grids, N)
        _check_shell_fits(grid, N, width)
        f = focusing_datum(grid, sym, N, t0, width=width) * amplitude
        acc = MixedNormAccumulator(directional(l, 2, math.inf), grid)
        for wt, u in zip(w, stream_free_evolution(f, sym, times)):
            acc.push(float(wt), u)
        lhs.append(acc.result())
        rhs.append(_l2(f))
        boxes.append(grid.L)
    return ScalingReport(
        f"maximal(e{l})", sym.name, d, list(Ns), lhs, rhs, (d - 1) / 2, tolerance, "upper", boxes,
        {"duration": duration, "samples": m, "focus_time": t0},
    )


def _band_speeds(sym: SymbolSpec, N: float, band: tuple[float, float]) -> tuple[float, float]:
    r = np.linspace(band[0] * N, band[1] * N, 257)
    v = sym.group_speed(r) / (2 * np.pi)
    return float(v.min()), float(v.max())


def smoothing_grid(
    sym: SymbolSpec,
    N: int,
    d: int,
    *,
    band: tuple[float, float] = (0.65, 0.95),
    envelope_cycles: float = 2.0,
    cross_factor: float = 6.0,
    margin: float = 12.0,
    transverse_points: int = 8,
) -> tuple[Grid, float, float]:
    """Box, envelope width and half-window for the smoothing sweep at scale ``N``.

    The packet has standard deviation ``R = envelope_cycles / N`` in ``x_1``.
    The half-window ``T`` lets the slowest velocity component in the sector
    cover ``cross_factor * R``; the long axis holds the fastest travel
    ``v_max T`` on both sides plus ``margin * R``.  Transverse axes are sized
    so that their lattice just resolves the sector cone.
    """
    R = envelope_cycles / N
    vmin, vmax = _band_speeds(sym, N, band)
    v1min = vmin * sector_cosine(d)
    T = cross_factor * R / v1min
    L1 = 2 * (vmax * T + margin * R)
    kmax = band[1] * N + 0.1 * N
    n1 = _round_up_smooth(int(math.ceil(2 * kmax * L1 * 1.1)) + 2)
    # transverse band of the cone: |xi'| <= sin(angle) |xi|
    transverse = math.sqrt(1 - sector_cosine(d) ** 2) * band[1] * N
    Lt = (transverse_points / 2 - 1) / (1.05 * transverse)
    grid = make_grid(d, (n1,) + (transverse_points,) * (d - 1), (L1,) + (Lt,) * (d - 1))
    return grid, R, T


def _round_up_smooth(n: int) -> int:
    n = max(8, n + (n % 2))
    while True:
        k = n
        for p in (2, 3, 5):
            while k % p == 0:
                k //= p
        if k == 1:
            return n
        n += 2


def sweep_smoothing(
    sym: SymbolSpec,
    Ns: Sequence[int],
    l: int = 1,
    d: int = 3,
    m: int = 257,
    seeds: Sequence[int] = (0,),
    tolerance: float = 0.2,
    refine: bool = False,
    amplitude: float = 1.0,
    guard_margin: float = 0.05,
    grid_options: dict | None = None,
) -> ScalingReport:
    """Ratio ``||exp(-itL) P_N U_l f||_{L^{inf,2}_{e_l}} / ||P_N f||_{L^2}`` per scale.

    Uses :func:`smoothing_grid` boxes and :func:`sector_packet` data.  The
    computation runs with the long axis first; for rotation-invariant
    symbols this equals the measurement along ``e_l``, and the recorded box
    is permuted accordingly.  The
    diagnostics record the largest share of mass that came within
    ``guard_margin`` of the long-axis faces (the wrap-around guard).
    Target exponent ``-(sigma - 1) / 2``.
    """
    if not 1 <= l <= d:
        raise ValueError(f"direction must be in 1..{d}, got {l}")
    if l != 1 and not sym.is_radial:
        raise ValueError("directions other than e_1 need a rotation-invariant symbol")
    Ns = _check_dyadic_list(Ns)
    opts = dict(grid_options or {})
    lhs, rhs, boxes, guards = [], [], [], []
    refinement = None

    def measure(grid, N, R, T, samples):
        times = uniform_times((-T, T), samples)
        w = trapezoid_weights(times)
        vals, norms, worst = [], [], 0.0
        for s in seeds:
            f = sector_packet(grid, sym, N, 1, s, R) * amplitude
            acc = MixedNormAccumulator(directional(1, math.inf, 2), grid)
            for i, (wt, u) in enumerate(zip(w, stream_free_evolution(f, sym, times))):
                acc.push(float(wt), u)
                if i in (0, samples - 1) or i % 16 == 0:
                    worst = max(worst, _axis_boundary_fraction(u, grid, 0, guard_margin))
            vals.append(acc.result())
            norms.append(_l2(f))
        return float(np.mean(vals)), float(np.mean(norms)), worst

    for N in Ns:
        grid, R, T = smoothing_grid(sym, N, d, **opts)
        a, b, worst = measure(grid, N, R, T, m)
        lhs.append(a)
        rhs.append(b)
        boxes.append(_move(grid.L, 0, l - 1))
        guards.append(worst)
    if refine:
        N = Ns[-1]
        grid, R, T = smoothing_grid(sym, N, d, **opts)
        a2, _, _ = measure(grid, N, R, T, 2 * m - 1)
        refinement = abs(a2 - lhs[-1]) / lhs[-1]
    diag = {"samples": m, "seeds": list(seeds), "boundary_fraction": guards}
    if refinement is not None:
        diag["refinement_change"] = refinement
    return ScalingReport(
        f"smoothing(e{l})", sym.name, d, list(Ns), lhs, rhs, -(sym.sigma - 1) / 2, tolerance, "upper", boxes, diag
    )


def _move(t: tuple, src: int, dst: int) -> tuple:
    items = list(t)
    v = items.pop(src)
    items.insert(dst, v)
    return tuple(items)


def _axis_boundary_fraction(u: np.ndarray, grid: Grid, axis: int, margin: float) -> float:
    mass = np.abs(u) ** 2
    x = grid.positions(axis)
    near = np.abs(x) > (0.5 - margin) * grid.L[axis]
    other = tuple(i for i in range(grid.d) if i != axis)
    profile = mass.sum(axis=other) if other else mass
    total = profile.sum()
    return float(profile[near].sum() / total) if total > 0 else 0.0


def sweep_unit_maximal(
    sym: SymbolSpec,
    sizes: Sequence[int],
    grid: Grid,
    l: int = 1,
    duration: float | None = None,
    m: int | None = None,
    tolerance: float = 0.2,
    seed: int = 0,
    amplitude: float = 1.0,
    envelope: float = 1.0,
    guard_margin: float = 0.05,
) -> ScalingReport:
    """Ratio ``||exp(-itL) Q_n f||_{L^{2,inf}_{e_l}} / ||Q_n f||_{L^2}`` against ``<n>``.

    ``n = size * e_l``.  The datum is keyed white noise under a Gaussian
    envelope of width ``envelope`` in ``x_l``, centred at ``-0.3 L_l``, then
    restricted to the unit cell around ``n``; it travels in the ``+e_l``
    direction.  The common window ``[0, duration]`` defaults to the time the
    fastest cell needs to cover ``0.6 L_l``, so no packet wraps around; ``m``
    defaults to ten samples per unit of travel.  Target exponent
    ``(sigma - 1) / 2``.
    """
    if not grid.unit_lattice:
        raise ValueError("unit-scale sweeps need integer box sides")
    sizes = [int(s) for s in sizes]
    if len(sizes) < 4:
        raise ValueError(f"need at least 4 frequency sizes, got {len(sizes)}")
    axis = l - 1
    vmax = float(sym.group_speed(np.array([max(sizes) + 1.0]))[0]) / (2 * np.pi)
    if duration is None:
        duration = 0.6 * grid.L[axis] / vmax
    if m is None:
        m = int(math.ceil(10 * vmax * duration)) + 1
    times = uniform_times((0.0, duration), m)
    w = trapezoid_weights(times)
    idx = _lattice_index(grid)
    extra = np.broadcast_to(np.array([3], dtype=np.int64), idx.shape[:-1] + (1,))
    noise = keyed_coefficients(seed, np.concatenate([idx, extra], axis=-1))
    x_l = grid.position_mesh()[axis]
    window = np.exp(-((x_l + 0.3 * grid.L[axis]) ** 2) / (2 * envelope**2))
    packet = np.fft.fftn(noise * window) * grid.cell_volume
    lhs, rhs, scales, guards = [], [], [], []
    for s in sizes:
        k = np.zeros(grid.d, dtype=int)
        k[axis] = s
        f = SpectralField(grid, packet * unit_multiplier(grid, k) * amplitude)
        acc = MixedNormAccumulator(directional(l, 2, math.inf), grid)
        worst = 0.0
        for i, (wt, u) in enumerate(zip(w, stream_free_evolution(f, sym, times))):
            acc.push(float(wt), u)
            if i == m - 1 or i % 32 == 0:
                worst = max(worst, _axis_boundary_fraction(u, grid, axis, guard_margin))
        lhs.append(acc.result())
        rhs.append(_l2(f))
        scales.append(math.sqrt(1 + s * s))
        guards.append(worst)
    return ScalingReport(
        f"unit_maximal(e{l})", sym.name, grid.d, scales, lhs, rhs, (sym.sigma - 1) / 2, tolerance, "upper",
        [grid.L] * len(sizes), {"duration": duration, "samples": m, "boundary_fraction": guards},
    )


# bilinear and quadrilinear estimates


def bilinear_exponents(sym: SymbolSpec, d: int, variant: str, theta: float = 1.0) -> tuple[float, float, str, str]:
    """``(beta_plus, beta_minus, norm_plus, norm_minus)`` for a bilinear variant.

    Variants ``"1"`` (X, X), ``"2"`` (Y, Y), ``"3"`` (X, Y) and ``"YX"``
    (Y, X with interpolation parameter ``theta``).
    """
    s1 = (sym.sigma - 1) / 2
    if variant == "1":
        return -s1, (d - 1) / 2, "X", "X"
    if variant == "2":
        return -s1, s1, "Y", "Y"
    if variant == "3":
        return -s1, s1, "X", "Y"
    if variant == "YX":
        if not 0 <= theta <= 1:
            raise ValueError(f"theta must lie in [0, 1], got {theta}")
        return -s1 * theta, (d - 1) / 2 * theta, "Y", "X"
    raise ValueError(f"unknown bilinear variant {variant!r}")


def _block_value(kind: str, grid: Grid, N: int, sym: SymbolSpec, eps: float, f: SpectralField, times) -> float:
    acc = BlockNormAccumulator(kind, grid, N, sym, eps)
    w = trapezoid_weights(times)
    lam = sym.on_grid(grid)
    for wt, t in zip(w, times):
        hat = f.coeffs * np.exp(-1j * t * lam) / grid.cell_volume
        acc.push(float(wt), np.fft.ifftn(hat), hat)
    return acc.report().total


def sweep_bilinear(
    sym: SymbolSpec,
    variant: str,
    N_pairs: Sequence[tuple[int, int]],
    grid: Grid,
    interval: tuple[float, float] = (0.0, 0.05),
    m: int = 65,
    eps: float = DEFAULT_EPS,
    theta: float = 1.0,
    seed: int = 0,
    tolerance: float = 0.2,
    amplitude: float = 1.0,
    width: float = DEFAULT_WIDTH,
) -> ScalingReport:
    """Ratio ``||P_{N+} h+ P_{N-} h-||_{L^2_{t,x}} / (N+^b+ N-^b- ||h+|| ||h-||)``.

    ``h+-`` are free evolutions of independent random shell data; the norms
    are the block norms selected by ``variant``.  The slope is fitted in
    ``log N+``; target 0.
    """
    bp, bm, kp, km = bilinear_exponents(sym, grid.d, variant, theta)
    pairs = [(int(a), int(b)) for a, b in N_pairs]
    for a, b in pairs:
        if a < b:
            raise ValueError(f"need N+ >= N-, got {(a, b)}")
        _check_shell_fits(grid, a, width)
    times = uniform_times(interval, m)
    w = trapezoid_weights(times)
    lam = sym.on_grid(grid)
    lhs, rhs = [], []
    for a, b in pairs:
        fp = shell_gaussian(grid, a, seed, width, salt=1) * amplitude
        fm = shell_gaussian(grid, b, seed, width, salt=2) * amplitude
        total = 0.0
        for wt, t in zip(w, times):
            e = np.exp(-1j * t * lam) / grid.cell_volume
            prod = np.fft.ifftn(fp.coeffs * e) * np.fft.ifftn(fm.coeffs * e)
            total += wt * np.sum(np.abs(prod) ** 2) * grid.cell_volume
        lhs.append(math.sqrt(total))
        norm_p = _block_value(kp, grid, a, sym, eps, fp, times)
        norm_m = _block_value(km, grid, b, sym, eps, fm, times)
        rhs.append(a**bp * b**bm * norm_p * norm_m)
    return ScalingReport(
        f"bilinear({variant})", sym.name, grid.d, [a for a, _ in pairs], lhs, rhs, 0.0, tolerance, "upper",
        [grid.L] * len(pairs), {"pairs": pairs, "eps": eps, "theta": theta},
    )


def quadrilinear_form(h: Sequence[SpaceTimeSample], Ns: Sequence[int] | None = None, width: float = DEFAULT_WIDTH) -> float:
    """``|int_I int (P h1)(conj P h2)(P h3)(conj P h4) dx dt|`` without aliasing.

    With ``Ns`` the shell projections are applied first; without, the inputs
    are taken as already projected.  Each slice is zero-padded by 2 per axis
    before the product, and the call is refused when the per-axis sum of the
    four frequency bands reaches the padded lattice period.
    """
    if len(h) != 4:
        raise ValueError("the form takes exactly four inputs")
    grid = h[0].grid
    times = h[0].times
    for u in h[1:]:
        if u.grid != grid or u.times.shape != times.shape or np.any(u.times != times):
            raise ValueError("all inputs must share grid and time samples")
    mults = [None] * 4 if Ns is None else [lp_multiplier(grid.xi_abs, int(N), width) for N in Ns]
    pad = grid.padded(2)
    # per-axis band of each input, read off its nonzero coefficients
    hats = []
    for u, mlt in zip(h, mults):
        hat = np.fft.fftn(u.values, axes=tuple(range(1, grid.d + 1)))
        if mlt is not None:
            hat = hat * mlt
        hats.append(hat)
    for axis in range(grid.d):
        k = np.abs(grid.frequencies(axis))
        total = 0.0
        for hat in hats:
            other = tuple(i for i in range(hat.ndim) if i != axis + 1)
            present = np.abs(hat).max(axis=other) > 1e-13 * max(np.abs(hat).max(), 1e-300)
            total += k[present].max(initial=0.0)
        if total >= pad.n[axis] / pad.L[axis]:
            raise ValueError(f"aliasing guard: band sum {total:g} reaches the padded period {pad.n[axis] / pad.L[axis]:g} on axis {axis + 1}")
    w = trapezoid_weights(times)
    acc = 0.0 + 0.0j
    for i, wt in enumerate(w):
        slices = [_pad_to_space(hat[i], grid, pad) for hat in hats]
        prod = slices[0] * np.conj(slices[1]) * slices[2] * np.conj(slices[3])
        acc += wt * prod.sum() * pad.cell_volume
    return float(abs(acc))


def _pad_to_space(hat: np.ndarray, grid: Grid, pad: Grid) -> np.ndarray:
    """Zero-pad unnormalized FFT coefficients of ``grid`` onto ``pad`` and invert."""
    out = np.zeros(pad.shape, dtype=complex)
    src = [np.rint(np.fft.fftfreq(n) * n).astype(int) for n in grid.n]
    dst = np.ix_(*[np.mod(s, pn) for s, pn in zip(src, pad.n)])
    out[dst] = hat
    scale = pad.size / grid.size
    return np.fft.ifftn(out) * scale


def quadrilinear_bound_check(
    sym: SymbolSpec,
    tuples: Sequence[tuple[int, int, int, int]],
    grid: Grid,
    types: Sequence[str] = ("F", "F", "F", "v*"),
    S: float = 0.4,
    s: float = 0.55,
    eps: float = DEFAULT_EPS,
    eps_tilde: float = 0.01,
    calibration: tuple[int, int, int, int] = (4, 4, 2, 1),
    interval: tuple[float, float] = (0.0, 0.05),
    m: int = 33,
    seed: int = 0,
    factor: float = 2.0,
) -> dict:
    """Calibrated-constant check of the four-fold product bound.

    Slot ``j`` carries data of type ``F`` (free evolution, Y block norm,
    weight ``N^S``), ``v`` (X block norm, weight ``N^s``) or ``v*`` (X block
    norm, weight ``N^-s``).  All slots are free evolutions of independent
    random shell data.  The constant is fixed on ``calibration``; each tuple
    passes when its value is at most ``factor`` times the calibrated bound.
    """
    powers = {"F": S, "v": s, "v*": -s}
    kinds = {"F": "Y", "v": "X", "v*": "X"}
    if sorted(types).count("v*") != 1:
        raise ValueError("exactly one slot must hold the dual test function")
    times = uniform_times(interval, m)
    lam = sym.on_grid(grid)

    def evaluate(Ns, salt_base):
        fields, samples, norms = [], [], []
        for j, (N, tp) in enumerate(zip(Ns, types)):
            f = shell_gaussian(grid, N, seed, salt=salt_base + j)
            u = np.stack([np.fft.ifftn(f.coeffs * np.exp(-1j * t * lam)) / grid.cell_volume for t in times])
            samples.append(SpaceTimeSample(grid, times, u))
            norms.append(_block_value(kinds[tp], grid, N, sym, eps, f, times))
        value = quadrilinear_form(samples)
        weight = max(Ns) ** (-eps_tilde) * math.prod(N ** powers[tp] for N, tp in zip(Ns, types))
        return value, weight * math.prod(norms)

    v0, b0 = evaluate(calibration, 0)
    C = v0 / b0
    rows = []
    for i, Ns in enumerate(tuples):
        v, b = evaluate(Ns, 10 * (i + 1))
        rows.append((tuple(Ns), v, C * b, v <= factor * C * b))
    return {"constant": C, "rows": rows, "passed": all(r[3] for r in rows)}


# kernel sweeps


def kernel_origin_sweep(sym: SymbolSpec, Ns: Sequence[int], d: int, tolerance: float = 0.1) -> ScalingReport:
    """``|K_N(0, 0)|`` against ``N``; target slope ``d``."""
    Ns = _check_dyadic_list(Ns)
    vals = [abs(kernel_radial_profile(sym, N, d, 0.0, np.zeros(1))[0, 0]) for N in Ns]
    return ScalingReport("kernel_origin", sym.name, d, list(Ns), vals, [1.0] * len(Ns), float(d), tolerance, "band")


def kernel_tail_fit(
    sym: SymbolSpec, N: int, d: int, t: float, *, start: float = 1.5, stop: float = 4.0, points: int = 12
) -> tuple[float, np.ndarray, np.ndarray]:
    """Decay exponent of ``sup_{|x| >= x1} |K_N(t, x)|`` beyond the light cone.

    ``x1`` runs geometrically from ``start`` to ``stop`` times the distance
    ``t v_max`` reached by the fastest frequency (but at least ``start / N``).
    Returns the fitted exponent of the envelope in ``x1`` and the samples.
    """
    lo, hi = chi_support(N)
    vmax = float(sym.group_speed(np.linspace(lo, hi, 257)).max()) / (2 * np.pi)
    reach = max(abs(t) * vmax, 1.0 / N)
    x1 = np.geomspace(start * reach, stop * reach, points)
    rho = np.linspace(x1[0], 2 * x1[-1], 4 * points * 64)
    k = np.abs(kernel_radial_profile(sym, N, d, t, rho))[0]
    envelope = np.maximum.accumulate(k[::-1])[::-1]
    env = np.interp(x1, rho, envelope)
    slope, _ = fit_slope(x1, env)
    return slope, x1, env


def kernel_l1inf_sweep(
    sym: SymbolSpec,
    Ns: Sequence[int],
    d: int,
    X: float = 1.0,
    arrival: float = 1.0,
    tolerance: float = 0.25,
    n_times: int = 129,
) -> ScalingReport:
    """``||K_N||_{L^{1,inf}_{e_1}}`` over ``|x_1| <= X`` and ``|t| <= T_N``; target ``d - 1``.

    ``T_N = arrival * X / v_min(N)`` covers the arrival at ``|x_1| = X`` of
    the slowest frequency in the cutoff support.
    """
    Ns = _check_dyadic_list(Ns)
    vals, windows = [], []
    for N in Ns:
        lo, hi = chi_support(N)
        vmin = float(sym.group_speed(np.array([max(lo, 0.5 * N)]))[0]) / (2 * np.pi)
        T = arrival * X / vmin
        windows.append(T)
        vals.append(kernel_directional_norm(sym, N, d, T, X, n_times=n_times))
    return ScalingReport(
        "kernel_l1inf", sym.name, d, list(Ns), vals, [1.0] * len(Ns), float(d - 1), tolerance, "band",
        diagnostics={"X": X, "windows": windows},
    )


def dispersive_probe(
    sym: SymbolSpec, N: int, d: int, window: tuple[float, float] = (10.0, 100.0), points: int = 6
) -> tuple[float, np.ndarray, np.ndarray]:
    """Slope of ``sup_x |K_N(t, x)|`` over ``t`` in ``window / (2 pi N)^sigma``."""
    from .propagator import dispersive_decay

    ts = np.geomspace(window[0], window[1], points) / (2 * np.pi * N) ** sym.sigma
    sup, slope = dispersive_decay(sym, N, d, ts)
    return slope, ts, sup
