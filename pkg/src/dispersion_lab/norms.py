"""Mixed space-time norms, composite block norms and admissible exponents.

Two norm shapes are supported on a time-sampled field ``h(t, x)``.

* isotropic ``L^p_t L^q_x``: ``(int (int |h|^q dx)^(p/q) dt)^(1/p)``;
* directional ``L^{a,b}_{e_l}``: ``(int (int int |h|^b dx' dt)^(a/b) dx_l)^(1/a)``
  with the outer exponent ``a`` in the coordinate ``x_l`` and the inner
  exponent ``b`` jointly in time and the other coordinates.

Infinite exponents are grid maxima.  Time integrals use trapezoid weights,
space integrals Riemann sums.  Everything is computed by a streaming
accumulator that consumes one time slice at a time and rescales by the
running maximum, so exponents like 40 neither overflow nor require the
whole space-time array in memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .grid import Grid, SpaceTimeSample, trapezoid_weights
from .projections import DEFAULT_WIDTH, lp_multiplier, microlocal_masks
from .symbols import SymbolSpec

__all__ = [
    "MixedNormSpec",
    "MixedNormAccumulator",
    "mixed_norm",
    "isotropic",
    "directional",
    "BlockNormReport",
    "BlockNormAccumulator",
    "x_block_norm",
    "y_block_norm",
    "x_components",
    "y_components",
    "aggregate_norm",
    "composite_norm",
    "dyadic_scales",
    "admissible_check",
    "admissible_family",
    "DEFAULT_EPS",
]

DEFAULT_EPS = 0.05
INF = math.inf


def _check_exponent(e) -> float:
    e = float(e)
    if not (e >= 1):
        raise ValueError(f"norm exponents must lie in [1, inf], got {e}")
    return e


@dataclass(frozen=True)
class MixedNormSpec:
    """Descriptor of a mixed norm.

    Parameters
    ----------
    kind : {"isotropic", "directional"}
        Shape of the norm.
    outer : float
        Time exponent ``p`` (isotropic) or ``x_l`` exponent ``a`` (directional).
    inner : float
        Space exponent ``q`` (isotropic) or ``(t, x')`` exponent ``b`` (directional).
    direction : int, optional
        1-based axis ``l`` for directional norms.
    interval : tuple of float, optional
        Time interval the sample must cover.
    """

    kind: str
    outer: float
    inner: float
    direction: int | None = None
    interval: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("isotropic", "directional"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        object.__setattr__(self, "outer", _check_exponent(self.outer))
        object.__setattr__(self, "inner", _check_exponent(self.inner))
        if self.kind == "directional":
            if self.direction is None or int(self.direction) < 1:
                raise ValueError("directional norms need a direction l >= 1")
            object.__setattr__(self, "direction", int(self.direction))

    @property
    def label(self) -> str:
        def fmt(e):
            return "inf" if math.isinf(e) else f"{e:.6g}"

        if self.kind == "isotropic":
            return f"L^{fmt(self.outer)}_t L^{fmt(self.inner)}_x"
        return f"L^({fmt(self.outer)},{fmt(self.inner)})_e{self.direction}"


def isotropic(p: float, q: float | None = None, interval=None) -> MixedNormSpec:
    return MixedNormSpec("isotropic", p, p if q is None else q, interval=interval)


def directional(l: int, a: float, b: float, interval=None) -> MixedNormSpec:
    return MixedNormSpec("directional", a, b, direction=l, interval=interval)


class _ScaledSum:
    """Running ``sum w |x|^e`` stored as ``scale^e * acc`` to avoid overflow."""

    def __init__(self, shape, exponent: float):
        self.e = exponent
        self.scale = 0.0
        self.acc = np.zeros(shape)

    def add(self, weight: float, mag: np.ndarray, reduce_axes) -> None:
        top = float(mag.max(initial=0.0))
        if top > self.scale:
            if self.scale > 0:
                self.acc *= (self.scale / top) ** self.e
            self.scale = top
        if self.scale == 0.0 or weight == 0.0:
            return
        self.acc += weight * np.sum((mag / self.scale) ** self.e, axis=reduce_axes)


class MixedNormAccumulator:
    """Streaming evaluation of one :class:`MixedNormSpec` on ``grid``.

    Feed slices with :meth:`push` together with their time-quadrature
    weights; read the value with :meth:`result`.
    """

    def __init__(self, spec: MixedNormSpec, grid: Grid):
        self.spec = spec
        self.grid = grid
        if spec.kind == "directional":
            if spec.direction > grid.d:
                raise ValueError(f"direction {spec.direction} exceeds dimension {grid.d}")
            self.axis = spec.direction - 1
            self.other = tuple(i for i in range(grid.d) if i != self.axis)
            self.dx_l = grid.dx[self.axis]
            self.dx_other = math.prod(grid.dx[i] for i in self.other)
            n_l = grid.n[self.axis]
            if math.isinf(spec.inner):
                self.inner_max = np.zeros(n_l)
            else:
                self.inner_sum = _ScaledSum(n_l, spec.inner)
        else:
            self.all_axes = tuple(range(grid.d))
            self.time_max = 0.0
            self.time_sum = _ScaledSum((), spec.outer) if not math.isinf(spec.outer) else None
        self.count = 0

    def _space_norm(self, mag: np.ndarray) -> float:
        q = self.spec.inner
        top = float(mag.max(initial=0.0))
        if math.isinf(q) or top == 0.0:
            return top
        return top * float(np.sum((mag / top) ** q) * self.grid.cell_volume) ** (1 / q)

    def push(self, weight: float, values: np.ndarray) -> None:
        mag = np.abs(values)
        if mag.shape != self.grid.shape:
            raise ValueError(f"slice shape {mag.shape} does not match grid {self.grid.shape}")
        self.count += 1
        if self.spec.kind == "isotropic":
            s = self._space_norm(mag)
            if self.time_sum is None:
                self.time_max = max(self.time_max, s)
            else:
                self.time_sum.add(weight, np.asarray(s), None)
            return
        if math.isinf(self.spec.inner):
            np.maximum(self.inner_max, mag.max(axis=self.other) if self.other else mag, out=self.inner_max)
        else:
            self.inner_sum.add(weight, mag, self.other if self.other else None)

    def result(self) -> float:
        if self.count == 0:
            raise ValueError("no slices were pushed")
        spec = self.spec
        if spec.kind == "isotropic":
            if self.time_sum is None:
                return self.time_max
            ts = self.time_sum
            return float(ts.scale * float(ts.acc) ** (1 / spec.outer)) if ts.scale else 0.0
        if math.isinf(spec.inner):
            inner = self.inner_max
        else:
            s = self.inner_sum
            if s.scale == 0.0:
                return 0.0
            inner = s.scale * (s.acc * self.dx_other) ** (1 / spec.inner)
        top = float(inner.max(initial=0.0))
        if math.isinf(spec.outer) or top == 0.0:
            return top
        return top * float(np.sum((inner / top) ** spec.outer) * self.dx_l) ** (1 / spec.outer)


def _check_interval(u: SpaceTimeSample, spec: MixedNormSpec) -> None:
    if spec.interval is None:
        return
    lo, hi = spec.interval
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if u.times[0] > lo + tol or u.times[-1] < hi - tol:
        raise ValueError(f"sample times [{u.times[0]}, {u.times[-1]}] do not cover {spec.interval}")


def mixed_norm(u: SpaceTimeSample, spec: MixedNormSpec) -> float:
    """Evaluate ``spec`` on the sampled field ``u``."""
    _check_interval(u, spec)
    acc = MixedNormAccumulator(spec, u.grid)
    for w, slice_ in zip(u.weights, u.values):
        acc.push(float(w), slice_)
    return acc.result()


# composite block norms


def _slot(e: float) -> float:
    """``2/e`` with the convention ``2/0 = inf``."""
    return INF if e == 0 else 2.0 / e


def x_components(sym: SymbolSpec, d: int, eps: float) -> dict:
    """Exponents of the remainder-space block, keyed by component name."""
    r = 2.0 / (1.0 - eps)
    return {
        "energy": ("isotropic", INF, r),
        "strichartz": ("isotropic", 2 * (d + sym.sigma) / d, 2 * (d + sym.sigma) / d),
        "maximal": ("directional", r, INF),
        "smoothing": ("directional", INF, r),
    }


def y_components(sym: SymbolSpec, d: int, eps: float) -> dict:
    """Exponents of the free-evolution block, keyed by component name."""
    return {
        "energy": ("isotropic", INF, 2.0),
        "strichartz": ("isotropic", 2 * (d + sym.sigma) / sym.sigma, 2 * (d + sym.sigma) / sym.sigma),
        "maximal": ("directional", 2.0, _slot(eps)),
        "smoothing": ("directional", _slot(eps), 2.0),
    }


def _component_weight(kind: str, name: str, N: float, sym: SymbolSpec, d: int) -> float:
    if name in ("energy", "strichartz"):
        return 1.0
    if kind == "X":
        return N ** (-(d - 1) / 2) if name == "maximal" else N ** ((sym.sigma - 1) / 2)
    return N ** (-(sym.sigma - 1) / 2) if name == "maximal" else N ** ((sym.sigma - 1) / 2)


@dataclass
class BlockNormReport:
    """Component values of one dyadic block.

    ``values[name]`` holds the raw norm (a list over directions for the
    directional components); ``weights[name]`` is the dyadic weight applied
    before summing.
    """

    kind: str
    N: float
    eps: float
    values: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)

    def component(self, name: str) -> float:
        v = self.values[name]
        return self.weights[name] * (sum(v) if isinstance(v, list) else v)

    @property
    def total(self) -> float:
        return sum(self.component(k) for k in self.values)

    def rows(self):
        for name, v in self.values.items():
            if isinstance(v, list):
                for l, x in enumerate(v, start=1):
                    yield (self.kind, self.N, f"{name}_e{l}", self.weights[name], x)
            else:
                yield (self.kind, self.N, name, self.weights[name], v)
        yield (self.kind, self.N, "block", 1.0, self.total)


class BlockNormAccumulator:
    """Streaming evaluation of a composite block norm.

    Parameters
    ----------
    kind : {"X", "Y"}
        Remainder-space or free-evolution block.
    grid : Grid
    N : float
        Dyadic scale (only enters the weights).
    sym : SymbolSpec
        Symbol defining the group-velocity sectors.
    eps : float
        Integrability offset in ``[0, 1)``.
    components : sequence of str, optional
        Subset of components to evaluate.
    """

    def __init__(self, kind: str, grid: Grid, N: float, sym: SymbolSpec, eps: float = DEFAULT_EPS, components=None):
        if kind not in ("X", "Y"):
            raise ValueError(f"block kind must be 'X' or 'Y', got {kind!r}")
        if not 0 <= eps < 1:
            raise ValueError(f"eps must lie in [0, 1), got {eps}")
        self.kind, self.grid, self.N, self.sym, self.eps = kind, grid, N, sym, eps
        table = (x_components if kind == "X" else y_components)(sym, grid.d, eps)
        names = list(table) if components is None else list(components)
        self.accs: dict = {}
        for name in names:
            shape, a, b = table[name]
            if shape == "isotropic":
                self.accs[name] = MixedNormAccumulator(MixedNormSpec(shape, a, b), grid)
            else:
                self.accs[name] = [MixedNormAccumulator(directional(l, a, b), grid) for l in range(1, grid.d + 1)]
        self.masks = microlocal_masks(sym, grid) if "smoothing" in self.accs else None

    def push(self, weight: float, values: np.ndarray, coeffs: np.ndarray | None = None) -> None:
        """Consume one physical slice; ``coeffs`` (its FFT) may be passed to save a transform."""
        for name, acc in self.accs.items():
            if name == "smoothing":
                hat = np.fft.fftn(values) if coeffs is None else coeffs
                for mask, a in zip(self.masks, acc):
                    a.push(weight, np.fft.ifftn(np.where(mask, hat, 0)))
            elif isinstance(acc, list):
                for a in acc:
                    a.push(weight, values)
            else:
                acc.push(weight, values)

    def report(self) -> BlockNormReport:
        rep = BlockNormReport(self.kind, self.N, self.eps)
        for name, acc in self.accs.items():
            rep.values[name] = [a.result() for a in acc] if isinstance(acc, list) else acc.result()
            rep.weights[name] = _component_weight(self.kind, name, self.N, self.sym, self.grid.d)
        return rep


def _block(kind: str, u: SpaceTimeSample, N, sym, eps, components=None) -> BlockNormReport:
    acc = BlockNormAccumulator(kind, u.grid, N, sym, eps, components)
    for w, slice_ in zip(u.weights, u.values):
        acc.push(float(w), slice_)
    return acc.report()


def x_block_norm(v: SpaceTimeSample, N: float, sym: SymbolSpec, eps: float = DEFAULT_EPS, *, report: bool = False):
    """Remainder-space block norm of a sample already restricted to shell ``N``.

    The value is non-decreasing in ``eps`` only when the box and the window
    both have measure at most 1, since larger Lebesgue exponents dominate
    smaller ones only there.
    """
    rep = _block("X", v, N, sym, eps)
    return rep if report else rep.total


def y_block_norm(F: SpaceTimeSample, N: float, sym: SymbolSpec, eps: float = DEFAULT_EPS, *, report: bool = False):
    """Free-evolution block norm of a sample already restricted to shell ``N``."""
    rep = _block("Y", F, N, sym, eps)
    return rep if report else rep.total


def aggregate_norm(blocks: dict, s: float) -> float:
    """``(sum_N N^(2s) block_N^2)^(1/2)`` over a mapping ``N -> block value``."""
    return float(math.sqrt(sum(N ** (2 * s) * b**2 for N, b in blocks.items())))


def dyadic_scales(grid: Grid) -> list[int]:
    """Dyadic scales whose shells together cover every lattice frequency."""
    top = float(grid.xi_abs.max())
    Ns = [1]
    while Ns[-1] < top:
        Ns.append(2 * Ns[-1])
    return Ns


def composite_norm(
    u: SpaceTimeSample,
    kind: str,
    sym: SymbolSpec,
    s: float,
    eps: float = DEFAULT_EPS,
    Ns: Sequence[int] | None = None,
    width: float = DEFAULT_WIDTH,
) -> tuple[float, dict]:
    """Full dyadic norm: split ``u`` into shells, evaluate blocks, aggregate.

    Returns the aggregate and the mapping ``N -> BlockNormReport``.  Shells
    with no lattice frequencies are skipped.  Shell multipliers are applied
    slice by slice, so memory stays at one slice per shell.
    """
    grid = u.grid
    Ns = dyadic_scales(grid) if Ns is None else list(Ns)
    mults = {N: lp_multiplier(grid.xi_abs, N, width) for N in Ns}
    mults = {N: m for N, m in mults.items() if np.any(m != 0)}
    accs = {N: BlockNormAccumulator(kind, grid, N, sym, eps) for N in mults}
    for w, slice_ in zip(u.weights, u.values):
        hat = np.fft.fftn(slice_)
        for N, m in mults.items():
            proj_hat = hat * m
            accs[N].push(float(w), np.fft.ifftn(proj_hat), proj_hat)
    reports = {N: a.report() for N, a in accs.items()}
    return aggregate_norm({N: r.total for N, r in reports.items()}, s), reports


# admissibility


def admissible_check(p: float, q: float, sigma: float, d: int) -> bool:
    """True iff ``sigma/p + d/q = d/2`` and ``2 <= q < 2d/(d - sigma)``."""
    if d <= sigma:
        raise ValueError(f"need d > sigma, got d={d}, sigma={sigma}")
    if p < 1 or q < 1:
        raise ValueError(f"exponents must be at least 1, got p={p}, q={q}")
    lhs = (0.0 if math.isinf(p) else sigma / p) + (0.0 if math.isinf(q) else d / q)
    if abs(lhs - d / 2) > 1e-12:
        return False
    return 2 <= q < 2 * d / (d - sigma)


def admissible_family(sigma: float, d: int, count: int) -> list[tuple[float, float]]:
    """``count`` admissible pairs with ``q`` evenly spaced in ``[2, 2d/(d-sigma))``."""
    if d <= sigma:
        raise ValueError(f"need d > sigma, got d={d}, sigma={sigma}")
    if count < 1:
        raise ValueError("count must be positive")
    q_end = 2 * d / (d - sigma)
    pairs = []
    for j in range(count):
        q = 2 + (q_end - 2) * j / count
        gap = d / 2 - d / q
        p = INF if gap <= 1e-15 else sigma / gap
        pairs.append((p, q))
    return pairs
