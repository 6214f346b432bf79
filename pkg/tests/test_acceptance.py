"""Acceptance gate: every criterion at its stated tolerance, one verdict line each.

The lines are printed as the tests run and repeated in the terminal summary.
Scaling and solver experiments are marked ``slow``; expensive sweeps are
computed once and shared between the criterion and its falsification guard.
"""

import math
import warnings
from functools import lru_cache

import numpy as np
import pytest

from dispersion_lab.cli import main as cli_main
from dispersion_lab.estimates import (
    kernel_l1inf_sweep,
    kernel_origin_sweep,
    kernel_tail_fit,
    quadrilinear_bound_check,
    quadrilinear_form,
    shell_gaussian,
    sweep_bilinear,
    sweep_maximal,
    sweep_smoothing,
    sweep_strichartz,
    sweep_unit_maximal,
)
from dispersion_lab.grid import SpaceTimeSample, SpectralField, make_grid, quadrature_lebesgue, to_frequency
from dispersion_lab.norms import admissible_check, directional, isotropic, mixed_norm, x_block_norm, y_block_norm
from dispersion_lab.projections import lp_multiplier, microlocal_masks, unit_profile
from dispersion_lab.propagator import evolve, free_evolution
from dispersion_lab.randomization import deviation_oracle, keyed_coefficients, randomize, second_moment_check, subgaussian_slope
from dispersion_lab.solver import (
    SolveConfig,
    conservation_drift,
    cross_validate,
    forcing_norm,
    picard_solve,
    self_convergence_ratio,
    splitstep_solve,
)
from dispersion_lab.symbols import bilaplacian_mixed, fractional, laplacian, s_min

from conftest import ACCEPTANCE_LINES, random_field

GUARD_SHIFT = 0.5


def verdict(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def report_verdict(name, report):
    verdict(name, report.passed, f"slope {report.slope:.4f} vs target {report.target:.4g} ({report.mode}, tol {report.tolerance:g})")


def guard_verdict(name, report):
    tight = report.tightened(GUARD_SHIFT)
    verdict(f"guard {name}", not tight.passed, f"slope {report.slope:.4f} against target moved to {tight.target:.4g} must fail")


# 1. exactness


class TestExactness:
    GRID = make_grid(3, 32, 2.0)

    def test_fourier_round_trip(self):
        u = np.random.default_rng(0).normal(size=self.GRID.shape) + 1j * np.random.default_rng(1).normal(size=self.GRID.shape)
        err = np.max(np.abs(to_frequency(u, self.GRID).to_space() - u)) / np.max(np.abs(u))
        verdict("fourier round trip", err <= 1e-12, f"relative error {err:.2e} <= 1e-12")

    def test_parseval(self):
        f = random_field(self.GRID, 3)
        space = quadrature_lebesgue(f.to_space(), self.GRID, 2)
        err = abs(space - f.l2_norm()) / f.l2_norm()
        verdict("parseval", err <= 1e-10, f"relative error {err:.2e} <= 1e-10")

    def test_dyadic_telescoping(self):
        r = np.linspace(0, 64, 40001)
        err = np.max(np.abs(sum(lp_multiplier(r, 2**j) for j in range(8)) - 1.0))
        verdict("dyadic multipliers sum to one below 64", err <= 1e-12, f"max deviation {err:.2e} <= 1e-12")

    def test_unit_partition(self):
        x = np.linspace(-4, 4, 8001)
        err = np.max(np.abs(sum(unit_profile(x - k) for k in range(-6, 7)) - 1.0))
        verdict("unit-cell profiles sum to one", err <= 1e-12, f"max deviation {err:.2e} <= 1e-12")

    @pytest.mark.parametrize("sym", [laplacian(), bilaplacian_mixed(1)], ids=lambda s: s.name)
    def test_microlocal_partition(self, sym):
        grid = make_grid(3, 24, 3.0)
        cover = sum(m.astype(int) for m in microlocal_masks(sym, grid))
        moving = np.sqrt(sum(g**2 for g in sym.gradient_on_grid(grid))) > 0
        ok = np.all(cover[moving] == 1) and np.all(cover[~moving] == 0)
        verdict(f"sectors partition moving frequencies [{sym.name}]", bool(ok), f"{int(moving.sum())} moving points covered exactly once")

    @pytest.mark.parametrize("sym", [laplacian(), bilaplacian_mixed(1), fractional(3.0)], ids=lambda s: s.name)
    def test_isometry_and_group_law(self, sym):
        f = random_field(self.GRID, 5)
        iso = max(abs(evolve(f, sym, t).l2_norm() / f.l2_norm() - 1) for t in (-0.3, 0.01, 0.7))
        scale = 100.0 / np.abs(sym.on_grid(self.GRID)).max()
        s, t = 0.37 * scale, -0.81 * scale
        group = np.max(np.abs(evolve(evolve(f, sym, s), sym, t).coeffs - evolve(f, sym, s + t).coeffs)) / np.max(np.abs(f.coeffs))
        verdict(f"propagator isometry and group law [{sym.name}]", iso <= 1e-12 and group <= 1e-12, f"isometry {iso:.1e}, group law {group:.1e} <= 1e-12")

    @pytest.mark.parametrize(
        "spec",
        [isotropic(math.inf, 2), isotropic(4, 4), isotropic(10 / 3, 10 / 3), directional(1, 2, math.inf), directional(2, math.inf, 2), directional(3, 2.1, 40)],
        ids=["Linf_L2", "L4_L4", "L10/3_L10/3", "dir1_2_inf", "dir2_inf_2", "dir3_2.1_40"],
    )
    def test_mixed_norm_homogeneity_and_triangle(self, spec):
        grid = make_grid(3, 8, 1.0)
        times = np.linspace(0, 0.1, 5)
        rng = np.random.default_rng(11)

        def sample():
            return SpaceTimeSample(grid, times, rng.normal(size=(5,) + grid.shape) + 1j * rng.normal(size=(5,) + grid.shape))

        worst_hom, worst_tri = 0.0, -math.inf
        for k in range(50):
            u, v = sample(), sample()
            if k % 2:  # nearly parallel pairs push the ratio towards equality
                v = u.with_values(0.7 * u.values + 0.05 * v.values)
            a = complex(rng.normal(), rng.normal())
            nu, nv = mixed_norm(u, spec), mixed_norm(v, spec)
            worst_hom = max(worst_hom, abs(mixed_norm(u.with_values(a * u.values), spec) / (abs(a) * nu) - 1))
            worst_tri = max(worst_tri, mixed_norm(u.with_values(u.values + v.values), spec) / (nu + nv))
        ok = worst_hom <= 1e-12 and worst_tri <= 1 + 1e-12
        verdict(f"homogeneity and triangle [{spec.kind} {spec.outer:g},{spec.inner:g} dir {spec.direction}]", ok, f"homogeneity error {worst_hom:.1e}, largest triangle ratio {worst_tri:.4f}")

    @pytest.mark.parametrize("kind", ["X", "Y"])
    def test_block_norm_homogeneity_and_triangle(self, kind):
        grid = make_grid(3, 16, 2.0)
        sym = laplacian()
        times = np.linspace(0, 0.02, 5)
        block = x_block_norm if kind == "X" else y_block_norm
        worst_hom, worst_tri = 0.0, -math.inf
        for k in range(50):
            u = free_evolution(random_field(grid, 2 * k, band=6.0), sym, times)
            v = free_evolution(random_field(grid, 2 * k + 1, band=6.0), sym, times)
            nu, nv = block(u, 2, sym), block(v, 2, sym)
            worst_hom = max(worst_hom, abs(block(u.with_values(-2.5j * u.values), 2, sym) / (2.5 * nu) - 1))
            worst_tri = max(worst_tri, block(u.with_values(u.values + v.values), 2, sym) / (nu + nv))
        ok = worst_hom <= 1e-12 and worst_tri <= 1 + 1e-12
        verdict(f"{kind} block homogeneity and triangle", ok, f"homogeneity error {worst_hom:.1e}, largest triangle ratio {worst_tri:.4f}")


# 2. formulas


class TestFormulas:
    @pytest.mark.parametrize("sigma,d,expected", [(2, 3, 1 / 6), (2, 4, 1 / 3)])
    def test_threshold_values(self, sigma, d, expected):
        got = s_min(sigma, d)
        verdict(f"threshold regularity sigma={sigma} d={d}", abs(got - expected) <= 1e-14, f"{got:.15g} == {expected:.15g}")

    def test_fourth_order_branch_boundary(self):
        low = all(abs(s_min(4, d) - (d - 4) / 6) <= 1e-14 for d in range(5, 11))
        high = all(abs(s_min(4, d) - (d - 4) / 2 * (d - 7) / (d - 1)) <= 1e-14 for d in range(11, 21))
        verdict("fourth-order threshold switches branch at d=10", low and high, "first branch for d <= 10, second for d > 10")

    def test_branch_agreement(self):
        gaps = []
        for d in range(4, 21):
            sigma = (d + 2) / 3
            first = (d - sigma) / 2 / 3
            second = (d - sigma) / 2 * (d + 1 - 2 * sigma) / (d - 1)
            gaps.append(max(abs(first - second), abs(s_min(sigma, d) - first)))
        verdict("threshold branches agree on the switching line, d in 4..20", max(gaps) <= 1e-12, f"largest gap {max(gaps):.1e}")

    @pytest.mark.parametrize(
        "p,q,sigma,d,expected",
        [
            (math.inf, 2, 2, 3, True),
            (10 / 3, 10 / 3, 2, 3, True),
            (2, 6, 2, 3, False),  # endpoint q = 2d/(d - sigma) excluded
            (8 / 3, 4, 2, 3, True),
            (4, 4, 2, 3, False),  # off the scaling line
            (16 / 5, 4, 4, 5, True),
            (18 / 5, 18 / 5, 4, 5, True),
            (2, 10, 4, 5, False),  # endpoint for sigma = 4, d = 5
            (1, 2, 2, 3, False),
        ],
    )
    def test_admissible_truth_table(self, p, q, sigma, d, expected):
        got = admissible_check(p, q, sigma, d)
        verdict(f"admissibility (p={p:.4g}, q={q:.4g}, sigma={sigma}, d={d})", got == expected, f"{got} == {expected}")


# 3. probability


def _coefficient_vectors(K=16, count=5):
    """Deterministic vectors with different decay profiles."""
    out = []
    for v in range(count):
        idx = np.stack([np.full(K, v), np.arange(K)], axis=-1)
        out.append(keyed_coefficients(1_000_003, idx) * (1 + np.arange(K)) ** (-0.25 * (v + 1)))
    return out


@pytest.fixture(scope="module")
def tables():
    lambdas = np.array([0.25, 0.5, 0.75, 1, 1.25, 1.5, 1.75, 2, 2.25, 2.5])
    return [deviation_oracle(c, lambdas * np.linalg.norm(c), M=100_000, seed=v) for v, c in enumerate(_coefficient_vectors())]


class TestProbability:
    def test_tail_slopes(self, tables):
        s = np.array([subgaussian_slope(t) for t in tables])
        neg = bool(np.all(s < 0))
        spread = float((s.max() - s.min()) / abs(s.mean()))
        verdict("sub-Gaussian tail slopes negative and within 20%", neg and spread <= 0.2, f"slopes {np.round(s, 3).tolist()}, spread {spread:.3f}")

    def test_moment_ratios(self, tables):
        spreads = [max(t.moment_ratios.values()) / min(t.moment_ratios.values()) for t in tables]
        verdict("moment ratio max/min over gamma in {2,4,6,8}", max(spreads) <= 2, f"largest spread {max(spreads):.3f} <= 2")

    def test_second_moment_identity(self):
        grid = make_grid(2, 32, 8.0, unit_lattice=True)
        f = random_field(grid, 7, band=3.0)
        res = second_moment_check(f, 0.5, range(400))
        verdict("randomized second moment", abs(res.z_score) <= 3, f"z-score {res.z_score:.3f} within 3 standard errors")


# 4. scaling

D3 = make_grid(3, 48, 0.5)
D5 = make_grid(5, 20, 0.45)
LAP, BILAP = laplacian(), bilaplacian_mixed(1)


@lru_cache(maxsize=None)
def strichartz_reports(which):
    if which == "laplacian":
        return sweep_strichartz(LAP, [(10 / 3, 10 / 3), (7 / 3, 14 / 3)], [2, 4, 8, 16, 32], D3, (0.0, 0.05), 65, seeds=(0, 1), refine=True)
    return sweep_strichartz(BILAP, [(16 / 5, 4), (18 / 5, 18 / 5)], [2, 4, 8, 16], D5, (0.0, 1e-3), 65)


@lru_cache(maxsize=None)
def scaling_report(name):
    if name == "maximal laplacian d=3":
        return sweep_maximal(LAP, [1, 2, 4, 8, 16], make_grid(3, 48, 1.0), duration=0.02)
    if name == "maximal bilaplacian d=5":
        return sweep_maximal(BILAP, [2, 4, 8, 16], D5, duration=1e-6, m=17)
    if name == "smoothing laplacian d=3":
        return sweep_smoothing(LAP, [2, 4, 8, 16, 32], d=3, m=129)
    if name == "smoothing bilaplacian d=5":
        return sweep_smoothing(BILAP, [2, 4, 8, 16], d=5, m=129)
    if name == "unit maximal laplacian d=3":
        grid = make_grid(3, (1152, 16, 16), (32.0, 4.0, 4.0), unit_lattice=True)
        return sweep_unit_maximal(LAP, [1, 2, 4, 8, 16], grid)
    if name == "unit maximal bilaplacian d=5":
        grid = make_grid(5, (600,) + (8,) * 4, (16.0,) + (1.0,) * 4, unit_lattice=True)
        return sweep_unit_maximal(BILAP, [1, 2, 4, 8, 16], grid)
    if name == "kernel origin laplacian d=3":
        return kernel_origin_sweep(LAP, [2, 4, 8, 16, 32], 3)
    if name == "kernel origin bilaplacian d=5":
        return kernel_origin_sweep(BILAP, [2, 4, 8, 16, 32], 5)
    if name == "kernel directional laplacian d=3":
        return kernel_l1inf_sweep(LAP, [2, 4, 8, 16], 3)
    if name == "kernel directional bilaplacian d=5":
        return kernel_l1inf_sweep(BILAP, [2, 4, 8, 16], 5)
    if name == "bilinear variant 1 laplacian d=3":
        # the long window lets the smoothing part of the X block dominate at every scale
        return sweep_bilinear(LAP, "1", [(4, 2), (8, 2), (16, 2), (32, 2)], D3, interval=(0.0, 8.0), m=65)
    raise KeyError(name)


SCALING = [
    "maximal laplacian d=3",
    "maximal bilaplacian d=5",
    "smoothing laplacian d=3",
    "smoothing bilaplacian d=5",
    "unit maximal laplacian d=3",
    "unit maximal bilaplacian d=5",
    "kernel origin laplacian d=3",
    "kernel origin bilaplacian d=5",
    "kernel directional laplacian d=3",
    "kernel directional bilaplacian d=5",
    "bilinear variant 1 laplacian d=3",
]


@pytest.mark.slow
class TestScaling:
    @pytest.mark.parametrize("which", ["laplacian", "bilaplacian"])
    @pytest.mark.parametrize("pair", [0, 1])
    def test_strichartz(self, which, pair):
        r = strichartz_reports(which)[pair]
        report_verdict(f"{r.experiment} {which}", r)

    @pytest.mark.parametrize("which", ["laplacian", "bilaplacian"])
    @pytest.mark.parametrize("pair", [0, 1])
    def test_strichartz_guard(self, which, pair):
        r = strichartz_reports(which)[pair]
        guard_verdict(f"{r.experiment} {which}", r)

    @pytest.mark.parametrize("name", SCALING)
    def test_sweep(self, name):
        report_verdict(name, scaling_report(name))

    @pytest.mark.parametrize("name", SCALING)
    def test_guard(self, name):
        guard_verdict(name, scaling_report(name))

    @pytest.mark.parametrize("sym,d", [(LAP, 3), (BILAP, 5)], ids=["laplacian", "bilaplacian"])
    @pytest.mark.parametrize("N", [2, 4, 8])
    def test_kernel_tail(self, sym, d, N):
        slope, _, _ = kernel_tail_fit(sym, N, d, 1.0 / (2 * math.pi * N) ** sym.sigma)
        verdict(f"kernel tail exponent {sym.name} d={d} N={N}", slope <= -1.8, f"exponent {slope:.3f} <= -1.8")

    def test_quadrilinear_calibrated_bound(self):
        rng = np.random.default_rng(0)
        tuples = [tuple(sorted(rng.choice([1, 2, 4, 8, 16], 4), reverse=True)) for _ in range(10)]
        out = quadrilinear_bound_check(LAP, tuples, D3)
        worst = max(v / b for _, v, b, _ in out["rows"] if b > 0)
        verdict("quadrilinear calibrated bound on 10 shell tuples", out["passed"], f"largest value/bound {worst:.3f} (constant {out['constant']:.3g}, factor 2)")

    def test_quadrilinear_vanishing(self):
        # a 32-shell cannot be balanced by three 2-shells, so the integral vanishes
        times = np.linspace(0, 0.05, 17)
        samples = [free_evolution(shell_gaussian(D3, N, 0, salt=j), LAP, times) for j, N in enumerate((32, 2, 2, 2))]
        value = abs(quadrilinear_form(samples))
        verdict("quadrilinear vanishing configuration", value <= 1e-10, f"|form| = {value:.2e} <= 1e-10")


# 5. solver


def _unit_bump(grid, seed=1):
    f = randomize(to_frequency(np.exp(-grid.x_squared / (2 * 0.25)).astype(complex), grid), seed)
    return f * (1.0 / f.l2_norm())


SOLVER_GRID = make_grid(3, 32, 4.0, unit_lattice=True)
T_END = 0.05


@pytest.mark.slow
class TestSolver:
    @pytest.mark.parametrize("sign", [1, -1])
    def test_conservation(self, sign):
        u = splitstep_solve(_unit_bump(SOLVER_GRID), SolveConfig(LAP, sign, (0.0, T_END), dt=T_END / 128, save_every=16))
        m, e = conservation_drift(u, LAP, sign)
        verdict(f"mass and energy drift (sign {sign:+d})", m <= 1e-8 and e <= 1e-5, f"mass {m:.1e} <= 1e-8, energy {e:.1e} <= 1e-5")

    def test_strang_order(self):
        ratio = self_convergence_ratio(_unit_bump(SOLVER_GRID), SolveConfig(LAP, 1, (0.0, T_END), dt=T_END / 16))
        verdict("split-step self-convergence ratio", 3.5 <= ratio <= 4.5, f"ratio {ratio:.3f} in [3.5, 4.5]")

    @pytest.mark.parametrize("increment_norm", ["X", "L2"])
    def test_picard_geometric(self, increment_norm):
        times = np.linspace(0.0, T_END, 17)
        cfg = SolveConfig(LAP, 1, (0.0, T_END), dt=T_END / 128, increment_norm=increment_norm, tolerance=1e-14 if increment_norm == "L2" else 1e-12)
        F = free_evolution(_unit_bump(SOLVER_GRID), LAP, times, (0.0, T_END))
        F = F.with_values(F.values * cfg.delta / forcing_norm(F, cfg))
        _, trace = picard_solve(F, cfg)
        ok = trace.small_data and trace.converged and len(trace.ratios) >= 1 and max(trace.ratios) <= 0.6
        verdict(f"Picard increments geometric at forcing norm delta ({increment_norm})", ok, f"ratios {[f'{r:.1e}' for r in trace.ratios]} <= 0.6")

    def test_cross_validation(self):
        cfg = SolveConfig(LAP, 1, (0.0, T_END), dt=T_END / 128, increment_norm="L2", tolerance=1e-12)
        f = _unit_bump(SOLVER_GRID)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # unit data exceeds the smallness threshold
            coarse = cross_validate(f, cfg, 33)["gap"]
            fine = cross_validate(f, cfg, 65)["gap"]
        ok = coarse <= 1e-3 and fine <= 1e-3 and fine <= coarse / 2
        verdict("split-step vs Picard gap", ok, f"gap {coarse:.2e} -> {fine:.2e} under refinement, <= 1e-3 and halving")

    def test_soliton(self):
        grid = make_grid(1, 256, 40.0)
        x = grid.positions(0)
        u0 = np.sqrt(2) / np.cosh(x)
        cfg = SolveConfig(LAP, -1, (0.0, 1.0), dt=1e-3, save_every=1000)
        u = splitstep_solve(to_frequency(u0.astype(complex), grid), cfg)
        err = float(np.max(np.abs(u.values[-1] - u0 * np.exp(1j))))
        verdict("focusing soliton", err <= 1e-4, f"max error {err:.2e} <= 1e-4")


# 6. reproducibility


class TestReproducibility:
    @pytest.mark.parametrize(
        "argv",
        [
            ["montecarlo", "--seed", "3"],
            ["randomize", "--d", "2", "--n", "32", "--L", "4", "--seed", "5"],
            ["evolve", "--d", "3", "--n", "16", "--L", "2", "--kernel-N", "2"],
            ["norms", "--d", "3", "--n", "16", "--L", "2", "--kind", "X"],
            ["solve", "--d", "3", "--n", "16", "--L", "4", "--T", "0.01", "--samples", "9", "--amplitude", "0.05", "--seed", "1"],
            ["scan", "--d", "3", "--n", "8", "--L", "2", "--seeds", "3", "--T0", "0.01", "--halvings", "2", "--samples", "5"],
            ["verify", "--experiment", "kernel_l1inf", "--Ns", "2,4,8,16"],
        ],
        ids=lambda a: a[0],
    )
    def test_cli_rerun_is_byte_identical(self, tmp_path, argv):
        outputs = []
        for name in ("first", "second"):
            cli_main([*argv, "--out", str(tmp_path / name)])
            outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir()) if p.suffix in (".csv", ".dlf")})
        ok = bool(outputs[0]) and outputs[0] == outputs[1]
        verdict(f"byte-identical rerun of {argv[0]}", ok, f"{len(outputs[0])} artifacts compared")
