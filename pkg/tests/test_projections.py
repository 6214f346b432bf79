import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from dispersion_lab.grid import make_grid
from dispersion_lab.projections import (
    DyadicProjector,
    MicrolocalProjector,
    UnitProjector,
    bump,
    chi_multiplier,
    dyadic_neighbors,
    is_dyadic,
    lp_multiplier,
    lp_project,
    microlocal_masks,
    microlocal_project,
    shell_support,
    smooth_step,
    unit_multiplier,
    unit_profile,
    unit_project,
)
from dispersion_lab.symbols import SymbolSpec, bilaplacian_mixed, laplacian

from conftest import random_field


class TestCutoffs:
    def test_smooth_step_ends(self):
        np.testing.assert_array_equal(smooth_step(np.array([-1.0, 0.0, 1.0, 2.0])), [0, 0, 1, 1])

    @given(st.floats(0, 1))
    def test_smooth_step_symmetry(self, y):
        assert smooth_step(y) + smooth_step(1 - y) == pytest.approx(1.0, abs=1e-15)

    def test_bump_support(self):
        r = np.linspace(0, 2, 401)
        b = bump(r)
        assert np.all(b[r <= 1] == 1) and np.all(b[r >= 1.25] == 0)
        assert np.all(np.diff(b) <= 0)

    def test_bump_width_checked(self):
        with pytest.raises(ValueError):
            bump(np.ones(2), width=0)

    @pytest.mark.parametrize("N", [1.0, 2, 8, 1024])
    def test_dyadic(self, N):
        assert is_dyadic(N)

    @pytest.mark.parametrize("N", [0, 3, 6, 1.5, -2])
    def test_not_dyadic(self, N):
        assert not is_dyadic(N)
        with pytest.raises(ValueError):
            lp_multiplier(np.ones(2), N)

    def test_telescoping_partition(self):
        r = np.linspace(0, 60, 20001)
        total = sum(lp_multiplier(r, 2**j) for j in range(8))
        np.testing.assert_allclose(total[r <= 128], 1.0, atol=1e-12)

    @pytest.mark.parametrize("N", [1, 2, 4, 16])
    def test_support(self, N):
        lo, hi = shell_support(N)
        r = np.linspace(0, 3 * N, 3001)
        m = lp_multiplier(r, N)
        assert np.all(m[(r < lo) | (r > hi)] == 0)
        assert np.all((m >= 0) & (m <= 1 + 1e-15))

    @pytest.mark.parametrize("N", [1, 2, 8])
    def test_chi_is_one_on_shell(self, N):
        r = np.linspace(0, 3 * N, 3001)
        inside = lp_multiplier(r, N) > 0
        np.testing.assert_allclose(chi_multiplier(r, N)[inside], 1.0, atol=1e-12)

    def test_neighbors(self):
        assert dyadic_neighbors(1) == [1, 2]
        assert dyadic_neighbors(8) == [4, 8, 16]


class TestShellProjection:
    def test_band_check(self):
        g = make_grid(2, 16, 1.0)
        f = random_field(g)
        lp_project(f, 4)
        with pytest.raises(ValueError, match="grid limit"):
            lp_project(f, 8)

    def test_sum_recovers_field(self):
        g = make_grid(2, 32, 1.0)
        f = random_field(g, band=8.0)
        total = sum((lp_project(f, N).coeffs for N in (1, 2, 4, 8)), np.zeros(g.shape))
        np.testing.assert_allclose(total, f.coeffs, atol=1e-12)

    def test_transformer(self):
        g = make_grid(2, 32, 1.0)
        f = random_field(g)
        p = DyadicProjector(N=4).fit(f)
        np.testing.assert_allclose(p.transform(f).coeffs, lp_project(f, 4).coeffs)
        assert p.get_params() == {"N": 4, "width": 0.25}
        assert clone(p).get_params()["N"] == 4

    def test_transformer_validation(self):
        g = make_grid(2, 16, 1.0)
        f = random_field(g)
        with pytest.raises(ValueError):
            DyadicProjector(N=3).fit(f)
        with pytest.raises(ValueError):
            DyadicProjector(N=16).fit(f)
        with pytest.raises(TypeError):
            DyadicProjector(N=2).fit(np.zeros(3))
        with pytest.raises(AttributeError):
            DyadicProjector(N=2).transform(f)

    def test_transformer_grid_mismatch(self):
        f = random_field(make_grid(2, 16, 1.0))
        h = random_field(make_grid(2, 16, 2.0))
        p = DyadicProjector(N=2).fit(f)
        with pytest.raises(ValueError):
            p.transform(h)


class TestUnitCells:
    def test_profile_partition(self):
        x = np.linspace(-3, 3, 6001)
        total = sum(unit_profile(x - k) for k in range(-5, 6))
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_profile_even_and_supported(self):
        x = np.linspace(-2, 2, 801)
        np.testing.assert_allclose(unit_profile(x), unit_profile(-x))
        assert np.all(unit_profile(x)[np.abs(x) >= 1] == 0)

    def test_cells_sum_to_field(self):
        g = make_grid(2, 32, 4.0, unit_lattice=True)
        f = random_field(g, band=1.5)
        total = np.zeros(g.shape, dtype=complex)
        for a in range(-2, 3):
            for b in range(-2, 3):
                total += unit_project(f, (a, b)).coeffs
        np.testing.assert_allclose(total, f.coeffs, atol=1e-12)

    def test_needs_integer_box(self):
        g = make_grid(2, 16, 1.5)
        with pytest.raises(ValueError):
            unit_multiplier(g, (0, 0))

    def test_cell_window_check(self):
        g = make_grid(1, 16, 2.0)
        with pytest.raises(ValueError):
            unit_multiplier(g, (3,))

    def test_transformer(self):
        g = make_grid(2, 16, 2.0, unit_lattice=True)
        f = random_field(g)
        out = UnitProjector(k=(1, 0)).fit_transform(f)
        np.testing.assert_allclose(out.coeffs, unit_project(f, (1, 0)).coeffs)


class TestSectors:
    @pytest.mark.parametrize("sym", [laplacian(), bilaplacian_mixed(1)], ids=lambda s: s.name)
    @pytest.mark.parametrize("d", [2, 3])
    def test_partition(self, sym, d):
        g = make_grid(d, 16, 1.0)
        masks = microlocal_masks(sym, g)
        total = sum(m.astype(int) for m in masks)
        grads = sym.gradient_on_grid(g)
        moving = sum(x**2 for x in grads) > 0
        np.testing.assert_array_equal(total[moving], 1)
        assert np.all(total[~moving] == 0)

    def test_degenerate_set_excluded(self):
        # the bilaplacian with mu = 1 has a sphere of critical points
        g = make_grid(1, 64, 2 * np.pi / np.sqrt(2) * 4)
        masks = microlocal_masks(bilaplacian_mixed(1), g)
        assert masks[0][0] == False  # noqa: E712 - origin has zero gradient

    def test_project_sums(self):
        g = make_grid(3, 16, 1.0)
        f = random_field(g)
        sym = laplacian()
        total = sum(microlocal_project(f, sym, l).coeffs for l in (1, 2, 3))
        np.testing.assert_allclose(total[g.xi_abs > 0], f.coeffs[g.xi_abs > 0])

    def test_direction_checked(self):
        f = random_field(make_grid(2, 8, 1.0))
        with pytest.raises(ValueError):
            microlocal_project(f, laplacian(), 3)

    def test_non_radial(self):
        sym = SymbolSpec("aniso", 2.0, evaluator=lambda xi: xi[..., 0] ** 2 + 4 * xi[..., 1] ** 2)
        g = make_grid(2, 16, 1.0)
        masks = microlocal_masks(sym, g)
        assert masks[1].sum() > masks[0].sum()

    def test_transformer(self):
        g = make_grid(2, 16, 1.0)
        f = random_field(g)
        p = MicrolocalProjector(symbol=laplacian(), l=2)
        np.testing.assert_allclose(p.fit_transform(f).coeffs, microlocal_project(f, laplacian(), 2).coeffs)
        with pytest.raises(ValueError):
            MicrolocalProjector(symbol=laplacian(), l=5).fit(f)
