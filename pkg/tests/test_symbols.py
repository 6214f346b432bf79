import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dispersion_lab.grid import make_grid
from dispersion_lab.symbols import (
    SymbolSpec,
    audit_symbol,
    bilaplacian_mixed,
    check_derivatives,
    fractional,
    get_symbol,
    laplacian,
    s_crit,
    s_min,
)

TWO_PI = 2 * math.pi


class TestBuiltins:
    def test_laplacian_values(self):
        sym = laplacian()
        xi = np.array([[1.0, 0.0, 0.0], [1.0, 2.0, 2.0]])
        np.testing.assert_allclose(sym.evaluate(xi), TWO_PI**2 * np.array([1.0, 9.0]))
        assert sym.sigma == 2 and sym.validity_radius == 1.0

    @pytest.mark.parametrize("mu", [-1, 0, 1])
    def test_bilaplacian_values(self, mu):
        sym = bilaplacian_mixed(mu)
        r = 1.5
        expected = TWO_PI**4 * r**4 - mu * TWO_PI**2 * r**2
        assert sym.evaluate(np.array([r, 0.0])) == pytest.approx(expected)
        assert sym.validity_radius == (2.0 if mu else 1.0)

    def test_bilaplacian_rejects_mu(self):
        with pytest.raises(ValueError):
            bilaplacian_mixed(2)

    def test_fractional(self):
        sym = fractional(3.0)
        assert sym.evaluate(np.array([0.5])) == pytest.approx(math.pi**3)
        with pytest.raises(ValueError):
            fractional(1.5)

    @pytest.mark.parametrize("name,cls", [("laplacian", 2.0), ("bilaplacian", 4.0), ("Bilaplacian_Mixed", 4.0)])
    def test_lookup(self, name, cls):
        assert get_symbol(name, mu=1).sigma == cls

    def test_lookup_unknown(self):
        with pytest.raises(ValueError):
            get_symbol("wave")

    def test_needs_profile(self):
        with pytest.raises(ValueError):
            SymbolSpec("empty", 2.0)

    def test_group_speed(self):
        np.testing.assert_allclose(laplacian().group_speed(np.array([2.0])), [2 * TWO_PI**2 * 2.0])

    def test_on_grid_matches_pointwise(self):
        g = make_grid(2, 8, 1.0)
        sym = bilaplacian_mixed(1)
        pts = np.stack(np.broadcast_arrays(*g.frequency_mesh()), axis=-1)
        np.testing.assert_allclose(sym.on_grid(g), sym.evaluate(pts))


class TestDerivatives:
    @pytest.mark.parametrize("sym", [laplacian(), bilaplacian_mixed(1), bilaplacian_mixed(-1), fractional(3.0)], ids=lambda s: s.name)
    def test_closed_forms_match_differences(self, sym):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(20, 3)) * 3
        g_err, h_err = check_derivatives(sym, pts)
        assert g_err < 1e-6 and h_err < 1e-5

    def test_non_radial_evaluator(self):
        sym = SymbolSpec("aniso", 2.0, evaluator=lambda xi: xi[..., 0] ** 2 + 2 * xi[..., 1] ** 2)
        grad = sym.gradient(np.array([1.0, 1.0]))
        np.testing.assert_allclose(grad, [2.0, 4.0], rtol=1e-6)
        np.testing.assert_allclose(sym.hessian(np.array([0.3, -0.2])), np.diag([2.0, 4.0]), atol=1e-4)

    def test_laplacian_hessian_determinant(self):
        # Hessian of 4 pi^2 |xi|^2 is 8 pi^2 times the identity
        h = laplacian().hessian(np.array([0.3, -1.2, 2.0]))
        assert np.linalg.det(h) == pytest.approx((8 * math.pi**2) ** 3, rel=1e-12)

    @given(st.floats(0.1, 10.0))
    def test_radial_gradient_is_radial(self, r):
        sym = bilaplacian_mixed(1)
        xi = np.array([r, 0.0, 0.0])
        grad = sym.gradient(xi)
        assert grad[1] == 0 and grad[2] == 0


class TestThresholds:
    def test_known_thresholds(self):
        assert s_min(2, 3) == pytest.approx(1 / 6)
        assert s_min(2, 4) == pytest.approx(1 / 3)

    def test_critical(self):
        assert s_crit(2, 3) == 0.5
        with pytest.raises(ValueError):
            s_crit(4, 4)

    def test_order_four_branch_switch(self):
        # sigma = 4 sits on the first branch exactly while d <= 10
        for d in range(5, 11):
            assert s_min(4, d) == pytest.approx((d - 4) / 6)
        for d in range(11, 16):
            assert s_min(4, d) == pytest.approx((d - 4) / 2 * (d - 7) / (d - 1))
        assert (10 + 2) / 3 == 4

    @pytest.mark.parametrize("d", range(4, 21))
    def test_branches_agree_at_switch(self, d):
        sigma = (d + 2) / 3
        crit = (d - sigma) / 2
        assert crit / 3 == pytest.approx(crit * (d + 1 - 2 * sigma) / (d - 1), rel=1e-12)
        lo, hi = s_min(sigma - 1e-9, d), s_min(sigma + 1e-9, d)
        assert lo == pytest.approx(hi, abs=1e-7)


class TestAudit:
    def test_laplacian_exponents(self):
        g = make_grid(3, 64, 1.0)
        rep = audit_symbol(laplacian(), g, (2.0, 25.0), n_shells=6, samples_per_shell=16)
        assert rep.exponents["value"] == pytest.approx(2.0, abs=1e-6)
        assert rep.exponents["grad_lower"] == pytest.approx(1.0, abs=1e-6)
        assert rep.exponents["det_hessian"] == pytest.approx(0.0, abs=1e-6)
        c, C = rep.constants["det_hessian"]
        assert c == pytest.approx((8 * math.pi**2) ** 3, rel=1e-6)
        assert all(not v for v in rep.violations.values())

    def test_bilaplacian_exponents(self):
        g = make_grid(5, 16, 0.25)
        rep = audit_symbol(bilaplacian_mixed(1), g, (3.0, 25.0), n_shells=6, samples_per_shell=16)
        t = rep.targets
        assert t["value"] == 4 and t["det_hessian"] == 10
        for q in ("value", "grad_lower", "det_hessian"):
            assert rep.exponents[q] == pytest.approx(t[q], abs=0.25)

    def test_range_checked(self):
        g = make_grid(2, 16, 1.0)
        with pytest.raises(ValueError):
            audit_symbol(bilaplacian_mixed(1), g, (1.0, 5.0))
        with pytest.raises(ValueError):
            audit_symbol(laplacian(), g, (2.0, 100.0))

    def test_csv_rows(self):
        g = make_grid(2, 32, 1.0)
        rep = audit_symbol(laplacian(), g, (1.5, 12.0), n_shells=4, samples_per_shell=8)
        rows = list(rep.csv_rows())
        assert {r[0] for r in rows} >= {"value", "grad_lower", "det_hessian"}
