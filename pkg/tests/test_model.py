"""Priors, observation map, utilities and moment inversion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predalloc.model import (
    BetaPrior,
    BudgetSpec,
    DomainError,
    GridPrior,
    ObservationModel,
    Utility,
    beta_expect_legendre,
    beta_moments,
    check_g_decaying,
    decaying_constants,
    estimate_beta_prior,
    g_decaying_bounds,
    prior_from_dict,
)

KINDS = [
    Utility("fully_effective", 8),
    Utility("risky", 8, 0.8),
    Utility("risky", 8, 0.8, shifted=False),
    Utility("partial", 8, 0.6),
    Utility("risk_reduction", 8, 2.0),
]


class TestPriors:
    def test_beta_validation(self):
        with pytest.raises(DomainError):
            BetaPrior(0.0, 1.0)
        with pytest.raises(DomainError):
            BetaPrior(1.0, -2.0)

    def test_grid_validation(self):
        with pytest.raises(DomainError):
            GridPrior((0.2, 0.1), (0.5, 0.5))
        with pytest.raises(DomainError):
            GridPrior((0.1, 0.2), (0.5, 0.4))
        with pytest.raises(DomainError):
            GridPrior((0.1, 1.2), (0.5, 0.5))

    def test_beta_moments_match_scipy(self):
        pr = BetaPrior(0.3, 2.5)
        p, w = pr.nodes()
        assert w @ p == pytest.approx(pr.mean(), rel=1e-12)
        assert w @ (p - pr.mean()) ** 2 == pytest.approx(pr.var(), rel=1e-10)

    def test_from_beta_grid_is_valid(self):
        for a, b, n in [(1.0, 20.0, 1500), (0.028, 0.35, 512), (2.0, 2.0, 64)]:
            g = GridPrior.from_beta(a, b, n)
            assert np.all(np.diff(g.points) > 0)
            assert g.mean() == pytest.approx(a / (a + b), rel=1e-9)

    def test_dict_round_trip(self):
        for pr in (BetaPrior(0.2, 1.0), GridPrior.uniform(8)):
            assert prior_from_dict(pr.to_dict()) == pr

    def test_jacobi_matches_legendre_oracle(self):
        # singular endpoint: a < 1
        for a, b in [(0.028, 0.35), (0.2, 1.0), (3.0, 4.0)]:
            f = lambda p: 1.0 - (1.0 - p) ** 5
            p, w = BetaPrior(a, b).nodes()
            assert w @ f(p) == pytest.approx(beta_expect_legendre(f, a, b), rel=1e-8)


class TestObservationModel:
    def test_values(self):
        assert ObservationModel(1.0).ptilde(0.5) == 0.5
        assert ObservationModel(2.0).ptilde(0.5) == pytest.approx(0.75)
        for g in (1.0, 1.7, 4.0):
            m = ObservationModel(g)
            assert m.ptilde(0.0) == 0.0
            assert m.ptilde(1.0) == 1.0

    def test_gamma_below_one_rejected(self):
        with pytest.raises(DomainError):
            ObservationModel(0.9)

    @pytest.mark.parametrize("gamma", [1.0, 1.5, 2.0, 5.0])
    def test_monotone_concave(self, gamma):
        p = np.linspace(0.0, 1.0, 1001)
        y = ObservationModel(gamma).ptilde(p)
        assert np.all(np.diff(y) >= 0)
        assert np.all(np.diff(y, 2) <= 1e-9)

    def test_log_forms(self):
        m = ObservationModel(2.5)
        p = np.array([1e-12, 0.3, 0.9])
        np.testing.assert_allclose(np.exp(m.log_one_minus_ptilde(p)), 1.0 - m.ptilde(p), rtol=1e-12)
        np.testing.assert_allclose(np.exp(m.log_ptilde(p)), m.ptilde(p), rtol=1e-9)


class TestUtility:
    def test_boundary_values(self):
        u = Utility("fully_effective", 5)
        assert u(5, 0.3) == 0.0
        assert u(4, 0.3) == pytest.approx(0.3)
        assert Utility("risk_reduction", 5, 2.0)(2, 0.0) == 0.0

    def test_invalid(self):
        with pytest.raises(DomainError):
            Utility("magic", 3)
        with pytest.raises(DomainError):
            Utility("partial", 3, 1.5)
        with pytest.raises(DomainError):
            Utility("fully_effective", 3)(4, 0.1)

    def test_constants(self):
        c = decaying_constants(Utility("fully_effective", 5))
        assert (c.lambda1, c.lambda2) == (1.0, 1.0)
        c = Utility("risky", 5, 0.8, shifted=False).decaying_constants()
        assert (c.lambda1, c.lambda2) == (0.8, 0.8)
        c = Utility("risk_reduction", 6, 2.0).decaying_constants(3)
        assert c.lambda1 == pytest.approx(0.125)
        assert c.lambda2 == 1.0
        with pytest.raises(DomainError):
            Utility("risk_reduction", 6, 2.0).decaying_constants()

    def test_normalized_risky_is_not_c_c(self):
        # c (1 - (1-p)^n) needs lambda2 = 1: at p = 0 the second inequality reads n c <= (lambda2) c n
        u = Utility("risky", 5, 0.8)
        c = u.decaying_constants()
        assert (c.lambda1, c.lambda2) == (0.8, 1.0)
        p, t = 0.05, 2
        lhs = u.dp(t, p) * (1 - p)
        assert lhs > (0.8 - u(t, p)) * u.slope_at_zero(t)

    @pytest.mark.parametrize("u", KINDS, ids=lambda u: f"{u.kind}-{u.param}-{u.shifted}")
    def test_decaying_inequalities(self, u):
        p = np.linspace(0.0, 1.0, 200)
        h = 1.0 / 2048
        for t in range(1, u.horizon):
            c = u.decaying_constants(t)
            first = u(t, p) - (1 - p) * u(t + 1, p)
            assert np.all(first >= c.lambda1 * p - 1e-9)
            if c.lambda1_only:
                continue
            q = np.clip(p, h, 1 - h)
            d = (u(t, q + h) - u(t, q - h)) / (2 * h)
            np.testing.assert_allclose(d, u.dp(t, q), atol=1e-5)
            second = u.dp(t, p) * (1 - p) - (c.lambda2 - u(t, p)) * u.slope_at_zero(t)
            assert np.all(second <= 1e-9)

    @pytest.mark.parametrize("u", KINDS[:4], ids=lambda u: f"{u.kind}-{u.param}-{u.shifted}")
    def test_monotone_in_p_and_t(self, u):
        p = np.linspace(0.0, 1.0, 201)
        for t in range(1, u.horizon + 1):
            assert np.all(np.diff(u(t, p)) >= -1e-12)
            if t < u.horizon:
                assert np.all(u(t, p) >= u(t + 1, p) - 1e-12)


class TestGDecaying:
    @pytest.mark.parametrize("G", [0.0, 0.5, 1.0, 2.0, 5.0])
    def test_beta_one_family(self, G):
        assert check_g_decaying(BetaPrior(1.0, G + 1.0), G).ok
        assert check_g_decaying(BetaPrior(1.0, G + 1.0), G, method="fd", tol=1e-7).ok

    def test_uniform_and_increasing(self):
        assert check_g_decaying(BetaPrior(1.0, 1.0), 0.0).ok
        for G in (0.0, 3.0, 50.0):
            assert not check_g_decaying(BetaPrior(2.0, 2.0), G).ok

    def test_too_small_G_fails(self):
        assert not check_g_decaying(BetaPrior(1.0, 4.0), 2.0).ok

    def test_bounds(self):
        mu, var = g_decaying_bounds(0.0)
        assert mu == 0.5
        assert var(0.5) == pytest.approx(1.0 / 12.0)
        assert g_decaying_bounds(2.0)[0] == 0.25

    @pytest.mark.parametrize("G", [0.0, 1.0, 3.0])
    def test_bounds_hold_for_beta_one(self, G):
        pr = BetaPrior(1.0, G + 1.0)
        mu_lo, var_lo = g_decaying_bounds(G)
        # tight for Beta(1, G + 1); Beta(1, G + 1/2) is also G-decaying
        assert pr.mean() == pytest.approx(mu_lo, rel=1e-12)
        assert pr.var() == pytest.approx(var_lo(pr.mean()), rel=1e-10)
        looser = BetaPrior(1.0, G + 0.5)
        assert looser.mean() >= mu_lo
        assert looser.var() >= var_lo(looser.mean())


class TestMomentInversion:
    def test_nels_values(self):
        m0, m1 = beta_moments(0.028, 0.35)
        assert m0 == pytest.approx(0.074074, abs=1e-6)
        assert m1 == pytest.approx(0.055260, abs=1e-6)
        est = estimate_beta_prior(m0, m1)
        assert est.alpha == pytest.approx(0.028, abs=1e-10)
        assert est.beta == pytest.approx(0.35, abs=1e-10)
        assert round(est.mean(), 3) == 0.074

    def test_inconsistent(self):
        with pytest.raises(DomainError, match="moments inconsistent"):
            estimate_beta_prior(0.5, 0.5)
        with pytest.raises(DomainError):
            estimate_beta_prior(0.3, 0.05)  # m1 < m0^2

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
    def test_round_trip(self, a, b):
        est = estimate_beta_prior(*beta_moments(a, b))
        assert est.alpha == pytest.approx(a, abs=1e-12)
        assert est.beta == pytest.approx(b, abs=1e-12)


class TestBudget:
    def test_spec(self):
        assert BudgetSpec(0.1, 1000).units == pytest.approx(100.0)
        assert BudgetSpec(0.1).units is None
        with pytest.raises(DomainError):
            BudgetSpec(0.0)
        with pytest.raises(DomainError):
            BudgetSpec(1.5)
