"""Brute-force and Monte Carlo oracles against the solver."""

import math

import numpy as np
import pytest

from predalloc.model import BetaPrior, DomainError, GridPrior, ObservationModel, Utility
from predalloc.one_time import best_one_time
from predalloc.oracle import (
    OracleConfig,
    brute_force_over_time,
    compositions,
    mc_policy_value,
)
from predalloc.over_time import PolicySchedule, solve_optimal

ID = ObservationModel(1.0)


class TestCompositions:
    @pytest.mark.parametrize("n,parts", [(5, 1), (5, 3), (10, 4), (0, 3)])
    def test_count_and_sum(self, n, parts):
        c = compositions(n, parts)
        assert len(c) == math.comb(n + parts - 1, parts - 1)
        assert np.all(c.sum(axis=1) == n) and np.all(c >= 0)
        assert len({tuple(r) for r in c}) == len(c)


class TestBruteForce:
    def test_single_unit_is_one_time(self):
        pr, u = BetaPrior(0.2, 1.0), Utility("fully_effective", 4)
        res = brute_force_over_time(pr, ID, u, 0.1, OracleConfig(1, 4))
        _, one = best_one_time(pr, ID, u, 0.1)
        assert res.utility_per_capita == pytest.approx(max(r.welfare_per_capita for r in one), rel=1e-12)

    def test_uniform_t3(self):
        u = Utility("fully_effective", 3)
        res = brute_force_over_time(BetaPrior(1.0, 1.0), ID, u, 0.2, OracleConfig(100, 3))
        _, out = solve_optimal(BetaPrior(1.0, 1.0), ID, u, 0.2)
        assert out.utility_per_capita - 2e-3 <= res.utility_per_capita <= out.utility_per_capita + 1e-9

    def test_full_budget_first_step(self):
        res = brute_force_over_time(BetaPrior(0.2, 1.0), ID, Utility("fully_effective", 3), 1.0, OracleConfig(20, 3))
        assert res.split[0] == pytest.approx(1.0)

    def test_refinement_narrows_gap(self):
        pr, u, b = BetaPrior(0.2, 1.0), Utility("fully_effective", 4), 0.3
        _, out = solve_optimal(pr, ID, u, b)
        gaps = [out.utility_per_capita - brute_force_over_time(pr, ID, u, b, OracleConfig(n, 4)).utility_per_capita
                for n in (50, 100, 200)]
        assert np.all(np.array(gaps) >= -1e-9)
        assert gaps[0] > 0  # the optimum splits the budget off the coarse grid
        assert gaps[0] >= gaps[1] - 1e-12 and gaps[1] >= gaps[2] - 1e-12

    @pytest.mark.parametrize("u", [Utility("risky", 3, 0.7), Utility("partial", 3, 0.4),
                                   Utility("risk_reduction", 3, 2.0)], ids=lambda u: u.kind)
    def test_never_beats_solver(self, u):
        for pr in (BetaPrior(1.0, 1.0), BetaPrior(0.028, 0.35)):
            for b in (0.1, 0.3):
                res = brute_force_over_time(pr, ID, u, b, OracleConfig(100, 3))
                _, out = solve_optimal(pr, ID, u, b)
                assert res.utility_per_capita <= out.utility_per_capita + 1e-9

    def test_caps(self):
        with pytest.raises(DomainError):
            OracleConfig(200, 7)
        with pytest.raises(DomainError):
            OracleConfig(201, 3)
        with pytest.raises(DomainError):
            brute_force_over_time(BetaPrior(1.0, 1.0), ID, Utility("fully_effective", 3), 0.1, OracleConfig(10, 4))


class TestMonteCarloValue:
    def test_zero_risk(self):
        sched = PolicySchedule(1, (0, 1, 2), 0.0)
        v, _ = mc_policy_value(sched, GridPrior.point(0.0), ID, Utility("fully_effective", 3), 1000, 3, 1, 0.2)
        assert v == 0.0

    def test_matches_continuum(self):
        pr, u, b = BetaPrior(0.2, 1.0), Utility("fully_effective", 4), 0.3
        sched, out = solve_optimal(pr, ID, u, b)
        v, se = mc_policy_value(sched, pr, ID, u, 100_000, 20, 0, b)
        assert abs(v - out.utility_per_capita) < 3 * se

    def test_matches_continuum_section_5_3(self):
        pr, u, b = BetaPrior(0.028, 0.35), Utility("fully_effective", 5), 0.1
        sched, out = solve_optimal(pr, ID, u, b, convention="section_5_3")
        v, se = mc_policy_value(sched, pr, ID, u, 100_000, 12, 50, b, "section_5_3")
        assert abs(v - out.utility_per_capita) < 3 * se

    def test_stderr_scaling(self):
        pr, u, b = BetaPrior(0.2, 1.0), Utility("fully_effective", 3), 0.2
        sched, _ = solve_optimal(pr, ID, u, b)
        _, se1 = mc_policy_value(sched, pr, ID, u, 5_000, 30, 0, b)
        _, se4 = mc_policy_value(sched, pr, ID, u, 20_000, 30, 1000, b)
        assert se4 == pytest.approx(se1 / 2, rel=0.5)

    def test_needs_budget_unit(self):
        with pytest.raises(DomainError):
            mc_policy_value(PolicySchedule(1, (0,)), BetaPrior(1.0, 1.0), ID, Utility("fully_effective", 1),
                            10, 2, 0, 0.01)
