"""Threshold schedules, the enumeration solver and its structure."""

import numpy as np
import pytest

from predalloc.dynamics import PosteriorTables
from predalloc.model import BetaPrior, DomainError, GridPrior, ObservationModel, Utility
from predalloc.over_time import (
    PolicySchedule,
    candidate_arrays,
    enumerate_schedules,
    evaluate_schedule,
    scan_candidates,
    solve_optimal,
    verify_structure,
)

ID = ObservationModel(1.0)
PRIORS = [BetaPrior(1.0, 1.0), BetaPrior(0.2, 1.0), BetaPrior(0.028, 0.35)]


class TestEnumeration:
    @pytest.mark.parametrize("T", [1, 2, 3, 5, 8])
    def test_count(self, T):
        assert sum(1 for _ in enumerate_schedules(T)) == 3 * T * 2 ** (T - 1)

    def test_t3_is_36(self):
        assert len(list(enumerate_schedules(3))) == 36

    def test_t1(self):
        assert list(enumerate_schedules(1)) == [(1, (0,)), (1, (1,)), (1, (2,))]

    @pytest.mark.parametrize("T", [3, 6])
    def test_pattern(self, T):
        that, Q = candidate_arrays(T)
        assert np.all(np.diff(Q, axis=1) >= 0)
        assert np.all(Q <= np.arange(2, T + 2))
        for th, q in zip(that, Q):
            assert verify_structure(PolicySchedule(int(th), tuple(int(x) for x in q)))

    def test_verify_examples(self):
        assert verify_structure(PolicySchedule(2, (0, 0, 2)))
        assert not verify_structure(PolicySchedule(3, (0, 2, 2)))
        assert not verify_structure(PolicySchedule(1, (0, 1, 1), 1.5))

    def test_bad_horizon(self):
        with pytest.raises(DomainError):
            candidate_arrays(0)


class TestEvaluate:
    def test_treat_nobody(self):
        u = Utility("fully_effective", 4)
        out = evaluate_schedule(BetaPrior(0.2, 1.0), ID, u, 1, (2, 3, 4, 5), 0.0)
        assert out.expenditure == 0.0 and out.utility_per_capita == 0.0

    def test_point_prior_hand_value(self):
        u = Utility("fully_effective", 2)
        out = evaluate_schedule(GridPrior.point(0.5), ID, u, 1, (1, 2), 0.0)
        assert out.expenditure == pytest.approx(0.5)
        assert out.utility_per_capita == pytest.approx(0.5 * u(1, 0.5))

    def test_invalid(self):
        u = Utility("fully_effective", 3)
        with pytest.raises(DomainError):
            evaluate_schedule(BetaPrior(1.0, 1.0), ID, u, 1, (1, 0, 1), 0.0)
        with pytest.raises(DomainError):
            evaluate_schedule(BetaPrior(1.0, 1.0), ID, u, 1, (0, 1), 0.0)
        with pytest.raises(DomainError):
            evaluate_schedule(BetaPrior(1.0, 1.0), ID, u, 1, (0, 1, 2), 1.2)

    @pytest.mark.parametrize("convention", ["appendix_c", "section_5_3"])
    def test_linear_in_rho(self, convention):
        u = Utility("fully_effective", 6)
        pr = BetaPrior(0.2, 1.0)
        tables = PosteriorTables(pr, ID, 6, convention)
        for th, q in list(enumerate_schedules(6))[::37]:
            pts = [evaluate_schedule(pr, ID, u, th, q, r, tables) for r in (0.0, 0.4, 1.0)]
            (e0, u0), (e1, u1), (e2, u2) = [(o.expenditure, o.utility_per_capita) for o in pts]
            cross = (e1 - e0) * (u2 - u0) - (e2 - e0) * (u1 - u0)
            assert abs(cross) < 1e-10
            assert e2 <= e0 + 1e-15

    def test_rho_endpoint_excludes_threshold_cohort(self):
        u = Utility("fully_effective", 3)
        pr = BetaPrior(1.0, 1.0)
        lo = evaluate_schedule(pr, ID, u, 1, (1, 2, 3), 0.0)
        hi = evaluate_schedule(pr, ID, u, 1, (1, 2, 3), 1.0)
        bumped = evaluate_schedule(pr, ID, u, 1, (2, 2, 3), 0.0)
        assert lo.treated[0] == pytest.approx(0.5)
        assert hi.expenditure == pytest.approx(bumped.expenditure)
        assert hi.utility_per_capita == pytest.approx(bumped.utility_per_capita)


class TestSolver:
    def test_full_budget_treats_all_at_first_step(self):
        for pr in PRIORS:
            u = Utility("fully_effective", 3)
            sched, out = solve_optimal(pr, ID, u, 1.0)
            assert sched.q[0] == 0
            assert out.treated[0] == pytest.approx(1.0)
            p, w = pr.nodes()
            assert out.utility_per_capita == pytest.approx(w @ u(1, p), rel=1e-9)

    @pytest.mark.parametrize("prior", PRIORS, ids=["uniform", "b02", "nels"])
    @pytest.mark.parametrize("b", [0.02, 0.1, 0.3, 0.7])
    def test_structure_and_budget(self, prior, b):
        u = Utility("fully_effective", 6)
        sched, out = solve_optimal(prior, ID, u, b)
        assert verify_structure(sched)
        assert np.all(np.diff(sched.q) >= 0)
        assert out.budget_exhausted
        assert out.expenditure == pytest.approx(b, abs=1e-9)

    @pytest.mark.parametrize("u", [Utility("fully_effective", 5), Utility("risky", 5, 0.6),
                                   Utility("partial", 5, 0.3), Utility("risk_reduction", 5, 2.0)],
                             ids=lambda u: u.kind)
    def test_dominates_every_feasible_candidate(self, u):
        pr = BetaPrior(0.2, 1.0)
        tables = PosteriorTables(pr, ID, 5)
        for b in (0.05, 0.25):
            _, out = solve_optimal(pr, ID, u, b, tables)
            scan = scan_candidates(tables, tables.utility(u), b)
            assert np.all(scan.utility[scan.feasible] <= out.utility_per_capita + 1e-12)
            # brute re-evaluation of every feasible candidate
            for i in np.flatnonzero(scan.feasible)[::7]:
                o = evaluate_schedule(pr, ID, u, int(scan.t_hat[i]), scan.Q[i], float(scan.rho[i]), tables)
                assert o.expenditure == pytest.approx(b, abs=1e-9)
                assert o.utility_per_capita <= out.utility_per_capita + 1e-12

    def test_underspend_flagged(self):
        # with a failure round before the first step the pool never reaches b = 1
        sched, out = solve_optimal(BetaPrior(1.0, 1.0), ID, Utility("fully_effective", 3), 1.0,
                                   convention="section_5_3")
        assert not out.budget_exhausted
        assert out.expenditure == pytest.approx(0.5)
        assert sched.q[0] == 0

    def test_horizon_one(self):
        sched, out = solve_optimal(BetaPrior(1.0, 1.0), ID, Utility("fully_effective", 1), 0.3)
        assert sched.t_hat == 1
        assert out.treated[0] == pytest.approx(0.3)

    def test_deterministic(self):
        u = Utility("fully_effective", 7)
        a = solve_optimal(BetaPrior(0.2, 1.0), ID, u, 0.1)
        b = solve_optimal(BetaPrior(0.2, 1.0), ID, u, 0.1)
        assert a[0] == b[0]
        assert a[1].utility_per_capita == b[1].utility_per_capita

    def test_trends(self):
        u = Utility("fully_effective", 10)
        times = [solve_optimal(BetaPrior(0.028, 0.35), ID, u, b, convention="section_5_3")[1]
                 .mean_treatment_time() for b in (0.05, 0.1, 0.2)]
        assert np.all(np.diff(times) <= 0)
        times = [solve_optimal(BetaPrior(a, 1.0), ID, u, 0.1, convention="section_5_3")[1]
                 .mean_treatment_time() for a in (0.1, 0.2, 0.4)]
        assert np.all(np.diff(times) <= 0)
