"""Keyed RNG and the finite-population simulator."""

import math

import numpy as np
import pytest

from predalloc.agents import (
    DRAW_OBS,
    KeyedRNG,
    OneTimePolicy,
    mc_simulate,
    sample_pool,
)
from predalloc.model import BetaPrior, DomainError, GridPrior, ObservationModel, Utility
from predalloc.over_time import PolicySchedule

ID = ObservationModel(1.0)


class TestKeyedRNG:
    def test_block_is_slice_of_stream(self):
        rng = KeyedRNG(7)
        full = rng.uniform(3, DRAW_OBS, 1000)
        for lo, hi in [(0, 10), (1, 2), (5, 999), (333, 334)]:
            np.testing.assert_array_equal(rng.block(3, DRAW_OBS, lo, hi), full[lo:hi])

    def test_chunk_invariance(self):
        a = KeyedRNG(7, chunk=1 << 20).uniform(2, 0, 10_007)
        b = KeyedRNG(7, chunk=97).uniform(2, 0, 10_007)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        rng = KeyedRNG(1)
        assert not np.array_equal(rng.uniform(1, 0, 50), rng.uniform(1, 1, 50))
        assert not np.array_equal(rng.uniform(1, 0, 50), rng.uniform(2, 0, 50))
        assert not np.array_equal(rng.uniform(1, 0, 50), KeyedRNG(2).uniform(1, 0, 50))

    def test_unit_interval(self):
        u = KeyedRNG(3).uniform(0, 0, 100_000)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert abs(u.mean() - 0.5) < 5 * math.sqrt(1 / 12 / 1e5)

    def test_seed_range(self):
        with pytest.raises(DomainError):
            KeyedRNG(-1)
        with pytest.raises(DomainError):
            KeyedRNG(1 << 64)


class TestSamplePool:
    def test_beta_mean(self):
        pool = sample_pool(BetaPrior(2.0, 5.0), 200_000, 4)
        sd = math.sqrt(BetaPrior(2.0, 5.0).var() / 200_000)
        assert abs(pool.p.mean() - 2.0 / 7.0) < 4 * sd

    def test_grid_atoms(self):
        g = GridPrior((0.2, 0.8), (0.25, 0.75))
        pool = sample_pool(g, 100_000, 5)
        assert set(np.unique(pool.p)) == {0.2, 0.8}
        assert abs((pool.p == 0.8).mean() - 0.75) < 4 * math.sqrt(0.25 * 0.75 / 1e5)

    def test_empty(self):
        with pytest.raises(DomainError):
            sample_pool(BetaPrior(1.0, 1.0), 0, 1)


class TestSimulate:
    def test_deterministic_and_chunk_free(self):
        pool = sample_pool(BetaPrior(0.5, 1.0), 30_000, 9)
        a = mc_simulate(pool, ID, None, 5)
        b = mc_simulate(pool, ID, None, 5, chunk=1000)
        c = mc_simulate(pool, ID, None, 5)
        for x, y in [(a, b), (a, c)]:
            np.testing.assert_array_equal(x.counts, y.counts)
            np.testing.assert_array_equal(x.y, y.y)

    def test_counts_are_consistent(self):
        pool = sample_pool(BetaPrior(0.5, 1.0), 20_000, 2)
        rec = mc_simulate(pool, ID, None, 6)
        for t in range(1, 6):
            assert rec.counts[t].sum() - rec.failures[t] == rec.counts[t + 1].sum()
        assert rec.counts[1].sum() == pool.n

    def test_section_5_3_fails_first(self):
        pool = sample_pool(BetaPrior(1.0, 1.0), 20_000, 2)
        rec = mc_simulate(pool, ID, None, 2, convention="section_5_3")
        assert rec.failures[0] > 0
        assert rec.counts[1].sum() == pool.n - rec.failures[0]

    def test_budget_cap(self):
        pool = sample_pool(BetaPrior(0.2, 1.0), 10_000, 3)
        u = Utility("fully_effective", 4)
        sched = PolicySchedule(1, (0, 0, 0, 0), 0.0)
        rec = mc_simulate(pool, ID, sched, 4, u, 0.123)
        assert rec.treated.sum() == 1230
        rec = mc_simulate(pool, ID, OneTimePolicy(2, 0.05), 4, u)
        assert rec.treated[2] == 500 and rec.treated.sum() == 500

    def test_treated_never_fail(self):
        pool = sample_pool(GridPrior.point(0.9), 5_000, 3)
        rec = mc_simulate(pool, ID, OneTimePolicy(1, 0.5), 5, Utility("fully_effective", 5))
        treated = rec.treat_time > 0
        assert rec.active[treated].all()
        assert treated.sum() == 2500

    def test_highest_y_first(self):
        pool = sample_pool(BetaPrior(0.5, 1.0), 20_000, 8)
        rec = mc_simulate(pool, ID, OneTimePolicy(3, 0.02), 3, Utility("fully_effective", 3))
        chosen = rec.treat_time == 3
        rest = rec.active & ~chosen
        assert rec.y[chosen].min() >= rec.y[rest].max()

    def test_policy_needs_budget(self):
        pool = sample_pool(BetaPrior(0.5, 1.0), 100, 8)
        with pytest.raises(DomainError):
            mc_simulate(pool, ID, PolicySchedule(1, (0, 1), 0.0), 2, Utility("fully_effective", 2))

    def test_zero_risk_population(self):
        pool = sample_pool(GridPrior.point(0.0), 1000, 1)
        rec = mc_simulate(pool, ID, OneTimePolicy(1, 0.5), 3, Utility("fully_effective", 3))
        assert rec.utility_per_capita() == 0.0
        assert rec.failures.sum() == 0
