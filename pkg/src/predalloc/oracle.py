"""Independent ground truth for the allocation and ranking results.

``brute_force_over_time`` enumerates every split of a discretized budget over
the horizon and spends each step's share greedily from the highest y down; it
shares only the posterior tables with the solver, not its schedule space.
``bayes_ranking_check`` enumerates every deterministic pairwise rule on y.
``mc_policy_value`` replays a schedule on a finite population.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .agents import mc_simulate, sample_pool
from .dynamics import PosteriorTables
from .model import DomainError, GridPrior, ObservationModel, Prior, Utility, as_budget
from .over_time import PolicySchedule

MAX_T = 6
MAX_UNITS = 200


@dataclass(frozen=True)
class OracleConfig:
    budget_units: int = 200
    T: int = 4
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.budget_units <= MAX_UNITS):
            raise DomainError(f"budget_units must be in [1, {MAX_UNITS}], got {self.budget_units}")
        if not (1 <= self.T <= MAX_T):
            raise DomainError(f"oracle horizon capped at T <= {MAX_T}, got {self.T}")


@dataclass
class OracleResult:
    utility_per_capita: float
    split: tuple[float, ...]  # budget fraction spent at each t
    n_rollouts: int


def compositions(n: int, parts: int) -> np.ndarray:
    """All non-negative integer vectors of length ``parts`` summing to ``n``."""
    if parts == 1:
        return np.array([[n]], dtype=np.int64)
    bars = np.array(list(itertools.combinations(range(n + parts - 1), parts - 1)), dtype=np.int64)
    bars = bars.reshape(-1, parts - 1)
    edges = np.concatenate([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), n + parts - 1)], axis=1)
    return np.diff(edges, axis=1) - 1


def greedy_rollout(tables: PosteriorTables, U: np.ndarray, spend: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Utility and spent mass of rollouts that spend ``spend[:, t-1]`` at t,
    highest y first. Budget that finds nobody to treat is lost.
    """
    T = tables.T
    M = spend.shape[0]
    S = np.zeros((M, T + 2))
    S[:, :2] = tables.n1
    util = np.zeros(M)
    spent = np.zeros(M)
    for t in range(1, T + 1):
        # mass strictly above each k
        above = np.cumsum(S[:, ::-1], axis=1)[:, ::-1] - S
        take = np.clip(spend[:, t - 1:t] - above, 0.0, S)
        util += take @ U[t]
        spent += take.sum(axis=1)
        if t == T:
            break
        Sbar = S - take
        nxt = Sbar * tables.fail_stay[t]
        nxt[:, 1:] += Sbar[:, :-1] * tables.fail_pos[t, :-1]
        S = nxt
    return util, spent


def brute_force_over_time(prior: Prior, model: ObservationModel, utility: Utility, budget,
                          cfg: OracleConfig, convention: str = "appendix_c",
                          chunk: int = 200_000) -> OracleResult:
    """Best rollout over all compositions of ``cfg.budget_units`` across T steps."""
    b = as_budget(budget).fraction
    if cfg.T != utility.horizon:
        raise DomainError(f"oracle T={cfg.T} does not match utility horizon {utility.horizon}")
    tables = PosteriorTables(prior, model, cfg.T, convention)
    U = tables.utility(utility)
    comps = compositions(cfg.budget_units, cfg.T)
    unit = b / cfg.budget_units
    best_u, best_i = -math.inf, -1
    for lo in range(0, len(comps), chunk):
        u, _ = greedy_rollout(tables, U, comps[lo:lo + chunk] * unit)
        i = int(np.argmax(u))
        if u[i] > best_u + 1e-15:
            best_u, best_i = float(u[i]), lo + i
    return OracleResult(best_u, tuple(float(x) for x in comps[best_i] * unit), len(comps))


def mc_policy_value(policy: PolicySchedule, prior: Prior, model: ObservationModel, utility: Utility,
                    N: int, reps: int, seed: int, budget_fraction: float,
                    convention: str = "appendix_c") -> tuple[float, float]:
    """Mean and standard error of realized per-capita utility over ``reps``
    independent finite populations run under ``policy``."""
    if N * budget_fraction < 1:
        raise DomainError("N * b must be at least 1")
    if reps < 1:
        raise DomainError("need at least one replication")
    vals = np.empty(reps)
    for r in range(reps):
        pool = sample_pool(prior, N, seed + r)
        rec = mc_simulate(pool, model, policy, utility.horizon, utility, budget_fraction, convention)
        vals[r] = rec.utility_per_capita()
    se = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return float(vals.mean()), se


@dataclass
class RankingRuleReport:
    t: int
    n_rules: int
    min_risk: float
    y_rule_risk: tuple[float, float]  # ties ranked +1 / -1
    passed: bool


def ranking_rule_report(prior_grid: GridPrior, model: ObservationModel, t: int,
                        convention: str = "appendix_c", rtol: float = 1e-12) -> RankingRuleReport:
    """Exact pairwise risk of every deterministic rule delta(y_i, y_j) in {-1, +1}.

    delta = +1 claims p_j >= p_i. A rule loses on a pair when
    delta (p_j - p_i) < 0; risks are normalized by the mass of unequal pairs.
    """
    from .ranking import _binom_tables, population_nodes

    if not isinstance(prior_grid, GridPrior):
        raise DomainError("the ranking check needs a grid prior")
    if len(prior_grid.points) < 64:
        raise DomainError("the ranking check needs a grid of at least 64 cells")
    if t not in (1, 2):
        raise DomainError("combinatorially capped: t must be 1 or 2")
    p, w, _ = population_nodes(prior_grid, t, convention)
    pmf, _ = _binom_tables(model, p, t)
    up = (p[None, :] > p[:, None]).astype(float)  # [i, j] = 1{p_j > p_i}
    # lose_if_minus[a, b]: mass of (i, j) with y_i = a, y_j = b and p_j > p_i
    wp = pmf * w[:, None]
    lose_if_minus = wp.T @ up @ wp
    lose_if_plus = wp.T @ up.T @ wp
    norm = float(w @ up @ w) * 2.0
    m = (t + 1) ** 2
    rules = ((np.arange(2**m)[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)  # True = +1
    risks = (np.where(rules, lose_if_plus.ravel()[None, :], lose_if_minus.ravel()[None, :])).sum(axis=1) / norm
    a, b = np.meshgrid(np.arange(t + 1), np.arange(t + 1), indexing="ij")
    y_plus = ((b > a) | (a == b)).ravel()
    y_minus = (b > a).ravel()
    to_index = lambda r: int(np.sum(r.astype(np.int64) << np.arange(m)))
    r_plus, r_minus = float(risks[to_index(y_plus)]), float(risks[to_index(y_minus)])
    best = float(risks.min())
    ok = max(r_plus, r_minus) <= best * (1.0 + rtol) + 1e-15
    return RankingRuleReport(t, int(2**m), best, (r_plus, r_minus), bool(ok))


def bayes_ranking_check(prior_grid: GridPrior, model: ObservationModel, t: int,
                        convention: str = "appendix_c") -> bool:
    """True iff ranking by y (either tie convention) has minimal exact risk
    among all 2^((t+1)^2) deterministic pairwise rules."""
    return ranking_rule_report(prior_grid, model, t, convention).passed
