"""One-time allocation: spend the whole budget at a single step t.

At t the planner treats active individuals in descending order of y^t until
the budget runs out. In the continuum the last cohort reached is treated
fractionally; its members are exchangeable, so each treated unit is worth U_k^t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import PosteriorTables, untreated_cohorts
from .model import (
    BetaPrior,
    DomainError,
    ObservationModel,
    Prior,
    Utility,
    as_budget,
)


@dataclass(frozen=True)
class OneTimeResult:
    t: int
    welfare_per_capita: float
    threshold_k: int
    partial_fraction: float
    treated_mass: float
    active_mass: float


def _fill(masses: np.ndarray, b: float) -> tuple[np.ndarray, int, float]:
    """Treated mass per cohort when b is spent from the top cohort down."""
    treated = np.zeros_like(masses)
    left = b
    thr, frac = 0, 1.0
    for k in range(len(masses) - 1, -1, -1):
        if masses[k] <= 0:
            continue
        take = min(masses[k], left)
        treated[k] = take
        left -= take
        thr, frac = k, take / masses[k]
        if left <= 0:
            break
    return treated, thr, frac


def one_time_welfare(prior: Prior, model: ObservationModel, utility: Utility, budget, t: int,
                     tables: PosteriorTables | None = None,
                     convention: str = "appendix_c") -> OneTimeResult:
    """Per-capita welfare W^t / N of spending the budget at t."""
    b = as_budget(budget).fraction
    if tables is None:
        tables = PosteriorTables(prior, model, utility.horizon, convention)
    if not (1 <= t <= tables.T):
        raise DomainError(f"t={t} outside [1, {tables.T}]")
    masses = untreated_cohorts(tables)[t - 1].masses
    U = tables.utility(utility)
    treated, thr, frac = _fill(masses, b)
    return OneTimeResult(t, float(treated @ U[t, : t + 1]), thr, float(frac),
                         float(treated.sum()), float(masses.sum()))


def best_one_time(prior: Prior, model: ObservationModel, utility: Utility, budget,
                  convention: str = "appendix_c", tol: float = 1e-12) -> tuple[int, list[OneTimeResult]]:
    """Welfare for every t and the earliest argmax."""
    tables = PosteriorTables(prior, model, utility.horizon, convention)
    res = [one_time_welfare(prior, model, utility, budget, t, tables) for t in range(1, tables.T + 1)]
    w = np.array([r.welfare_per_capita for r in res])
    t_opt = int(np.flatnonzero(w >= w.max() - tol)[0]) + 1
    return t_opt, res


def _check_budget_open(b: float) -> None:
    if not (0.0 < b < 1.0):
        raise DomainError(f"budget fraction must be in (0, 1), got {b}")


def t_star_fully_effective(T: int, G: float, gamma: float, budget) -> float:
    """Time after which waiting cannot help, for fully effective treatment.

    May exceed T, in which case the bound is vacuous.
    """
    if not gamma > 1:
        raise DomainError("bound requires γ > 1")
    if G < 0:
        raise DomainError("G must be non-negative")
    b = as_budget(budget).fraction
    _check_budget_open(b)
    return T / 2.0 + (G / 4.0 + (gamma + 1.0 / gamma) / 4.0 + 1.0) * ((gamma + 1.0) * math.log(1.0 / b) + 1.0)


def l_t_upper_bound(gamma: float, budget) -> float:
    """Upper bound (gamma + 1) ln(1/b) on the lowest y that gets treated."""
    b = as_budget(budget).fraction
    return (gamma + 1.0) * math.log(1.0 / b)


@dataclass(frozen=True)
class DeferralCondition:
    warmup_t_star: float
    condition_holds: bool
    lhs: float
    rhs: float
    case: str


def general_deferral_condition(t: int, T: int, gamma: float, G: float, utility: Utility,
                               budget) -> DeferralCondition:
    """Necessary condition for welfare to improve by waiting past t.

    ``condition_holds=False`` means deferral beyond t is excluded; True only
    means it is not excluded.
    """
    if not gamma > 1:
        raise DomainError("bound requires γ > 1")
    if utility.horizon != T:
        raise DomainError("utility horizon does not match T")
    if not (1 <= t < T):
        raise DomainError(f"t must be in [1, {T - 1}]")
    b = as_budget(budget).fraction
    ts = l_t_upper_bound(gamma, b)
    lhs = utility.slope_at_zero(t + 1)
    if t < ts:
        return DeferralCondition(ts, True, lhs, -math.inf, "warmup")
    c = utility.decaying_constants(t)
    if not c.lambda1_only and c.lambda1 >= c.lambda2:
        C = 2.0 + gamma + 1.0 / gamma + G
        rhs = (c.lambda1 / c.lambda2) * (t - ts) / (1.0 + C * (ts + 1.0) / (2.0 * t - ts + 1.0))
        case = "lambda1_lambda2"
    else:
        rhs = c.lambda1 * (t - ts) / (ts + 1.0)
        case = "lambda1"
    return DeferralCondition(ts, bool(lhs >= rhs), float(lhs), float(rhs), case)


def appendix_c_sign(G: float, T: int) -> int:
    """sign((G+1)(T-4) - 6): sign of U_2^2 - U_1^1 for a Beta(1, G+1) prior,
    gamma = 1, fully effective treatment."""
    if T < 2 or G < 0:
        raise DomainError("requires T >= 2 and G >= 0")
    v = (G + 1.0) * (T - 4.0) - 6.0
    return int(np.sign(v)) if abs(v) > 1e-12 else 0


def appendix_c_gap(G: float, T: int, convention: str = "appendix_c") -> float:
    """U_2^2 - U_1^1 by quadrature for the Beta(1, G+1), gamma = 1 instance."""
    if T < 2:
        raise DomainError("requires T >= 2")
    tables = PosteriorTables(BetaPrior(1.0, G + 1.0), ObservationModel(1.0), T, convention)
    U = tables.utility(Utility("fully_effective", T))
    return float(U[2, 2] - U[1, 1])
