"""Optimal over-time allocation in the continuum limit.

An optimal schedule is a threshold rule: at each t treat every active
untreated individual with y^t >= q(t), except at one step t_hat where a
fraction rho of the threshold cohort y = q(t_hat) is left untreated. Between
steps q grows by 0 or 1, and by 1 or 2 right after t_hat. All such (t_hat, q)
candidates are enumerated; for each, rho is pinned by the budget because
spending and utility are both linear in rho.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .dynamics import CohortTable, PosteriorTables, Trajectory, propagate, validate_q
from .model import DomainError, ObservationModel, Prior, Utility, as_budget

RHO_TOL = 1e-12
TIE_TOL = 1e-12


@dataclass(frozen=True)
class PolicySchedule:
    t_hat: int
    q: tuple[int, ...]
    rho: float = 0.0

    @property
    def T(self) -> int:
        return len(self.q)

    def to_dict(self) -> dict:
        return {"t_hat": self.t_hat, "q": list(self.q), "rho": self.rho}


@dataclass
class ScheduleOutcome:
    expenditure: float
    utility_per_capita: float
    treated: np.ndarray  # treated mass per t = 1..T
    cohort_trace: list[CohortTable] = field(default_factory=list)
    budget_exhausted: bool = True

    def mean_treatment_time(self) -> float:
        """Budget-weighted mean treatment time."""
        tot = self.treated.sum()
        if tot <= 0:
            return float("nan")
        return float(np.arange(1, len(self.treated) + 1) @ self.treated / tot)


def verify_structure(schedule: PolicySchedule) -> bool:
    """Check the threshold-schedule invariants."""
    q = np.asarray(schedule.q)
    T = len(q)
    if T == 0 or not (1 <= schedule.t_hat <= T) or not (0.0 <= schedule.rho <= 1.0):
        return False
    if q[0] not in (0, 1, 2):
        return False
    if np.any(q < 0) or np.any(q > np.arange(2, T + 2)):
        return False
    for t in range(1, T):
        inc = q[t] - q[t - 1]
        allowed = (1, 2) if t == schedule.t_hat else (0, 1)
        if inc not in allowed:
            return False
    return True


def _clamp(q: np.ndarray) -> np.ndarray:
    T = q.shape[-1]
    return np.minimum(q, np.arange(2, T + 2))


def candidate_arrays(T: int) -> tuple[np.ndarray, np.ndarray]:
    """All (t_hat, q) candidates as arrays, in tie-break order.

    Returns ``t_hat`` of shape (M,) and ``Q`` of shape (M, T) with
    M = 3 T 2^(T-1). Thresholds above t+1 are clamped to t+1.
    """
    if T < 1:
        raise DomainError("horizon must be >= 1")
    bits = np.array(list(itertools.product((0, 1), repeat=T - 1)), dtype=np.int64).reshape(2 ** (T - 1), T - 1)
    nb = bits.shape[0]
    that_list, q_list = [], []
    for t_hat in range(1, T + 1):
        inc = bits.copy()
        if t_hat <= T - 1:
            inc[:, t_hat - 1] += 1
        for q1 in (0, 1, 2):
            q = np.empty((nb, T), dtype=np.int64)
            q[:, 0] = q1
            q[:, 1:] = q1 + np.cumsum(inc, axis=1)
            q_list.append(_clamp(q))
            that_list.append(np.full(nb, t_hat))
    return np.concatenate(that_list), np.concatenate(q_list)


def enumerate_schedules(T: int) -> Iterator[tuple[int, tuple[int, ...]]]:
    """Yield every (t_hat, q) candidate; exactly 3 T 2^(T-1) of them."""
    that, Q = candidate_arrays(T)
    for th, q in zip(that, Q):
        yield int(th), tuple(int(x) for x in q)


def _bumped(that: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Q with the t_hat threshold raised by one (the rho = 1 endpoint)."""
    Q2 = Q.copy()
    rows = np.arange(len(Q))
    Q2[rows, that - 1] += 1
    return _clamp(Q2)


def _init_state(tables: PosteriorTables) -> np.ndarray:
    s0 = np.zeros(tables.T + 2)
    s0[:2] = tables.n1
    return s0


def _endpoints(tables: PosteriorTables, U: np.ndarray, that: np.ndarray, Q: np.ndarray,
               keep_states: bool = False) -> tuple[Trajectory, Trajectory]:
    s0 = _init_state(tables)
    lo = propagate(tables, 1, s0, Q, U, keep_states)
    hi = propagate(tables, 1, s0, _bumped(that, Q), U, keep_states)
    return lo, hi


def _build_tables(prior, model, utility, tables, convention) -> PosteriorTables:
    if tables is None:
        return PosteriorTables(prior, model, utility.horizon, convention)
    if tables.T != utility.horizon:
        raise DomainError("tables horizon does not match utility horizon")
    return tables


def evaluate_schedule(prior: Prior, model: ObservationModel, utility: Utility, t_hat: int,
                      q: Sequence[int], rho: float, tables: PosteriorTables | None = None,
                      convention: str = "appendix_c") -> ScheduleOutcome:
    """Expenditure, utility and cohort trace of a schedule.

    Interpolates linearly between rho = 0 (threshold cohort at t_hat fully
    treated) and rho = 1 (left entirely untreated).
    """
    tables = _build_tables(prior, model, utility, tables, convention)
    T = tables.T
    q = validate_q(np.asarray(q, dtype=np.int64), T)
    if not (1 <= t_hat <= T):
        raise DomainError(f"t_hat must be in [1, {T}]")
    if not (0.0 <= rho <= 1.0):
        raise DomainError(f"rho must be in [0, 1], got {rho}")
    U = tables.utility(utility)
    lo, hi = _endpoints(tables, U, np.array([t_hat]), q[None, :], keep_states=True)
    mix = lambda a, b: (1.0 - rho) * a + rho * b
    treated = mix(lo.treated[0, 1:], hi.treated[0, 1:])
    states = mix(lo.states[0], hi.states[0])
    trace = [CohortTable(t, states[t, : t + 1]) for t in range(1, T + 1)]
    return ScheduleOutcome(
        expenditure=float(treated.sum()),
        utility_per_capita=float(mix(lo.utility[0].sum(), hi.utility[0].sum())),
        treated=treated,
        cohort_trace=trace,
    )


@dataclass
class CandidateScan:
    """Per-candidate quantities from a full scan."""

    t_hat: np.ndarray
    Q: np.ndarray
    e_max: np.ndarray
    delta_e: np.ndarray
    rho: np.ndarray
    feasible: np.ndarray
    utility: np.ndarray


def scan_candidates(tables: PosteriorTables, U: np.ndarray, b: float) -> CandidateScan:
    that, Q = candidate_arrays(tables.T)
    lo, hi = _endpoints(tables, U, that, Q)
    e_max = lo.treated.sum(axis=1)
    e_min = hi.treated.sum(axis=1)
    d_e = e_max - e_min
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(d_e > 0, (e_max - b) / d_e, 0.0)
    flat = d_e <= 0
    feasible = np.where(flat, np.abs(e_max - b) <= RHO_TOL,
                        (rho >= -RHO_TOL) & (rho <= 1.0 + RHO_TOL))
    rho = np.clip(np.where(flat, 0.0, rho), 0.0, 1.0)
    util = (1.0 - rho) * lo.utility.sum(axis=1) + rho * hi.utility.sum(axis=1)
    return CandidateScan(that, Q, e_max, d_e, rho, feasible, util)


def solve_optimal(prior: Prior, model: ObservationModel, utility: Utility, budget,
                  tables: PosteriorTables | None = None,
                  convention: str = "appendix_c") -> tuple[PolicySchedule, ScheduleOutcome]:
    """Best threshold schedule spending exactly the budget.

    Ties within 1e-12 in utility go to the earliest candidate in enumeration
    order (smaller t_hat, then lexicographically smaller q). If no schedule can
    spend the whole budget, the largest-spending schedule is returned with
    ``budget_exhausted=False``.
    """
    b = as_budget(budget).fraction
    tables = _build_tables(prior, model, utility, tables, convention)
    U = tables.utility(utility)
    scan = scan_candidates(tables, U, b)
    if np.any(scan.feasible):
        u = np.where(scan.feasible, scan.utility, -np.inf)
        best = int(np.flatnonzero(u >= u.max() - TIE_TOL)[0])
        exhausted = True
    else:
        top = scan.e_max.max()
        cand = np.flatnonzero(scan.e_max >= top - TIE_TOL)
        best = int(cand[np.argmax(scan.utility[cand])])
        scan.rho[best] = 0.0
        exhausted = False
    sched = PolicySchedule(int(scan.t_hat[best]), tuple(int(x) for x in scan.Q[best]), float(scan.rho[best]))
    out = evaluate_schedule(prior, model, utility, sched.t_hat, sched.q, sched.rho, tables)
    out.budget_exhausted = exhausted
    return sched, out
