"""Continuum-limit population dynamics.

Timing used throughout: at t=1 every individual is observed once with no prior
chance to fail, so the t=1 cohort masses are (E[1-p~], E[p~]). Moving from t to
t+1 an untreated individual first fails with probability p and, if it
survives, is observed again. The posterior of an individual with y^t = k is
therefore

    P_k^t(p)  ∝  P(p) (1-p)^(t-1) p~^k (1-p~)^(t-k)

("appendix_c" convention). The "section_5_3" convention adds one failure round
before the first observation, so the survival factor becomes (1-p)^t, the t=1
masses become (E[(1-p)(1-p~)], E[(1-p)p~]) and, for gamma=1 and a Beta prior,
the posterior is Beta(a + k, b + 2t - k). Masses are always fractions of the
pool before that first failure round.

Because which individuals are treated depends on y alone, P_k^t does not depend
on the allocation policy, so all posterior expectations are tabulated once in
``PosteriorTables`` and cohort masses are then propagated by a linear backup.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .model import (
    DEFAULT_NODES,
    BetaPrior,
    DomainError,
    GridPrior,
    ObservationModel,
    Prior,
    Utility,
    _jacobi_nodes,
)

CONVENTIONS = ("appendix_c", "section_5_3")


def _check_convention(convention: str) -> None:
    if convention not in CONVENTIONS:
        raise DomainError(f"unknown posterior convention {convention!r}")


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PopulationDensity:
    """A normalized density over p carried as (nodes, weights), plus the
    fraction of the initial pool it describes.

    ``beta`` is set when the density is exactly Beta(a, b); the nodes are then
    that Beta's Gauss-Jacobi rule. ``family`` is "beta", "grid" or "weighted"
    (a quadrature-reweighted Beta, e.g. a posterior under gamma > 1).
    """

    nodes: np.ndarray
    weights: np.ndarray
    active_mass: float = 1.0
    family: str = "grid"
    beta: tuple[float, float] | None = None

    def __post_init__(self):
        if not (0.0 <= self.active_mass <= 1.0 + 1e-12):
            raise DomainError(f"active_mass must lie in [0, 1], got {self.active_mass}")

    @classmethod
    def from_prior(cls, prior: Prior, n_nodes: int = DEFAULT_NODES) -> "PopulationDensity":
        if isinstance(prior, BetaPrior):
            p, w = prior.nodes(n_nodes)
            return cls(p, w, 1.0, "beta", (prior.alpha, prior.beta))
        p, w = prior.nodes()
        return cls(p, w, 1.0, "grid")

    def mean(self) -> float:
        return float(self.weights @ self.nodes)

    def var(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.nodes - m) ** 2)

    def expect(self, f: Callable) -> float:
        return float(self.weights @ np.asarray(f(self.nodes), dtype=float))

    def to_dict(self) -> dict:
        if self.beta is not None:
            return {"family": "beta", "alpha": self.beta[0], "beta": self.beta[1],
                    "active_mass": self.active_mass}
        return {"family": self.family, "points": self.nodes.tolist(),
                "weights": self.weights.tolist(), "active_mass": self.active_mass}


def survival_update(pop: PopulationDensity, n_nodes: int = DEFAULT_NODES) -> PopulationDensity:
    """Reweight by the survival probability (1-p) for one step."""
    if pop.active_mass <= 0:
        raise DomainError("population extinct")
    mu = pop.mean()
    mass = pop.active_mass * (1.0 - mu)
    if pop.beta is not None:
        a, b = pop.beta
        p, w = _jacobi_nodes(len(pop.nodes), a, b + 1.0)
        return PopulationDensity(p, w, mass, "beta", (a, b + 1.0))
    w = pop.weights * (1.0 - pop.nodes)
    tot = w.sum()
    if tot <= 0:
        raise DomainError("population extinct")
    return PopulationDensity(pop.nodes, w / tot, mass, pop.family)


def posterior_expect(density: PopulationDensity, f: Callable) -> float:
    """E[f(p)] under ``density`` (quadrature for Beta, exact sum for grids)."""
    return density.expect(f)


@dataclass(frozen=True)
class PosteriorSpec:
    t: int
    k: int

    def __post_init__(self):
        if self.t < 1 or not (0 <= self.k <= self.t):
            raise DomainError(f"invalid posterior index t={self.t}, k={self.k}")


def _survival_exponent(t: int, convention: str) -> int:
    _check_convention(convention)
    return t - 1 if convention == "appendix_c" else t


def _posterior_nodes(prior: Prior, model: ObservationModel, t: int, k: int,
                     convention: str, n_nodes: int):
    """Nodes, normalized weights, log normalizer (relative to the prior), and the
    Beta parameters when the posterior is exactly Beta.

    The log normalizer is log E_prior[(1-p)^s p~^k (1-p~)^(t-k)], so the mass of
    the untreated y^t = k cohort is C(t, k) times its exponential.
    """
    s = _survival_exponent(t, convention)
    g = model.gamma
    if isinstance(prior, BetaPrior):
        # p~^k = p^k (p~/p)^k with p~/p smooth, so the Beta part absorbs all
        # endpoint behaviour and only the smooth factor is reweighted
        a = prior.alpha + k
        b = prior.beta + g * (t - k) + s
        p, w = _jacobi_nodes(n_nodes, a, b)
        logz = special.betaln(a, b) - special.betaln(prior.alpha, prior.beta)
        if g == 1.0 or k == 0:
            return p, w, logz, (a, b)
        logh = k * (model.log_ptilde(p) - np.log(p))
        lw = np.log(w) + logh
        lse = special.logsumexp(lw)
        return p, np.exp(lw - lse), logz + lse, None
    p, w = prior.nodes()
    with np.errstate(divide="ignore"):
        lw = (np.log(w) + special.xlog1py(s, -p) + special.xlogy(k, model.ptilde(p))
              + (t - k) * model.log_one_minus_ptilde(p))
    lw = np.where(np.isnan(lw), -np.inf, lw)
    lse = special.logsumexp(lw)
    if not np.isfinite(lse):
        raise DomainError(f"degenerate posterior at t={t}, k={k}")
    return p, np.exp(lw - lse), float(lse), None


def posterior(prior: Prior, model: ObservationModel, spec: PosteriorSpec,
              convention: str = "appendix_c", n_nodes: int = DEFAULT_NODES) -> PopulationDensity:
    """Posterior over p for an active untreated individual with y^t = k.

    ``active_mass`` is the untreated no-policy mass of that cohort.
    """
    p, w, logz, beta = _posterior_nodes(prior, model, spec.t, spec.k, convention, n_nodes)
    mass = math.comb(spec.t, spec.k) * math.exp(logz)
    fam = "beta" if beta is not None else ("grid" if isinstance(prior, GridPrior) else "weighted")
    return PopulationDensity(p, w, min(mass, 1.0), fam, beta)


def cohort_stats(prior: Prior, model: ObservationModel, spec: PosteriorSpec,
                 convention: str = "appendix_c") -> tuple[float, float]:
    """(mu_k^t, s~_k^t) = (E_k^t[p], E_k^t[(1-p) p~])."""
    d = posterior(prior, model, spec, convention)
    return d.mean(), d.expect(lambda p: (1.0 - p) * model.ptilde(p))


# ---------------------------------------------------------------------------
# Cohort tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CohortTable:
    """Masses (fractions of the initial pool) of active untreated cohorts y^t = k."""

    t: int
    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.shape != (self.t + 1,):
            raise DomainError(f"cohort table at t={self.t} needs {self.t + 1} masses, got {m.shape}")
        if np.any(m < -1e-15) or m.sum() > 1.0 + 1e-9:
            raise DomainError("cohort masses must be non-negative and sum to at most 1")
        object.__setattr__(self, "masses", np.maximum(m, 0.0))

    def total(self) -> float:
        return float(self.masses.sum())

    def rows(self):
        return [(self.t, k, float(m)) for k, m in enumerate(self.masses)]


def cohort_tables_to_csv(tables: Sequence[CohortTable], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "k", "mass"])
    for tab in tables:
        for t, k, m in tab.rows():
            w.writerow([t, k, repr(m)])
    return buf.getvalue()


def initial_cohorts(prior: Prior, model: ObservationModel, convention: str = "appendix_c",
                    n_nodes: int = DEFAULT_NODES) -> CohortTable:
    """Cohort masses at t=1: (E[1-p~], E[p~]), each times (1-p) inside the
    expectation under the "section_5_3" convention."""
    s = _survival_exponent(1, convention)
    p, w = prior.nodes(n_nodes)
    surv = (1.0 - p) ** s
    pt = model.ptilde(p)
    return CohortTable(1, np.array([w @ (surv * (1.0 - pt)), w @ (surv * pt)]))


class PosteriorTables:
    """Policy-independent posterior expectations for t = 1..T, k = 0..t.

    Arrays are indexed ``[t, k]`` with row 0 unused; entries with k > t or a
    degenerate posterior are 0.

    Attributes:
        fail_stay: E_k^t[(1-p)(1-p~)], survive and observe a negative.
        fail_pos: E_k^t[(1-p) p~], survive and observe a positive.
        mu: E_k^t[p].
        n1: initial cohort masses at t=1.
    """

    def __init__(self, prior: Prior, model: ObservationModel, T: int,
                 convention: str = "appendix_c", n_nodes: int = DEFAULT_NODES):
        _check_convention(convention)
        if T < 1:
            raise DomainError("horizon must be >= 1")
        self.prior, self.model, self.T = prior, model, T
        self.convention, self.n_nodes = convention, n_nodes
        shape = (T + 1, T + 2)
        self.fail_stay = np.zeros(shape)
        self.fail_pos = np.zeros(shape)
        self.mu = np.zeros(shape)
        self.valid = np.zeros(shape, dtype=bool)
        self._nodes: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        for t in range(1, T + 1):
            for k in range(t + 1):
                try:
                    p, w, _, _ = _posterior_nodes(prior, model, t, k, convention, n_nodes)
                except DomainError:
                    continue
                pt = model.ptilde(p)
                self._nodes[(t, k)] = (p, w)
                self.valid[t, k] = True
                self.fail_stay[t, k] = w @ ((1.0 - p) * (1.0 - pt))
                self.fail_pos[t, k] = w @ ((1.0 - p) * pt)
                self.mu[t, k] = w @ p
        self.n1 = initial_cohorts(prior, model, convention, n_nodes).masses
        self._utility_cache: dict[Utility, np.ndarray] = {}

    def expect(self, t: int, k: int, f: Callable) -> float:
        if (t, k) not in self._nodes:
            raise DomainError(f"degenerate posterior at t={t}, k={k}")
        p, w = self._nodes[(t, k)]
        return float(w @ np.asarray(f(p), dtype=float))

    def utility(self, u: Utility) -> np.ndarray:
        """U_k^t = E_k^t[u^t(p)], same layout as the other tables."""
        if u.horizon != self.T:
            raise DomainError(f"utility horizon {u.horizon} does not match tables horizon {self.T}")
        if u not in self._utility_cache:
            U = np.zeros((self.T + 1, self.T + 2))
            for (t, k), (p, w) in self._nodes.items():
                U[t, k] = w @ u(t, p)
            self._utility_cache[u] = U
        return self._utility_cache[u]


# ---------------------------------------------------------------------------
# Backup recursion
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Batched result of propagating cohort masses under threshold schedules.

    Shapes: ``states`` (M, T+1, T+2) masses before treatment at each t,
    ``treated`` (M, T+1) treated mass per t, ``threshold_mass`` (M, T+1) the
    mass of cohort q(t), ``utility`` (M, T+1) utility accrued per t (zeros
    when no utility table was given). Column/row 0 of the t axis is unused.
    """

    states: np.ndarray | None
    treated: np.ndarray
    threshold_mass: np.ndarray
    utility: np.ndarray
    failed: np.ndarray


def validate_q(q, T: int) -> np.ndarray:
    q = np.asarray(q)
    if q.shape[-1] != T or not np.issubdtype(q.dtype, np.integer):
        raise DomainError(f"q must be an integer sequence of length T={T}")
    tt = np.arange(1, T + 1)
    if np.any(q < 0) or np.any(q > tt + 1):
        raise DomainError("q(t) must lie in [0, t+1]")
    if np.any(np.diff(q, axis=-1) < 0):
        raise DomainError("q must be non-decreasing")
    return q


def propagate(tables: PosteriorTables, t0: int, init: np.ndarray, Q: np.ndarray,
              U: np.ndarray | None = None, keep_states: bool = False) -> Trajectory:
    """Run the backup from t0 to T for a batch of threshold sequences.

    Args:
        tables: posterior expectations.
        t0: start time; ``init`` is the pre-treatment state at t0.
        init: (M, T+2) or (T+2,) masses by k (entries k > t0 must be 0).
        Q: (M, T) thresholds q(1..T); entries before t0 are ignored.
        U: optional utility table from ``tables.utility``.
        keep_states: store the full pre-treatment states.
    """
    T = tables.T
    Q = np.atleast_2d(Q)
    M = Q.shape[0]
    S = np.array(np.broadcast_to(init, (M, T + 2)), dtype=float)
    kk = np.arange(T + 2)
    treated = np.zeros((M, T + 1))
    thr = np.zeros((M, T + 1))
    util = np.zeros((M, T + 1))
    failed = np.zeros((M, T + 1))
    states = np.zeros((M, T + 1, T + 2)) if keep_states else None
    rows = np.arange(M)
    for t in range(t0, T + 1):
        if keep_states:
            states[:, t] = S
        q = Q[:, t - 1]
        keep = kk[None, :] < q[:, None]
        gone = np.where(keep, 0.0, S)
        treated[:, t] = gone.sum(axis=1)
        thr[:, t] = S[rows, np.minimum(q, T + 1)]
        if U is not None:
            util[:, t] = gone @ U[t]
        if t == T:
            break
        Sbar = np.where(keep, S, 0.0)
        failed[:, t] = Sbar @ tables.mu[t]
        nxt = Sbar * tables.fail_stay[t]
        nxt[:, 1:] += Sbar[:, :-1] * tables.fail_pos[t, :-1]
        S = nxt
    return Trajectory(states, treated, thr, util, failed)


def simulate_trajectory(tables: PosteriorTables, t0: int, init: CohortTable, q: Sequence[int]) -> np.ndarray:
    """Masses N_{q(t)}^t for t = t0..T of the threshold cohort under ``q``.

    ``q`` covers t = 1..T; q(t) = t+1 treats nobody at t.
    """
    T = tables.T
    q = np.asarray(q)
    if q.dtype.kind == "f" and np.all(q == np.round(q)):
        q = q.astype(np.int64)
    q = validate_q(q, T)
    if not (1 <= t0 <= T) or init.t != t0:
        raise DomainError(f"initial table must be at t0 in [1, {T}]")
    s0 = np.zeros(T + 2)
    s0[: t0 + 1] = init.masses
    tr = propagate(tables, t0, s0, q[None, :])
    return tr.threshold_mass[0, t0:]


def untreated_cohorts(tables: PosteriorTables) -> list[CohortTable]:
    """Cohort tables for t = 1..T with nobody treated."""
    T = tables.T
    s0 = np.zeros(T + 2)
    s0[:2] = tables.n1
    Q = np.arange(2, T + 2)[None, :]
    tr = propagate(tables, 1, s0, Q, keep_states=True)
    return [CohortTable(t, tr.states[0, t, : t + 1]) for t in range(1, T + 1)]


def untreated_cohort_exact(prior: Prior, model: ObservationModel, t: int,
                           convention: str = "appendix_c", n_nodes: int = DEFAULT_NODES) -> np.ndarray:
    """Closed-form no-policy masses C(t,k) E[(1-p)^s p~^k (1-p~)^(t-k)] with
    s = t-1 ("appendix_c") or t ("section_5_3").

    Independent of the backup; used to cross-check it.
    """
    out = np.zeros(t + 1)
    for k in range(t + 1):
        try:
            _, _, logz, _ = _posterior_nodes(prior, model, t, k, convention, n_nodes)
        except DomainError:
            continue
        out[k] = math.comb(t, k) * math.exp(logz)
    return out
