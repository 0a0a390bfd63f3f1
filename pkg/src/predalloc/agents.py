"""Finite-N agent simulation with a counter-based RNG.

Every uniform draw is addressed by (seed, t, draw kind, agent id): the stream
(seed, 16 t + draw) is a Philox key and the agent id is the position in that
stream. Generating a block of agents therefore never depends on how the other
agents were split up, so results are identical for any chunking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import BetaPrior, DomainError, ObservationModel, Prior, Utility

DRAW_FAIL, DRAW_OBS, DRAW_PRIORITY, DRAW_P = 0, 1, 2, 3
_PHILOX_BLOCK = 4  # 64-bit outputs per counter step


class KeyedRNG:
    """Uniforms on [0, 1) addressed by (t, draw kind, agent id)."""

    def __init__(self, seed: int, chunk: int = 1 << 20):
        if not (0 <= seed < 1 << 64):
            raise DomainError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.chunk = int(chunk)

    def _stream(self, t: int, draw: int):
        return np.random.Philox(key=(int(t) * 16 + draw) << 64 | self.seed)

    def block(self, t: int, draw: int, start: int, stop: int) -> np.ndarray:
        """Uniforms for agents start..stop-1."""
        bg = self._stream(t, draw)
        bg.advance(start // _PHILOX_BLOCK)
        skip = start % _PHILOX_BLOCK
        raw = bg.random_raw(skip + stop - start)[skip:]
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform(self, t: int, draw: int, n: int) -> np.ndarray:
        out = np.empty(n)
        for lo in range(0, n, self.chunk):
            hi = min(n, lo + self.chunk)
            out[lo:hi] = self.block(t, draw, lo, hi)
        return out


@dataclass
class AgentPool:
    p: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return len(self.p)


def sample_pool(prior: Prior, n: int, seed: int, chunk: int = 1 << 20) -> AgentPool:
    """Draw n failure probabilities from the prior (inverse CDF of keyed uniforms)."""
    if n < 1:
        raise DomainError("pool must contain at least one agent")
    u = KeyedRNG(seed, chunk).uniform(0, DRAW_P, n)
    if isinstance(prior, BetaPrior):
        p = stats.beta.ppf(u, prior.alpha, prior.beta)
    else:
        pts, w = prior.nodes()
        cdf = np.cumsum(w)
        idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(pts) - 1)
        p = pts[idx]
    return AgentPool(np.asarray(p, dtype=float), seed)


@dataclass(frozen=True)
class OneTimePolicy:
    """Spend the whole budget at t, highest y first, random ties."""

    t: int
    budget_fraction: float


@dataclass
class MCRecord:
    """Per-run output. Arrays over t are indexed 1..T (index 0 unused).

    Attributes:
        counts: (T+1, T+2) active untreated agents by y before treatment at t.
        failures: failures in the transition t -> t+1 (and, at index 0, before
            the first observation under the "section_5_3" timing).
        treated: agents treated at t.
        utility: summed u^t(p) over agents treated at t.
        y, active, treat_time: final per-agent state (treat_time 0 = never).
    """

    counts: np.ndarray
    failures: np.ndarray
    treated: np.ndarray
    utility: np.ndarray
    y: np.ndarray
    active: np.ndarray
    treat_time: np.ndarray
    n: int

    def fractions(self, t: int) -> np.ndarray:
        return self.counts[t, : t + 1] / self.n

    def utility_per_capita(self) -> float:
        return float(self.utility.sum() / self.n)


def _select(eligible: np.ndarray, y: np.ndarray, prio: np.ndarray, cap: int) -> np.ndarray:
    """Indices of at most ``cap`` eligible agents, highest y first, then lowest priority."""
    idx = np.flatnonzero(eligible)
    if len(idx) <= cap:
        return idx
    order = np.lexsort((prio[idx], -y[idx]))
    return idx[order[:cap]]


def mc_simulate(pool: AgentPool, model: ObservationModel, policy, T: int,
                utility: Utility | None = None, budget_fraction: float | None = None,
                convention: str = "appendix_c", chunk: int = 1 << 20) -> MCRecord:
    """Simulate the pool for T steps under an optional policy.

    Active untreated agents fail with probability p between steps and are
    observed after surviving; treated agents leave the untreated pool and, the
    treatment being effective, never fail afterwards. ``policy`` is None, a
    ``PolicySchedule`` (needs ``budget_fraction``; total treatments are capped
    at floor(N b)) or a ``OneTimePolicy``.
    """
    if convention not in ("appendix_c", "section_5_3"):
        raise DomainError(f"unknown posterior convention {convention!r}")
    n = pool.n
    rng = KeyedRNG(pool.seed, chunk)
    p = pool.p
    pt = model.ptilde(p)
    y = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    treat_time = np.zeros(n, dtype=np.int64)
    counts = np.zeros((T + 1, T + 2), dtype=np.int64)
    failures = np.zeros(T + 1, dtype=np.int64)
    treated = np.zeros(T + 1, dtype=np.int64)
    util = np.zeros(T + 1)

    cap = None
    if policy is not None:
        frac = policy.budget_fraction if isinstance(policy, OneTimePolicy) else budget_fraction
        if frac is None:
            raise DomainError("a schedule needs a budget fraction")
        cap = int(math.floor(n * frac + 1e-9))
        if utility is None:
            raise DomainError("a policy needs a utility to score treatments")
    spent = 0

    if convention == "section_5_3":
        fail = rng.uniform(0, DRAW_FAIL, n) < p
        active &= ~fail
        failures[0] = int(fail.sum())
    y += (rng.uniform(1, DRAW_OBS, n) < pt) & active

    for t in range(1, T + 1):
        untreated = active & (treat_time == 0)
        counts[t] = np.bincount(y[untreated], minlength=T + 2)[: T + 2]
        if policy is not None and spent < cap:
            prio = rng.uniform(t, DRAW_PRIORITY, n)
            if isinstance(policy, OneTimePolicy):
                chosen = _select(untreated, y, prio, cap - spent) if t == policy.t else np.empty(0, np.int64)
            else:
                q = policy.q[t - 1]
                elig = untreated & (y >= q)
                if t == policy.t_hat and policy.rho > 0:
                    # leave a rho fraction of the threshold cohort, lowest priority treated first
                    coh = np.flatnonzero(untreated & (y == q))
                    n_treat = int(round((1.0 - policy.rho) * len(coh)))
                    skip = coh[np.argsort(prio[coh], kind="stable")[n_treat:]]
                    elig[skip] = False
                chosen = _select(elig, y, prio, cap - spent)
            if len(chosen):
                treat_time[chosen] = t
                treated[t] = len(chosen)
                util[t] = float(np.sum(utility(t, p[chosen])))
                spent += len(chosen)
        if t == T:
            break
        untreated = active & (treat_time == 0)
        fail = (rng.uniform(t, DRAW_FAIL, n) < p) & untreated
        active &= ~fail
        failures[t] = int(fail.sum())
        obs = (rng.uniform(t + 1, DRAW_OBS, n) < pt) & untreated & active
        y += obs
    return MCRecord(counts, failures, treated, util, y, active, treat_time, n)
