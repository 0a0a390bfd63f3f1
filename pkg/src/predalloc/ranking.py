"""Pairwise ranking risk of the y-based ranking over time.

R^t is the probability that a random active pair is misordered by y given
p_j >= p_i. It is computed three ways: Monte Carlo on a finite population,
exact binomial enumeration for grid priors, and the normal approximation
E[Phi(-|dp~| sqrt(t) / s~)] over pairs from the survival-updated population.
``delta_ranking_risk`` splits the one-step change of the approximation into a
population term and an observation term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .agents import KeyedRNG, mc_simulate, sample_pool
from .dynamics import _survival_exponent
from .model import BetaPrior, DomainError, GridPrior, ObservationModel, Prior

PAIR_STREAM = 1 << 20  # keyed-RNG time index reserved for pair sampling


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    std_error: float
    t: int
    n_pairs: int = 0


@dataclass(frozen=True)
class RiskDecomposition:
    delta: float
    population_effect: float
    observation_effect: float
    t: int


@dataclass(frozen=True)
class Thm31Inputs:
    """Constants of the improvement condition.

    Attributes:
        alpha_cutoff: kernel threshold alpha in (0, 1); the condition uses ln(1/alpha).
        lipschitz_inv: Lipschitz constant of the inverse observation map.
        epsilon: observation-noise floor in [0, 0.5).
    """

    alpha_cutoff: float = 0.5
    lipschitz_inv: float = 1.0
    epsilon: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha_cutoff < 1.0):
            raise DomainError("alpha_cutoff must be in (0, 1)")
        if not self.lipschitz_inv > 0:
            raise DomainError("lipschitz_inv must be positive")
        if not (0.0 <= self.epsilon < 0.5):
            raise DomainError("epsilon must be in [0, 0.5)")


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def ranking_risk_mc(prior: Prior, model: ObservationModel, t: int, n_agents: int, n_pairs: int,
                    seed: int, convention: str = "appendix_c", ties: str = "zero") -> RiskEstimate:
    """Misordering frequency over random active pairs with p_j >= p_i.

    Ties in p count as p_j >= p_i. Ties in y cost nothing with
    ``ties="zero"`` (strict y_j < y_i) and 1/2 with ``ties="half"``, the
    expected loss of a ranking that breaks ties at random.
    """
    if ties not in ("zero", "half"):
        raise DomainError(f"unknown tie convention {ties!r}")
    if t < 1:
        raise DomainError("t must be >= 1")
    if n_agents < 2 or n_pairs < 1:
        raise DomainError("need at least 2 agents and 1 pair")
    pool = sample_pool(prior, n_agents, seed)
    rec = mc_simulate(pool, model, None, t, convention=convention)
    idx = np.flatnonzero(rec.active)
    if len(idx) < 2:
        raise DomainError("population too small")
    rng = KeyedRNG(seed)
    a = idx[(rng.uniform(PAIR_STREAM + t, 0, n_pairs) * len(idx)).astype(np.int64)]
    b = idx[(rng.uniform(PAIR_STREAM + t, 1, n_pairs) * len(idx)).astype(np.int64)]
    keep = a != b
    i, j = a[keep], b[keep]
    cond = pool.p[j] >= pool.p[i]
    n = int(cond.sum())
    if n == 0:
        raise DomainError("no conditioned pairs")
    yi, yj = rec.y[i][cond], rec.y[j][cond]
    loss = (yj < yi).astype(float)
    if ties == "half":
        loss += 0.5 * (yj == yi)
    r = float(loss.mean())
    if ties == "half":
        return RiskEstimate(r, float(loss.std() / math.sqrt(n)), t, n)
    return RiskEstimate(r, math.sqrt(r * (1.0 - r) / n), t, n)


# ---------------------------------------------------------------------------
# Population at t as a weighted point set
# ---------------------------------------------------------------------------


def population_nodes(prior: Prior, t: int, convention: str = "appendix_c",
                     panels: int = 128, order: int = 8) -> tuple[np.ndarray, np.ndarray, bool]:
    """Nodes and weights of the active population's p-distribution at t.

    Beta priors use composite Gauss-Legendre in the quantile variable of the
    survival-updated Beta; the last flag is True for such continuous
    populations. Grid priors return their atoms, survival-reweighted.
    """
    s = _survival_exponent(t, convention)
    if isinstance(prior, BetaPrior):
        a, b = prior.alpha, prior.beta + s
        x, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(0.0, 1.0, panels + 1)
        u = (edges[:-1, None] + 0.5 * (x[None, :] + 1.0) / panels).ravel()
        wt = np.tile(0.5 * w / panels, panels)
        p = special.betaincinv(a, b, u)
        return p, wt / wt.sum(), True
    p, w = prior.nodes()
    lw = np.log(np.where(w > 0, w, 1e-300)) + special.xlog1py(s, -p)
    lw = np.where(w > 0, lw, -np.inf)
    w = np.exp(lw - special.logsumexp(lw))
    return p, w, False


def _pair_terms(model: ObservationModel, p: np.ndarray, t: float):
    pt = model.ptilde(p)
    var = pt * (1.0 - pt)
    d = np.abs(pt[:, None] - pt[None, :])
    sig = np.sqrt(var[:, None] + var[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(sig > 0, d / sig, np.where(d > 0, np.inf, 0.0))
    return d, sig, x


def ranking_risk_approx(prior: Prior, model: ObservationModel, t: int, convention: str = "appendix_c",
                        panels: int = 128, order: int = 8) -> RiskEstimate:
    """Normal approximation E[Phi(-|p~_j - p~_i| sqrt(t) / s~_ij)] over i.i.d. pairs.

    Exactly equal p~ gives Phi(0) = 1/2, also where s~ = 0.
    """
    if t < 1:
        raise DomainError("t must be >= 1")
    p, w, _ = population_nodes(prior, t, convention, panels, order)
    _, _, x = _pair_terms(model, p, t)
    val = float(w @ special.ndtr(-x * math.sqrt(t)) @ w)
    return RiskEstimate(min(max(val, 0.0), 1.0), 0.0, t)


def delta_ranking_risk(prior: Prior, model: ObservationModel, t: int, convention: str = "appendix_c",
                       kernel: str = "gaussian", delta: float = 1e-6, step: str = "derivative",
                       panels: int = 128, order: int = 8) -> RiskDecomposition:
    """One-step change of the approximate risk, split into two effects.

    population term: (w_ij - 1) K_ij, with w_ij = (1-p_i)(1-p_j)/(1-mu)^2;
    observation term: -phi(x sqrt(t)) x / (2 sqrt(t)), the t-derivative of
    Phi(-x sqrt(t)), where x = |dp~| / s~.

    ``kernel="gaussian"`` takes K = Phi(-x sqrt(t)). ``kernel="mills"`` takes
    K = phi(x sqrt(t)) / (x sqrt(t)), the Mills-ratio form, whose pair
    integral diverges logarithmically at x = 0; pairs with |dp~| < delta fall
    back to Phi(-x sqrt(t)) there, so that mode depends on ``delta``.

    ``step="exact"`` replaces the derivative by the finite step: population
    term (w_ij - 1) Phi(-x sqrt(t+1)), observation term
    Phi(-x sqrt(t+1)) - Phi(-x sqrt(t)). The two then add up to
    R^{t+1} - R^t of the approximation up to quadrature error (about 1e-6,
    since R^{t+1} is integrated on its own nodes). The derivative form drops
    O(1/t^2) terms, which can exceed the net change when the two effects
    nearly cancel (high-inequality priors).
    """
    if t < 1:
        raise DomainError("t must be >= 1")
    if kernel not in ("gaussian", "mills"):
        raise DomainError(f"unknown kernel {kernel!r}")
    if step not in ("derivative", "exact"):
        raise DomainError(f"unknown step mode {step!r}")
    p, w, _ = population_nodes(prior, t, convention, panels, order)
    d, sig, x = _pair_terms(model, p, t)
    mu = float(w @ p)
    wij = np.outer(1.0 - p, 1.0 - p) / (1.0 - mu) ** 2
    if step == "exact":
        now = special.ndtr(-x * math.sqrt(t))
        nxt = special.ndtr(-x * math.sqrt(t + 1))
        pop = float(w @ ((wij - 1.0) * nxt) @ w)
        obs = float(w @ (nxt - now) @ w)
        return RiskDecomposition(pop + obs, pop, obs, t)
    z = x * math.sqrt(t)
    phi = stats.norm.pdf(z)
    tail = special.ndtr(-z)
    if kernel == "mills":
        with np.errstate(divide="ignore", invalid="ignore"):
            mills = np.where(z > 0, phi / z, 0.0)
        tail = np.where(d < delta, tail, mills)
    pop_term = (wij - 1.0) * tail
    obs_term = np.where(np.isfinite(x), -phi * x / (2.0 * math.sqrt(t)), 0.0)
    pop = float(w @ pop_term @ w)
    obs = float(w @ obs_term @ w)
    return RiskDecomposition(pop + obs, pop, obs, t)


# ---------------------------------------------------------------------------
# Exact risk for grid priors
# ---------------------------------------------------------------------------


def _binom_tables(model: ObservationModel, p: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(t + 1)
    pmf = stats.binom.pmf(k[None, :], t, model.ptilde(p)[:, None])
    below = np.cumsum(pmf, axis=1) - pmf  # P(y < k)
    return pmf, below


def ranking_risk_exact(prior: GridPrior, model: ObservationModel, t: int, convention: str = "appendix_c",
                       ties: str = "half") -> RiskEstimate:
    """Exact R^t for a grid prior by binomial enumeration.

    ``ties="half"`` counts p_j = p_i atoms at half weight in the conditioning
    event (a grid standing in for a continuous prior); ``ties="full"`` counts
    them fully, matching a literal reading for genuinely discrete priors.
    """
    if not isinstance(prior, GridPrior):
        raise DomainError("exact risk needs a grid prior")
    if ties not in ("half", "full"):
        raise DomainError(f"unknown tie convention {ties!r}")
    p, w, _ = population_nodes(prior, t, convention)
    pmf, below = _binom_tables(model, p, t)
    loss = pmf @ below.T  # [i, j] = P(y_j < y_i)
    cond = (p[None, :] > p[:, None]).astype(float)
    cond += np.eye(len(p)) * (0.5 if ties == "half" else 1.0)
    ww = np.outer(w, w) * cond
    return RiskEstimate(float(np.sum(ww * loss) / ww.sum()), 0.0, t)


# ---------------------------------------------------------------------------
# Improvement condition
# ---------------------------------------------------------------------------


def population_moments(prior: Prior, t: int, convention: str = "appendix_c") -> tuple[float, float]:
    """(mean, variance) of p over the active population at t."""
    s = _survival_exponent(t, convention)
    if isinstance(prior, BetaPrior):
        b = BetaPrior(prior.alpha, prior.beta + s)
        return b.mean(), b.var()
    p, w, _ = population_nodes(prior, t, convention)
    m = float(w @ p)
    return m, float(w @ (p - m) ** 2)


def thm31_condition(prior: Prior, model: ObservationModel, t: int, inputs: Thm31Inputs = Thm31Inputs(),
                    convention: str = "appendix_c") -> tuple[float, float, bool]:
    """Necessary condition for the ranking to improve from t to t+1.

    With c = ln(1/alpha) and K = L^-1 / (1 - 2 eps):
        lhs = Var/(1-mu)^2 - K sqrt(2 c / t) / (1-mu),   rhs = c / t.
    Improvement is possible only if lhs < rhs; False rules it out.
    """
    if t < 1:
        raise DomainError("t must be >= 1")
    mu, var = population_moments(prior, t, convention)
    c = math.log(1.0 / inputs.alpha_cutoff)
    K = inputs.lipschitz_inv / (1.0 - 2.0 * inputs.epsilon)
    lhs = var / (1.0 - mu) ** 2 - K * math.sqrt(2.0 * c / t) / (1.0 - mu)
    rhs = c / t
    return float(lhs), float(rhs), bool(lhs < rhs)
