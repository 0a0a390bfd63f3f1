"""Static model objects: priors over failure probability, the observation map,
utility families and the inequality measures built on them.

Priors come in two flavours. ``BetaPrior`` is parametric and integrates
through Gauss-Jacobi nodes that absorb the Beta weight exactly; ``GridPrior``
is a finite set of atoms whose expectations are exact sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np
from scipy import special, stats


class DomainError(ValueError):
    """A mathematical precondition of an operation does not hold."""


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------

DEFAULT_NODES = 64


@dataclass(frozen=True)
class BetaPrior:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def family(self) -> str:
        return "beta"

    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def var(self) -> float:
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))

    def pdf(self, p):
        return stats.beta.pdf(p, self.alpha, self.beta)

    def dlogpdf(self, p):
        """d/dp log density, closed form."""
        p = np.asarray(p, dtype=float)
        return (self.alpha - 1.0) / p - (self.beta - 1.0) / (1.0 - p)

    def nodes(self, n: int = DEFAULT_NODES) -> tuple[np.ndarray, np.ndarray]:
        """Gauss-Jacobi nodes on [0, 1] and normalized weights for this prior.

        Exact for polynomial integrands of degree <= 2n - 1. scipy's rule
        loses accuracy for n in the thousands when an exponent is near -1,
        so keep n modest (64 gives ~1e-11 relative error on Beta(0.028, 0.35)).
        """
        return _jacobi_nodes(n, self.alpha, self.beta)

    def to_dict(self) -> dict:
        return {"family": "beta", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class GridPrior:
    """Finite-support prior. ``points`` strictly increasing in [0, 1]."""

    points: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim != 1 or pts.shape != w.shape or pts.size == 0:
            raise DomainError("grid points and weights must be equal-length non-empty 1-d sequences")
        if np.any(pts < 0) or np.any(pts > 1):
            raise DomainError("grid points must lie in [0, 1]")
        if np.any(np.diff(pts) <= 0):
            raise DomainError("grid points must be strictly increasing")
        if np.any(w < 0):
            raise DomainError("grid weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"grid weights must sum to 1 (got {w.sum()!r})")
        object.__setattr__(self, "points", tuple(float(x) for x in pts))
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @property
    def family(self) -> str:
        return "grid"

    @classmethod
    def point(cls, p: float) -> "GridPrior":
        return cls((p,), (1.0,))

    @classmethod
    def uniform(cls, n: int) -> "GridPrior":
        """``n`` equal cells on [0, 1], atoms at the cell midpoints."""
        pts = (np.arange(n) + 0.5) / n
        return cls.normalized(pts, np.ones(n))

    @classmethod
    def normalized(cls, points, weights) -> "GridPrior":
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        # renormalizing once more pins the sum to 1 within a couple of ulps
        w = w / math.fsum(w)
        return cls(tuple(points), tuple(w))

    @classmethod
    def from_beta(cls, alpha: float, beta: float, n: int) -> "GridPrior":
        """Discretize Beta(alpha, beta) into ``n`` equal cells.

        Each atom carries the exact cell mass and sits at the cell's
        conditional mean, so the first moment is preserved exactly.
        """
        edges = np.linspace(0.0, 1.0, n + 1)
        # upper-tail differences avoid cancellation above the median
        lower = np.diff(special.betainc(alpha, beta, edges))
        upper = -np.diff(special.betaincc(alpha, beta, edges))
        lower1 = np.diff(special.betainc(alpha + 1.0, beta, edges))
        upper1 = -np.diff(special.betaincc(alpha + 1.0, beta, edges))
        hi_side = edges[:-1] >= 0.5
        mass = np.where(hi_side, upper, lower)
        first = alpha / (alpha + beta) * np.where(hi_side, upper1, lower1)
        keep = mass > 0
        mid = 0.5 * (edges[:-1] + edges[1:])
        with np.errstate(divide="ignore", invalid="ignore"):
            pts = first / mass
        inside = keep & (pts > edges[:-1]) & (pts < edges[1:])
        pts = np.where(inside, pts, mid)
        return cls.normalized(pts[keep], mass[keep])

    @cached_property
    def _arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.points), np.asarray(self.weights)

    def nodes(self, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        pts, w = self._arrays
        return pts.copy(), w.copy()

    def mean(self) -> float:
        pts, w = self._arrays
        return float(w @ pts)

    def var(self) -> float:
        pts, w = self._arrays
        m = w @ pts
        return float(w @ (pts - m) ** 2)

    def cell_density(self) -> tuple[np.ndarray, np.ndarray]:
        """Piecewise-constant density over midpoint cells: (cell centers, density)."""
        pts, w = self._arrays
        if pts.size == 1:
            return pts.copy(), np.array([np.inf])
        mids = 0.5 * (pts[1:] + pts[:-1])
        edges = np.concatenate([[0.0], mids, [1.0]])
        return pts.copy(), w / np.diff(edges)

    def to_dict(self) -> dict:
        return {"family": "grid", "points": list(self.points), "weights": list(self.weights)}


Prior = Union[BetaPrior, GridPrior]


def prior_from_dict(d: dict) -> Prior:
    fam = d.get("family")
    if fam == "beta":
        return BetaPrior(float(d["alpha"]), float(d["beta"]))
    if fam == "grid":
        return GridPrior(tuple(d["points"]), tuple(d["weights"]))
    raise DomainError(f"unknown prior family {fam!r}")


_JACOBI_CACHE: dict[tuple[int, float, float], tuple[np.ndarray, np.ndarray]] = {}


def _jacobi_nodes(n: int, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    key = (n, alpha, beta)
    if key not in _JACOBI_CACHE:
        # weight (1-x)^(beta-1) (1+x)^(alpha-1) on [-1, 1]  <->  p^(alpha-1) (1-p)^(beta-1)
        x, w = special.roots_jacobi(n, beta - 1.0, alpha - 1.0)
        p = 0.5 * (1.0 + x)
        w = w / w.sum()
        p.setflags(write=False)
        w.setflags(write=False)
        _JACOBI_CACHE[key] = (p, w)
    p, w = _JACOBI_CACHE[key]
    return p.copy(), w.copy()


def beta_expect_legendre(f: Callable, alpha: float, beta: float, n: int = 2048) -> float:
    """E[f(p)] under Beta(alpha, beta) by Gauss-Legendre after removing the
    endpoint singularities (p = u^(1/alpha) on [0, 1/2], 1-p = v^(1/beta) on
    [1/2, 1]). Independent of the Gauss-Jacobi route used everywhere else.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    lognorm = special.betaln(alpha, beta)

    ua = 0.5**alpha
    u = 0.5 * ua * (x + 1.0)
    p = u ** (1.0 / alpha)
    left = 0.5 * ua * np.sum(w * f(p) * np.exp(special.xlog1py(beta - 1.0, -p) - lognorm)) / alpha

    vb = 0.5**beta
    v = 0.5 * vb * (x + 1.0)
    q = v ** (1.0 / beta)
    right = 0.5 * vb * np.sum(w * f(1.0 - q) * np.exp(special.xlog1py(alpha - 1.0, -q) - lognorm)) / beta
    return float(left + right)


# ---------------------------------------------------------------------------
# Observation model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObservationModel:
    """Signal probability ``1 - (1 - p)**gamma`` per step."""

    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma >= 1.0:
            raise DomainError(f"gamma must be >= 1, got {self.gamma}")

    def ptilde(self, p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            out = -np.expm1(self.gamma * np.log1p(-p))
        return out if out.ndim else float(out)

    def log_ptilde(self, p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(-np.expm1(self.gamma * np.log1p(-p)))

    def log_one_minus_ptilde(self, p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            return self.gamma * np.log1p(-p)

    def dptilde(self, p):
        p = np.asarray(p, dtype=float)
        return self.gamma * (1.0 - p) ** (self.gamma - 1.0)


def ptilde(p, model: ObservationModel):
    return model.ptilde(p)


# ---------------------------------------------------------------------------
# Utilities
# ---------------------------------------------------------------------------

UTILITY_KINDS = ("fully_effective", "risky", "partial", "risk_reduction")


@dataclass(frozen=True)
class DecayingConstants:
    lambda1: float
    lambda2: float = math.inf

    @property
    def lambda1_only(self) -> bool:
        return math.isinf(self.lambda2)


@dataclass(frozen=True)
class Utility:
    """Expected utility u^t(p) of treating an individual at time t.

    ``kind`` is one of ``UTILITY_KINDS``; ``param`` is the success probability
    for ``risky``/``partial`` and the reduction factor for ``risk_reduction``.

    ``risky`` defaults to ``c * (1 - (1-p)**(T-t))`` so that u(0) = 0 holds;
    ``shifted=False`` gives the unnormalized ``c - (1-p)**(T-t)``, which can be
    negative and is (c, c)-decaying rather than (c, 1)-decaying.
    """

    kind: str
    horizon: int
    param: float | None = None
    shifted: bool = field(default=True)

    def __post_init__(self):
        if self.kind not in UTILITY_KINDS:
            raise DomainError(f"unknown utility kind {self.kind!r}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise DomainError(f"horizon must be a positive integer, got {self.horizon}")
        if self.kind == "fully_effective":
            if self.param is not None:
                raise DomainError("fully_effective takes no parameter")
        elif self.param is None:
            raise DomainError(f"{self.kind} requires a parameter")
        elif self.kind in ("risky", "partial") and not (0 < self.param <= 1):
            raise DomainError(f"{self.kind} parameter must be in (0, 1], got {self.param}")
        elif self.kind == "risk_reduction" and not self.param > 1:
            raise DomainError(f"risk_reduction factor must be > 1, got {self.param}")

    def _remaining(self, t) -> int:
        if not (1 <= t <= self.horizon):
            raise DomainError(f"t={t} outside [1, {self.horizon}]")
        return self.horizon - t

    def __call__(self, t: int, p):
        n = self._remaining(t)
        p = np.asarray(p, dtype=float)
        surv = (1.0 - p) ** n
        if self.kind == "fully_effective":
            out = 1.0 - surv
        elif self.kind == "risky":
            out = self.param * (1.0 - surv) if self.shifted else self.param - surv
        elif self.kind == "partial":
            out = self.param * (1.0 - surv)
        else:
            out = (1.0 - p / self.param) ** n - surv
        return out if out.ndim else float(out)

    def dp(self, t: int, p):
        """Closed-form derivative in p."""
        n = self._remaining(t)
        p = np.asarray(p, dtype=float)
        if n == 0:
            return np.zeros_like(p)
        base = n * (1.0 - p) ** (n - 1)
        if self.kind == "fully_effective" or (self.kind == "risky" and not self.shifted):
            return base
        if self.kind in ("risky", "partial"):
            return self.param * base
        g = self.param
        return base - (n / g) * (1.0 - p / g) ** (n - 1)

    def slope_at_zero(self, t: int) -> float:
        return float(self.dp(t, 0.0))

    def decaying_constants(self, t: int | None = None) -> DecayingConstants:
        """(lambda1, lambda2) for this kind. ``risk_reduction`` needs ``t``."""
        if self.kind == "fully_effective":
            return DecayingConstants(1.0, 1.0)
        if self.kind == "risky":
            c = self.param
            return DecayingConstants(c, 1.0) if self.shifted else DecayingConstants(c, c)
        if self.kind == "partial":
            return DecayingConstants(self.param, 1.0)
        if t is None:
            raise DomainError("risk_reduction constants depend on t")
        n = self._remaining(t)
        return DecayingConstants((1.0 - 1.0 / self.param) ** n, 1.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "param": self.param}


def decaying_constants(u: Utility, t: int | None = None) -> DecayingConstants:
    return u.decaying_constants(t)


# ---------------------------------------------------------------------------
# Inequality measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayReport:
    ok: bool
    worst_p: float
    worst_violation: float


def check_g_decaying(prior: Prior, G: float, n_grid: int = 2048, tol: float = 1e-9,
                     method: str = "auto") -> DecayReport:
    """Check -G P/(1-p) <= P' <= 0 on interior grid points.

    The check is done on the normalized slope s(p) = P'(p) (1-p) / P(p), which
    must lie in [-G, 0]. Beta priors use the closed-form log-derivative unless
    ``method="fd"``; grid priors always use central differences of their
    piecewise-constant density.
    """
    if G < 0:
        raise DomainError("G must be non-negative")
    if isinstance(prior, BetaPrior):
        p = np.arange(1, n_grid) / n_grid
        if method == "fd":
            # central stencil shrunk near the ends, where log P may be singular
            h = 1e-4 * np.minimum(1.0 / n_grid, np.minimum(p, 1.0 - p))
            slope = (np.log(prior.pdf(p + h)) - np.log(prior.pdf(p - h))) / (2 * h)
        else:
            slope = prior.dlogpdf(p)
        s = slope * (1.0 - p)
        dens_zero = np.zeros_like(p, dtype=bool)
    else:
        centers, dens = prior.cell_density()
        if centers.size < 3:
            return DecayReport(False, float(centers[0]), math.inf)
        dd = (dens[2:] - dens[:-2]) / (centers[2:] - centers[:-2])
        p = centers[1:-1]
        mid = dens[1:-1]
        dens_zero = mid <= 0
        s = np.where(dens_zero, 0.0, dd * (1.0 - p) / np.where(dens_zero, 1.0, mid))
    viol = np.maximum(s, -G - s)
    viol = np.maximum(viol, 0.0)
    if np.any(dens_zero):
        # a zero-density interior point must be flat
        viol = np.where(dens_zero, np.abs(dd), viol)
    i = int(np.argmax(viol))
    return DecayReport(bool(viol[i] <= tol), float(p[i]), float(viol[i]))


def g_decaying_bounds(G: float) -> tuple[float, Callable[[float], float]]:
    """Lower bounds (mean, variance-as-function-of-mean) for a G-decaying prior."""
    if G < 0:
        raise DomainError("G must be non-negative")
    return 1.0 / (2.0 + G), lambda mu: 2.0 * mu / (3.0 + G) - mu * mu


def beta_moments(alpha: float, beta: float) -> tuple[float, float]:
    """First two raw moments (E[p], E[p^2]) of Beta(alpha, beta)."""
    s = alpha + beta
    m0 = alpha / s
    return m0, m0 * (alpha + 1.0) / (s + 1.0)


def estimate_beta_prior(m0: float, m1: float) -> BetaPrior:
    """Invert the two raw moments m0 = E[p], m1 = E[p^2] into Beta parameters."""
    if not (0.0 < m1 < m0 < 1.0 and m1 > m0 * m0):
        raise DomainError(f"moments inconsistent with a Beta prior: m0={m0}, m1={m1}")
    s = (m0 - m1) / (m1 - m0 * m0)
    alpha = m0 * s
    return BetaPrior(alpha, s - alpha)


# ---------------------------------------------------------------------------
# Budget
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetSpec:
    """Budget as a fraction b = B/N of the initial pool.

    ``population`` is a nominal N used only for reporting; continuum
    computations depend on ``fraction`` alone.
    """

    fraction: float
    population: float | None = None

    def __post_init__(self):
        if not (0.0 < self.fraction <= 1.0):
            raise DomainError(f"budget fraction must be in (0, 1], got {self.fraction}")

    @property
    def units(self) -> float | None:
        return None if self.population is None else self.fraction * self.population


def as_budget(budget) -> BudgetSpec:
    return budget if isinstance(budget, BudgetSpec) else BudgetSpec(float(budget))
