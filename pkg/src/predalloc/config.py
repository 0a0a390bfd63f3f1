"""Run configuration: JSON parsing with strict key checking, plus a stable hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from .dynamics import CONVENTIONS
from .model import (
    BetaPrior,
    DomainError,
    GridPrior,
    ObservationModel,
    Prior,
    Utility,
    prior_from_dict,
)


class ConfigError(ValueError):
    """Malformed or incomplete configuration; the message names the key path."""


TOP_KEYS = {
    "prior", "gamma", "utility", "horizon", "budget_fraction", "grid_size", "seed",
    "posterior_convention", "out", "ranking", "oracle", "simulate", "G",
}
REQUIRED = ("prior", "gamma", "utility", "horizon")
PRIOR_KEYS = {"beta": {"family", "alpha", "beta"}, "grid": {"family", "points", "weights"}}
UTILITY_KEYS = {"kind", "param", "shifted"}
RANKING_KEYS = {"t_max", "n_agents", "n_pairs", "alpha_cutoff", "lipschitz_inv", "epsilon", "ties"}
ORACLE_KEYS = {"budget_units", "instances", "tolerance"}
INSTANCE_KEYS = {"prior", "horizon", "budget_fraction"}
SIMULATE_KEYS = {"n_agents", "reps"}

DEFAULT_ORACLE_INSTANCES = [
    {"prior": pr, "horizon": T, "budget_fraction": b}
    for T in (3, 4)
    for pr in (
        {"family": "beta", "alpha": 1.0, "beta": 1.0},
        {"family": "beta", "alpha": 0.2, "beta": 1.0},
        {"family": "beta", "alpha": 0.028, "beta": 0.35},
    )
    for b in (0.1, 0.3)
]


def _check_keys(d: Any, allowed: set, path: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{path + '.' if path else ''}{extra[0]}: unknown key")
    return d


def _num(d: dict, key: str, path: str, kind=float, required: bool = True, default=None):
    full = f"{path}.{key}" if path else key
    if key not in d:
        if required:
            raise ConfigError(f"{full}: missing required key")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{full}: expected a number")
    if kind is int:
        if int(v) != v:
            raise ConfigError(f"{full}: expected an integer")
        return int(v)
    return float(v)


def _parse_prior(d: Any, path: str) -> dict:
    if not isinstance(d, dict) or "family" not in d:
        raise ConfigError(f"{path}.family: missing required key")
    fam = d["family"]
    if fam not in PRIOR_KEYS:
        raise ConfigError(f"{path}.family: unknown prior family {fam!r}")
    _check_keys(d, PRIOR_KEYS[fam], path)
    for k in PRIOR_KEYS[fam] - {"family"}:
        if k not in d:
            raise ConfigError(f"{path}.{k}: missing required key")
    if fam == "beta":
        return {"family": "beta", "alpha": _num(d, "alpha", path), "beta": _num(d, "beta", path)}
    for k in ("points", "weights"):
        if not isinstance(d[k], list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in d[k]):
            raise ConfigError(f"{path}.{k}: expected a list of numbers")
    return {"family": "grid", "points": [float(x) for x in d["points"]],
            "weights": [float(x) for x in d["weights"]]}


@dataclass(frozen=True)
class RunConfig:
    prior: dict
    gamma: float
    utility: dict
    horizon: int
    budget_fraction: float | None = None
    grid_size: int | None = None
    seed: int = 0
    posterior_convention: str = "appendix_c"
    out: str | None = None
    G: float | None = None
    ranking: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)

    # -- parsing ------------------------------------------------------------

    @classmethod
    def from_dict(cls, d: Any) -> "RunConfig":
        _check_keys(d, TOP_KEYS, "")
        for k in REQUIRED:
            if k not in d:
                raise ConfigError(f"{k}: missing required key")
        prior = _parse_prior(d["prior"], "prior")
        u = _check_keys(d["utility"], UTILITY_KEYS, "utility")
        if "kind" not in u:
            raise ConfigError("utility.kind: missing required key")
        utility = {"kind": u["kind"], "param": None if u.get("param") is None else _num(u, "param", "utility")}
        if "shifted" in u:
            if not isinstance(u["shifted"], bool):
                raise ConfigError("utility.shifted: expected a boolean")
            utility["shifted"] = u["shifted"]
        conv = d.get("posterior_convention", "appendix_c")
        if conv not in CONVENTIONS:
            raise ConfigError(f"posterior_convention: expected one of {list(CONVENTIONS)}")
        out = d.get("out")
        if out is not None and not isinstance(out, str):
            raise ConfigError("out: expected a string")
        ranking = dict(_check_keys(d.get("ranking", {}), RANKING_KEYS, "ranking"))
        if "ties" in ranking and ranking["ties"] not in ("zero", "half"):
            raise ConfigError("ranking.ties: expected 'zero' or 'half'")
        for k in RANKING_KEYS - {"ties"}:
            if k in ranking:
                ranking[k] = _num(ranking, k, "ranking", int if k in ("t_max", "n_agents", "n_pairs") else float)
        oracle = dict(_check_keys(d.get("oracle", {}), ORACLE_KEYS, "oracle"))
        if "budget_units" in oracle:
            oracle["budget_units"] = _num(oracle, "budget_units", "oracle", int)
        if "tolerance" in oracle:
            oracle["tolerance"] = _num(oracle, "tolerance", "oracle")
        if "instances" in oracle:
            if not isinstance(oracle["instances"], list):
                raise ConfigError("oracle.instances: expected a list")
            insts = []
            for i, inst in enumerate(oracle["instances"]):
                p = f"oracle.instances[{i}]"
                _check_keys(inst, INSTANCE_KEYS, p)
                insts.append({
                    "prior": _parse_prior(inst.get("prior", prior), f"{p}.prior"),
                    "horizon": _num(inst, "horizon", p, int),
                    "budget_fraction": _num(inst, "budget_fraction", p),
                })
            oracle["instances"] = insts
        simulate = dict(_check_keys(d.get("simulate", {}), SIMULATE_KEYS, "simulate"))
        for k in SIMULATE_KEYS:
            if k in simulate:
                simulate[k] = _num(simulate, k, "simulate", int)
        cfg = cls(
            prior=prior,
            gamma=_num(d, "gamma", ""),
            utility=utility,
            horizon=_num(d, "horizon", "", int),
            budget_fraction=_num(d, "budget_fraction", "", required=False),
            grid_size=_num(d, "grid_size", "", int, required=False),
            seed=_num(d, "seed", "", int, required=False, default=0),
            posterior_convention=conv,
            out=out,
            G=_num(d, "G", "", required=False),
            ranking=ranking,
            oracle=oracle,
            simulate=simulate,
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        if not text.strip():
            raise ConfigError("<root>: empty configuration")
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"<root>: invalid JSON ({e.msg} at line {e.lineno})") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_json(fh.read())
        except OSError as e:
            raise ConfigError(f"<root>: cannot read {path}: {e.strerror}") from None

    def validate(self) -> None:
        """Re-check module invariants; raise ConfigError naming the key."""
        checks = [
            ("prior", self.make_prior),
            ("gamma", self.make_model),
            ("utility", self.make_utility),
        ]
        for key, fn in checks:
            try:
                fn()
            except DomainError as e:
                raise ConfigError(f"{key}: {e}") from None
        if self.budget_fraction is not None and not (0 < self.budget_fraction <= 1):
            raise ConfigError("budget_fraction: must be in (0, 1]")
        if self.grid_size is not None and self.grid_size < 2:
            raise ConfigError("grid_size: must be at least 2")
        if not (0 <= self.seed < 1 << 64):
            raise ConfigError("seed: must be a 64-bit unsigned integer")
        if self.G is not None and self.G < 0:
            raise ConfigError("G: must be non-negative")

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        d = {"prior": self.prior, "gamma": self.gamma, "utility": self.utility, "horizon": self.horizon,
             "seed": self.seed, "posterior_convention": self.posterior_convention}
        for k in ("budget_fraction", "grid_size", "out", "G"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        for k in ("ranking", "oracle", "simulate"):
            if getattr(self, k):
                d[k] = getattr(self, k)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def replace(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig.from_dict(d)

    # -- model objects --------------------------------------------------------

    def make_prior(self) -> Prior:
        prior = prior_from_dict(self.prior)
        if self.grid_size is not None and isinstance(prior, BetaPrior):
            return GridPrior.from_beta(prior.alpha, prior.beta, self.grid_size)
        return prior

    def make_model(self) -> ObservationModel:
        return ObservationModel(self.gamma)

    def make_utility(self, horizon: int | None = None) -> Utility:
        return Utility(self.utility["kind"], horizon or self.horizon, self.utility.get("param"),
                       self.utility.get("shifted", True))
