"""Experiment configs: strict YAML with canonical keys.

Unknown keys, missing required keys and incompatible scenario/policy pairs
raise :class:`ConfigError` naming the offending field, e.g.
``policy.alpha: must exceed 2``.  :func:`dump_config` writes the canonical
form (every optional key filled in), so parse -> dump -> parse is stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Any, Optional

import yaml

from ..errors import ConfigError, MixBanditError
from ..oracle import EPS_GRID, MODES
from ..policies import (BlockUCB, ClassicalUCB, ComboUCB, FixedArmPolicy, RestlessUCB,
                        UniformPolicy)
from ..processes import make_finite_range_arm, make_iid_arm, make_markov_arm
from ..rewards import BlockReward

SCENARIOS = ("rested_fixed", "rested_combo", "restless", "concentration_lab")
ARM_KINDS = ("iid", "markov", "finite_range")
REWARD_KINDS = ("block_mean", "block_max", "pattern", "weighted_mean")
POLICY_KINDS = ("ucb", "block_ucb", "combo_ucb", "restless_ucb", "uniform", "fixed")
ASSERTION_KINDS = ("zero_regret", "identical_choices", "regret_below_bound", "log_growth",
                   "optimal_share", "tails_dominated", "binomial_match")

COMPATIBLE = {
    "rested_fixed": ("ucb", "block_ucb", "uniform", "fixed"),
    "rested_combo": ("combo_ucb",),
    "restless": ("restless_ucb", "ucb", "uniform", "fixed"),
}
SIM_ASSERTIONS = ("zero_regret", "identical_choices", "regret_below_bound", "log_growth",
                  "optimal_share")
LAB_ASSERTIONS = ("tails_dominated", "binomial_match")


def _mapping(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(where, "expected a mapping")
    return obj


def _check_keys(obj: dict, allowed, required, where: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}" if where else str(key), "unknown key")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{where}.{key}" if where else key, "missing required key")


def _int(value, where: str, lo: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ConfigError(where, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(where, f"must be >= {lo}")
    return int(value)


def _float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(where, "must be finite")
    return value


def _floats(value, where: str) -> tuple:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(where, "expected a nonempty list of numbers")
    return tuple(_float(v, f"{where}[{i}]") for i, v in enumerate(value))


@dataclass(frozen=True)
class ArmSpec:
    kind: str
    probs: Optional[tuple] = None
    matrix: Optional[tuple] = None
    order: Optional[int] = None
    stick: Optional[float] = None
    alphabet: Optional[tuple] = None

    KEYS = {"iid": ("probs",), "markov": ("matrix",), "finite_range": ("probs", "order")}
    OPTIONAL = {"iid": ("alphabet",), "markov": ("alphabet",),
                "finite_range": ("stick", "alphabet")}

    @classmethod
    def parse(cls, obj, where: str) -> "ArmSpec":
        obj = _mapping(obj, where)
        kind = obj.get("kind")
        if kind not in ARM_KINDS:
            raise ConfigError(f"{where}.kind", f"expected one of {ARM_KINDS}, got {kind!r}")
        required = cls.KEYS[kind]
        _check_keys(obj, ("kind",) + required + cls.OPTIONAL[kind], required, where)
        kw: dict = {"kind": kind}
        if "probs" in obj:
            kw["probs"] = _floats(obj["probs"], f"{where}.probs")
        if "matrix" in obj:
            rows = obj["matrix"]
            if not isinstance(rows, (list, tuple)) or not rows:
                raise ConfigError(f"{where}.matrix", "expected a list of rows")
            kw["matrix"] = tuple(_floats(r, f"{where}.matrix[{i}]") for i, r in enumerate(rows))
        if "order" in obj:
            kw["order"] = _int(obj["order"], f"{where}.order", 1)
        if kind == "finite_range":
            kw["stick"] = _float(obj.get("stick", 0.5), f"{where}.stick")
        size = len(kw["matrix"]) if kind == "markov" else len(kw["probs"])
        if obj.get("alphabet") is not None:
            kw["alphabet"] = _floats(obj["alphabet"], f"{where}.alphabet")
        else:
            kw["alphabet"] = tuple(i / (size - 1) for i in range(size)) if size > 1 else (0.0,)
        spec = cls(**kw)
        try:
            spec.build(0)
        except MixBanditError as exc:
            raise ConfigError(where, str(exc)) from exc
        return spec

    def build(self, seed: int = 0):
        if self.kind == "iid":
            return make_iid_arm(self.probs, self.alphabet, seed)
        if self.kind == "markov":
            return make_markov_arm(self.matrix, self.alphabet, seed)
        return make_finite_range_arm(self.probs, self.order, self.alphabet, seed, self.stick)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        for key in self.KEYS[self.kind] + self.OPTIONAL[self.kind]:
            value = getattr(self, key)
            if key == "matrix":
                value = [list(r) for r in value]
            elif isinstance(value, tuple):
                value = list(value)
            d[key] = value
        return d


@dataclass(frozen=True)
class RewardSpec:
    kind: str = "block_mean"
    target: Optional[tuple] = None
    weights: Optional[tuple] = None

    @classmethod
    def parse(cls, obj, where: str) -> "RewardSpec":
        obj = _mapping(obj, where)
        kind = obj.get("kind")
        if kind not in REWARD_KINDS:
            raise ConfigError(f"{where}.kind", f"expected one of {REWARD_KINDS}, got {kind!r}")
        extra = {"pattern": ("target",), "weighted_mean": ("weights",)}.get(kind, ())
        _check_keys(obj, ("kind",) + extra, extra, where)
        kw = {key: _floats(obj[key], f"{where}.{key}") for key in extra}
        spec = cls(kind, **kw)
        try:
            spec.build()
        except MixBanditError as exc:
            raise ConfigError(where, str(exc)) from exc
        return spec

    def build(self) -> BlockReward:
        if self.kind == "block_mean":
            return BlockReward.mean()
        if self.kind == "block_max":
            return BlockReward.maximum()
        if self.kind == "pattern":
            return BlockReward.pattern(self.target)
        return BlockReward.weighted(self.weights)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.target is not None:
            d["target"] = list(self.target)
        if self.weights is not None:
            d["weights"] = list(self.weights)
        return d


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    alpha: float = 3.0
    m: int = 1
    b: int = 0
    s: Optional[int] = None
    m_k: Optional[tuple] = None
    arm: Optional[int] = None

    @classmethod
    def parse(cls, obj, where: str, n_arms: int) -> "PolicySpec":
        obj = _mapping(obj, where)
        kind = obj.get("kind")
        if kind not in POLICY_KINDS:
            raise ConfigError(f"{where}.kind", f"expected one of {POLICY_KINDS}, got {kind!r}")
        allowed = ["kind", "alpha"]
        if kind in ("ucb", "block_ucb", "uniform", "fixed"):
            allowed += ["m", "b"]
        if kind == "combo_ucb":
            allowed.append("s")
        if kind == "restless_ucb":
            allowed.append("m_k")
        if kind == "fixed":
            allowed.append("arm")
        required = {"combo_ucb": ("s",), "fixed": ("arm",)}.get(kind, ())
        _check_keys(obj, allowed, required, where)
        alpha = _float(obj.get("alpha", 3.0), f"{where}.alpha")
        if kind not in ("uniform", "fixed") and alpha <= 2.0:
            raise ConfigError(f"{where}.alpha", "must exceed 2")
        kw: dict = {"kind": kind, "alpha": alpha}
        if "m" in allowed:
            kw["m"] = _int(obj.get("m", 1), f"{where}.m", 1)
            kw["b"] = _int(obj.get("b", 0), f"{where}.b", 0)
        if kind == "combo_ucb":
            kw["s"] = _int(obj["s"], f"{where}.s", 1)
        if kind == "restless_ucb":
            mk = obj.get("m_k", [1] * n_arms)
            if not isinstance(mk, (list, tuple)) or len(mk) != n_arms:
                raise ConfigError(f"{where}.m_k", f"expected {n_arms} block lengths")
            kw["m_k"] = tuple(_int(v, f"{where}.m_k[{i}]", 1) for i, v in enumerate(mk))
        if kind == "fixed":
            kw["arm"] = _int(obj["arm"], f"{where}.arm", 0)
            if kw["arm"] >= n_arms:
                raise ConfigError(f"{where}.arm", f"only {n_arms} arms")
        return cls(**kw)

    def build(self, rewards, profiles, seed: int = 0):
        if self.kind == "ucb":
            return ClassicalUCB(rewards, self.alpha, self.m, self.b)
        if self.kind == "block_ucb":
            return BlockUCB(rewards, profiles, self.alpha, self.m, self.b)
        if self.kind == "combo_ucb":
            return ComboUCB(rewards, profiles, self.alpha, self.s)
        if self.kind == "restless_ucb":
            return RestlessUCB(rewards, profiles, self.alpha, self.m_k)
        if self.kind == "uniform":
            return UniformPolicy(rewards, self.m, self.b, seed)
        return FixedArmPolicy(rewards, self.arm, self.m, self.b)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "alpha": self.alpha}
        if self.kind in ("ucb", "block_ucb", "uniform", "fixed"):
            d["m"], d["b"] = self.m, self.b
        if self.kind == "combo_ucb":
            d["s"] = self.s
        if self.kind == "restless_ucb":
            d["m_k"] = list(self.m_k)
        if self.kind == "fixed":
            d["arm"] = self.arm
        return d


@dataclass(frozen=True)
class AssertionSpec:
    """One declared check.  Parameters per kind:

    ``zero_regret`` -- none; ``identical_choices`` -- ``policies`` (list of
    policy specs run on the same seeds); ``regret_below_bound`` -- none;
    ``log_growth`` -- ``start`` (default 1000), ``tolerance`` (default 0.1);
    ``optimal_share`` -- ``threshold`` (0.9), ``final_fraction`` (0.1);
    ``tails_dominated`` and ``binomial_match`` -- none.
    """

    kind: str
    policies: tuple = ()
    start: Optional[int] = None
    tolerance: Optional[float] = None
    threshold: Optional[float] = None
    final_fraction: Optional[float] = None

    @classmethod
    def parse(cls, obj, where: str, n_arms: int, scenario: str) -> "AssertionSpec":
        obj = _mapping(obj, where)
        kind = obj.get("kind")
        if kind not in ASSERTION_KINDS:
            raise ConfigError(f"{where}.kind",
                              f"expected one of {ASSERTION_KINDS}, got {kind!r}")
        allowed_kinds = LAB_ASSERTIONS if scenario == "concentration_lab" else SIM_ASSERTIONS
        if kind not in allowed_kinds:
            raise ConfigError(f"{where}.kind", f"not available for scenario {scenario}")
        extra = {"identical_choices": ("policies",), "log_growth": ("start", "tolerance"),
                 "optimal_share": ("threshold", "final_fraction")}.get(kind, ())
        required = ("policies",) if kind == "identical_choices" else ()
        _check_keys(obj, ("kind",) + extra, required, where)
        kw: dict = {"kind": kind}
        if kind == "identical_choices":
            items = obj["policies"]
            if not isinstance(items, list) or not items:
                raise ConfigError(f"{where}.policies", "expected a nonempty list")
            specs = []
            for i, item in enumerate(items):
                spec = PolicySpec.parse(item, f"{where}.policies[{i}]", n_arms)
                _check_compatible(scenario, spec, f"{where}.policies[{i}].kind")
                specs.append(spec)
            kw["policies"] = tuple(specs)
        if kind == "log_growth":
            kw["start"] = _int(obj.get("start", 1000), f"{where}.start", 2)
            kw["tolerance"] = _float(obj.get("tolerance", 0.1), f"{where}.tolerance")
        if kind == "optimal_share":
            kw["threshold"] = _float(obj.get("threshold", 0.9), f"{where}.threshold")
            kw["final_fraction"] = _float(obj.get("final_fraction", 0.1),
                                          f"{where}.final_fraction")
            if not 0.0 < kw["final_fraction"] <= 1.0:
                raise ConfigError(f"{where}.final_fraction", "must lie in (0, 1]")
        return cls(**kw)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "identical_choices":
            d["policies"] = [p.to_dict() for p in self.policies]
        if self.kind == "log_growth":
            d["start"], d["tolerance"] = self.start, self.tolerance
        if self.kind == "optimal_share":
            d["threshold"], d["final_fraction"] = self.threshold, self.final_fraction
        return d


@dataclass(frozen=True)
class LabCase:
    arm: int
    reward: int
    mode: str
    m: int
    b: int
    n: int

    @classmethod
    def parse(cls, obj, where: str, n_arms: int, n_rewards: int) -> "LabCase":
        obj = _mapping(obj, where)
        keys = ("arm", "reward", "mode", "m", "b", "n")
        _check_keys(obj, keys, ("arm", "mode", "n"), where)
        arm = _int(obj["arm"], f"{where}.arm", 0)
        if arm >= n_arms:
            raise ConfigError(f"{where}.arm", f"only {n_arms} arms")
        reward = _int(obj.get("reward", arm), f"{where}.reward", 0)
        if reward >= n_rewards:
            raise ConfigError(f"{where}.reward", f"only {n_rewards} rewards")
        mode = obj["mode"]
        if mode not in MODES:
            raise ConfigError(f"{where}.mode", f"expected one of {MODES}, got {mode!r}")
        return cls(arm, reward, mode, _int(obj.get("m", 1), f"{where}.m", 1),
                   _int(obj.get("b", 0), f"{where}.b", 0), _int(obj["n"], f"{where}.n", 1))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class LabSpec:
    cases: tuple
    trials: int = 100_000
    level: float = 0.99
    epsilons: tuple = EPS_GRID

    @classmethod
    def parse(cls, obj, where: str, n_arms: int, n_rewards: int) -> "LabSpec":
        obj = _mapping(obj, where)
        _check_keys(obj, ("cases", "trials", "level", "epsilons"), ("cases",), where)
        items = obj["cases"]
        if not isinstance(items, list) or not items:
            raise ConfigError(f"{where}.cases", "expected a nonempty list")
        cases = tuple(LabCase.parse(c, f"{where}.cases[{i}]", n_arms, n_rewards)
                      for i, c in enumerate(items))
        trials = _int(obj.get("trials", 100_000), f"{where}.trials", 10_000)
        level = _float(obj.get("level", 0.99), f"{where}.level")
        if not 0.0 < level < 1.0:
            raise ConfigError(f"{where}.level", "must lie in (0, 1)")
        eps = _floats(obj.get("epsilons", list(EPS_GRID)), f"{where}.epsilons")
        return cls(cases, trials, level, eps)

    def to_dict(self) -> dict:
        return {"cases": [c.to_dict() for c in self.cases], "trials": self.trials,
                "level": self.level, "epsilons": list(self.epsilons)}


def _check_compatible(scenario: str, policy: PolicySpec, where: str) -> None:
    if policy.kind not in COMPATIBLE[scenario]:
        raise ConfigError(where, f"policy {policy.kind!r} cannot run in scenario {scenario!r}"
                          f" (allowed: {', '.join(COMPATIBLE[scenario])})")


TOP_KEYS = ("name", "scenario", "arms", "rewards", "policy", "horizon", "seeds", "output",
            "assertions", "concentration")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    arms: tuple
    rewards: tuple
    policy: Optional[PolicySpec] = None
    horizon: Optional[int] = None
    seeds: tuple = (0,)
    output: str = "runs"
    assertions: tuple = ()
    concentration: Optional[LabSpec] = None
    name: str = "experiment"

    @property
    def is_lab(self) -> bool:
        return self.scenario == "concentration_lab"

    def build_arms(self, seeds=None) -> list:
        return [a.build(0 if seeds is None else seeds[k]) for k, a in enumerate(self.arms)]

    def build_rewards(self) -> list:
        return [r.build() for r in self.rewards]

    def build_policy(self, spec: Optional[PolicySpec] = None, seed: int = 0):
        spec = spec or self.policy
        arms = self.build_arms()
        return spec.build(self.build_rewards(), [a.profile for a in arms], seed)

    def to_dict(self) -> dict:
        d: dict = {"name": self.name, "scenario": self.scenario,
                   "arms": [a.to_dict() for a in self.arms],
                   "rewards": [r.to_dict() for r in self.rewards]}
        if self.policy is not None:
            d["policy"] = self.policy.to_dict()
            d["horizon"] = self.horizon
        d["seeds"] = list(self.seeds)
        d["output"] = self.output
        d["assertions"] = [a.to_dict() for a in self.assertions]
        if self.concentration is not None:
            d["concentration"] = self.concentration.to_dict()
        return d

    def with_seeds(self, base: Optional[int] = None, count: Optional[int] = None
                   ) -> "ExperimentConfig":
        if base is None and count is None:
            return self
        base = self.seeds[0] if base is None else base
        count = len(self.seeds) if count is None else count
        if count < 1:
            raise ConfigError("seeds.count", "must be >= 1")
        return _replace(self, seeds=tuple(range(base, base + count)))

    def with_output(self, output: Optional[str]) -> "ExperimentConfig":
        return self if output is None else _replace(self, output=str(output))


def _replace(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    from dataclasses import replace
    return replace(cfg, **kw)


def _parse_seeds(obj) -> tuple:
    if isinstance(obj, dict):
        _check_keys(obj, ("base", "count"), ("count",), "seeds")
        base = _int(obj.get("base", 0), "seeds.base", 0)
        count = _int(obj["count"], "seeds.count", 1)
        return tuple(range(base, base + count))
    if isinstance(obj, list) and obj:
        seeds = tuple(_int(s, f"seeds[{i}]", 0) for i, s in enumerate(obj))
        if len(set(seeds)) != len(seeds):
            raise ConfigError("seeds", "duplicate seeds")
        return seeds
    if isinstance(obj, int) and not isinstance(obj, bool):
        return (_int(obj, "seeds", 0),)
    raise ConfigError("seeds", "expected a list of seeds or {base, count}")


def config_from_dict(obj: Any) -> ExperimentConfig:
    obj = _mapping(obj, "config")
    _check_keys(obj, TOP_KEYS, ("scenario", "arms", "rewards"), "")
    scenario = obj["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"expected one of {SCENARIOS}, got {scenario!r}")
    arm_items = obj["arms"]
    if not isinstance(arm_items, list) or not arm_items:
        raise ConfigError("arms", "expected a nonempty list")
    arms = tuple(ArmSpec.parse(a, f"arms[{i}]") for i, a in enumerate(arm_items))
    rew_items = obj["rewards"]
    if isinstance(rew_items, dict):
        rew_items = [rew_items] * len(arms)
    if not isinstance(rew_items, list) or not rew_items:
        raise ConfigError("rewards", "expected a list with one reward per arm")
    if len(rew_items) != len(arms):
        raise ConfigError("rewards", f"expected {len(arms)} rewards, got {len(rew_items)}")
    rewards = tuple(RewardSpec.parse(r, f"rewards[{i}]") for i, r in enumerate(rew_items))
    name = obj.get("name", "experiment")
    if not isinstance(name, str) or not name:
        raise ConfigError("name", "expected a nonempty string")
    output = obj.get("output", f"runs/{name}")
    if not isinstance(output, str) or not output:
        raise ConfigError("output", "expected a path")
    seeds = _parse_seeds(obj.get("seeds", [0]))

    policy = horizon = lab = None
    if scenario == "concentration_lab":
        for key in ("policy", "horizon"):
            if key in obj:
                raise ConfigError(key, "not used by concentration_lab")
        if "concentration" not in obj:
            raise ConfigError("concentration", "missing required key")
        lab = LabSpec.parse(obj["concentration"], "concentration", len(arms), len(rewards))
    else:
        if "concentration" in obj:
            raise ConfigError("concentration", "only used by concentration_lab")
        for key in ("policy", "horizon"):
            if key not in obj:
                raise ConfigError(key, "missing required key")
        policy = PolicySpec.parse(obj["policy"], "policy", len(arms))
        _check_compatible(scenario, policy, "policy.kind")
        horizon = _int(obj["horizon"], "horizon", 1)
        try:
            cfg_rewards = [r.build() for r in rewards]
            policy.build(cfg_rewards, [a.build().profile for a in arms])
        except MixBanditError as exc:
            raise ConfigError("policy", str(exc)) from exc

    items = obj.get("assertions", [])
    if not isinstance(items, list):
        raise ConfigError("assertions", "expected a list")
    assertions = tuple(AssertionSpec.parse(a, f"assertions[{i}]", len(arms), scenario)
                       for i, a in enumerate(items))
    return ExperimentConfig(scenario, arms, rewards, policy, horizon, seeds, output,
                            assertions, lab, name)


def parse_config(text: str) -> ExperimentConfig:
    try:
        obj = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}") from exc
    return config_from_dict(obj)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
