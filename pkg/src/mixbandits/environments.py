"""Rested and restless bandit loops with oracle regret accounting.

One step is one selection.  In the rested loop only the chosen arm's clock
moves; in the restless loop every other arm is advanced by the same number of
raw steps, its symbols generated and discarded.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .oracle import regret_gaps

CSV_COLUMNS = ("step", "arm", "m", "b", "reward", "inst_regret", "cum_regret")


def arm_seed(seed: int, k: int) -> int:
    """Stream seed of arm ``k`` within run ``seed``."""
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1, np.uint64)[0])


def policy_seed(seed: int) -> int:
    return int(np.random.SeedSequence([int(seed), 0xB10C]).generate_state(1, np.uint64)[0])


@dataclass
class RunRecord:
    seed: int
    arms: np.ndarray
    m: np.ndarray
    b: np.ndarray
    rewards: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    summary: dict = field(default_factory=dict)
    config_hash: str = ""

    @property
    def horizon(self) -> int:
        return len(self.arms)

    def __eq__(self, other):
        if not isinstance(other, RunRecord):
            return NotImplemented
        return (self.seed == other.seed and self.config_hash == other.config_hash
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("arms", "m", "b", "rewards", "inst_regret", "cum_regret"))
                and self.summary == other.summary)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(self.horizon):
            w.writerow([i + 1, int(self.arms[i]), int(self.m[i]), int(self.b[i]),
                        repr(float(self.rewards[i])), repr(float(self.inst_regret[i])),
                        repr(float(self.cum_regret[i]))])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def summary_json(self) -> str:
        return json.dumps({"seed": self.seed, "config_hash": self.config_hash,
                           **self.summary}, sort_keys=True)

    def selection_share(self, arm: int, m: Optional[int] = None, b: Optional[int] = None,
                        final_fraction: float = 0.1) -> float:
        """Fraction of the last ``final_fraction`` of steps that chose (arm, m, b)."""
        start = self.horizon - max(1, int(math.ceil(final_fraction * self.horizon)))
        hit = self.arms[start:] == arm
        if m is not None:
            hit &= self.m[start:] == m
        if b is not None:
            hit &= self.b[start:] == b
        return float(hit.mean())


def _run(policy, arms, horizon: int, seed: int, gaps, restless: bool, config_hash: str,
         on_select: Optional[Callable]) -> RunRecord:
    if horizon < 1:
        raise ValueError("horizon must be positive")
    procs = [arm.fresh(arm_seed(seed, k)) for k, arm in enumerate(arms)]
    if len(procs) != policy.n_arms:
        raise ValueError("policy and environment disagree on the number of arms")
    policy.reset(policy_seed(seed))
    if gaps is None:
        gaps, notes = regret_gaps(policy, arms)
    else:
        notes = []
    gaps = [float(g) for g in gaps]

    chosen, rew_out = [], []
    k_arms = len(procs)
    select, play = policy.select, policy.play
    for _ in range(horizon):
        choice = select()
        if on_select is not None:
            on_select(policy, choice)
        k = choice.arm
        rew_out.append(play(choice, procs[k]))
        chosen.append(choice)
        if restless:
            steps = choice.steps
            for j in range(k_arms):
                if j != k:
                    procs[j].skip(steps)
    arms_out = np.array([c.arm for c in chosen], dtype=np.int64)
    m_out = np.array([c.m for c in chosen], dtype=np.int64)
    b_out = np.array([c.b for c in chosen], dtype=np.int64)
    rew_out = np.array(rew_out, dtype=float)
    inst = np.asarray(gaps, dtype=float)[arms_out]
    cum = np.cumsum(inst)
    total = float(cum[-1])

    pulls = np.bincount(arms_out, minlength=k_arms)
    means = policy.terminal_means()
    summary = {
        "policy": policy.name,
        "restless": restless,
        "horizon": horizon,
        "total_regret": total,
        "pulls": pulls.tolist(),
        "terminal_means": means,
        "gaps": gaps,
        "clocks": [p.clock for p in procs],
    }
    if notes:
        summary["warnings"] = notes
    return RunRecord(int(seed), arms_out, m_out, b_out, rew_out, inst, cum, summary, config_hash)


def run_rested(policy, arms: Sequence, horizon: int, seed: int, gaps=None,
               config_hash: str = "", on_select: Optional[Callable] = None) -> RunRecord:
    """Rested bandit: only the played arm's clock advances.

    ``arms`` are templates; each run draws fresh streams seeded from ``seed``.
    ``gaps`` defaults to the oracle gaps for the policy's regret definition.
    """
    return _run(policy, arms, horizon, seed, gaps, False, config_hash, on_select)


def run_restless(policy, arms: Sequence, horizon: int, seed: int, gaps=None,
                 config_hash: str = "", on_select: Optional[Callable] = None) -> RunRecord:
    """Restless bandit: every arm's clock advances by the played block's length."""
    return _run(policy, arms, horizon, seed, gaps, True, config_hash, on_select)


def config_digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
