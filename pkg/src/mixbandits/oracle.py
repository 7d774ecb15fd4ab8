"""Ground truth for tests and regret ledgers.

Exact block means and combination values by enumeration, and Monte Carlo
tail probabilities set against the concentration bounds they should obey.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binom
from statsmodels.stats.proportion import proportion_confint

from .errors import ContractError, InfeasibleError
from .mixing_math import (BlockGeometry, lambda_sum, m_sum, rested_skip_map,
                          restless_m_sum, restless_skip_map)
from .policies import COMBINATION, RESTLESS, decompositions
from .rewards import BlockReward, exact_mu, monte_carlo_mu

MODES = ("block", "rested", "restless")
EPS_GRID = tuple(round(0.05 * j, 2) for j in range(1, 11))
# comparisons against ε are made with this slack so ratios like 65/100 - 0.5 land on the grid
_FP = 1e-12


def block_mean_value(reward: BlockReward, arm, m: int, mc_samples: int = 1_000_000,
                     seed: int = 0, notes: Optional[list] = None) -> float:
    """Exact μ_m when enumerable, else a Monte Carlo mean with a note appended."""
    try:
        return exact_mu(reward, arm, m)
    except InfeasibleError:
        mean, se = monte_carlo_mu(reward, arm, m, mc_samples, seed)
        msg = (f"exact mean infeasible for {arm.kernel.kind} arm, m={m}; "
               f"Monte Carlo {mean:.6f} +/- {1.96 * se:.2e} (95%)")
        warnings.warn(msg)
        if notes is not None:
            notes.append(msg)
        return mean


@dataclass
class ValueTable:
    """ν[k, j] = β_j / M_k(b_j) · μ_{m_j}^k over the splits of s."""

    s: int
    combos: list
    mu: np.ndarray
    values: np.ndarray
    notes: list = field(default_factory=list)

    @property
    def best(self) -> tuple:
        k, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        m, b = self.combos[j]
        return int(k), m, b

    def arm_best(self, k: int) -> tuple:
        return self.combos[int(np.argmax(self.values[k]))]

    @property
    def arm_values(self) -> np.ndarray:
        return self.values.max(axis=1)

    @property
    def gaps(self) -> np.ndarray:
        v = self.arm_values
        return v.max() - v


def value_table(arms, rewards: Sequence[BlockReward], s: int,
                mu: Optional[np.ndarray] = None, mc_samples: int = 1_000_000) -> ValueTable:
    """Value of every (arm, m, b) split of s.

    ``mu`` overrides the block means: an array indexed ``[k, m - 1]``.
    """
    combos = decompositions(s)
    k_arms = len(arms)
    notes = []
    if mu is None:
        mu = np.zeros((k_arms, s))
        for k, (arm, rw) in enumerate(zip(arms, rewards)):
            for m in range(1, s + 1):
                mu[k, m - 1] = block_mean_value(rw, arm, m, mc_samples, seed=k, notes=notes)
    values = np.empty((k_arms, len(combos)))
    for k, arm in enumerate(arms):
        for j, (m, b) in enumerate(combos):
            values[k, j] = (s // (m + b)) / m_sum(arm.profile, b) * mu[k, m - 1]
    return ValueTable(s, combos, np.asarray(mu), values, notes)


def regret_gaps(policy, arms, mc_samples: int = 1_000_000) -> tuple:
    """Per-arm instantaneous regret under the policy's regret definition.

    Returns ``(gaps, notes)``.  Rested and restless policies compare block
    means μ_k over each arm's block length; the combination policy compares
    each arm's best split value with the overall best.
    """
    notes = []
    if policy.regret_definition == COMBINATION:
        table = value_table(arms, policy.rewards, policy.s, mc_samples=mc_samples)
        return table.gaps, table.notes
    lengths = policy.block_lengths()
    mus = np.array([block_mean_value(rw, arm, m, mc_samples, seed=k, notes=notes)
                    for k, (arm, rw, m) in enumerate(zip(arms, policy.rewards, lengths))])
    return mus.max() - mus, notes


def wilson_interval(count: int, n: int, level: float = 0.99) -> tuple:
    lo, hi = proportion_confint(count, n, alpha=1.0 - level, method="wilson")
    return float(lo), float(hi)


def binomial_mean_tail(p: float, n: int, eps: float, strict: bool = False) -> float:
    """P(|S/n - p| >= eps) (or > eps) for S ~ Binomial(n, p), by exact summation."""
    k = np.arange(n + 1)
    dev = np.abs(k / n - p)
    hit = dev > eps + _FP if strict else dev >= eps - _FP
    return float(math.fsum(binom.pmf(k[hit], n, p)))


def block_positions(mode: str, m: int, b: int, n: int) -> np.ndarray:
    """0-based raw indices of the n retained blocks, shape (n, m)."""
    t = np.arange(1, n * m + 1)
    if mode in ("block", "rested"):
        raw = np.array([rested_skip_map(m, b, int(x)) for x in t])
    elif mode == "restless":
        raw = np.array([restless_skip_map(m, b, int(x)) for x in t])
    else:
        raise ContractError(f"unknown mode {mode!r}")
    return (raw - 1).reshape(n, m)


def tail_bounds(mode: str, profile, m: int, b: int, n: int, eps: float) -> tuple:
    """(bound compared against, two-sided companion) for one ε, both clipped to 1."""
    if mode == "block":
        lam = lambda_sum(profile, BlockGeometry(m, b), n)
        one = math.exp(-n * eps * eps / (2.0 * lam * lam))
        return min(1.0, one), min(1.0, 2.0 * one)
    if mode == "rested":
        val = min(1.0, 2.0 * math.exp(-n * eps * eps / 2.0))
        return val, val
    mm = restless_m_sum(profile, b)
    val = min(1.0, 2.0 * math.exp(-n * eps * eps / (2.0 * mm * mm)))
    return val, val


@dataclass
class TailRow:
    eps: float
    empirical: float
    wilson_lo: float
    wilson_hi: float
    bound: float
    bound_two_sided: float

    @property
    def passed(self) -> bool:
        return self.wilson_hi <= self.bound


@dataclass
class TailTable:
    mode: str
    m: int
    b: int
    n: int
    trials: int
    mu: float
    rows: list
    normalizer: float = 1.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "empirical", "wilson_hi", "bound", "pass",
                        "wilson_lo", "bound_two_sided"])
            for r in self.rows:
                w.writerow([r.eps, r.empirical, r.wilson_hi, r.bound, int(r.passed),
                            r.wilson_lo, r.bound_two_sided])


def tail_deviations(arm, reward: BlockReward, m: int, b: int, mode: str, n: int,
                    trials: int, seed: int, mu: float, batch: int = 20_000) -> np.ndarray:
    """|block-average - μ| for each of ``trials`` independent stationary trajectories."""
    pos = block_positions(mode, m, b, n)
    length = int(pos.max()) + 1
    vals = np.asarray(arm.alphabet.values)
    out = np.empty(trials)
    children = np.random.SeedSequence(seed).spawn(math.ceil(trials / batch))
    done = 0
    for child in children:
        size = min(batch, trials - done)
        paths = arm.sample_paths(size, length, int(child.generate_state(1)[0]))
        psi = reward.evaluate_many(vals[paths[:, pos]])
        out[done:done + size] = np.abs(psi.mean(axis=1) - mu)
        done += size
    return out


def tail_estimate(arm, reward: BlockReward, m: int, b: int, mode: str, n: int,
                  epsilons: Sequence[float] = EPS_GRID, trials: int = 100_000,
                  seed: int = 0, mu: Optional[float] = None,
                  level: float = 0.99) -> TailTable:
    """Empirical exceedance probabilities of a block estimator, with their bounds.

    Modes: ``block`` -- blocks of m every m+b raw steps, event |dev| >= ε;
    ``rested`` -- same blocks, event |dev| / M(b) > ε;
    ``restless`` -- first block then contiguous blocks after one gap of b,
    event |dev| > ε.
    """
    if mode not in MODES:
        raise ContractError(f"unknown mode {mode!r}")
    if trials < 10_000:
        raise ContractError("need at least 10^4 trials")
    reward.check_length(m)
    if mu is None:
        mu = exact_mu(reward, arm, m)
    dev = tail_deviations(arm, reward, m, b, mode, n, trials, seed, mu)
    norm = m_sum(arm.profile, b) if mode == "rested" else 1.0
    dev = dev / norm
    rows = []
    for eps in epsilons:
        if mode == "block":
            count = int(np.count_nonzero(dev >= eps - _FP))
        else:
            count = int(np.count_nonzero(dev > eps + _FP))
        lo, hi = wilson_interval(count, trials, level)
        bound, two = tail_bounds(mode, arm.profile, m, b, n, eps)
        rows.append(TailRow(float(eps), count / trials, lo, hi, bound, two))
    return TailTable(mode, m, b, n, trials, float(mu), rows, norm)


def block_reward_phi(arm, reward: BlockReward, m: int, b: int, samples: int = 100_000,
                     seed: int = 0):
    """Single-symbol φ estimate between consecutive block rewards ψ(X_1..X_m) and
    ψ(X_{m+b+1}..X_{2m+b}), from independent stationary trajectories."""
    from .processes import empirical_phi_from_pairs

    reward.check_length(m)
    if b < 0:
        raise ContractError("gap must be nonnegative")
    vals = np.asarray(arm.alphabet.values)
    paths = arm.sample_paths(samples, 2 * m + b, seed)
    first = reward.evaluate_many(vals[paths[:, :m]])
    second = reward.evaluate_many(vals[paths[:, m + b:]])
    levels, codes = np.unique(np.concatenate([first, second]), return_inverse=True)
    return empirical_phi_from_pairs(codes[:samples], codes[samples:], len(levels))
