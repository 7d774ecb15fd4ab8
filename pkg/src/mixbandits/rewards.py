"""Block reward functions ψ_m with range [0, 1], 1-Lipschitz in Hamming distance.

A :class:`BlockReward` scores ``m`` consecutive outcomes of one arm.
``block_mean`` and ``block_max`` accept any block length; ``pattern`` and
``weighted_mean`` carry their own length.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, InfeasibleError

BLOCK_MEAN = "block_mean"
BLOCK_MAX = "block_max"
PATTERN = "pattern"
WEIGHTED_MEAN = "weighted_mean"

REWARD_KINDS = (BLOCK_MEAN, BLOCK_MAX, PATTERN, WEIGHTED_MEAN)

ENUMERATION_LIMIT = 10_000_000


@dataclass(frozen=True)
class BlockReward:
    kind: str = BLOCK_MEAN
    params: tuple = ()
    lipschitz: float = 1.0

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ContractError(f"unknown reward kind {self.kind!r}")
        if self.kind == PATTERN and not self.params:
            raise ContractError("pattern reward needs a target")
        if self.kind == WEIGHTED_MEAN:
            w = self.params
            if not w or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
                raise ContractError("weights must be nonnegative and sum to 1")

    @classmethod
    def mean(cls) -> "BlockReward":
        return cls(BLOCK_MEAN)

    @classmethod
    def maximum(cls) -> "BlockReward":
        return cls(BLOCK_MAX)

    @classmethod
    def pattern(cls, target: Sequence[float]) -> "BlockReward":
        return cls(PATTERN, tuple(float(v) for v in target))

    @classmethod
    def weighted(cls, weights: Sequence[float]) -> "BlockReward":
        return cls(WEIGHTED_MEAN, tuple(float(v) for v in weights))

    @property
    def fixed_length(self) -> Optional[int]:
        if self.kind in (PATTERN, WEIGHTED_MEAN):
            return len(self.params)
        return None

    def check_length(self, m: int) -> None:
        if m < 1:
            raise ContractError("block length must be positive")
        fixed = self.fixed_length
        if fixed is not None and fixed != m:
            raise ContractError(f"{self.kind} reward expects blocks of length {fixed}, got {m}")

    def __call__(self, block: Sequence[float]) -> float:
        kind = self.kind
        if kind == BLOCK_MEAN:
            return sum(block) / len(block)
        if kind == BLOCK_MAX:
            return max(block)
        if kind == PATTERN:
            return 1.0 if tuple(block) == self.params else 0.0
        return sum(w * x for w, x in zip(self.params, block))

    def evaluate_many(self, blocks: np.ndarray) -> np.ndarray:
        """Vectorized ψ over the last axis of ``blocks`` (values, not indices)."""
        blocks = np.asarray(blocks, dtype=float)
        kind = self.kind
        if kind == BLOCK_MEAN:
            return blocks.mean(axis=-1)
        if kind == BLOCK_MAX:
            return blocks.max(axis=-1)
        if kind == PATTERN:
            return np.all(blocks == np.asarray(self.params), axis=-1).astype(float)
        return blocks @ np.asarray(self.params)

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == PATTERN:
            d["target"] = list(self.params)
        elif self.kind == WEIGHTED_MEAN:
            d["weights"] = list(self.params)
        return d


def evaluate(reward: BlockReward, block: Sequence[float], m: Optional[int] = None) -> float:
    """ψ_m(block); raises :class:`ContractError` on a length mismatch."""
    if m is not None and len(block) != m:
        raise ContractError(f"block has length {len(block)}, declared m = {m}")
    reward.check_length(len(block))
    return reward(block)


def all_blocks(n_symbols: int, m: int) -> np.ndarray:
    """Every index sequence in {0..n_symbols-1}^m, last coordinate fastest."""
    grids = np.indices((n_symbols,) * m, dtype=np.int8)
    return grids.reshape(m, -1).T


def check_lipschitz(reward: BlockReward, values: Sequence[float], m: int,
                    exhaustive_limit: int = 100_000, pairs: int = 100_000,
                    seed: int = 0) -> float:
    """Largest violation of range and Hamming-Lipschitz constraints (0.0 means none).

    Exhaustive over single-coordinate changes when |U|^m is at most
    ``exhaustive_limit`` (enough, by the triangle inequality along a path);
    random pairs at random Hamming distance otherwise.
    """
    reward.check_length(m)
    vals = np.asarray(values, dtype=float)
    k = len(vals)
    worst = 0.0
    if k ** m <= exhaustive_limit:
        idx = all_blocks(k, m)
        psi = reward.evaluate_many(vals[idx])
        worst = max(worst, float(-psi.min()), float(psi.max() - 1.0))
        weights = k ** np.arange(m - 1, -1, -1)
        flat = idx.astype(np.int64) @ weights
        for j in range(m):
            for shift in range(1, k):
                new = (idx[:, j].astype(np.int64) + shift) % k
                other = flat + (new - idx[:, j]) * weights[j]
                worst = max(worst, float(np.abs(psi - psi[other]).max()) - 1.0)
        return max(worst, 0.0)
    rng = np.random.default_rng(seed)
    x = rng.integers(0, k, size=(pairs, m))
    y = x.copy()
    dist = rng.integers(1, m + 1, size=pairs)
    for row in range(pairs):
        cols = rng.choice(m, size=dist[row], replace=False)
        y[row, cols] = (x[row, cols] + rng.integers(1, k, size=len(cols))) % k
    px, py = reward.evaluate_many(vals[x]), reward.evaluate_many(vals[y])
    hamming = (x != y).sum(axis=1)
    worst = max(float(-min(px.min(), py.min())), float(max(px.max(), py.max()) - 1.0))
    worst = max(worst, float((np.abs(px - py) - hamming).max()))
    return max(worst, 0.0)


def _markov_block_probs(pi: np.ndarray, P: np.ndarray, m: int) -> np.ndarray:
    k = len(pi)
    probs = pi.copy()
    for _ in range(m - 1):
        last = np.arange(len(probs)) % k
        probs = (probs[:, None] * P[last]).ravel()
    return probs


def exact_mu(reward: BlockReward, arm, m: int, limit: int = ENUMERATION_LIMIT) -> float:
    """E ψ_m(X_1..X_m) under the arm's stationary law, by full enumeration.

    Raises :class:`InfeasibleError` when the enumeration would exceed ``limit``
    sequences; fall back to :func:`monte_carlo_mu` in that case.
    """
    reward.check_length(m)
    kernel = arm.kernel
    vals = np.asarray(arm.alphabet.values)
    k = len(vals)
    kind = kernel.kind
    if kind == "finite_range":
        return _finite_range_mu(reward, kernel, vals, m, limit)
    if k ** m > limit:
        raise InfeasibleError(f"{k}^{m} blocks exceed the enumeration limit {limit}")
    if m == 1:
        probs = np.asarray(kernel.stationary)
        return float(math.fsum(probs * reward.evaluate_many(vals[:, None])))
    idx = all_blocks(k, m)
    psi = reward.evaluate_many(vals[idx])
    if kind == "iid":
        p = np.asarray(kernel.stationary)
        probs = p[idx].prod(axis=1)
    else:
        probs = _markov_block_probs(np.asarray(kernel.pi), np.asarray(kernel.matrix), m)
    return float(math.fsum(probs * psi))


def _finite_range_mu(reward, kernel, vals, m, limit) -> float:
    r = kernel.order
    k = len(vals)
    n_lags = (r + 1) ** m
    if k ** (m + r) * n_lags > limit:
        raise InfeasibleError("finite-range enumeration exceeds the limit")
    p = np.asarray(kernel.probs)
    innov = all_blocks(k, m + r)
    innov_p = p[innov].prod(axis=1)
    lag_p = np.array([1.0 - kernel.stick] + [kernel.stick / r] * r)
    terms = []
    for lags in itertools.product(range(r + 1), repeat=m):
        w = float(np.prod(lag_p[list(lags)]))
        if w == 0.0:
            continue
        pos = np.arange(m) + r - np.asarray(lags)
        psi = reward.evaluate_many(vals[innov[:, pos]])
        terms.append(w * math.fsum(innov_p * psi))
    return float(math.fsum(terms))


def monte_carlo_mu(reward: BlockReward, arm, m: int, samples: int = 1_000_000,
                   seed: int = 0) -> tuple:
    """(mean, standard error) of ψ_m over independent stationary blocks."""
    reward.check_length(m)
    vals = np.asarray(arm.alphabet.values)
    total, total_sq, done = 0.0, 0.0, 0
    batch = max(1, min(samples, 200_000))
    ss = np.random.SeedSequence(seed)
    for child in ss.spawn(math.ceil(samples / batch)):
        size = min(batch, samples - done)
        paths = arm.sample_paths(size, m, int(child.generate_state(1)[0]))
        psi = reward.evaluate_many(vals[paths])
        total += psi.sum()
        total_sq += (psi * psi).sum()
        done += size
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    return float(mean), float(math.sqrt(var / done))
