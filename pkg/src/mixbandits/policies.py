"""Arm-selection policies.

Every policy owns its counters and is reset at the start of a run.  The
environment asks for a :class:`Choice`, hands the chosen arm's process to
:meth:`Policy.play`, and (restless case) advances every other arm by
``choice.steps`` raw symbols.

Shared conventions:

* one forced pull per arm, in arm order, before any index is computed;
* ties in the argmax go to the lowest arm id;
* ``t`` in ``log t`` is the 1-based index of the current selection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError
from .mixing_math import (ZERO, BlockGeometry, MixingProfile, MonotoneMap, block_theta,
                          lambda_sum, m_sum, quadratic_gamma, restless_m_sum)
from .rewards import BlockReward

RESTED_BLOCK = "rested_block"
COMBINATION = "combination"
RESTLESS = "restless"


@dataclass(frozen=True)
class Choice:
    arm: int
    m: int
    b: int
    steps: int


# Index formulas, kept as plain functions so they can be checked by hand.

def ucb_bonus(alpha: float, log_t: float, n: int) -> float:
    return math.sqrt(2.0 * alpha * log_t / n)


def block_ucb_index(mean: float, lam: float, alpha: float, log_t: float, n: int) -> float:
    return mean + lam * math.sqrt(2.0 * alpha * log_t / n)


def restless_ucb_index(mean: float, mm: float, alpha: float, log_t: float, n: int) -> float:
    return mean + math.sqrt(2.0 * alpha * log_t / (n * mm * mm))


def combo_ucb_index(psi_hat: float, m: int, b: int, s: int, alpha: float, log_t: float,
                    n: int) -> float:
    return s / (m + b) * (psi_hat + math.sqrt(2.0 * alpha * (m + b) * log_t / (s * n)))


def decompositions(s: int) -> list:
    """All (m, b) with m >= 1, b >= 0 and (m + b) dividing s, by block size then gap."""
    out = []
    for d in range(1, s + 1):
        if s % d == 0:
            out.extend((d - b, b) for b in range(d))
    return out


_m_sum = lru_cache(maxsize=None)(m_sum)
_restless_m_sum = lru_cache(maxsize=None)(restless_m_sum)


class Policy:
    """Base class: per-arm pull counts and reward sums over fixed (m, b) blocks."""

    regret_definition = RESTED_BLOCK
    name = "policy"

    def __init__(self, rewards: Sequence[BlockReward], alpha: float = 3.0, m: int = 1,
                 b: int = 0, check_alpha: bool = True):
        if check_alpha and alpha <= 2.0:
            raise ContractError("alpha must exceed 2")
        self.rewards = list(rewards)
        self.n_arms = len(self.rewards)
        if self.n_arms < 1:
            raise ContractError("need at least one arm")
        self.alpha = float(alpha)
        self.geometry = BlockGeometry(m, b)
        self._check_rewards()
        self.reset()

    def _check_rewards(self):
        for rw in self.rewards:
            rw.check_length(self.m)

    @property
    def m(self) -> int:
        return self.geometry.m

    @property
    def b(self) -> int:
        return self.geometry.b

    def block_lengths(self) -> list:
        return [self.m] * self.n_arms

    def reset(self, seed: Optional[int] = None) -> None:
        self.t = 0
        self.pulls = [0] * self.n_arms
        self.sums = [0.0] * self.n_arms
        self._choices = [self._make_choice(k) for k in range(self.n_arms)]

    def mean(self, k: int) -> float:
        return self.sums[k] / self.pulls[k]

    def terminal_means(self) -> list:
        """Current per-arm estimates (None for unplayed arms)."""
        return [self.mean(k) if self.pulls[k] else None for k in range(self.n_arms)]

    def bonus(self, k: int, log_t: float) -> float:
        raise NotImplementedError

    def index(self, k: int, log_t: float) -> float:
        return self.mean(k) + self.bonus(k, log_t)

    def _make_choice(self, k: int) -> Choice:
        return Choice(k, self.m, self.b, self.m + self.b)

    def _choice(self, k: int) -> Choice:
        return self._choices[k]

    def select(self) -> Choice:
        if 0 in self.pulls:
            for k in range(self.n_arms):
                if self.pulls[k] == 0:
                    return self._choice(k)
        return self._choices[self._argmax(math.log(self.t + 1))]

    def _argmax(self, log_t: float) -> int:
        best, best_val = 0, -math.inf
        for k in range(self.n_arms):
            v = self.index(k, log_t)
            if v > best_val:
                best, best_val = k, v
        return best

    def play(self, choice: Choice, process) -> float:
        block = process.emit(choice.m)
        if choice.b:
            process.skip(choice.b)
        reward = self.rewards[choice.arm](block)
        self.update(choice, reward)
        return reward

    def update(self, choice: Choice, reward: float) -> None:
        self.t += 1
        self.pulls[choice.arm] += 1
        self.sums[choice.arm] += reward


class ClassicalUCB(Policy):
    """μ̂ + √(2α log t / τ_k) over fixed blocks; the i.i.d. baseline."""

    name = "ucb"

    def index(self, k, log_t):
        n = self.pulls[k]
        return self.sums[k] / n + math.sqrt(2.0 * self.alpha * log_t / n)

    def _argmax(self, log_t):
        # same arithmetic as index(), without the per-arm call
        c = 2.0 * self.alpha * log_t
        sqrt, sums = math.sqrt, self.sums
        best, best_val = 0, -math.inf
        for k, n in enumerate(self.pulls):
            v = sums[k] / n + sqrt(c / n)
            if v > best_val:
                best, best_val = k, v
        return best

    def bonus(self, k, log_t):
        return ucb_bonus(self.alpha, log_t, self.pulls[k])


class BlockUCB(Policy):
    """Block-UCB: keep ψ_m of the first m pulls of every s = m + b block.

    Index ``μ̂_k + Λ_k(τ_k)·√(2α log t / τ_k)`` where Λ_k is the arm's
    coefficient tail sum for this geometry.
    """

    name = "block_ucb"

    def __init__(self, rewards, profiles: Sequence[MixingProfile], alpha=3.0, m=1, b=0):
        self.profiles = list(profiles)
        super().__init__(rewards, alpha, m, b)
        if len(self.profiles) != self.n_arms:
            raise ContractError("one profile per arm required")

    def reset(self, seed=None):
        super().reset(seed)
        self._lam = [{} for _ in range(self.n_arms)]
        # Λ ≡ 1 without dependence; the index is then the classical one, bit for bit
        self._independent = all(p.kind == ZERO for p in self.profiles)

    def lam(self, k: int, n: int) -> float:
        cache = self._lam[k]
        v = cache.get(n)
        if v is None:
            v = cache[n] = lambda_sum(self.profiles[k], self.geometry, n)
        return v

    def index(self, k, log_t):
        n = self.pulls[k]
        return self.sums[k] / n + self.lam(k, n) * math.sqrt(2.0 * self.alpha * log_t / n)

    def _argmax(self, log_t):
        if self._independent:
            return ClassicalUCB._argmax(self, log_t)
        c = 2.0 * self.alpha * log_t
        sqrt, sums, lam = math.sqrt, self.sums, self.lam
        best, best_val = 0, -math.inf
        for k, n in enumerate(self.pulls):
            v = sums[k] / n + lam(k, n) * sqrt(c / n)
            if v > best_val:
                best, best_val = k, v
        return best

    def bonus(self, k, log_t):
        n = self.pulls[k]
        return self.lam(k, n) * math.sqrt(2.0 * self.alpha * log_t / n)

    def theta(self, k: int) -> MonotoneMap:
        return block_theta(self.profiles[k], self.geometry)

    def gamma(self, k: int) -> MonotoneMap:
        return quadratic_gamma()


class GenericUCB(Policy):
    """(α, θ, γ)-UCB: index μ̂_k + γ_k⁻¹(α log t / θ_k(τ_k))."""

    name = "generic_ucb"

    def __init__(self, rewards, thetas, gammas, alpha=3.0, m=1, b=0):
        n = len(rewards)
        self.thetas = list(thetas) if isinstance(thetas, (list, tuple)) else [thetas] * n
        self.gammas = list(gammas) if isinstance(gammas, (list, tuple)) else [gammas] * n
        super().__init__(rewards, alpha, m, b)

    def bonus(self, k, log_t):
        return self.gammas[k].inverse(self.alpha * log_t / self.thetas[k](self.pulls[k]))

    def theta(self, k):
        return self.thetas[k]

    def gamma(self, k):
        return self.gammas[k]


class ComboUCB(Policy):
    """Block-UCB over every split (m, b) with (m + b) | s.

    Each selection consumes s raw pulls of the chosen arm.  Every split reads
    its own blocks out of those s symbols: β = s/(m+b) blocks of m kept
    symbols.  The estimate for split (m, b) is the block-reward sum divided by
    M_k(b)·β·τ_k, and the arm's index is the best split's
    ``β·(ψ̂ + √(2α(m+b) log t / (s τ_k)))``.
    """

    regret_definition = COMBINATION
    name = "combo_ucb"

    def __init__(self, rewards, profiles: Sequence[MixingProfile], alpha=3.0, s=1):
        if s < 1:
            raise ContractError("s must be positive")
        self.s = int(s)
        self.combos = decompositions(self.s)
        self.profiles = list(profiles)
        super().__init__(rewards, alpha, 1, 0)
        if len(self.profiles) != self.n_arms:
            raise ContractError("one profile per arm required")
        self._norm = [[_m_sum(p, b) * (self.s // (m + b)) for (m, b) in self.combos]
                      for p in self.profiles]

    def _check_rewards(self):
        for rw in self.rewards:
            if rw.fixed_length is not None:
                raise ContractError("combination policy needs rewards defined for every m")

    def reset(self, seed=None):
        super().reset(seed)
        self.combo_sums = [[0.0] * len(self.combos) for _ in range(self.n_arms)]
        self.last_combo = [0] * self.n_arms

    def estimate(self, k: int, j: int) -> float:
        return self.combo_sums[k][j] / (self._norm[k][j] * self.pulls[k])

    def terminal_means(self) -> list:
        """Estimated value β·ψ̂ of each arm's best split."""
        out = []
        for k in range(self.n_arms):
            if not self.pulls[k]:
                out.append(None)
                continue
            out.append(max(self.s // (m + b) * self.estimate(k, j)
                           for j, (m, b) in enumerate(self.combos)))
        return out

    def arm_index(self, k: int, log_t: float) -> tuple:
        n = self.pulls[k]
        s, alpha = self.s, self.alpha
        best_j, best_v = 0, -math.inf
        for j, (m, b) in enumerate(self.combos):
            v = combo_ucb_index(self.estimate(k, j), m, b, s, alpha, log_t, n)
            if v > best_v:
                best_j, best_v = j, v
        return best_v, best_j

    def index(self, k, log_t):
        return self.arm_index(k, log_t)[0]

    def split_bonus(self, k: int, j: int, log_t: float) -> float:
        m, b = self.combos[j]
        return self.s / (m + b) * math.sqrt(2.0 * self.alpha * (m + b) * log_t
                                            / (self.s * self.pulls[k]))

    def select(self):
        t = self.t + 1
        for k in range(self.n_arms):
            if self.pulls[k] == 0:
                m, b = self.combos[0]
                return Choice(k, m, b, self.s)
        log_t = math.log(t)
        best, best_val, best_j = 0, -math.inf, 0
        for k in range(self.n_arms):
            v, j = self.arm_index(k, log_t)
            if v > best_val:
                best, best_val, best_j = k, v, j
        m, b = self.combos[best_j]
        return Choice(best, m, b, self.s)

    def play(self, choice, process):
        symbols = process.emit(self.s)
        psi = self.rewards[choice.arm]
        sums = self.combo_sums[choice.arm]
        reward = None
        for j, (m, b) in enumerate(self.combos):
            width = m + b
            acc = 0.0
            for start in range(0, self.s, width):
                acc += psi(symbols[start:start + m])
            sums[j] += acc
            if m == choice.m and b == choice.b:
                reward = acc
        self.t += 1
        self.pulls[choice.arm] += 1
        return reward

    def block_lengths(self):
        return [self.s] * self.n_arms


class RestlessUCB(Policy):
    """Restless Block-UCB with per-arm block lengths m_k.

    ``idle[k]`` counts raw steps since arm k was last played; the bonus is
    ``√(2α log t / (τ_k·𝓜_k(idle_k)²))``.
    """

    regret_definition = RESTLESS
    name = "restless_ucb"

    def __init__(self, rewards, profiles: Sequence[MixingProfile], alpha=3.0,
                 m_k: Optional[Sequence[int]] = None):
        n = len(rewards)
        self.m_k = [1] * n if m_k is None else [int(x) for x in m_k]
        if len(self.m_k) != n or min(self.m_k) < 1:
            raise ContractError("one positive block length per arm required")
        self.profiles = list(profiles)
        super().__init__(rewards, alpha, 1, 0)
        if len(self.profiles) != self.n_arms:
            raise ContractError("one profile per arm required")

    def _check_rewards(self):
        for rw, mk in zip(self.rewards, self.m_k):
            rw.check_length(mk)

    def reset(self, seed=None):
        super().reset(seed)
        self.idle = [0] * self.n_arms
        self._mix = [{} for _ in range(self.n_arms)]
        self._independent = all(p.kind == ZERO for p in self.profiles)

    def block_lengths(self):
        return list(self.m_k)

    def mix(self, k: int) -> float:
        cache, idle = self._mix[k], self.idle[k]
        v = cache.get(idle)
        if v is None:
            v = cache[idle] = _restless_m_sum(self.profiles[k], idle)
        return v

    def index(self, k, log_t):
        n = self.pulls[k]
        mm = self.mix(k)
        return self.sums[k] / n + math.sqrt(2.0 * self.alpha * log_t / (n * mm * mm))

    def _argmax(self, log_t):
        if self._independent:
            return ClassicalUCB._argmax(self, log_t)
        c = 2.0 * self.alpha * log_t
        sqrt, sums, mix = math.sqrt, self.sums, self.mix
        best, best_val = 0, -math.inf
        for k, n in enumerate(self.pulls):
            mm = mix(k)
            v = sums[k] / n + sqrt(c / (n * mm * mm))
            if v > best_val:
                best, best_val = k, v
        return best

    def bonus(self, k, log_t):
        mm = self.mix(k)
        return math.sqrt(2.0 * self.alpha * log_t / (self.pulls[k] * mm * mm))

    def _make_choice(self, k):
        return Choice(k, self.m_k[k], 0, self.m_k[k])

    def update(self, choice, reward):
        super().update(choice, reward)
        step = choice.steps
        for j in range(self.n_arms):
            self.idle[j] = 0 if j == choice.arm else self.idle[j] + step


class UniformPolicy(Policy):
    """Picks an arm uniformly at random every step (no forced round)."""

    name = "uniform"

    def __init__(self, rewards, m=1, b=0, seed=0):
        self._seed = seed
        super().__init__(rewards, 3.0, m, b, check_alpha=False)

    def reset(self, seed=None):
        super().reset(seed)
        if seed is not None:
            self._seed = seed
        self._rng = np.random.default_rng(self._seed)

    def select(self):
        return self._choice(int(self._rng.integers(self.n_arms)))


class FixedArmPolicy(Policy):
    """Always plays the same arm."""

    name = "fixed"

    def __init__(self, rewards, arm=0, m=1, b=0):
        self.arm = int(arm)
        super().__init__(rewards, 3.0, m, b, check_alpha=False)

    def select(self):
        return self._choice(self.arm)


def ucb_events(policy: Policy, mu: Sequence[float], horizon: int) -> Optional[dict]:
    """Evaluate the three failure events for the upcoming selection.

    Returns ``None`` during the forced round.  Otherwise a dict mapping each
    suboptimal arm to ``(E1, E2, E3)``: E1 -- the optimal arm's index fell below
    its true mean; E2 -- arm i's lower confidence limit lies above its mean;
    E3 -- arm i is still under-sampled, θ_i(τ_i) <= α log τ / γ_i(Δ_i/2).
    The policy must expose ``theta(k)`` and ``gamma(k)``.
    """
    if min(policy.pulls) == 0:
        return None
    t = policy.t + 1
    log_t = math.log(t)
    log_h = math.log(horizon)
    best = max(mu)
    star = int(np.argmax(mu))
    e1 = policy.mean(star) < best - policy.bonus(star, log_t)
    out = {}
    for i, mu_i in enumerate(mu):
        delta = best - mu_i
        if delta <= 0.0:
            continue
        e2 = mu_i <= policy.mean(i) - policy.bonus(i, log_t)
        theta = policy.theta(i)(policy.pulls[i])
        e3 = theta <= policy.alpha * log_h / policy.gamma(i)(delta / 2.0)
        out[i] = (e1, e2, e3)
    return out
