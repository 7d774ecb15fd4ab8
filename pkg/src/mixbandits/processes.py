"""Stationary finite-alphabet processes with certified mixing profiles.

Every arm draws its randomness from :class:`KeyedUniforms`, which maps a raw
time index to a fixed row of uniforms.  The symbol at clock ``c`` therefore
depends only on ``(seed, c)`` and on earlier symbols, so :meth:`ArmProcess.skip`
and :meth:`ArmProcess.emit` leave the stream in the same place.

Three kernels are shipped:

* :class:`IIDKernel` -- independent draws, certified ``Zero``.
* :class:`MarkovKernel` -- a primitive chain started from its stationary law,
  certified ``Geometric(1, 1 - δ)`` with δ the Doeblin overlap.
* :class:`FiniteRangeKernel` -- ``X_c`` copies one of the innovations
  ``ξ_c .. ξ_{c+r}`` chosen by a random lag; symbols more than ``r`` apart use
  disjoint innovations, so the process is certified ``FiniteRange(r, 1)``.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CertificationError, ContractError
from .mixing_math import MixingProfile

CHUNK = 1024
WIDTH = 3


class KeyedUniforms:
    """Counter-keyed uniforms: row ``c`` depends only on ``(seed, c)``."""

    def __init__(self, seed: int, chunk: int = CHUNK):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.chunk = chunk
        self._cache = {}
        self._lists = {}
        self._derived = {}

    def _block(self, j: int) -> np.ndarray:
        block = self._cache.get(j)
        if block is None:
            block = np.random.default_rng([self.seed, j]).random((self.chunk, WIDTH))
            if len(self._cache) >= 4:
                old = next(iter(self._cache))
                self._cache.pop(old)
                self._lists.pop(old, None)
                self._derived.pop(old, None)
            self._cache[j] = block
        return block

    def column(self, start: int, n: int) -> list:
        """First column of rows ``start .. start+n-1`` as Python floats."""
        j, off = divmod(start, self.chunk)
        if off + n <= self.chunk:
            col = self._lists.get(j)
            if col is None:
                self._block(j)
                col = self._lists[j] = self._cache[j][:, 0].tolist()
            return col[off:off + n]
        out = []
        while n > 0:
            j, off = divmod(start, self.chunk)
            self._block(j)
            col = self._lists.get(j)
            if col is None:
                col = self._lists[j] = self._cache[j][:, 0].tolist()
            take = min(n, self.chunk - off)
            out.extend(col[off:off + take])
            start += take
            n -= take
        return out

    def derived(self, j: int, fn) -> list:
        """``fn`` applied to the first column of chunk ``j``, cached with the chunk."""
        out = self._derived.get(j)
        if out is None:
            out = self._derived[j] = fn(self._block(j)[:, 0])
        return out

    def rows(self, start: int, n: int) -> np.ndarray:
        parts = []
        while n > 0:
            j, off = divmod(start, self.chunk)
            take = min(n, self.chunk - off)
            parts.append(self._block(j)[off:off + take])
            start += take
            n -= take
        if not parts:
            return np.empty((0, WIDTH))
        return parts[0] if len(parts) == 1 else np.concatenate(parts)


def _cdf(probs) -> list:
    c = np.cumsum(probs)
    c[-1] = 1.0
    return c.tolist()


def _check_probs(probs, size) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.shape != (size,):
        raise ContractError(f"expected {size} probabilities, got shape {p.shape}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ContractError("probabilities must be nonnegative and sum to 1")
    return p / p.sum()


@dataclass(frozen=True)
class Alphabet:
    """Strictly increasing reward levels in [0, 1]."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 2:
            raise ContractError("alphabet needs at least two symbols")
        if any(v < 0.0 or v > 1.0 for v in vals):
            raise ContractError("alphabet values must lie in [0, 1]")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ContractError("alphabet values must be strictly increasing")

    def __len__(self):
        return len(self.values)

    @classmethod
    def binary(cls) -> "Alphabet":
        return cls((0.0, 1.0))


def doeblin_coefficient(P) -> float:
    """min over row pairs (i, j) of Σ_u min(P[i,u], P[j,u])."""
    P = np.asarray(P, dtype=float)
    overlap = np.minimum(P[:, None, :], P[None, :, :]).sum(axis=2)
    return float(overlap.min())


def is_primitive(P) -> bool:
    """P^n strictly positive for some n <= size²."""
    A = (np.asarray(P) > 0).astype(np.int64)
    k = A.shape[0]
    M = A.copy()
    for _ in range(k * k):
        if M.all():
            return True
        M = ((M @ A) > 0).astype(np.int64)
    return bool(M.all())


def stationary_distribution(P, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Stationary law by a direct solve polished with power iteration."""
    P = np.asarray(P, dtype=float)
    k = P.shape[0]
    A = np.vstack([P.T - np.eye(k), np.ones(k)])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(A, rhs, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() <= tol:
            return nxt
        pi = nxt
    return pi


@dataclass(frozen=True)
class IIDKernel:
    probs: tuple

    kind = "iid"

    @property
    def profile(self) -> MixingProfile:
        return MixingProfile.zero()

    @property
    def stationary(self) -> np.ndarray:
        return np.asarray(self.probs)

    def _cdfs(self):
        cdf = self.__dict__.get("_cdf_cache")
        if cdf is None:
            cdf = _cdf(self.probs)
            object.__setattr__(self, "_cdf_cache", cdf)
        return cdf

    def _symbols(self, col) -> list:
        cdf = np.asarray(self._cdfs())
        idx = np.searchsorted(cdf, np.asarray(col, dtype=float), side="right")
        return np.minimum(idx, len(self.probs) - 1).tolist()

    def generate(self, uni: KeyedUniforms, clock: int, n: int, state):
        j, off = divmod(clock, uni.chunk)
        if off + n <= uni.chunk:
            return uni.derived(j, self._symbols)[off:off + n], state
        return self._symbols(uni.column(clock, n)), state

    def advance(self, uni, clock, n, state):
        return state

    def sample_paths(self, rng: np.random.Generator, n_paths: int, length: int) -> np.ndarray:
        u = rng.random((n_paths, length))
        idx = np.searchsorted(np.asarray(_cdf(self.probs)), u, side="right")
        return np.minimum(idx, len(self.probs) - 1).astype(np.int8)

    def describe(self) -> dict:
        return {"kind": "iid", "probs": list(self.probs)}


@dataclass(frozen=True)
class MarkovKernel:
    matrix: tuple
    pi: tuple
    delta: float

    kind = "markov"

    @property
    def profile(self) -> MixingProfile:
        return MixingProfile.geometric(1.0, 1.0 - self.delta)

    @property
    def stationary(self) -> np.ndarray:
        return np.asarray(self.pi)

    def _cdfs(self):
        cdfs = self.__dict__.get("_cdf_cache")
        if cdfs is None:
            cdfs = ([_cdf(row) for row in self.matrix], _cdf(self.pi))
            object.__setattr__(self, "_cdf_cache", cdfs)
        return cdfs

    def generate(self, uni: KeyedUniforms, clock: int, n: int, state):
        rows, start = self._cdfs()
        us = uni.column(clock, n)
        out = []
        last = len(self.pi) - 1
        for u in us:
            cdf = start if state is None else rows[state]
            state = min(bisect.bisect_right(cdf, u), last)
            out.append(state)
        return out, state

    def advance(self, uni, clock, n, state):
        return self.generate(uni, clock, n, state)[1] if n else state

    def sample_paths(self, rng: np.random.Generator, n_paths: int, length: int) -> np.ndarray:
        rows, start = self._cdfs()
        cum = np.asarray(rows)
        last = len(self.pi) - 1
        out = np.empty((n_paths, length), dtype=np.int8)
        x = np.minimum(np.searchsorted(np.asarray(start), rng.random(n_paths), side="right"), last)
        out[:, 0] = x
        for c in range(1, length):
            u = rng.random(n_paths)
            x = np.minimum((u[:, None] >= cum[x]).sum(axis=1), last)
            out[:, c] = x
        return out

    def describe(self) -> dict:
        return {"kind": "markov", "matrix": [list(r) for r in self.matrix]}


@dataclass(frozen=True)
class FiniteRangeKernel:
    """``X_c = ξ_{c + r - J_c}`` with ``J_c = 0`` w.p. ``1 - stick``, else uniform on 1..r."""

    probs: tuple
    order: int
    stick: float = 0.5

    kind = "finite_range"

    @property
    def profile(self) -> MixingProfile:
        return MixingProfile.finite_range(self.order, 1.0)

    @property
    def stationary(self) -> np.ndarray:
        return np.asarray(self.probs)

    def _symbols(self, u0: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(np.asarray(_cdf(self.probs)), u0, side="right")
        return np.minimum(idx, len(self.probs) - 1)

    def _lags(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        r = self.order
        lag = 1 + np.minimum((u2 * r).astype(np.int64), r - 1)
        return np.where(u1 < self.stick, lag, 0)

    def generate(self, uni: KeyedUniforms, clock: int, n: int, state):
        r = self.order
        rows = uni.rows(clock, n + r)
        innov = self._symbols(rows[:, 0])
        lags = self._lags(rows[:n, 1], rows[:n, 2])
        return innov[np.arange(n) + r - lags].tolist(), state

    def advance(self, uni, clock, n, state):
        return state

    def sample_paths(self, rng: np.random.Generator, n_paths: int, length: int) -> np.ndarray:
        r = self.order
        innov = self._symbols(rng.random((n_paths, length + r)))
        lags = self._lags(rng.random((n_paths, length)), rng.random((n_paths, length)))
        pos = np.arange(length)[None, :] + r - lags
        return np.take_along_axis(innov, pos, axis=1).astype(np.int8)

    def describe(self) -> dict:
        return {"kind": "finite_range", "probs": list(self.probs), "order": self.order,
                "stick": self.stick}


class ArmProcess:
    """One arm's symbol stream.

    Single-owner mutable state: the clock counts emitted (or skipped)
    symbols.  Use :meth:`fresh` to get an independent copy at clock 0.
    """

    def __init__(self, kernel, alphabet: Alphabet, seed: int):
        if len(kernel.stationary) != len(alphabet):
            raise ContractError("alphabet size does not match the kernel")
        self.kernel = kernel
        self.alphabet = alphabet
        self.seed = int(seed)
        self.clock = 0
        self._values = alphabet.values
        self._uni = KeyedUniforms(self.seed)
        self._state = None
        # i.i.d. fast path: symbol values of the current chunk
        self._iid = kernel.kind == "iid"
        self._vchunk, self._vals = -1, []

    @property
    def profile(self) -> MixingProfile:
        return self.kernel.profile

    @property
    def stationary(self) -> np.ndarray:
        return self.kernel.stationary

    def fresh(self, seed: int | None = None) -> "ArmProcess":
        return ArmProcess(self.kernel, self.alphabet, self.seed if seed is None else seed)

    def emit_indices(self, n: int) -> list:
        if n < 1:
            raise ContractError("emit needs n >= 1")
        out, self._state = self.kernel.generate(self._uni, self.clock, n, self._state)
        self.clock += n
        return out

    def emit(self, n: int) -> list:
        if self._iid and n >= 1:
            j, off = divmod(self.clock, self._uni.chunk)
            if off + n <= self._uni.chunk:
                if j != self._vchunk:
                    vals = self._values
                    syms = self._uni.derived(j, self.kernel._symbols)
                    self._vchunk, self._vals = j, [vals[i] for i in syms]
                self.clock += n
                return self._vals[off:off + n]
        vals = self._values
        return [vals[i] for i in self.emit_indices(n)]

    def skip(self, n: int) -> None:
        if n < 0:
            raise ContractError("skip needs n >= 0")
        if n:
            if not self._iid:
                self._state = self.kernel.advance(self._uni, self.clock, n, self._state)
            self.clock += n

    def sample_paths(self, n_paths: int, length: int, seed: int) -> np.ndarray:
        """Independent stationary trajectories as symbol indices, shape (n_paths, length).

        Does not touch this arm's own stream or clock.
        """
        rng = np.random.default_rng(seed)
        return self.kernel.sample_paths(rng, n_paths, length)

    def describe(self) -> dict:
        d = self.kernel.describe()
        d["alphabet"] = list(self.alphabet.values)
        return d

    def __repr__(self):
        return f"ArmProcess({self.kernel.kind}, seed={self.seed}, clock={self.clock})"


def _alphabet(alphabet, size) -> Alphabet:
    if alphabet is None:
        alphabet = np.linspace(0.0, 1.0, size)
    return alphabet if isinstance(alphabet, Alphabet) else Alphabet(tuple(alphabet))


def make_iid_arm(probs: Sequence[float], alphabet=None, seed: int = 0) -> ArmProcess:
    alpha = _alphabet(alphabet, len(probs))
    p = _check_probs(probs, len(alpha))
    return ArmProcess(IIDKernel(tuple(p.tolist())), alpha, seed)


def make_markov_arm(P, alphabet=None, seed: int = 0) -> ArmProcess:
    """Primitive Markov-chain arm started from its stationary law.

    Raises :class:`CertificationError` for reducible or periodic chains and
    for chains whose one-step Doeblin overlap is zero.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ContractError("transition matrix must be square")
    if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
        raise ContractError("transition matrix must be row-stochastic")
    P = P / P.sum(axis=1, keepdims=True)
    alpha = _alphabet(alphabet, P.shape[0])
    if len(alpha) != P.shape[0]:
        raise ContractError("alphabet size does not match the matrix")
    if not is_primitive(P):
        raise CertificationError("chain is reducible or periodic")
    delta = doeblin_coefficient(P)
    if delta <= 0.0:
        raise CertificationError("Doeblin overlap is zero; no geometric certificate")
    pi = stationary_distribution(P)
    if np.abs(pi @ P - pi).max() > 1e-10:
        raise CertificationError("stationary law did not converge")
    kernel = MarkovKernel(tuple(map(tuple, P.tolist())), tuple(pi.tolist()), min(delta, 1.0))
    return ArmProcess(kernel, alpha, seed)


def make_finite_range_arm(probs: Sequence[float], order: int, alphabet=None, seed: int = 0,
                          stick: float = 0.5) -> ArmProcess:
    if int(order) != order or order < 1:
        raise ContractError("order must be a positive integer")
    if not 0.0 <= stick <= 1.0:
        raise ContractError("stick must lie in [0, 1]")
    alpha = _alphabet(alphabet, len(probs))
    p = _check_probs(probs, len(alpha))
    return ArmProcess(FiniteRangeKernel(tuple(p.tolist()), int(order), float(stick)), alpha, seed)


@dataclass
class PhiEstimate:
    """Single-symbol estimate of φ(n); a lower bound on the true coefficient."""

    value: float
    slack: float
    flagged: bool
    samples: int
    min_count: int = 0
    table: np.ndarray = field(default=None, repr=False)


def empirical_phi_from_pairs(past: np.ndarray, future: np.ndarray, n_symbols: int) -> PhiEstimate:
    """max over (a, b) of |P̂[future=a | past=b] - P̂[future=a]| from paired samples."""
    samples = len(past)
    joint = np.zeros((n_symbols, n_symbols))
    np.add.at(joint, (past, future), 1.0)
    row = joint.sum(axis=1)
    marg = joint.sum(axis=0) / samples
    seen = row > 0
    cond = joint[seen] / row[seen, None]
    value = float(np.abs(cond - marg[None, :]).max()) if seen.any() else 0.0
    min_count = int(row[seen].min()) if seen.any() else 0
    slack = 5.0 / np.sqrt(samples)
    flagged = False
    # Each conditional row has standard error <= 0.5/sqrt(count); keep >= 4 of them.
    if min_count and 2.0 / np.sqrt(min_count) > slack:
        slack = 2.0 / np.sqrt(min_count)
        flagged = True
    return PhiEstimate(value, float(slack), flagged, samples, min_count, cond)


def empirical_phi(arm: ArmProcess, n: int, samples: int, seed: int = 0) -> PhiEstimate:
    """Monte Carlo lower bound on φ(n) from ``samples`` independent stationary pairs."""
    if n < 1:
        raise ContractError("lag must be positive")
    if samples < 10_000:
        raise ContractError("need at least 10^4 samples")
    paths = arm.sample_paths(samples, n + 1, seed)
    return empirical_phi_from_pairs(paths[:, 0], paths[:, n], len(arm.alphabet))
