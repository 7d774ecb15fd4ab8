"""Numeric functions over φ-mixing coefficient profiles.

A :class:`MixingProfile` is a certified upper bound ``n -> φ(n)`` on the
mixing coefficients of a stationary process.  Everything here is pure: tail
sums that size the confidence bonuses, the index maps that say which raw
observations a block policy keeps, the u_k fixed point and the closed-form
regret bounds.

Coefficients are only defined for positive separations, so every sum clamps
its argument to ``max(n, 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import zeta

from .errors import ContractError, SummabilityError, UnboundedRegretError

ZERO = "zero"
FINITE_RANGE = "finite_range"
GEOMETRIC = "geometric"
ALGEBRAIC = "algebraic"
TABULATED = "tabulated"

KINDS = (ZERO, FINITE_RANGE, GEOMETRIC, ALGEBRAIC, TABULATED)


@dataclass(frozen=True)
class MixingProfile:
    """Upper bound on the φ-mixing coefficients of one process.

    Use the constructors (:meth:`zero`, :meth:`finite_range`,
    :meth:`geometric`, :meth:`algebraic`, :meth:`tabulated`) rather than the
    raw fields.  ``params`` holds the kind's parameters as a tuple so the
    profile stays hashable and can key caches.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown profile kind {self.kind!r}")

    @classmethod
    def zero(cls) -> "MixingProfile":
        return cls(ZERO)

    @classmethod
    def finite_range(cls, n0: int, c: float = 1.0) -> "MixingProfile":
        if int(n0) != n0 or n0 < 1:
            raise ContractError("finite-range n0 must be a positive integer")
        if not 0.0 < c <= 1.0:
            raise ContractError("finite-range cap must lie in (0, 1]")
        return cls(FINITE_RANGE, (int(n0), float(c)))

    @classmethod
    def geometric(cls, c: float, rho: float) -> "MixingProfile":
        # rho == 0 is allowed: it is what a one-step-forgetting chain certifies.
        if c < 0.0:
            raise ContractError("geometric constant must be nonnegative")
        if not 0.0 <= rho < 1.0:
            raise ContractError("geometric rate must lie in [0, 1)")
        return cls(GEOMETRIC, (float(c), float(rho)))

    @classmethod
    def algebraic(cls, phi0: float, p: float) -> "MixingProfile":
        if phi0 <= 0.0:
            raise ContractError("algebraic scale must be positive")
        if p <= 1.0:
            raise ContractError("algebraic exponent must exceed 1")
        return cls(ALGEBRAIC, (float(phi0), float(p)))

    @classmethod
    def tabulated(cls, values: Iterable[float]) -> "MixingProfile":
        """Coefficients φ(1), φ(2), ... listed explicitly.

        Past the end of the table the last entry is repeated, so the profile
        is summable only when the table ends in zero.
        """
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ContractError("tabulated profile needs at least one value")
        if any(v < 0.0 or v > 1.0 for v in vals):
            raise ContractError("tabulated coefficients must lie in [0, 1]")
        if any(b > a for a, b in zip(vals, vals[1:])):
            raise ContractError("tabulated coefficients must be nonincreasing")
        return cls(TABULATED, vals)

    @property
    def summable(self) -> bool:
        if self.kind == TABULATED:
            return self.params[-1] == 0.0
        return True

    def phi(self, n: int) -> float:
        """Coefficient at separation ``n`` (clamped to ``n >= 1``)."""
        n = max(int(n), 1)
        kind, par = self.kind, self.params
        if kind == ZERO:
            return 0.0
        if kind == FINITE_RANGE:
            return par[1] if n <= par[0] else 0.0
        if kind == GEOMETRIC:
            return min(1.0, par[0] * par[1] ** n)
        if kind == ALGEBRAIC:
            return min(1.0, par[0] * float(n) ** (-par[1]))
        vals = par
        return vals[n - 1] if n <= len(vals) else vals[-1]

    def phi_array(self, n) -> np.ndarray:
        return np.array([self.phi(int(k)) for k in np.ravel(n)], dtype=float)


@dataclass(frozen=True)
class BlockGeometry:
    """Block layout: ``m`` informative pulls followed by ``b`` ignored ones.

    ``s`` is the number of raw pulls per selection.  It defaults to ``m + b``;
    when given explicitly it must be a multiple of ``m + b`` and the block is
    repeated ``beta = s // (m + b)`` times.
    """

    m: int
    b: int = 0
    s: Optional[int] = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ContractError("block length m must be a positive integer")
        if int(self.b) != self.b or self.b < 0:
            raise ContractError("gap b must be a nonnegative integer")
        if self.s is None:
            object.__setattr__(self, "s", self.m + self.b)
        elif self.s < 1 or self.s % (self.m + self.b):
            raise ContractError(f"m + b = {self.m + self.b} does not divide s = {self.s}")

    @property
    def beta(self) -> int:
        return self.s // (self.m + self.b)


def _arith_phi_sum(profile: MixingProfile, start: int, step: int,
                   count: Optional[int]) -> float:
    """Sum of φ(max(start + r*step, 1)) for r = 0 .. count-1 (count=None: infinite)."""
    if count is not None and count <= 0:
        return 0.0
    kind, par = profile.kind, profile.params
    if kind == ZERO:
        return 0.0

    total = 0.0
    # A zero first argument reads φ(1); peel it off so the rest is a clean progression.
    if start <= 0:
        total += profile.phi(1)
        start += step
        count = None if count is None else count - 1
        if count == 0:
            return total
        if start <= 0:
            # step == 0 with start == 0: every term is φ(1)
            if count is None:
                if profile.phi(1) > 0.0:
                    raise SummabilityError("constant nonzero summand over an infinite range")
                return total
            return total + count * profile.phi(1)

    if step == 0:
        val = profile.phi(start)
        if count is None:
            if val > 0.0:
                raise SummabilityError("constant nonzero summand over an infinite range")
            return total
        return total + count * val

    if kind == FINITE_RANGE:
        n0, c = par
        if start > n0:
            return total
        n_terms = (n0 - start) // step + 1
        if count is not None:
            n_terms = min(n_terms, count)
        return total + n_terms * c

    if kind == TABULATED:
        vals = par
        length = len(vals)
        n_in = 0 if start > length else (length - start) // step + 1
        if count is not None:
            n_in = min(n_in, count)
        if n_in:
            idx = start + step * np.arange(n_in)
            total += float(np.asarray(vals)[idx - 1].sum())
        if count is None:
            if vals[-1] > 0.0:
                raise SummabilityError("tabulated profile has a nonzero tail")
            return total
        return total + (count - n_in) * vals[-1]

    # Geometric and algebraic: sum the clamped head directly, then a closed form.
    head = 0
    while (count is None or head < count) and profile.phi(start + head * step) >= 1.0:
        head += 1
        if head > 10_000_000:
            raise SummabilityError("coefficients do not decay below 1")
    total += float(head)
    rest = None if count is None else count - head
    if rest == 0:
        return total
    a = start + head * step

    if kind == GEOMETRIC:
        c, rho = par
        if rho == 0.0 or c == 0.0:
            return total
        q = rho ** step
        first = c * rho ** a
        if q == 0.0:
            return total + first
        if rest is None:
            return total + first / (1.0 - q)
        return total + first * -math.expm1(rest * math.log(q)) / (1.0 - q)

    phi0, p = par
    q0 = a / step
    scale = phi0 * float(step) ** (-p)
    if rest is None:
        return total + scale * float(zeta(p, q0))
    return total + scale * float(zeta(p, q0) - zeta(p, q0 + rest))


@lru_cache(maxsize=65536)
def _lambda_cached(profile: MixingProfile, m: int, b: int, t: int) -> float:
    return 1.0 + 2.0 * _arith_phi_sum(profile, b, m + b, t)


def lambda_sum(profile: MixingProfile, geometry: BlockGeometry, t: int) -> float:
    """Λ(t) = 1 + 2 Σ_{r=1..t} φ(r·b + (r-1)·m).

    Nondecreasing in ``t`` and at least 1.  With ``b = 0`` the first summand
    reads φ(1), which recovers the classical bound on contiguous data.
    """
    if t < 1:
        raise ContractError("t must be at least 1")
    return _lambda_cached(profile, geometry.m, geometry.b, int(t))


def algebraic_lambda_bound(phi0: float, p: float, geometry: BlockGeometry, tau: int) -> float:
    """Closed-form upper bound on Λ(τ) for φ(n) = φ0·n^(-p)."""
    m, b = geometry.m, geometry.b
    s = m + b
    if b < 1:
        raise ContractError("the algebraic bound diverges for b = 0")
    if p <= 1.0:
        raise ContractError("p must exceed 1")
    if tau * s <= m:
        raise ContractError("need tau * s > m")
    return (1.0 + 2.0 * phi0
            + 2.0 * phi0 / (s * (p - 1.0)) * (b ** (1.0 - p) - (tau * s - m) ** (1.0 - p)))


def _require_summable(profile: MixingProfile):
    if not profile.summable:
        raise SummabilityError(f"{profile.kind} profile is not summable")


def m_sum(profile: MixingProfile, b: int) -> float:
    """M(b) = 1 + Σ_{i>=1} φ(b(i+1)); ``b = 0`` is read as ``b = 1``."""
    _require_summable(profile)
    b = max(int(b), 1)
    return 1.0 + _arith_phi_sum(profile, 2 * b, b, None)


def restless_m_sum(profile: MixingProfile, b: int) -> float:
    """𝓜(b) = 1 + Σ_{i>=b} φ(i); ``b = 0`` is read as ``b = 1``."""
    _require_summable(profile)
    b = max(int(b), 1)
    return 1.0 + _arith_phi_sum(profile, b, 1, None)


def rested_skip_map(m: int, b: int, t: int) -> int:
    """Raw index of the t-th retained observation when m are kept and b skipped."""
    return t + b * ((t - 1) // m)


def restless_skip_map(m: int, b: int, t: int) -> int:
    """Indices 1..m unshifted, every later index shifted once by b."""
    return t + b * (t >= m + 1)


def kappa_map(m: int, b: int, q: int) -> int:
    """Separation argument q·b + (q-1)·m for blocks q apart."""
    return q * b + (q - 1) * m


def divisor_weight(s: int) -> int:
    """Sum of the divisors of ``s``."""
    if s < 1:
        raise ContractError("s must be positive")
    total = 0
    i = 1
    while i * i <= s:
        if s % i == 0:
            total += i
            j = s // i
            if j != i:
                total += j
        i += 1
    return total


def solve_uk(profile: MixingProfile, geometry: BlockGeometry, delta: float, alpha: float,
             tau: float, u_max: float = 1e15) -> float:
    """Smallest u > 0 with u·Δ² = 8α·Λ²(⌈u⌉)·log τ.

    On each interval (n-1, n] the right-hand side is constant, so the root in
    that interval is u_n = 8α·Λ²(n)·log τ / Δ² provided n-1 < u_n <= n.  The
    search jumps n -> ⌈u_n⌉, which never skips a root because u_n is
    nondecreasing in n, and stops at the first n with u_n <= n.
    """
    if delta <= 0.0:
        raise ContractError("delta must be positive")
    if alpha <= 0.0:
        raise ContractError("alpha must be positive")
    log_tau = math.log(tau)
    if log_tau <= 0.0:
        raise ContractError("tau must exceed 1")
    scale = 8.0 * alpha * log_tau / (delta * delta)
    n = 1
    for _ in range(1_000_000):
        lam = lambda_sum(profile, geometry, n)
        u = scale * lam * lam
        if u <= n:
            return u
        if u > u_max:
            break
        n = math.ceil(u)
    raise UnboundedRegretError(
        f"no root of the u_k equation below {u_max:g}; regret bound is vacuous")


def uk_residual(profile: MixingProfile, geometry: BlockGeometry, u: float, delta: float,
                alpha: float, tau: float) -> float:
    lam = lambda_sum(profile, geometry, max(math.ceil(u), 1))
    return u * delta * delta - 8.0 * alpha * lam * lam * math.log(tau)


class MonotoneMap:
    """Increasing function on (0, inf) with an optional registered inverse.

    Without a closed-form inverse, :meth:`inverse` bisects on [1e-12, 1e12].
    """

    LO, HI, ITERS = 1e-12, 1e12, 200

    def __init__(self, func: Callable[[float], float],
                 inverse: Optional[Callable[[float], float]] = None, name: str = ""):
        self.func = func
        self._inverse = inverse
        self.name = name

    def __call__(self, x: float) -> float:
        return self.func(x)

    def inverse(self, y: float) -> float:
        if self._inverse is not None:
            return self._inverse(y)
        lo, hi = self.LO, self.HI
        if self.func(hi) < y:
            return math.inf
        if self.func(lo) >= y:
            return lo
        for _ in range(self.ITERS):
            mid = 0.5 * (lo + hi)
            if self.func(mid) < y:
                lo = mid
            else:
                hi = mid
        return hi

    def __repr__(self):
        return f"MonotoneMap({self.name or self.func!r})"


def identity_theta() -> MonotoneMap:
    return MonotoneMap(lambda n: n, lambda y: y, "n")


def quadratic_gamma() -> MonotoneMap:
    """γ(ε) = ε²/2, whose inverse turns the generic bonus into √(2α log t / n)."""
    return MonotoneMap(lambda e: 0.5 * e * e, lambda y: math.sqrt(2.0 * y), "eps^2/2")


def block_theta(profile: MixingProfile, geometry: BlockGeometry) -> MonotoneMap:
    """θ(n) = n / Λ²(⌈n⌉); inverted by bisection."""
    def theta(n):
        lam = lambda_sum(profile, geometry, max(math.ceil(n), 1))
        return n / (lam * lam)
    return MonotoneMap(theta, None, f"n/Lambda^2[{profile.kind}]")


def _ceil_snap(x: float) -> int:
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return math.ceil(x)


def generic_regret_bound(theta, gamma, deltas: Sequence[float], alpha: float,
                         tau: float) -> float:
    """Σ_k (⌈θ_k⁻¹(α log τ / γ_k(Δ_k/2))⌉·Δ_k + 1/(α-2)) over suboptimal arms.

    ``theta`` and ``gamma`` are either one :class:`MonotoneMap` shared by all
    arms or a sequence with one map per entry of ``deltas``.
    """
    if alpha <= 2.0:
        raise ContractError("alpha must exceed 2")
    deltas = list(deltas)
    thetas = theta if isinstance(theta, (list, tuple)) else [theta] * len(deltas)
    gammas = gamma if isinstance(gamma, (list, tuple)) else [gamma] * len(deltas)
    log_tau = math.log(tau)
    total = 0.0
    for d, th, ga in zip(deltas, thetas, gammas):
        if d <= 0.0:
            continue
        u = _ceil_snap(th.inverse(alpha * log_tau / ga(d / 2.0)))
        total += u * d + 1.0 / (alpha - 2.0)
    return total


def block_ucb_regret_bound(profiles: Sequence[MixingProfile], geometry: BlockGeometry,
                           deltas: Sequence[float], alpha: float, tau: float) -> float:
    """Σ (u_k·Δ_k + 1/(α-2)) over suboptimal arms, u_k from :func:`solve_uk`."""
    if alpha <= 2.0:
        raise ContractError("alpha must exceed 2")
    total = 0.0
    for prof, d in zip(profiles, deltas):
        if d > 0.0:
            total += solve_uk(prof, geometry, d, alpha, tau) * d + 1.0 / (alpha - 2.0)
    return total


def combo_regret_bound(deltas: Sequence[float], s: int, alpha: float, t: float) -> float:
    """Σ ((1 + η(s))·Δ + 8αs·log t / Δ) over arms with a positive value gap."""
    eta = divisor_weight(s)
    log_t = math.log(t)
    return sum((1 + eta) * d + 8.0 * alpha * s * log_t / d for d in deltas if d > 0.0)


def restless_regret_bound(deltas: Sequence[float], alpha: float, t: float) -> float:
    """Σ (Δ + 8α·log t / Δ) over arms with a positive gap."""
    log_t = math.log(t)
    return sum(d + 8.0 * alpha * log_t / d for d in deltas if d > 0.0)


def theta_increasing(profile: MixingProfile, geometry: BlockGeometry, upto: int) -> bool:
    """True when n / Λ²(n) is strictly increasing on 1..upto."""
    prev = 0.0
    for n in range(1, upto + 1):
        lam = lambda_sum(profile, geometry, n)
        cur = n / (lam * lam)
        if cur <= prev:
            return False
        prev = cur
    return True
