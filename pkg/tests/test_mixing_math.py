import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixbandits.errors import ContractError, SummabilityError, UnboundedRegretError
from mixbandits.mixing_math import (BlockGeometry, MixingProfile, MonotoneMap,
                                    algebraic_lambda_bound, block_theta, block_ucb_regret_bound,
                                    combo_regret_bound, divisor_weight, generic_regret_bound,
                                    identity_theta, kappa_map, lambda_sum, m_sum,
                                    quadratic_gamma, restless_m_sum, restless_regret_bound,
                                    rested_skip_map, restless_skip_map, solve_uk,
                                    theta_increasing, uk_residual)


def phi_ref(kind, params, n):
    """Coefficient straight from the kind definitions, argument clamped to 1."""
    n = max(n, 1)
    if kind == "zero":
        return 0.0
    if kind == "finite_range":
        n0, c = params
        return min(1.0, c) if n <= n0 else 0.0
    if kind == "geometric":
        c, rho = params
        return min(1.0, c * rho ** n)
    if kind == "algebraic":
        phi0, p = params
        return min(1.0, phi0 * n ** (-p))
    raise AssertionError(kind)


def lambda_ref(kind, params, m, b, t):
    return 1.0 + 2.0 * math.fsum(phi_ref(kind, params, r * b + (r - 1) * m)
                                 for r in range(1, t + 1))


profiles = st.one_of(
    st.just(MixingProfile.zero()),
    st.builds(MixingProfile.finite_range, st.integers(1, 12), st.floats(0.01, 1.0)),
    st.builds(MixingProfile.geometric, st.floats(0.0, 3.0), st.floats(0.0, 0.95)),
    st.builds(MixingProfile.algebraic, st.floats(0.01, 2.0), st.floats(1.1, 4.0)),
)


# ---- profiles -------------------------------------------------------------

def test_profile_values():
    assert MixingProfile.zero().phi(5) == 0.0
    fr = MixingProfile.finite_range(3, 0.5)
    assert [fr.phi(n) for n in range(1, 6)] == [0.5, 0.5, 0.5, 0.0, 0.0]
    assert MixingProfile.geometric(4.0, 0.5).phi(1) == 1.0
    assert MixingProfile.geometric(1.0, 0.5).phi(3) == 0.125
    assert MixingProfile.algebraic(1.0, 2.0).phi(4) == 1 / 16


def test_tabulated_tail():
    tab = MixingProfile.tabulated([0.5, 0.25, 0.0])
    assert tab.summable and tab.phi(10) == 0.0
    sticky = MixingProfile.tabulated([0.5, 0.25])
    assert not sticky.summable and sticky.phi(1000) == 0.25
    with pytest.raises(SummabilityError):
        m_sum(sticky, 2)
    with pytest.raises(ContractError):
        MixingProfile.tabulated([0.1, 0.5])


def test_invalid_profiles():
    with pytest.raises(ContractError):
        MixingProfile.geometric(1.0, 1.0)
    with pytest.raises(ContractError):
        MixingProfile.algebraic(1.0, 1.0)
    with pytest.raises(ContractError):
        BlockGeometry(0, 1)


@given(profiles, st.integers(1, 200))
def test_phi_in_unit_interval_and_nonincreasing(prof, n):
    assert 0.0 <= prof.phi(n + 1) <= prof.phi(n) <= 1.0


# ---- lambda ---------------------------------------------------------------

def test_lambda_examples():
    assert lambda_sum(MixingProfile.zero(), BlockGeometry(3, 2), 50) == 1.0
    assert lambda_sum(MixingProfile.finite_range(3, 0.5), BlockGeometry(1, 1), 5) == 3.0
    assert lambda_sum(MixingProfile.geometric(1.0, 0.5), BlockGeometry(1, 1), 2) == \
        pytest.approx(2.25, abs=1e-15)


@settings(max_examples=200)
@given(profiles, st.integers(1, 6), st.integers(0, 6), st.integers(1, 300))
def test_lambda_matches_direct_summation(prof, m, b, t):
    got = lambda_sum(prof, BlockGeometry(m, b), t)
    want = lambda_ref(prof.kind, prof.params, m, b, t)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


@given(profiles, st.integers(1, 5), st.integers(0, 5), st.integers(1, 100), st.integers(0, 100))
def test_lambda_monotone_and_at_least_one(prof, m, b, t, extra):
    geo = BlockGeometry(m, b)
    lo, hi = lambda_sum(prof, geo, t), lambda_sum(prof, geo, t + extra)
    assert 1.0 <= lo <= hi + 1e-12


def test_lambda_summand_evaluated_at_kappa():
    # strictly decreasing table, so each summand identifies the argument it was taken at
    tab = MixingProfile.tabulated([1.0 / (2 + n) for n in range(200)] + [0.0])
    rng = np.random.default_rng(7)
    for _ in range(5):
        m, b = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        assert all(kappa_map(m, b, r) == r * b + (r - 1) * m for r in range(1, 10_001))
        geo = BlockGeometry(m, b)
        prev = 1.0
        for r in range(1, 20):
            cur = lambda_sum(tab, geo, r)
            assert cur - prev == pytest.approx(2.0 * tab.phi(kappa_map(m, b, r)), abs=1e-14)
            prev = cur


def test_algebraic_bound_example_and_dominance():
    got = algebraic_lambda_bound(1.0, 2.0, BlockGeometry(1, 1), 10)
    assert got == pytest.approx(3.0 + 18.0 / 19.0, rel=1e-12)
    assert got >= lambda_sum(MixingProfile.algebraic(1.0, 2.0), BlockGeometry(1, 1), 10)
    assert algebraic_lambda_bound(1e-300, 2.0, BlockGeometry(2, 3), 100) == pytest.approx(1.0)
    for p in (1.5, 2.0, 3.0):
        for b in range(1, 6):
            for m in (1, 2, 3):
                for tau in (10, 100, 1000):
                    geo = BlockGeometry(m, b)
                    bound = algebraic_lambda_bound(1.0, p, geo, tau)
                    assert bound >= lambda_sum(MixingProfile.algebraic(1.0, p), geo, tau) - 1e-12
    with pytest.raises(ContractError):
        algebraic_lambda_bound(1.0, 2.0, BlockGeometry(1, 0), 10)


# ---- M and restless M -----------------------------------------------------

def test_m_sum_examples():
    assert m_sum(MixingProfile.zero(), 4) == 1.0
    assert m_sum(MixingProfile.geometric(1.0, 0.5), 1) == pytest.approx(1.5, rel=1e-15)
    assert m_sum(MixingProfile.finite_range(2, 0.3), 1) == pytest.approx(1.3, rel=1e-15)
    assert m_sum(MixingProfile.geometric(1.0, 0.5), 0) == m_sum(MixingProfile.geometric(1.0, 0.5), 1)


def test_restless_m_sum_examples():
    assert restless_m_sum(MixingProfile.zero(), 3) == 1.0
    assert restless_m_sum(MixingProfile.geometric(1.0, 0.5), 2) == pytest.approx(1.5, rel=1e-15)
    assert restless_m_sum(MixingProfile.finite_range(3, 0.2), 5) == 1.0
    prof = MixingProfile.geometric(1.0, 0.5)
    assert restless_m_sum(prof, 0) == restless_m_sum(prof, 1)


def test_geometric_closed_forms_against_partial_sums():
    for rho in (0.1, 0.5, 0.9):
        prof = MixingProfile.geometric(1.0, rho)
        for b in range(1, 6):
            direct = 1.0 + math.fsum(rho ** (b * (i + 1)) for i in range(1, 5000))
            assert m_sum(prof, b) == pytest.approx(direct, rel=1e-13)
            direct = 1.0 + math.fsum(rho ** i for i in range(b, 5000))
            assert restless_m_sum(prof, b) == pytest.approx(direct, rel=1e-13)


def power_tail(phi0, p, scale, offset, start):
    """1 + Σ_{i>=start} min(1, φ₀·(scale·(i+offset))^-p): explicit head where the cap
    binds, Euler-Maclaurin for the smooth remainder."""
    head, i = mpmath.mpf(0), start
    while phi0 * (scale * (i + offset)) ** (-p) >= 1:
        head += 1
        i += 1
    tail = mpmath.nsum(lambda j: phi0 * (scale * (j + offset)) ** (-p), [i, mpmath.inf],
                       method="euler-maclaurin")
    return float(1 + head + tail)


def test_algebraic_tails_against_mpmath():
    for phi0, p in ((1.0, 2.0), (0.3, 1.5), (5.0, 3.0)):
        prof = MixingProfile.algebraic(phi0, p)
        for b in (1, 2, 7):
            assert m_sum(prof, b) == pytest.approx(power_tail(phi0, p, b, 1, 1), rel=1e-10)
            assert restless_m_sum(prof, b) == pytest.approx(power_tail(phi0, p, 1, 0, b),
                                                            rel=1e-10)


@given(profiles, st.integers(0, 30))
def test_m_sums_nonincreasing_and_at_least_one(prof, b):
    assert m_sum(prof, b + 1) <= m_sum(prof, b) + 1e-12
    assert restless_m_sum(prof, b + 1) <= restless_m_sum(prof, b) + 1e-12
    assert m_sum(prof, b) >= 1.0 and restless_m_sum(prof, b) >= 1.0
    assert restless_m_sum(prof, max(b, 1)) <= restless_m_sum(prof, 1) + 1e-12


# ---- index maps -----------------------------------------------------------

def test_skip_map_examples():
    assert [rested_skip_map(2, 1, t) for t in range(1, 6)] == [1, 2, 4, 5, 7]
    assert [rested_skip_map(1, 2, t) for t in range(1, 4)] == [1, 4, 7]
    assert all(rested_skip_map(3, 0, t) == t for t in range(1, 50))
    assert [restless_skip_map(2, 3, t) for t in range(1, 5)] == [1, 2, 6, 7]
    assert [restless_skip_map(1, 1, t) for t in range(1, 4)] == [1, 3, 4]
    assert all(restless_skip_map(3, 0, t) == t for t in range(1, 50))


def test_kappa_examples():
    assert [kappa_map(2, 1, q) for q in (1, 2, 3)] == [1, 4, 7]
    assert [kappa_map(1, 0, q) for q in range(1, 6)] == [0, 1, 2, 3, 4]
    assert kappa_map(3, 2, 2) == 7


def walk_rested(m, b, count):
    """Raw positions kept when a stream is read as (keep m, drop b) repeatedly."""
    out, pos = [], 0
    while len(out) < count:
        for _ in range(m):
            pos += 1
            out.append(pos)
        pos += b
    return out[:count]


def test_skip_maps_brute_force_to_ten_thousand():
    for m, b in ((1, 0), (1, 3), (2, 1), (3, 2), (5, 7)):
        walk = walk_rested(m, b, 10_000)
        assert [rested_skip_map(m, b, t) for t in range(1, 10_001)] == walk
        restless = [t if t <= m else t + b for t in range(1, 10_001)]
        assert [restless_skip_map(m, b, t) for t in range(1, 10_001)] == restless


@given(st.integers(1, 6), st.integers(0, 6))
def test_rested_skip_map_block_structure(m, b):
    for i in range(1000):
        run = [rested_skip_map(m, b, i * m + j) for j in range(1, m + 1)]
        assert run == list(range(run[0], run[0] + m))
        nxt = rested_skip_map(m, b, (i + 1) * m + 1)
        assert nxt - run[-1] == b + 1


def test_divisor_weight():
    assert divisor_weight(1) == 1
    assert divisor_weight(6) == 12
    assert divisor_weight(12) == 28
    sieve = [0] * 10_001
    for i in range(1, 10_001):
        for j in range(i, 10_001, i):
            sieve[j] += i
    assert all(divisor_weight(s) == sieve[s] for s in range(1, 10_001))


# ---- u_k and bounds -------------------------------------------------------

def test_solve_uk_examples():
    zero = MixingProfile.zero()
    geo = BlockGeometry(1, 0)
    assert solve_uk(zero, geo, 1.0, 3.0, math.e) == pytest.approx(24.0, rel=1e-12)
    assert solve_uk(zero, geo, 2.0, 3.0, math.e) == pytest.approx(6.0, rel=1e-12)
    fr = MixingProfile.finite_range(4, 0.5)
    assert solve_uk(fr, BlockGeometry(1, 1), 0.5, 3.0, 100) >= 8 * 3 * math.log(100) / 0.25


@settings(max_examples=200)
@given(profiles, st.integers(1, 4), st.integers(0, 4), st.floats(0.05, 1.0),
       st.floats(2.1, 6.0), st.integers(2, 10 ** 6))
def test_solve_uk_is_smallest_root(prof, m, b, delta, alpha, tau):
    geo = BlockGeometry(m, b)
    try:
        u = solve_uk(prof, geo, delta, alpha, tau)
    except UnboundedRegretError:
        return
    res = uk_residual(prof, geo, u, delta, alpha, tau)
    assert abs(res) <= 1e-9 * max(1.0, u * delta * delta)
    # no root on any earlier unit interval: u_n = c·Λ²(n) falls outside (n-1, n]
    c = 8 * alpha * math.log(tau) / delta ** 2
    for n in range(1, min(math.ceil(u), 2000)):
        un = c * lambda_sum(prof, geo, n) ** 2
        assert not (n - 1 < un <= n)


def test_solve_uk_unbounded():
    sticky = MixingProfile.tabulated([1.0])
    with pytest.raises(UnboundedRegretError):
        solve_uk(sticky, BlockGeometry(1, 0), 0.1, 3.0, 1000, u_max=1e8)


def test_generic_bound_examples():
    theta, gamma = identity_theta(), quadratic_gamma()
    assert generic_regret_bound(theta, gamma, [0.5], 3.0, math.e) == pytest.approx(49.0)
    assert generic_regret_bound(theta, gamma, [], 3.0, math.e) == 0.0
    lam_theta = block_theta(MixingProfile.zero(), BlockGeometry(1, 0))
    assert generic_regret_bound(lam_theta, gamma, [0.5], 3.0, math.e) == pytest.approx(49.0)
    # bisection route for γ agrees with the closed-form inverse
    bisect_gamma = MonotoneMap(lambda e: 0.5 * e * e)
    assert generic_regret_bound(theta, bisect_gamma, [0.5, 0.3], 3.0, 50) == \
        generic_regret_bound(theta, gamma, [0.5, 0.3], 3.0, 50)
    with pytest.raises(ContractError):
        generic_regret_bound(theta, gamma, [0.5], 2.0, math.e)


def test_block_bound_matches_generic_form():
    prof = MixingProfile.geometric(1.0, 0.6)
    geo = BlockGeometry(2, 1)
    deltas = [0.0, 0.3, 0.45]
    for tau in (10, 1000, 10 ** 5):
        direct = block_ucb_regret_bound([prof] * 3, geo, deltas, 3.0, tau)
        generic = generic_regret_bound(block_theta(prof, geo), quadratic_gamma(), deltas, 3.0, tau)
        # the generic form rounds u up to an integer, so it can only be larger
        assert direct <= generic + 1e-9
        assert generic - direct <= sum(deltas) + 1e-9


def test_combo_and_restless_bounds():
    t = 1000.0
    want = (1 + 12) * 0.5 + 8 * 3 * 6 * math.log(t) / 0.5
    assert combo_regret_bound([0.0, 0.5], 6, 3.0, t) == pytest.approx(want)
    want = 0.25 + 8 * 3 * math.log(t) / 0.25
    assert restless_regret_bound([0.0, 0.25], 3.0, t) == pytest.approx(want)


def test_monotone_map_inverse_by_bisection():
    f = MonotoneMap(lambda x: x ** 3 + x)
    for y in (0.5, 2.0, 1e6):
        assert f(f.inverse(y)) == pytest.approx(y, rel=1e-12)
    assert MonotoneMap(lambda x: min(x, 5.0)).inverse(10.0) == math.inf


def test_theta_increasing():
    assert theta_increasing(MixingProfile.zero(), BlockGeometry(1, 0), 100)
    assert theta_increasing(MixingProfile.geometric(1.0, 0.5), BlockGeometry(1, 2), 200)
    assert not theta_increasing(MixingProfile.finite_range(50, 1.0), BlockGeometry(1, 0), 50)
