import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixbandits.environments import run_rested, run_restless
from mixbandits.errors import ContractError
from mixbandits.mixing_math import (BlockGeometry, MixingProfile, block_theta, identity_theta,
                                    quadratic_gamma, rested_skip_map, theta_increasing)
from mixbandits.policies import (BlockUCB, ClassicalUCB, ComboUCB, GenericUCB, Policy, RestlessUCB,
                                 block_ucb_index, combo_ucb_index, decompositions,
                                 restless_ucb_index, ucb_events)
from mixbandits.processes import make_iid_arm, make_markov_arm
from mixbandits.rewards import BlockReward, exact_mu

MEAN = BlockReward.mean()
ZERO = MixingProfile.zero()


def bernoulli(p):
    return make_iid_arm([1 - p, p], [0.0, 1.0])


def chains():
    return [make_markov_arm([[0.3, 0.7], [0.1, 0.9]], [0.0, 1.0]),
            make_markov_arm([[0.8, 0.2], [0.6, 0.4]], [0.0, 1.0]),
            make_markov_arm([[0.6, 0.4], [0.3, 0.7]], [0.0, 1.0])]


def set_state(policy, pulls, sums, t):
    policy.pulls, policy.sums, policy.t = list(pulls), list(sums), t


# ---- index arithmetic -------------------------------------------------------

def test_index_formula_examples():
    assert block_ucb_index(0.5, 1.0, 2.0, 1.0, 8) == pytest.approx(0.5 + math.sqrt(0.5), abs=1e-12)
    assert block_ucb_index(0.5, 1.0, 2.0, 1.0, 8) == pytest.approx(1.20711, abs=1e-5)
    # restless bonus with mixing sum 1.5, four pulls: sqrt(4 / 9)
    assert restless_ucb_index(0.0, 1.5, 2.0, 1.0, 4) == pytest.approx(2 / 3)
    assert combo_ucb_index(0.5, 1, 0, 1, 3.0, 2.0, 6) == pytest.approx(0.5 + math.sqrt(2.0))


def test_selection_prefers_higher_mean_with_equal_pulls():
    pol = ClassicalUCB([MEAN, MEAN], alpha=3.0)
    set_state(pol, [10, 10], [9.0, 1.0], 99)
    assert pol.select().arm == 0
    gen = GenericUCB([MEAN, MEAN], identity_theta(), quadratic_gamma(), alpha=3.0)
    set_state(gen, [10, 10], [9.0, 1.0], 99)
    assert gen.select().arm == 0


def test_equal_means_pick_least_pulled_and_ties_go_low():
    gen = GenericUCB([MEAN] * 3, identity_theta(), quadratic_gamma())
    set_state(gen, [5, 3, 3], [2.5, 1.5, 1.5], 11)
    assert gen.select().arm == 1


def test_forced_round_before_indices():
    pol = BlockUCB([MEAN] * 3, [ZERO] * 3)
    assert pol.select().arm == 0
    set_state(pol, [4, 0, 2], [1.0, 0.0, 1.0], 6)
    assert pol.select().arm == 1


def test_generic_bonus_equals_classical_form():
    gen = GenericUCB([MEAN, MEAN], identity_theta(), quadratic_gamma(), alpha=3.0)
    set_state(gen, [7, 4], [3.0, 2.0], 11)
    for k in (0, 1):
        assert gen.bonus(k, math.log(12)) == pytest.approx(
            math.sqrt(2 * 3.0 * math.log(12) / gen.pulls[k]), rel=1e-12)


def test_alpha_contract():
    with pytest.raises(ContractError):
        BlockUCB([MEAN], [ZERO], alpha=2.0)
    with pytest.raises(ContractError):
        ComboUCB([BlockReward.pattern([1.0])], [ZERO], s=1)
    with pytest.raises(ContractError):
        RestlessUCB([MEAN, MEAN], [ZERO, ZERO], m_k=[1, 0])


# ---- decompositions ---------------------------------------------------------

def test_decompositions_of_four():
    assert set(decompositions(4)) == {(1, 0), (2, 0), (4, 0), (1, 1), (3, 1), (1, 3), (2, 2)}
    assert decompositions(1) == [(1, 0)]


@given(st.integers(1, 60))
def test_decompositions_brute_force(s):
    want = {(m, b) for m in range(1, s + 1) for b in range(0, s) if s % (m + b) == 0}
    got = decompositions(s)
    assert len(got) == len(set(got)) and set(got) == want


# ---- reductions -------------------------------------------------------------

def test_block_theta_with_zero_profile_matches_identity_theta():
    arms = [bernoulli(0.6), bernoulli(0.5), bernoulli(0.45)]
    geo = BlockGeometry(1, 0)
    for seed in range(5):
        a = GenericUCB([MEAN] * 3, block_theta(ZERO, geo), quadratic_gamma())
        b = GenericUCB([MEAN] * 3, identity_theta(), quadratic_gamma())
        ra = run_rested(a, arms, 3000, seed)
        rb = run_rested(b, arms, 3000, seed)
        assert np.array_equal(ra.arms, rb.arms)


def test_reductions_to_classical_ucb():
    arms = [bernoulli(0.55), bernoulli(0.5), bernoulli(0.4)]
    for seed in range(5):
        base = run_rested(ClassicalUCB([MEAN] * 3), arms, 10_000, seed).arms
        block = run_rested(BlockUCB([MEAN] * 3, [ZERO] * 3), arms, 10_000, seed).arms
        assert np.array_equal(base, block)
        base_r = run_restless(ClassicalUCB([MEAN] * 3), arms, 10_000, seed).arms
        restless = run_restless(RestlessUCB([MEAN] * 3, [ZERO] * 3), arms, 10_000, seed).arms
        assert np.array_equal(base_r, restless)


def test_combo_with_s_one_is_block_ucb():
    arms = chains()[:2]
    for seed in range(3):
        combo = run_rested(ComboUCB([MEAN] * 2, [ZERO] * 2, s=1), arms, 2000, seed)
        block = run_rested(BlockUCB([MEAN] * 2, [ZERO] * 2), arms, 2000, seed)
        assert np.array_equal(combo.arms, block.arms)
        assert set(combo.m.tolist()) == {1} and set(combo.b.tolist()) == {0}


# ---- stream audit -----------------------------------------------------------

class AuditedProcess:
    def __init__(self, proc):
        self.proc = proc
        self.used, self.skipped = [], []

    @property
    def clock(self):
        return self.proc.clock

    def emit(self, n):
        c = self.proc.clock
        self.used.extend(range(c + 1, c + n + 1))
        return self.proc.emit(n)

    def skip(self, n):
        c = self.proc.clock
        self.skipped.extend(range(c + 1, c + n + 1))
        self.proc.skip(n)


@pytest.mark.parametrize("m,b", [(1, 0), (2, 3), (3, 1), (1, 4)])
def test_block_ucb_reads_the_skip_map_positions(m, b):
    arms = chains()
    pol = BlockUCB([MEAN] * 3, [a.profile for a in arms], m=m, b=b)
    procs = [AuditedProcess(a.fresh(k)) for k, a in enumerate(arms)]
    for _ in range(600):
        c = pol.select()
        pol.play(c, procs[c.arm])
    s = m + b
    for p in procs:
        assert p.used == [rested_skip_map(m, b, i) for i in range(1, len(p.used) + 1)]
        blocks = len(p.used) // m
        assert p.skipped == [r * s + j for r in range(blocks) for j in range(m + 1, s + 1)]
        assert p.clock == blocks * s


def test_combo_estimates_read_every_split_from_one_pull():
    pol = ComboUCB([MEAN, MEAN], [ZERO, ZERO], s=4)
    arm = make_iid_arm([0.5, 0.5], [0.0, 1.0])
    proc = arm.fresh(3)
    symbols = arm.fresh(3).emit(4)
    c = pol.select()
    pol.play(c, proc)
    for j, (m, b) in enumerate(pol.combos):
        want = sum(sum(symbols[r:r + m]) / m for r in range(0, 4, m + b))
        assert pol.combo_sums[0][j] == pytest.approx(want)
    assert proc.clock == 4


# ---- event decomposition ----------------------------------------------------

def check_events(policy, arms, mu, horizon, seeds, restless=False):
    hits = {"sub": 0}

    def on_select(pol, choice):
        events = ucb_events(pol, mu, horizon)
        if events and choice.arm in events:
            hits["sub"] += 1
            assert any(events[choice.arm]), (pol.t, choice, events[choice.arm])

    for seed in seeds:
        run = run_restless if restless else run_rested
        run(policy, arms, horizon, seed, on_select=on_select)
    return hits["sub"]


def test_one_failure_event_holds_on_every_suboptimal_choice():
    arms = chains()
    m, b = 2, 1
    pol = BlockUCB([MEAN] * 3, [a.profile for a in arms], alpha=2.5, m=m, b=b)
    mu = [exact_mu(MEAN, a, m) for a in arms]
    assert check_events(pol, arms, mu, 3000, range(4)) > 50


def test_failure_events_generic_policy():
    arms = [bernoulli(0.6), bernoulli(0.55), bernoulli(0.3)]
    pol = GenericUCB([MEAN] * 3, identity_theta(), quadratic_gamma(), alpha=2.1)
    assert check_events(pol, arms, [0.6, 0.55, 0.3], 3000, range(4)) > 50


# ---- monotonicity -----------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["zero", "geometric", "finite_range"]), st.integers(1, 4), st.integers(0, 6),
       st.floats(1.0, 12.0))
def test_bonus_strictly_decreasing_in_pulls(kind, m, b, log_t):
    profile = {"zero": ZERO, "geometric": MixingProfile.geometric(0.8, 0.6),
               "finite_range": MixingProfile.finite_range(3, 0.5)}[kind]
    geo = BlockGeometry(m, b)
    pols = [ClassicalUCB([MEAN], m=m, b=b), RestlessUCB([MEAN], [profile])]
    if theta_increasing(profile, geo, 200):
        pols.append(BlockUCB([MEAN], [profile], m=m, b=b))
    combo = ComboUCB([MEAN], [profile], s=m + b)
    for pol in pols + [combo]:
        prev = math.inf
        for n in range(1, 201):
            pol.pulls = [n]
            cur = pol.split_bonus(0, 0, log_t) if pol is combo else pol.bonus(0, log_t)
            assert 0.0 <= cur < prev
            prev = cur


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.0, 0.95), st.integers(1, 50), st.floats(0.0, 1.0))
def test_restless_index_nondecreasing_in_idle_time(c, rho, n, mean):
    pol = RestlessUCB([MEAN], [MixingProfile.geometric(c, rho)])
    pol.pulls, pol.sums = [n], [mean * n]
    prev = -math.inf
    for idle in range(0, 60):
        pol.idle = [idle]
        cur = pol.index(0, 3.0)
        assert cur >= prev
        prev = cur


# ---- combination choice -----------------------------------------------------

@pytest.mark.parametrize("s", [2, 3, 5])
def test_prime_s_independent_arms_settle_on_single_symbol_blocks(s):
    arms = [bernoulli(0.7), bernoulli(0.3)]
    pol = ComboUCB([MEAN, MEAN], [ZERO, ZERO], s=s)
    share = []
    for seed in range(50):
        rec = run_rested(pol, arms, 1000, seed)
        share.append(rec.selection_share(0, 1, 0, final_fraction=0.1))
    assert np.mean(share) >= 0.95


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 500), st.floats(0.0, 1.0)), min_size=1, max_size=5),
       st.floats(0.0, 12.0), st.sampled_from(["zero", "geometric"]), st.integers(0, 30))
def test_fast_argmax_matches_index_loop(state, log_t, kind, idle):
    k = len(state)
    profile = ZERO if kind == "zero" else MixingProfile.geometric(0.9, 0.5)
    pols = [ClassicalUCB([MEAN] * k), BlockUCB([MEAN] * k, [profile] * k, m=1, b=1),
            RestlessUCB([MEAN] * k, [profile] * k)]
    for pol in pols:
        pol.pulls = [n for n, _ in state]
        pol.sums = [n * mu for n, mu in state]
        if isinstance(pol, RestlessUCB):
            pol.idle = [(idle * (j + 1)) % 17 for j in range(k)]
        assert pol._argmax(log_t) == Policy._argmax(pol, log_t)
