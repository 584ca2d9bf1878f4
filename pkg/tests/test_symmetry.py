import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import all_lever_aohs
from sba_lab.core_env import ActionObservationHistory, expected_return_exact, reachable_aohs
from sba_lab.lever_game import FollowerPolicy, lever_permutation_op, lever_symmetry_group, make_env
from sba_lab.metrics import ConstantPolicy
from sba_lab.policies import DeterministicTablePolicy
from sba_lab.symmetry import (
    AugmentedPolicy,
    SymmetryMismatch,
    SymmetryOp,
    UnknownLabel,
    apply_to_trajectory,
    augment_policy,
    compose,
    identity,
    inverse,
    sample_uniform,
    trivial_group,
    validate_symmetry,
)
from sba_lab.verification import RandomHistoryPolicy, corrupted_op

ENV = make_env()
ALL_AOHS = all_lever_aohs(ENV.config, 0) + all_lever_aohs(ENV.config, 1)
perms = st.permutations(list(range(10)))


def swap(env, i, j):
    p = np.arange(env.config.num_levers)
    p[[i, j]] = p[[j, i]]
    return lever_permutation_op(env, p)


def test_identity_fixes_every_aoh(env):
    e = identity(env)
    assert all(apply_to_trajectory(e, h) == h for h in ALL_AOHS)


def test_identity_is_neutral(env, group):
    op = group.sample(np.random.default_rng(0))
    assert compose(identity(env), op) == op
    assert compose(op, identity(env)) == op


def test_identity_augmentation_changes_nothing(env):
    rng = np.random.default_rng(1)
    pol = RandomHistoryPolicy(env, [reachable_aohs(env, i) for i in range(2)], rng)
    aug = augment_policy(pol, identity(env))
    for h in ALL_AOHS:
        assert np.array_equal(aug.action_distribution(h), pol.action_distribution(h))


def test_swap_is_an_involution(env):
    s = swap(env, 2, 7)
    assert compose(s, s) == identity(env)


def test_inverse_law_on_samples(env, group):
    rng = np.random.default_rng(2)
    for _ in range(100):
        op = group.sample(rng)
        assert compose(inverse(op), op) == identity(env)
        assert compose(op, inverse(op)) == identity(env)


def test_cycle_inverse_brute_force(env):
    perm = np.arange(10)
    perm[[0, 1, 2]] = [1, 2, 0]  # 0->1->2->0
    op = lever_permutation_op(env, perm)
    inv = inverse(op)
    expected = {0: 2, 1: 0, 2: 1}
    for label in range(10):
        assert inv.apply_action(0, label) == expected.get(label, label)
        assert op.apply_action(0, inv.apply_action(0, label)) == label


def test_compose_rejects_mismatched_envs(env, small_env):
    with pytest.raises(SymmetryMismatch):
        compose(identity(env), identity(small_env))


def test_apply_to_trajectory_swap(env):
    tau = ActionObservationHistory(0, (0, 3, 1 + 7))  # NONE, pull 3, saw partner 7
    out = apply_to_trajectory(swap(env, 3, 7), tau)
    assert out.entries == (0, 7, 1 + 3)


def test_apply_to_trajectory_unknown_label(env):
    with pytest.raises(UnknownLabel):
        apply_to_trajectory(identity(env), ActionObservationHistory(0, (0, 12, 1)))


def test_round_trip_on_random_pairs(env, group):
    rng = np.random.default_rng(3)
    for _ in range(1000):
        op = group.sample(rng)
        tau = ALL_AOHS[rng.integers(len(ALL_AOHS))]
        assert apply_to_trajectory(inverse(op), apply_to_trajectory(op, tau)) == tau


@settings(max_examples=50, deadline=None)
@given(perms, perms, perms)
def test_compose_is_associative(p, q, r):
    a, b, c = (lever_permutation_op(ENV, x) for x in (p, q, r))
    assert compose(compose(a, b), c) == compose(a, compose(b, c))


@settings(max_examples=25, deadline=None)
@given(perms, st.integers(0, 2**32 - 1))
def test_augmentation_pointwise_identity(p, seed):
    # augmented(a | tau) == pi(op(a) | op(tau)) for every AOH and action
    op = lever_permutation_op(ENV, p)
    pol = RandomHistoryPolicy(ENV, [all_lever_aohs(ENV.config, i) for i in range(2)], np.random.default_rng(seed))
    aug = augment_policy(pol, op)
    for tau in ALL_AOHS:
        got = aug.action_distribution(tau)
        base = pol.action_distribution(apply_to_trajectory(op, tau))
        for a in range(10):
            assert got[a] == base[op.apply_action(tau.agent_id, a)]


@pytest.mark.parametrize("seed", range(5))
def test_deterministic_policy_relabels_through_inverse(env, group, seed):
    op = group.sample(np.random.default_rng(seed))
    sigma = op.action_maps[0]
    for i in range(10):
        table = DeterministicTablePolicy(f"lever_{i}", [i] * 11, 10)
        for pol in (table, ConstantPolicy(i, 10)):
            for aug in (augment_policy(pol, op), AugmentedPolicy(pol, op)):
                target = int(np.argsort(sigma)[i])
                assert aug.constant_action() == target
                for tau in ALL_AOHS:
                    assert aug.action_distribution(tau)[target] == 1.0


def test_table_shortcut_matches_generic_wrapper(env, group):
    rng = np.random.default_rng(4)
    for _ in range(20):
        table = DeterministicTablePolicy("t", rng.integers(10, size=11), 10)
        op = group.sample(rng)
        fast, slow = augment_policy(table, op), AugmentedPolicy(table, op)
        assert isinstance(fast, DeterministicTablePolicy)
        for tau in ALL_AOHS:
            assert np.array_equal(fast.action_distribution(tau), slow.action_distribution(tau))


def test_augmented_self_play_keeps_return(env, group):
    rng = np.random.default_rng(5)
    hist = [reachable_aohs(env, i) for i in range(2)]
    for _ in range(50):
        pol = RandomHistoryPolicy(env, hist, rng)
        op = group.sample(rng)
        base = expected_return_exact(env, [pol, pol])
        aug = augment_policy(pol, op)
        assert abs(expected_return_exact(env, [aug, aug]) - base) < 1e-9


def test_augmented_act_matches_distribution(env, group):
    rng = np.random.default_rng(6)
    op = group.sample(rng)
    aug = AugmentedPolicy(FollowerPolicy(env.config), op)
    tau = ActionObservationHistory(0, (0, 4, 1 + 6))
    draws = {aug.act(tau, rng) for _ in range(20)}
    assert draws == {int(np.flatnonzero(aug.action_distribution(tau))[0])}


def test_sample_uniform_s3_frequencies(small_env):
    g = lever_symmetry_group(small_env)
    assert g.size == 6
    rng = np.random.default_rng(7)
    counts = {}
    n = 120_000
    for _ in range(n):
        key = tuple(sample_uniform(g, rng).action_maps[0])
        counts[key] = counts.get(key, 0) + 1
    assert set(counts) == set(itertools.permutations(range(3)))
    for c in counts.values():
        assert abs(c / n - 1 / 6) < 0.01


def test_sample_uniform_is_seeded(group):
    a = [group.sample(np.random.default_rng(9)) for _ in range(3)]
    b = [group.sample(np.random.default_rng(9)) for _ in range(3)]
    assert a == b


def test_group_elements_small(small_env):
    g = lever_symmetry_group(small_env)
    elems = g.elements()
    assert len(elems) == 6 and len({e.key() for e in elems}) == 6
    assert all(g.contains(e) for e in elems)
    assert g.contains(identity(small_env))


def test_none_observation_fixed(group):
    rng = np.random.default_rng(10)
    for _ in range(100):
        op = group.sample(rng)
        assert op.apply_observation(0, 0) == 0 and op.apply_observation(1, 0) == 0


def test_sampled_ops_validate(env, group):
    rng = np.random.default_rng(11)
    for _ in range(200):
        assert validate_symmetry(env, group.sample(rng)).ok


def test_identity_validates(env):
    assert validate_symmetry(env, identity(env))


def test_corrupted_op_rejected(env, group):
    report = validate_symmetry(env, corrupted_op(group.sample(np.random.default_rng(12))))
    assert not report.ok
    assert "bijection" in report.violations[0]


def test_non_automorphism_rejected(env):
    # a bijection that moves the NONE observation breaks the observation law
    op = identity(env)
    omap = np.array(op.observation_maps[0])
    omap[[0, 1]] = omap[[1, 0]]
    bad = SymmetryOp(env.env_id, op.state_map, op.action_maps, (omap, omap))
    report = validate_symmetry(env, bad)
    assert not report.ok and report.violations


def test_record_round_trip(group):
    rng = np.random.default_rng(13)
    for _ in range(20):
        op = group.sample(rng)
        text = op.to_record()
        back = SymmetryOp.from_record(text)
        assert back == op
        assert back.to_record() == text
    assert "action_map[0]: [" in text


def test_record_rejects_garbage():
    with pytest.raises(ValueError):
        SymmetryOp.from_record("env_id: x\nstate_map: [0,a]\n")
    with pytest.raises(ValueError):
        SymmetryOp.from_record("state_map: [0]\n")


def test_trivial_group(env):
    g = trivial_group(env)
    assert g.size == 1
    assert g.sample(np.random.default_rng(0)) == identity(env)
    assert g.action_image_distribution(0, 4) == {4: 1.0}


def test_ops_are_immutable(group):
    op = group.sample(np.random.default_rng(0))
    with pytest.raises(ValueError):
        op.action_maps[0][0] = 3
