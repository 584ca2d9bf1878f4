import numpy as np
import pytest

from sba_lab.lever_game import LeverGameConfig, LeverObservation, all_observations, make_deterministic_population
from sba_lab.learner import (
    DivergenceError,
    TrainConfig,
    TrainingCurve,
    encode_observation,
    greedy_policy,
    tabular_br_oracle,
    train_best_response,
)
from sba_lab.metrics import robustness
from sba_lab.mlp import Adam, MlpParams, forward, init_mlp, squared_error_grads
from sba_lab.lever_game import optimal_br_value
from sba_lab.policies import MlpPolicy
from sba_lab.verification import gradient_check_suite

CONFIG = LeverGameConfig()


def test_init_shapes():
    p = init_mlp([12, 20, 10], np.random.default_rng(0))
    assert [w.shape for w in p.weights] == [(12, 20), (20, 10)]
    assert [b.shape for b in p.biases] == [(20,), (10,)]
    assert all(np.all(b == 0) for b in p.biases)


def test_init_seeded():
    a = init_mlp([12, 20, 10], np.random.default_rng(5))
    b = init_mlp([12, 20, 10], np.random.default_rng(5))
    assert np.array_equal(a.flat(), b.flat())


def test_init_bounds():
    p = init_mlp([12, 20, 10], np.random.default_rng(6))
    assert np.abs(p.weights[0]).max() <= np.sqrt(6 / 32)
    assert np.abs(p.weights[1]).max() <= np.sqrt(6 / 30)


def test_params_validate_shapes():
    with pytest.raises(ValueError):
        MlpParams((3, 2), [np.zeros((2, 3))], [np.zeros(2)])


def test_forward_zero_network():
    p = init_mlp([12, 20, 10], np.random.default_rng(0))
    for w in p.weights:
        w[:] = 0
    assert np.array_equal(forward(p, np.ones(12)), np.zeros(10))


def test_forward_constant_output():
    p = init_mlp([12, 20, 10], np.random.default_rng(0))
    p.weights[1][:] = 0
    p.biases[1][:] = np.arange(10.0)
    rng = np.random.default_rng(1)
    for _ in range(5):
        assert np.array_equal(forward(p, rng.normal(size=12)), np.arange(10.0))


def test_forward_formula():
    rng = np.random.default_rng(2)
    p = init_mlp([12, 20, 10], rng)
    p.biases[0][:] = rng.normal(size=20)
    x = rng.normal(size=12)
    hidden = 1 / (1 + np.exp(-(x @ p.weights[0] + p.biases[0])))
    assert np.allclose(forward(p, x), hidden @ p.weights[1] + p.biases[1], rtol=1e-12, atol=1e-12)


def test_forward_dimension_mismatch():
    p = init_mlp([12, 20, 10], np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(p, np.ones(11))


def test_gradient_check():
    res = gradient_check_suite(trials=20, rng=0)
    assert res.passed, res.line()


def test_adam_first_step_moves_by_lr():
    p = init_mlp([3, 4, 2], np.random.default_rng(0))
    before = p.flat().copy()
    _, gw, gb = squared_error_grads(p, np.ones((2, 3)), [0, 1], [5.0, -5.0])
    Adam(p, lr=0.05).step(p, gw, gb)
    moved = np.abs(p.flat() - before)
    # the first bias-corrected Adam step has magnitude lr on every nonzero gradient
    assert np.allclose(moved[moved > 0], 0.05, rtol=1e-6)


def test_encode_round_one():
    x = encode_observation(LeverObservation(1, None), CONFIG)
    assert x[10] == 1 and x[11] == 1 and x.sum() == 2


def test_encode_round_two():
    x = encode_observation(LeverObservation(2, 7), CONFIG)
    assert x[7] == 1 and x[11] == 0 and x.sum() == 1


def test_encodings_distinct():
    enc = {tuple(encode_observation(o, CONFIG)) for o in all_observations(CONFIG)}
    assert len(enc) == 11


def _params_with_output_bias(values):
    p = init_mlp([12, 20, 10], np.random.default_rng(0))
    p.weights[1][:] = 0
    p.biases[1][:] = values
    return p


def test_greedy_tie_break():
    assert np.all(greedy_policy(_params_with_output_bias(np.zeros(10)), CONFIG).table == 0)


def test_greedy_unique_max():
    v = np.zeros(10)
    v[7] = 1.0
    assert np.all(greedy_policy(_params_with_output_bias(v), CONFIG).table == 7)


def test_greedy_table_matches_network():
    p = init_mlp([12, 20, 10], np.random.default_rng(3))
    table = greedy_policy(p, CONFIG).table
    for i, o in enumerate(all_observations(CONFIG)):
        assert table[i] == int(np.argmax(forward(p, encode_observation(o, CONFIG))))
    assert np.array_equal(MlpPolicy("n", p).table, table)


def test_oracle_without_sba(env, train_pop, eval_pop):
    pol = tabular_br_oracle(env, train_pop)
    assert pol.table[0] == 0
    for k in range(5):
        assert pol.table[1 + k] == k
    assert robustness(env, pol, eval_pop).value == pytest.approx(0.6, abs=1e-9)
    assert robustness(env, pol, train_pop).value == pytest.approx(1.2, abs=1e-9)


def test_oracle_with_sba(env, group, train_pop, eval_pop):
    pol = tabular_br_oracle(env, train_pop, group)
    for k in range(10):
        assert pol.table[1 + k] == k
    assert robustness(env, pol, eval_pop).value == pytest.approx(1.1, abs=1e-9)
    assert robustness(env, pol, train_pop, group).value == pytest.approx(1.1, abs=1e-9)


@pytest.mark.parametrize("levers", [[0, 1, 2, 3, 4], [0, 2, 4, 6, 8], list(range(10))])
def test_oracle_agrees_with_closed_form(env, group, eval_pop, levers):
    train = make_deterministic_population(levers)
    for sba in (False, True):
        g = group if sba else None
        pol = tabular_br_oracle(env, train, g)
        expected = optimal_br_value(train, eval_pop, sba)
        got = (robustness(env, pol, train, g).value, robustness(env, pol, eval_pop, g).value)
        assert got == pytest.approx(expected, abs=1e-9)


def test_oracle_rejects_stochastic_members(env):
    from sba_lab.policies import UniformRandomPolicy
    from sba_lab.populations import Population

    with pytest.raises(ValueError):
        tabular_br_oracle(env, Population("u", (UniformRandomPolicy("u", 10),)))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(exploration_initial=1.5)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"lr": 0.1})


def test_exploration_schedule():
    cfg = TrainConfig(epochs=11)
    assert cfg.exploration(0) == pytest.approx(0.9)
    assert cfg.exploration(10) == pytest.approx(0.05)
    assert cfg.exploration(5) == pytest.approx(0.475)


def test_curve_invariants():
    c = TrainingCurve(0)
    c.append(0, 1.0, 0.5)
    with pytest.raises(ValueError):
        c.append(0, 1.0, 0.5)
    with pytest.raises(ValueError):
        c.append(1, float("nan"), 0.5)


def test_singleton_population_learns_to_match(env):
    train = make_deterministic_population([0])
    pol, curve = train_best_response(env, train, None, TrainConfig(epochs=300, seed=3), train)
    assert pol.table[1 + 0] == 0
    assert curve.train_returns[-1] == 2.0


def test_sba_requires_group(env, train_pop):
    with pytest.raises(ValueError):
        train_best_response(env, train_pop, None, TrainConfig(sba_enabled=True, epochs=1), train_pop)


def test_disabled_sba_ignores_group(env, group, train_pop, eval_pop):
    cfg = TrainConfig(epochs=40, seed=8)
    a_pol, a = train_best_response(env, train_pop, group, cfg, eval_pop)
    b_pol, b = train_best_response(env, train_pop, None, cfg, eval_pop)
    assert a.train_returns == b.train_returns and a.eval_returns == b.eval_returns
    assert np.array_equal(a_pol.params.flat(), b_pol.params.flat())


def test_training_is_seeded(env, group, train_pop, eval_pop):
    cfg = TrainConfig(epochs=30, seed=4, sba_enabled=True)
    a_pol, a = train_best_response(env, train_pop, group, cfg, eval_pop)
    b_pol, b = train_best_response(env, train_pop, group, cfg, eval_pop)
    assert a.train_returns == b.train_returns
    assert np.array_equal(a_pol.params.flat(), b_pol.params.flat())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_guard(env, train_pop):
    cfg = TrainConfig(epochs=5, learning_rate=float("inf"), seed=1)
    with pytest.raises(DivergenceError, match="seed 1"):
        train_best_response(env, train_pop, None, cfg, train_pop)


def test_learner_never_reads_teammate_identity(env, group, train_pop, eval_pop):
    # relabelling member names cannot change training: only rewards and observations matter
    from sba_lab.policies import DeterministicTablePolicy
    from sba_lab.populations import Population

    renamed = Population("x", tuple(DeterministicTablePolicy(f"m{k}", m.table, 10) for k, m in enumerate(train_pop)))
    cfg = TrainConfig(epochs=20, seed=2, sba_enabled=True)
    _, a = train_best_response(env, train_pop, group, cfg, eval_pop)
    _, b = train_best_response(env, renamed, group, cfg, eval_pop)
    assert a.train_returns == b.train_returns
