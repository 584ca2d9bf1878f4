import itertools

import pytest

from sba_lab.core_env import ActionObservationHistory
from sba_lab.lever_game import LeverGameConfig, lever_symmetry_group, make_deterministic_population, make_env


@pytest.fixture(scope="session")
def env():
    return make_env()


@pytest.fixture(scope="session")
def small_env():
    return make_env(LeverGameConfig(num_levers=3))


@pytest.fixture(scope="session")
def group(env):
    return lever_symmetry_group(env)


@pytest.fixture(scope="session")
def train_pop():
    return make_deterministic_population(range(5))


@pytest.fixture(scope="session")
def eval_pop():
    return make_deterministic_population(range(10))


def brute_force_lever_return(config, pol_a, pol_b):
    """Two-round lever game return by direct summation over all pulls.

    Independent of the tree evaluator: observation indices are written out
    by hand (0 = NONE, 1 + k = partner pulled k).
    """
    assert config.num_rounds == 2
    L = config.num_levers
    none_a = ActionObservationHistory(0, (0,))
    none_b = ActionObservationHistory(1, (0,))
    pa1 = pol_a.action_distribution(none_a)
    pb1 = pol_b.action_distribution(none_b)
    total = 0.0
    for a1, b1 in itertools.product(range(L), range(L)):
        w = pa1[a1] * pb1[b1]
        if w == 0.0:
            continue
        pa2 = pol_a.action_distribution(ActionObservationHistory(0, (0, a1, 1 + b1)))
        pb2 = pol_b.action_distribution(ActionObservationHistory(1, (0, b1, 1 + a1)))
        second = sum(pa2[k] * pb2[k] for k in range(L))
        total += w * (float(a1 == b1) + second)
    return total * config.reward_on_match


def all_lever_aohs(config, agent=0):
    """Every structurally valid two-round AOH, reachable or not."""
    L = config.num_levers
    out = [ActionObservationHistory(agent, (0,))]
    for a in range(L):
        for k in range(L):
            out.append(ActionObservationHistory(agent, (0, a, 1 + k)))
    return out


class RecordedCriteria:
    def __init__(self):
        self.lines = []


_CRITERIA = RecordedCriteria()


@pytest.fixture(scope="session")
def criteria():
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA.lines:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA.lines:
            terminalreporter.write_line(line)
