"""Executable property suites: return invariance, inverse transfer, validator, gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_env import Policy, expected_return_exact, reachable_aohs
from .lever_game import LeverGame, lever_symmetry_group
from .metrics import j_aht
from .mlp import init_mlp, squared_error_grads
from .symmetry import SymmetryOp, augment_policy, inverse, validate_symmetry


@dataclass
class SuiteResult:
    name: str
    passed: bool
    trials: int
    worst: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: trials={self.trials} worst={self.worst:.3e} {self.detail}".rstrip()


class RandomHistoryPolicy(Policy):
    """Independent random action distribution for every reachable AOH.

    A third of the histories get a deterministic action so that both
    stochastic and pure branches are exercised.
    """

    def __init__(self, env, agent_histories, rng: np.random.Generator):
        self.num_actions = env.num_actions(0)
        self.table = {}
        for aohs in agent_histories:
            for aoh in aohs:
                if rng.random() < 1 / 3:
                    p = np.zeros(self.num_actions)
                    p[rng.integers(self.num_actions)] = 1.0
                else:
                    p = rng.dirichlet(np.ones(self.num_actions))
                self.table[(aoh.agent_id, aoh.entries)] = p
        self._uniform = np.full(self.num_actions, 1.0 / self.num_actions)

    def action_distribution(self, aoh):
        return self.table.get((aoh.agent_id, aoh.entries), self._uniform)


def _histories(env):
    return [reachable_aohs(env, i) for i in range(env.num_agents)]


def return_invariance_suite(env, group, trials: int = 100, rng=None, tol: float = 1e-9) -> SuiteResult:
    """``J(pi) == J(augment(pi, op))`` with every agent relabelled by the same ``op``."""
    rng = np.random.default_rng(rng)
    hist = _histories(env)
    worst = 0.0
    for _ in range(trials):
        joint = [RandomHistoryPolicy(env, hist, rng) for _ in range(env.num_agents)]
        op = group.sample(rng)
        base = expected_return_exact(env, joint)
        aug = expected_return_exact(env, [augment_policy(p, op) for p in joint])
        worst = max(worst, abs(base - aug))
    return SuiteResult("return-invariance", worst < tol, trials, worst)


def inverse_transfer_suite(env, group, trials: int = 100, rng=None, tol: float = 1e-9) -> SuiteResult:
    """``J_AHT(augment(aht, op), mate) == J_AHT(aht, augment(mate, op^-1))``."""
    rng = np.random.default_rng(rng)
    hist = _histories(env)
    worst = 0.0
    for _ in range(trials):
        aht = RandomHistoryPolicy(env, hist, rng)
        mate = RandomHistoryPolicy(env, hist, rng)
        op = group.sample(rng)
        lhs = j_aht(env, augment_policy(aht, op), mate).value
        rhs = j_aht(env, aht, augment_policy(mate, inverse(op))).value
        worst = max(worst, abs(lhs - rhs))
    return SuiteResult("inverse-transfer", worst < tol, trials, worst)


def corrupted_op(op: SymmetryOp) -> SymmetryOp:
    """Copy of ``op`` whose action maps send two labels to the same image."""
    amaps = []
    for m in op.action_maps:
        bad = np.array(m)
        bad[1] = bad[0]
        amaps.append(bad)
    return SymmetryOp(op.env_id, op.state_map, tuple(amaps), op.observation_maps)


def symmetry_validator_suite(env, group, trials: int = 1000, rng=None) -> SuiteResult:
    rng = np.random.default_rng(rng)
    rejected = 0
    for _ in range(trials):
        if not validate_symmetry(env, group.sample(rng)):
            rejected += 1
    bad = validate_symmetry(env, corrupted_op(group.sample(rng)))
    detail = f"accepted={trials - rejected}/{trials} corrupted_rejected={not bad.ok}"
    return SuiteResult("symmetry-validator", rejected == 0 and not bad.ok, trials, float(rejected), detail)


def gradient_check_suite(dims=(12, 20, 10), trials: int = 100, rng=None, h: float = 1e-5, tol: float = 1e-4,
                         batch: int = 5) -> SuiteResult:
    """Analytic gradients against central differences.

    Relative error per parameter is ``|g - fd| / max(|g|, |fd|, 1e-6)``.
    """
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(trials):
        params = init_mlp(dims, rng)
        for b in params.biases:
            b[:] = rng.normal(0, 0.5, size=b.shape)
        x = rng.normal(size=(batch, dims[0]))
        a = rng.integers(dims[-1], size=batch)
        y = rng.normal(size=batch)
        _, gw, gb = squared_error_grads(params, x, a, y)
        for tensor, grad in zip(params.weights + params.biases, gw + gb):
            flat, gflat = tensor.reshape(-1), grad.reshape(-1)
            for k in range(flat.size):
                old = flat[k]
                flat[k] = old + h
                up = squared_error_grads(params, x, a, y)[0]
                flat[k] = old - h
                down = squared_error_grads(params, x, a, y)[0]
                flat[k] = old
                fd = (up - down) / (2 * h)
                err = abs(gflat[k] - fd) / max(abs(gflat[k]), abs(fd), 1e-6)
                worst = max(worst, err)
    return SuiteResult("gradient-check", worst < tol, trials, worst)


def run_all(env: LeverGame | None = None, trials: int = 100, seed: int = 0) -> list[SuiteResult]:
    env = env or LeverGame()
    group = lever_symmetry_group(env)
    return [
        return_invariance_suite(env, group, trials, rng=seed),
        inverse_transfer_suite(env, group, trials, rng=seed + 1),
        symmetry_validator_suite(env, group, 10 * trials, rng=seed + 2),
        gradient_check_suite(trials=trials, rng=seed + 3),
    ]
