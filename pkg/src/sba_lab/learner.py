"""Best-response training against a teammate population, with or without SBA.

The learner is an action-value MLP (sigmoid hidden layer) regressed onto
Monte Carlo returns-to-go, trained with Adam and acting epsilon-greedily.
With SBA every episode draws a group element ``op``; the learner sees its
history through ``op`` and its chosen action is mapped back through
``op**-1`` before reaching the environment.  Stored transitions are the
learner's own *perceived* observations and actions.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core_env import Policy, episode_rng, run_episode
from .lever_game import LeverGame, LeverGameConfig, encode_observation, encoding_matrix
from .metrics import robustness
from .mlp import Adam, MlpParams, forward, init_mlp, squared_error_grads
from .policies import DeterministicTablePolicy, MlpPolicy, PolicySpec
from .populations import Population, sample_member
from .symmetry import augment_policy, identity

__all__ = [
    "TrainConfig",
    "TrainingCurve",
    "DivergenceError",
    "encode_observation",
    "init_mlp",
    "forward",
    "greedy_policy",
    "train_best_response",
    "tabular_br_oracle",
]


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    adam_epsilon: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch_size: int = 10
    epochs: int = 1000
    episodes_per_epoch: int = 10
    hidden_size: int = 20
    exploration_initial: float = 0.9
    exploration_final: float = 0.05
    exploration_decay_epochs: int | None = None  # None: decay over all epochs
    sba_enabled: bool = False
    augment_eval: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.episodes_per_epoch < 1:
            raise ValueError("episodes_per_epoch must be >= 1")
        for name in ("exploration_initial", "exploration_final"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def exploration(self, epoch: int) -> float:
        span = self.exploration_decay_epochs or self.epochs
        frac = min(1.0, epoch / max(1, span - 1)) if span > 1 else 1.0
        return self.exploration_initial + frac * (self.exploration_final - self.exploration_initial)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown train keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingCurve:
    seed: int
    epochs: list = field(default_factory=list)
    train_returns: list = field(default_factory=list)
    eval_returns: list = field(default_factory=list)

    def append(self, epoch, train_value, eval_value):
        if self.epochs and epoch <= self.epochs[-1]:
            raise ValueError("epoch indices must increase")
        if not (math.isfinite(train_value) and math.isfinite(eval_value)):
            raise ValueError("non-finite return estimate")
        self.epochs.append(int(epoch))
        self.train_returns.append(float(train_value))
        self.eval_returns.append(float(eval_value))

    def __len__(self):
        return len(self.epochs)


class EpsilonGreedyMlp(Policy):
    """Epsilon-greedy over precomputed per-observation action values."""

    def __init__(self, values: np.ndarray, epsilon: float):
        self.values = values
        self.greedy = np.argmax(values, axis=1)
        self.epsilon = epsilon
        n = values.shape[1]
        self._base = np.full(n, epsilon / n)

    def action_distribution(self, aoh):
        p = self._base.copy()
        p[self.greedy[aoh.last_observation]] += 1.0 - self.epsilon
        return p

    def act(self, aoh, rng):
        if rng.random() < self.epsilon:
            return int(rng.integers(self.values.shape[1]))
        return int(self.greedy[aoh.last_observation])


def greedy_policy(params: MlpParams, config: LeverGameConfig, name: str = "greedy") -> DeterministicTablePolicy:
    """Argmax of the network on every observation label, lowest index on ties."""
    values = forward(params, encoding_matrix(config))
    return DeterministicTablePolicy(name, np.argmax(values, axis=1), config.num_levers)


def _transitions(result, seat, op, discount):
    """Perceived (observation, action, return-to-go) triples of the learner."""
    # the AOH omits the final action, so read the joint trajectory
    obs = [step[0][seat] for step in result.joint_trajectory]
    acts = [step[1][seat] for step in result.joint_trajectory]
    omap, amap = op.observation_maps[seat], op.action_maps[seat]
    rewards = result.rewards
    out = []
    g = 0.0
    togo = [0.0] * len(rewards)
    for t in range(len(rewards) - 1, -1, -1):
        g = rewards[t] + discount * g
        togo[t] = g
    for t in range(len(acts)):
        out.append((int(omap[obs[t]]), int(amap[acts[t]]), togo[t]))
    return out


def train_best_response(env: LeverGame, train_pop: Population, group, cfg: TrainConfig, eval_pop: Population,
                        rng: np.random.Generator | None = None, eval_group=None):
    """Train a best response to ``train_pop``; returns ``(policy, curve)``.

    ``group`` is required when ``cfg.sba_enabled``; it is ignored otherwise.
    Each epoch runs ``cfg.episodes_per_epoch`` episodes, then one pass of
    mini-batch Adam updates over the fresh transitions, then records the
    exact returns of the greedy policy: against ``train_pop`` (relabelled by
    the group under SBA) and against ``eval_pop`` (relabelled when
    ``cfg.augment_eval``).
    """
    if cfg.sba_enabled and group is None:
        raise ValueError("SBA training needs a symmetry group")
    config = env.config
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    init_rng, control_rng = rng.spawn(2)
    params = init_mlp((config.num_levers + 2, cfg.hidden_size, config.num_levers), init_rng)
    adam = Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
    enc = encoding_matrix(config)
    ident = identity(env)
    train_group = group if cfg.sba_enabled else None
    eval_group = eval_group if eval_group is not None else (group if cfg.augment_eval else None)
    episode_seed = int(control_rng.integers(2**63))
    curve = TrainingCurve(cfg.seed)
    value_cache: dict = {}
    episode = 0
    for epoch in range(cfg.epochs):
        values = forward(params, enc)
        behaviour = EpsilonGreedyMlp(values, cfg.exploration(epoch))
        batch = []
        for _ in range(cfg.episodes_per_epoch):
            teammate = sample_member(train_pop, control_rng)
            op = train_group.sample(control_rng) if train_group is not None else ident
            seat = int(control_rng.integers(env.num_agents))
            joint = [teammate] * env.num_agents
            joint[seat] = augment_policy(behaviour, op) if train_group is not None else behaviour
            result = run_episode(env, joint, episode_rng(episode_seed, episode))
            episode += 1
            batch.extend(_transitions(result, seat, op, env.discount))
        order = control_rng.permutation(len(batch))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = enc[[batch[k][0] for k in idx]]
            a = np.array([batch[k][1] for k in idx])
            y = np.array([batch[k][2] for k in idx])
            _, gw, gb = squared_error_grads(params, x, a, y)
            adam.step(params, gw, gb)
        if not params.is_finite():
            raise DivergenceError(f"seed {cfg.seed}: non-finite parameters after epoch {epoch}")
        greedy = greedy_policy(params, config)
        key = greedy.table.tobytes()
        if key not in value_cache:
            value_cache[key] = (
                robustness(env, greedy, train_pop, train_group).value,
                robustness(env, greedy, eval_pop, eval_group).value,
            )
        curve.append(epoch, *value_cache[key])
    return MlpPolicy(f"br_seed{cfg.seed}" + ("_sba" if cfg.sba_enabled else ""), params, config.num_rounds), curve


def tabular_br_oracle(env: LeverGame, train_pop: Population, group=None, name: str = "br_oracle") -> PolicySpec:
    """Exact best response to deterministic lever teammates.

    The teammate's lever distribution is the population's (without a group)
    or its image under a uniform group element (with one, by the
    uniform-image law).  Round one plays the most likely lever; afterwards the
    policy copies the observed lever where that lever has positive
    probability, and falls back to lever 0 on unreachable observations.
    Ties break toward the lowest index.
    """
    config = env.config
    L = config.num_levers
    p = np.zeros(L)
    for m in train_pop:
        k = m.constant_action()
        if k is None:
            raise ValueError(f"unsupported member {m!r}: oracle needs deterministic lever teammates")
        if group is None:
            p[k] += 1.0
        else:
            for img, w in group.action_image_distribution(0, k).items():
                p[img] += w
    p /= p.sum()
    table = np.zeros(config.num_observations, dtype=np.int64)
    table[0] = int(np.argmax(p))
    for o in range(1, config.num_observations):
        k = (o - 1) % L
        table[o] = k if p[k] > 0 else 0
    return DeterministicTablePolicy(name, table, L)
