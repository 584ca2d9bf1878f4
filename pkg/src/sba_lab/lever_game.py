"""The iterated lever coordination game.

Two players each pull one of ``num_levers`` levers, ``num_rounds`` times.
A matching pull pays ``reward_on_match``.  From round two on, each player
observes the lever its partner pulled in the previous round.

Labels
------
* state ``s``: number of completed rounds, ``0..num_rounds``.
* action: lever index.
* observation: ``0`` is the round-one NONE observation; ``1 + (r - 2) * L + k``
  encodes "round ``r``, partner previously pulled ``k``".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_env import EnvironmentSpec, Policy
from .symmetry import PermutationGroup, SymmetryOp

NONE = None


@dataclass(frozen=True)
class LeverGameConfig:
    num_levers: int = 10
    num_rounds: int = 2
    reward_on_match: float = 1.0

    def __post_init__(self):
        if self.num_levers < 2:
            raise ValueError("num_levers must be at least 2")
        if self.num_rounds < 1:
            raise ValueError("num_rounds must be at least 1")

    @property
    def num_observations(self) -> int:
        return 1 + (self.num_rounds - 1) * self.num_levers

    @classmethod
    def from_dict(cls, d: dict) -> "LeverGameConfig":
        unknown = set(d) - {"num_levers", "num_rounds", "reward_on_match"}
        if unknown:
            raise ValueError(f"unknown env keys: {sorted(unknown)}")
        return cls(
            num_levers=int(d.get("num_levers", 10)),
            num_rounds=int(d.get("num_rounds", 2)),
            reward_on_match=float(d.get("reward_on_match", 1.0)),
        )

    def to_dict(self) -> dict:
        return {"num_levers": self.num_levers, "num_rounds": self.num_rounds, "reward_on_match": self.reward_on_match}


@dataclass(frozen=True)
class LeverObservation:
    round_index: int
    partner_previous_action: int | None

    def __post_init__(self):
        if (self.round_index == 1) != (self.partner_previous_action is None):
            raise ValueError("round 1 observations, and only those, carry NONE")


def observation_index(obs: LeverObservation, config: LeverGameConfig) -> int:
    if obs.round_index == 1:
        return 0
    if not 2 <= obs.round_index <= config.num_rounds:
        raise ValueError(f"round {obs.round_index} outside 1..{config.num_rounds}")
    return 1 + (obs.round_index - 2) * config.num_levers + obs.partner_previous_action


def decode_observation(index: int, config: LeverGameConfig) -> LeverObservation:
    if index == 0:
        return LeverObservation(1, None)
    r, k = divmod(index - 1, config.num_levers)
    return LeverObservation(r + 2, k)


def all_observations(config: LeverGameConfig) -> list[LeverObservation]:
    return [decode_observation(i, config) for i in range(config.num_observations)]


def encode_observation(obs: LeverObservation | int, config: LeverGameConfig) -> np.ndarray:
    """One-hot partner lever over ``L + 1`` slots (last is NONE) plus a round-one bit."""
    if not isinstance(obs, LeverObservation):
        obs = decode_observation(int(obs), config)
    L = config.num_levers
    x = np.zeros(L + 2)
    if obs.partner_previous_action is None:
        x[L] = 1.0
    else:
        x[obs.partner_previous_action] = 1.0
    x[L + 1] = 1.0 if obs.round_index == 1 else 0.0
    return x


def encoding_matrix(config: LeverGameConfig) -> np.ndarray:
    """Row ``i`` encodes observation index ``i``."""
    return np.stack([encode_observation(i, config) for i in range(config.num_observations)])


class LeverGame(EnvironmentSpec):
    num_agents = 2

    def __init__(self, config: LeverGameConfig | None = None):
        self.config = config or LeverGameConfig()
        c = self.config
        self.env_id = f"lever_game(num_levers={c.num_levers},num_rounds={c.num_rounds},reward_on_match={c.reward_on_match!r})"
        self.horizon = c.num_rounds
        self.discount = 1.0
        self.num_states = c.num_rounds + 1
        self._none_obs = [(0, 1.0)]

    def num_actions(self, agent):
        return self.config.num_levers

    def num_observations(self, agent):
        return self.config.num_observations

    def initial_state_distribution(self):
        return [(0, 1.0)]

    def transition_distribution(self, state, joint_action):
        return [(min(state + 1, self.config.num_rounds), 1.0)]

    def observation_distribution(self, agent, state, joint_action):
        # state = rounds completed; no observation is emitted after the last round
        if joint_action is None or state <= 0 or state >= self.config.num_rounds:
            return self._none_obs
        return [(1 + (state - 1) * self.config.num_levers + joint_action[1 - agent], 1.0)]

    def reward_distribution(self, next_state, joint_action):
        match = joint_action[0] == joint_action[1]
        return [(self.config.reward_on_match if match else 0.0, 1.0)]

    def expected_reward(self, next_state, joint_action):
        return self.config.reward_on_match if joint_action[0] == joint_action[1] else 0.0


def make_env(config: LeverGameConfig | None = None) -> LeverGame:
    return LeverGame(config)


def lever_permutation_op(env: LeverGame, perm) -> SymmetryOp:
    """Relabel levers by ``perm`` in actions and in the partner field of observations."""
    c = env.config
    perm = np.asarray(perm, dtype=np.int64)
    obs_map = np.zeros(c.num_observations, dtype=np.int64)
    for r in range(c.num_rounds - 1):
        base = 1 + r * c.num_levers
        obs_map[base : base + c.num_levers] = base + perm
    return SymmetryOp(env.env_id, np.arange(env.num_states), (perm, perm), (obs_map, obs_map))


def lever_symmetry_group(env: LeverGame) -> PermutationGroup:
    return PermutationGroup(
        env,
        env.config.num_levers,
        lambda perm: lever_permutation_op(env, perm),
        description=f"all permutations of {env.config.num_levers} levers",
    )


class FollowerPolicy(Policy):
    """Uniform lever in round one, then copy the partner's previous lever."""

    def __init__(self, config: LeverGameConfig):
        self.config = config
        L = config.num_levers
        self._uniform = np.full(L, 1.0 / L)
        self._onehot = np.eye(L)

    def action_distribution(self, aoh):
        o = aoh.last_observation
        if o == 0:
            return self._uniform
        return self._onehot[(o - 1) % self.config.num_levers]


def make_deterministic_population(lever_indices, config: LeverGameConfig | None = None, name: str | None = None):
    from .policies import DeterministicTablePolicy
    from .populations import Population

    config = config or LeverGameConfig()
    members = []
    for k in lever_indices:
        k = int(k)
        if not 0 <= k < config.num_levers:
            raise ValueError(f"lever index {k} outside 0..{config.num_levers - 1}")
        members.append(
            DeterministicTablePolicy(f"lever_{k}", [k] * config.num_observations, config.num_levers)
        )
    label = name or "levers_" + "_".join(str(int(k)) for k in lever_indices)
    return Population(label, tuple(members))


def _lever_distribution(pop, config) -> np.ndarray:
    p = np.zeros(config.num_levers)
    for m in pop.members:
        k = m.constant_action()
        if k is None:
            raise ValueError(f"member {getattr(m, 'name', m)!r} is not a deterministic lever policy")
        p[k] += 1.0
    return p / p.sum()


def optimal_br_value(train_pop, eval_pop, sba: bool, config: LeverGameConfig | None = None):
    """Closed-form best-response values ``(train_value, eval_value)``.

    Round one scores the best match probability against the (augmented)
    teammate distribution; every later round scores the probability that the
    observed teammate lever has a learned response.  With ``sba`` the
    augmented teammate lever is uniform over all levers, and the evaluation
    is the augmented one as well.
    """
    config = config or LeverGameConfig()
    L, later = config.num_levers, config.num_rounds - 1
    p_train = _lever_distribution(train_pop, config)
    p_eval = _lever_distribution(eval_pop, config)
    scale = config.reward_on_match
    if sba:
        v = scale * (1.0 / L + later)
        return v, v
    first = int(np.argmax(p_train))  # ties break toward the lowest index
    seen = p_train > 0
    train_value = scale * (p_train[first] + later)
    eval_value = scale * (p_eval[first] + later * float(p_eval[seen].sum()))
    return float(train_value), float(eval_value)
