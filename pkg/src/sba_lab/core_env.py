"""Finite-horizon Dec-POMDP abstraction, rollouts and return evaluation.

Labels (states, actions, observations) are plain integers ``0..n-1`` so that
equivalence mappings can be stored as index arrays.  Every stochastic piece
of the model is exposed as an explicit finite distribution, a list of
``(outcome, probability)`` pairs; the samplers are derived from those lists,
which keeps exact enumeration and Monte Carlo rollouts on the same footing.
"""

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Distribution = list  # list[tuple[outcome, float]]

DEFAULT_MAX_BRANCHES = 10**7


class BranchLimitExceeded(RuntimeError):
    """Raised when exact enumeration would visit too many branches."""


class InvalidAction(ValueError):
    pass


def sample_from(dist: Distribution, rng: np.random.Generator):
    if len(dist) == 1:
        return dist[0][0]
    u = rng.random()
    acc = 0.0
    for outcome, p in dist:
        acc += p
        if u < acc:
            return outcome
    return dist[-1][0]


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a probability vector."""
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    # guard against cumsum rounding just below 1
    if idx >= len(probs):
        idx = int(np.flatnonzero(probs)[-1])
    return idx


class EnvironmentSpec(ABC):
    """A finite Dec-POMDP with explicit distributions.

    Subclasses supply the distribution methods; sampling helpers are shared.
    The first observation of an episode is drawn with ``joint_action=None``.
    """

    env_id: str
    num_agents: int
    horizon: int
    discount: float
    num_states: int

    @abstractmethod
    def num_actions(self, agent: int) -> int: ...

    @abstractmethod
    def num_observations(self, agent: int) -> int: ...

    @abstractmethod
    def initial_state_distribution(self) -> Distribution: ...

    @abstractmethod
    def transition_distribution(self, state: int, joint_action: tuple) -> Distribution: ...

    @abstractmethod
    def observation_distribution(
        self, agent: int, state: int, joint_action: tuple | None
    ) -> Distribution: ...

    @abstractmethod
    def reward_distribution(self, next_state: int, joint_action: tuple) -> Distribution: ...

    def expected_reward(self, next_state: int, joint_action: tuple) -> float:
        return sum(r * p for r, p in self.reward_distribution(next_state, joint_action))

    def joint_actions(self):
        return itertools.product(*(range(self.num_actions(i)) for i in range(self.num_agents)))

    # samplers
    def sample_initial_state(self, rng):
        return sample_from(self.initial_state_distribution(), rng)

    def sample_transition(self, state, joint_action, rng):
        return sample_from(self.transition_distribution(state, joint_action), rng)

    def sample_observation(self, agent, state, joint_action, rng):
        return sample_from(self.observation_distribution(agent, state, joint_action), rng)

    def sample_reward(self, next_state, joint_action, rng):
        return sample_from(self.reward_distribution(next_state, joint_action), rng)


@dataclass(frozen=True)
class ActionObservationHistory:
    """One agent's private record ``(o1, a1, o2, ..., ot)``."""

    agent_id: int
    entries: tuple = ()

    def __post_init__(self):
        if self.entries and len(self.entries) % 2 == 0:
            raise ValueError("an AOH must end with an observation")

    @property
    def observations(self) -> tuple:
        return self.entries[0::2]

    @property
    def actions(self) -> tuple:
        return self.entries[1::2]

    @property
    def last_observation(self) -> int:
        return self.entries[-1]

    @property
    def step(self) -> int:
        """Number of observations received so far (1-based round index)."""
        return (len(self.entries) + 1) // 2

    def extend(self, action: int, observation: int) -> "ActionObservationHistory":
        return ActionObservationHistory(self.agent_id, self.entries + (action, observation))


class Policy(ABC):
    """Per-agent behaviour: a distribution over actions given an AOH."""

    @abstractmethod
    def action_distribution(self, aoh: ActionObservationHistory) -> np.ndarray: ...

    def act(self, aoh: ActionObservationHistory, rng: np.random.Generator) -> int:
        return sample_index(self.action_distribution(aoh), rng)

    def constant_action(self) -> int | None:
        """Action played after every history, if the policy is that simple."""
        return None

    def is_relabel_invariant(self) -> bool:
        """True when every action permutation leaves the policy unchanged."""
        return False


@dataclass
class EpisodeResult:
    joint_trajectory: list  # [(joint_observation, joint_action), ...]
    aohs: list
    rewards: list
    undiscounted_return: float
    discounted_return: float
    states: list = field(default_factory=list)


def discounted_sum(rewards: Sequence[float], discount: float) -> float:
    total = 0.0
    g = 1.0
    for r in rewards:
        total += g * r
        g *= discount
    return total


class _LazyGenerator:
    """Child generator built on first use; same stream as ``rng.spawn``."""

    __slots__ = ("_seq", "_gen")

    def __init__(self, seq: np.random.SeedSequence):
        self._seq = seq
        self._gen = None

    def __getattr__(self, name):
        if self._gen is None:
            self._gen = np.random.Generator(np.random.PCG64(self._seq))
        return getattr(self._gen, name)


def _agent_streams(rng: np.random.Generator, n: int) -> list:
    parent = rng.bit_generator.seed_seq
    if not isinstance(parent, np.random.SeedSequence) or parent.n_children_spawned:
        return rng.spawn(n)
    return [
        _LazyGenerator(np.random.SeedSequence(parent.entropy, spawn_key=parent.spawn_key + (i,),
                                              pool_size=parent.pool_size))
        for i in range(n)
    ]


def run_episode(env: EnvironmentSpec, joint_policy: Sequence[Policy], rng: np.random.Generator) -> EpisodeResult:
    """Roll out one episode.

    Agent ``i`` draws its actions from ``rng.spawn``-derived child stream ``i``;
    the environment uses ``rng`` itself, so one generator per episode fully
    determines the outcome.
    """
    if len(joint_policy) != env.num_agents:
        raise ValueError(f"expected {env.num_agents} policies, got {len(joint_policy)}")
    agent_rngs = _agent_streams(rng, env.num_agents)
    n = env.num_agents
    state = env.sample_initial_state(rng)
    obs = tuple(env.sample_observation(i, state, None, rng) for i in range(n))
    aohs = [ActionObservationHistory(i, (obs[i],)) for i in range(n)]
    trajectory, rewards, states = [], [], [state]
    for t in range(env.horizon):
        actions = []
        for i, pol in enumerate(joint_policy):
            a = pol.act(aohs[i], agent_rngs[i])
            if not 0 <= a < env.num_actions(i):
                raise InvalidAction(f"agent {i} emitted out-of-range action {a!r} at step {t + 1}")
            actions.append(int(a))
        joint_action = tuple(actions)
        trajectory.append((obs, joint_action))
        state = env.sample_transition(state, joint_action, rng)
        states.append(state)
        rewards.append(env.sample_reward(state, joint_action, rng))
        if t + 1 < env.horizon:
            obs = tuple(env.sample_observation(i, state, joint_action, rng) for i in range(n))
            aohs = [aohs[i].extend(joint_action[i], obs[i]) for i in range(n)]
    return EpisodeResult(
        joint_trajectory=trajectory,
        aohs=aohs,
        rewards=rewards,
        undiscounted_return=float(sum(rewards)),
        discounted_return=discounted_sum(rewards, env.discount),
        states=states,
    )


def _joint_observation_distribution(env, state, joint_action):
    per_agent = [env.observation_distribution(i, state, joint_action) for i in range(env.num_agents)]
    for combo in itertools.product(*per_agent):
        p = math.prod(q for _, q in combo)
        if p > 0.0:
            yield tuple(o for o, _ in combo), p


def _joint_action_distribution(joint_policy, aohs):
    per_agent = []
    for pol, aoh in zip(joint_policy, aohs):
        probs = pol.action_distribution(aoh)
        support = np.flatnonzero(probs)
        per_agent.append([(int(a), float(probs[a])) for a in support])
    for combo in itertools.product(*per_agent):
        p = math.prod(q for _, q in combo)
        if p > 0.0:
            yield tuple(a for a, _ in combo), p


def expected_return_exact(
    env: EnvironmentSpec,
    joint_policy: Sequence[Policy],
    max_branches: int = DEFAULT_MAX_BRANCHES,
) -> float:
    """Expected discounted return by depth-first enumeration of the game tree."""
    if len(joint_policy) != env.num_agents:
        raise ValueError(f"expected {env.num_agents} policies, got {len(joint_policy)}")
    visited = 0

    def value(state, aohs, t):
        nonlocal visited
        total = 0.0
        for joint_action, pa in _joint_action_distribution(joint_policy, aohs):
            for next_state, ps in env.transition_distribution(state, joint_action):
                if ps == 0.0:
                    continue
                visited += 1
                if visited > max_branches:
                    raise BranchLimitExceeded(
                        f"exact enumeration exceeded {max_branches} branches; "
                        "use expected_return_mc instead"
                    )
                r = env.expected_reward(next_state, joint_action)
                future = 0.0
                if t + 1 < env.horizon:
                    for obs, po in _joint_observation_distribution(env, next_state, joint_action):
                        child = [aohs[i].extend(joint_action[i], obs[i]) for i in range(env.num_agents)]
                        future += po * value(next_state, child, t + 1)
                total += pa * ps * (r + env.discount * future)
        return total

    total = 0.0
    for s0, p0 in env.initial_state_distribution():
        if p0 == 0.0:
            continue
        for obs, po in _joint_observation_distribution(env, s0, None):
            aohs = [ActionObservationHistory(i, (obs[i],)) for i in range(env.num_agents)]
            total += p0 * po * value(s0, aohs, 0)
    return total


def episode_rng(seed: int, episode_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, episode_index])


def expected_return_mc(
    env: EnvironmentSpec,
    joint_policy: Sequence[Policy],
    n_episodes: int,
    rng: np.random.Generator | int,
) -> tuple[float, float]:
    """Sample mean and standard error of the discounted return."""
    if n_episodes < 2:
        raise ValueError("n_episodes must be at least 2")
    seed = rng if isinstance(rng, (int, np.integer)) else int(rng.integers(2**63))
    returns = np.array(
        [run_episode(env, joint_policy, episode_rng(seed, k)).discounted_return for k in range(n_episodes)]
    )
    return float(returns.mean()), float(returns.std(ddof=1) / math.sqrt(n_episodes))


def reachable_aohs(env: EnvironmentSpec, agent: int) -> list[ActionObservationHistory]:
    """All AOHs of ``agent`` reachable under some joint action sequence."""
    found: dict[tuple, None] = {}
    frontier = []
    for s0, p0 in env.initial_state_distribution():
        if p0 == 0.0:
            continue
        for obs, _ in _joint_observation_distribution(env, s0, None):
            frontier.append((s0, (obs[agent],)))
    for t in range(env.horizon):
        nxt = []
        for state, entries in frontier:
            found[entries] = None
            if t + 1 >= env.horizon:
                continue
            for ja in env.joint_actions():
                for s2, ps in env.transition_distribution(state, ja):
                    if ps == 0.0:
                        continue
                    for o, po in env.observation_distribution(agent, s2, ja):
                        if po > 0.0:
                            nxt.append((s2, entries + (ja[agent], o)))
        frontier = list(dict.fromkeys(nxt))
    return [ActionObservationHistory(agent, e) for e in found]


def replay_probability(env: EnvironmentSpec, result: EpisodeResult) -> float:
    """Probability of the recorded environment events (ignoring policies)."""
    n = env.num_agents
    states = result.states
    p = dict(env.initial_state_distribution()).get(states[0], 0.0)
    obs0 = result.joint_trajectory[0][0]
    for i in range(n):
        p *= dict(env.observation_distribution(i, states[0], None)).get(obs0[i], 0.0)
    for t, (_, ja) in enumerate(result.joint_trajectory):
        p *= dict(env.transition_distribution(states[t], ja)).get(states[t + 1], 0.0)
        p *= dict(env.reward_distribution(states[t + 1], ja)).get(result.rewards[t], 0.0)
        if t + 1 < env.horizon:
            nobs = result.joint_trajectory[t + 1][0]
            for i in range(n):
                p *= dict(env.observation_distribution(i, states[t + 1], ja)).get(nobs[i], 0.0)
    return p
