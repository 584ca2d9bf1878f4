"""Equivalence mappings over a finite Dec-POMDP.

A :class:`SymmetryOp` stores explicit label bijections (index arrays) for
states, per-agent actions and per-agent observations.  Applying an op to a
label is an array lookup; composition is fancy indexing.

Direction convention for policies
---------------------------------
``augment_policy(pi, op)`` returns the policy that perceives its history
through ``op`` and emits actions through ``op**-1``::

    augmented(a | tau) = pi(op(a) | op(tau))

Written with the relabel-a-policy operator ``R_op(pi)(op(a) | op(tau)) =
pi(a | tau)``, this is ``R_{op^-1}(pi)``.  Uniform sampling over a group is
invariant under inversion, so training distributions do not depend on the
choice.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .core_env import ActionObservationHistory, EnvironmentSpec, Policy


class SymmetryMismatch(ValueError):
    """Ops bound to different environments were combined."""


class UnknownLabel(ValueError):
    pass


def _frozen(arr) -> np.ndarray:
    a = np.array(arr, dtype=np.int64)
    a.setflags(write=False)
    return a


def is_permutation(arr: np.ndarray) -> bool:
    return arr.ndim == 1 and np.array_equal(np.sort(arr), np.arange(len(arr)))


@dataclass(frozen=True, eq=False)
class SymmetryOp:
    env_id: str
    state_map: np.ndarray
    action_maps: tuple
    observation_maps: tuple

    def __post_init__(self):
        object.__setattr__(self, "state_map", _frozen(self.state_map))
        object.__setattr__(self, "action_maps", tuple(_frozen(m) for m in self.action_maps))
        object.__setattr__(self, "observation_maps", tuple(_frozen(m) for m in self.observation_maps))

    def __eq__(self, other):
        if not isinstance(other, SymmetryOp):
            return NotImplemented
        return (
            self.env_id == other.env_id
            and np.array_equal(self.state_map, other.state_map)
            and len(self.action_maps) == len(other.action_maps)
            and all(np.array_equal(a, b) for a, b in zip(self.action_maps, other.action_maps))
            and all(np.array_equal(a, b) for a, b in zip(self.observation_maps, other.observation_maps))
        )

    def __hash__(self):
        return hash(self.key())

    def key(self) -> tuple:
        return (
            self.env_id,
            self.state_map.tobytes(),
            tuple(m.tobytes() for m in self.action_maps),
            tuple(m.tobytes() for m in self.observation_maps),
        )

    @property
    def num_agents(self) -> int:
        return len(self.action_maps)

    def is_bijective(self) -> bool:
        maps = (self.state_map,) + self.action_maps + self.observation_maps
        return all(is_permutation(m) for m in maps)

    def apply_state(self, s: int) -> int:
        return int(self.state_map[s])

    def apply_action(self, agent: int, a: int) -> int:
        return int(self.action_maps[agent][a])

    def apply_observation(self, agent: int, o: int) -> int:
        return int(self.observation_maps[agent][o])

    def apply_joint_action(self, joint_action: tuple) -> tuple:
        return tuple(int(self.action_maps[i][a]) for i, a in enumerate(joint_action))

    def to_record(self) -> str:
        def fmt(arr):
            return "[" + ",".join(str(int(x)) for x in arr) + "]"

        lines = [f"env_id: {self.env_id}", f"state_map: {fmt(self.state_map)}"]
        lines += [f"action_map[{i}]: {fmt(m)}" for i, m in enumerate(self.action_maps)]
        lines += [f"observation_map[{i}]: {fmt(m)}" for i, m in enumerate(self.observation_maps)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text: str) -> "SymmetryOp":
        fields: dict[str, str] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, sep, value = line.partition(":")
            if not sep:
                raise ValueError(f"malformed symmetry record line: {line!r}")
            fields[key.strip()] = value.strip()

        def parse(value):
            if not re.fullmatch(r"\[\s*(-?\d+\s*(,\s*-?\d+\s*)*)?\]", value):
                raise ValueError(f"malformed index array: {value!r}")
            inner = value[1:-1].strip()
            return [int(x) for x in inner.split(",")] if inner else []

        def indexed(prefix):
            out = []
            while f"{prefix}[{len(out)}]" in fields:
                out.append(parse(fields[f"{prefix}[{len(out)}]"]))
            return out

        try:
            env_id = fields["env_id"]
            state_map = parse(fields["state_map"])
        except KeyError as exc:
            raise ValueError(f"symmetry record missing field {exc}") from None
        return cls(env_id, state_map, tuple(indexed("action_map")), tuple(indexed("observation_map")))


def identity(env: EnvironmentSpec) -> SymmetryOp:
    n = env.num_agents
    return SymmetryOp(
        env.env_id,
        np.arange(env.num_states),
        tuple(np.arange(env.num_actions(i)) for i in range(n)),
        tuple(np.arange(env.num_observations(i)) for i in range(n)),
    )


def compose(a: SymmetryOp, b: SymmetryOp) -> SymmetryOp:
    """``compose(a, b)(x) == a(b(x))`` for every label."""
    if a.env_id != b.env_id:
        raise SymmetryMismatch(f"cannot compose ops of {a.env_id!r} and {b.env_id!r}")
    return SymmetryOp(
        a.env_id,
        a.state_map[b.state_map],
        tuple(x[y] for x, y in zip(a.action_maps, b.action_maps)),
        tuple(x[y] for x, y in zip(a.observation_maps, b.observation_maps)),
    )


def inverse(a: SymmetryOp) -> SymmetryOp:
    if not a.is_bijective():
        raise ValueError("only bijective ops can be inverted")
    return SymmetryOp(
        a.env_id,
        np.argsort(a.state_map),
        tuple(np.argsort(m) for m in a.action_maps),
        tuple(np.argsort(m) for m in a.observation_maps),
    )


def apply_to_trajectory(op: SymmetryOp, aoh: ActionObservationHistory) -> ActionObservationHistory:
    agent = aoh.agent_id
    omap, amap = op.observation_maps[agent], op.action_maps[agent]
    out = []
    for k, label in enumerate(aoh.entries):
        table = omap if k % 2 == 0 else amap
        if not 0 <= label < len(table):
            kind = "observation" if k % 2 == 0 else "action"
            raise UnknownLabel(f"{kind} label {label!r} outside alphabet of agent {agent}")
        out.append(int(table[label]))
    return ActionObservationHistory(agent, tuple(out))


class AugmentedPolicy(Policy):
    """``pi`` seen through ``op``: perceive ``op(tau)``, emit ``op^-1(a)``."""

    def __init__(self, policy: Policy, op: SymmetryOp):
        self.policy = policy
        self.op = op

    def action_distribution(self, aoh):
        perceived = apply_to_trajectory(self.op, aoh)
        # out[a] = p[op(a)]
        return self.policy.action_distribution(perceived)[self.op.action_maps[aoh.agent_id]]

    def act(self, aoh, rng):
        perceived = apply_to_trajectory(self.op, aoh)
        a = self.policy.act(perceived, rng)
        return int(np.argsort(self.op.action_maps[aoh.agent_id])[a])

    def constant_action(self):
        c = self.policy.constant_action()
        if c is None or not _agent_uniform(self.op.action_maps):
            return None
        return int(np.argsort(self.op.action_maps[0])[c])

    def is_relabel_invariant(self):
        return self.policy.is_relabel_invariant()


def _agent_uniform(maps) -> bool:
    return all(np.array_equal(maps[0], m) for m in maps[1:])


def augment_policy(policy: Policy, op: SymmetryOp) -> Policy:
    relabel = getattr(policy, "relabeled", None)
    if relabel is not None:
        fast = relabel(op)
        if fast is not None:
            return fast
    return AugmentedPolicy(policy, op)


class SymmetryGroup:
    """A finite group of equivalence mappings with a uniform sampler.

    The base class holds an explicit element list.  Subclasses may represent
    the group implicitly and override :meth:`sample`, :meth:`elements` and
    :meth:`action_image_distribution`.
    """

    def __init__(self, env: EnvironmentSpec, elements=None, description: str = "explicit"):
        self.env = env
        self.env_id = env.env_id
        self.description = description
        self._elements = list(elements) if elements is not None else [identity(env)]

    @property
    def size(self) -> int:
        return len(self._elements)

    def enumerable(self, limit: int) -> bool:
        return self.size <= limit

    def elements(self):
        return list(self._elements)

    def identity(self) -> SymmetryOp:
        return identity(self.env)

    def sample(self, rng: np.random.Generator) -> SymmetryOp:
        return self._elements[int(rng.integers(self.size))]

    def contains(self, op: SymmetryOp) -> bool:
        return any(op == e for e in self._elements)

    def action_image_distribution(self, agent: int, action: int) -> dict[int, float]:
        """Law of ``op(action)`` for ``op`` uniform over the group."""
        counts: dict[int, int] = {}
        for e in self._elements:
            img = e.apply_action(agent, action)
            counts[img] = counts.get(img, 0) + 1
        return {k: v / self.size for k, v in sorted(counts.items())}


def trivial_group(env: EnvironmentSpec) -> SymmetryGroup:
    return SymmetryGroup(env, [identity(env)], description="identity only")


class PermutationGroup(SymmetryGroup):
    """Full symmetric group on a set of labels, represented implicitly.

    ``builder`` turns a permutation array of length ``degree`` into a
    :class:`SymmetryOp`.  Sampling is an unbiased Fisher-Yates shuffle.
    """

    def __init__(self, env, degree: int, builder, description: str = "symmetric group"):
        self.env = env
        self.env_id = env.env_id
        self.description = description
        self.degree = degree
        self.builder = builder

    @property
    def size(self) -> int:
        return math.factorial(self.degree)

    def elements(self):
        import itertools

        return [self.builder(np.array(p)) for p in itertools.permutations(range(self.degree))]

    def sample(self, rng):
        return self.builder(rng.permutation(self.degree))

    def contains(self, op):
        if op.env_id != self.env_id or not op.is_bijective():
            return False
        return op == self.builder(op.action_maps[0])

    def action_image_distribution(self, agent, action):
        # the symmetric group is transitive and every label is moved uniformly
        return {k: 1.0 / self.degree for k in range(self.degree)}


def sample_uniform(group: SymmetryGroup, rng: np.random.Generator) -> SymmetryOp:
    return group.sample(rng)


@dataclass
class ValidationReport:
    ok: bool
    violations: list

    def __bool__(self):
        return self.ok


def _dist_dict(dist):
    out: dict = {}
    for k, p in dist:
        out[k] = out.get(k, 0.0) + p
    return out


def _mismatch(d1, d2, tol):
    for k in set(d1) | set(d2):
        if abs(d1.get(k, 0.0) - d2.get(k, 0.0)) > tol:
            return k, d1.get(k, 0.0), d2.get(k, 0.0)
    return None


def validate_symmetry(
    env: EnvironmentSpec, op: SymmetryOp, tolerance: float = 1e-12, max_violations: int = 10
) -> ValidationReport:
    """Exhaustively check that ``op`` leaves dynamics, rewards and observations unchanged.

    For every state ``s``, joint action ``a`` and successor ``s2`` the
    transition, reward and per-agent observation laws must agree with their
    relabelled counterparts.  The start-state and first-observation laws are
    checked the same way.
    """
    violations: list[str] = []

    def add(msg):
        violations.append(msg)
        return len(violations) >= max_violations

    if op.env_id != env.env_id:
        return ValidationReport(False, [f"op bound to {op.env_id!r}, env is {env.env_id!r}"])
    n = env.num_agents
    shapes = [("state_map", op.state_map, env.num_states)]
    shapes += [(f"action_map[{i}]", op.action_maps[i], env.num_actions(i)) for i in range(n)]
    shapes += [(f"observation_map[{i}]", op.observation_maps[i], env.num_observations(i)) for i in range(n)]
    if len(op.action_maps) != n or len(op.observation_maps) != n:
        return ValidationReport(False, ["op has the wrong number of agents"])
    for name, m, size in shapes:
        if len(m) != size or not is_permutation(m):
            violations.append(f"{name} is not a bijection on {size} labels")
    if violations:
        return ValidationReport(False, violations)

    init = _dist_dict(env.initial_state_distribution())
    mapped = {op.apply_state(s): p for s, p in init.items()}
    if (bad := _mismatch(init, mapped, tolerance)) and add(f"initial state law differs at {bad}"):
        return ValidationReport(False, violations)
    for s in range(env.num_states):
        for i in range(n):
            d1 = _dist_dict(env.observation_distribution(i, s, None))
            d2 = _dist_dict(env.observation_distribution(i, op.apply_state(s), None))
            d2 = {k: d2.get(op.apply_observation(i, k), 0.0) for k in range(env.num_observations(i))}
            if (bad := _mismatch(d1, d2, tolerance)) and add(f"first observation law of agent {i} differs at state {s}: {bad}"):
                return ValidationReport(False, violations)

    for s in range(env.num_states):
        fs = op.apply_state(s)
        for ja in env.joint_actions():
            fja = op.apply_joint_action(ja)
            t1 = _dist_dict(env.transition_distribution(s, ja))
            t2 = _dist_dict(env.transition_distribution(fs, fja))
            for s2 in range(env.num_states):
                p1, p2 = t1.get(s2, 0.0), t2.get(op.apply_state(s2), 0.0)
                if abs(p1 - p2) > tolerance and add(f"T({s2}|{s},{ja})={p1} but relabelled {p2}"):
                    return ValidationReport(False, violations)
        # rewards and observations depend on (next state, joint action) only
    for s2 in range(env.num_states):
        fs2 = op.apply_state(s2)
        for ja in env.joint_actions():
            fja = op.apply_joint_action(ja)
            r1 = _dist_dict(env.reward_distribution(s2, ja))
            r2 = _dist_dict(env.reward_distribution(fs2, fja))
            if (bad := _mismatch(r1, r2, tolerance)) and add(f"R(.|{s2},{ja}) differs at {bad}"):
                return ValidationReport(False, violations)
            for i in range(n):
                u1 = _dist_dict(env.observation_distribution(i, s2, ja))
                u2 = _dist_dict(env.observation_distribution(i, fs2, fja))
                u2 = {o: u2.get(op.apply_observation(i, o), 0.0) for o in range(env.num_observations(i))}
                if (bad := _mismatch(u1, u2, tolerance)) and add(f"U^{i}(.|{s2},{ja}) differs at {bad}"):
                    return ValidationReport(False, violations)
    return ValidationReport(not violations, violations)
