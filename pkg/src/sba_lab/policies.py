"""Serializable policy kinds: deterministic table, uniform random, MLP."""

from __future__ import annotations

import numpy as np

from .core_env import Policy
from .mlp import MlpParams, forward


class PolicySpec(Policy):
    kind: str = ""

    def __init__(self, name: str):
        self.name = name

    def to_payload(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class DeterministicTablePolicy(PolicySpec):
    """Plays ``table[o]`` where ``o`` is the latest observation label.

    For the lever game the latest observation (round index plus partner's
    previous lever) is a sufficient statistic of the AOH for these tables.
    """

    kind = "deterministic_table"

    def __init__(self, name, table, num_actions):
        super().__init__(name)
        self.table = np.array(table, dtype=np.int64)
        self.table.setflags(write=False)
        self.num_actions = int(num_actions)
        if self.table.ndim != 1 or len(self.table) == 0:
            raise ValueError("table must be a non-empty 1-d list of actions")
        if self.table.min() < 0 or self.table.max() >= self.num_actions:
            raise ValueError(f"table entries must lie in 0..{self.num_actions - 1}")
        self._eye = np.eye(self.num_actions)

    def action_distribution(self, aoh):
        return self._eye[self.table[aoh.last_observation]]

    def act(self, aoh, rng):
        return int(self.table[aoh.last_observation])

    def constant_action(self):
        first = int(self.table[0])
        return first if np.all(self.table == first) else None

    def relabeled(self, op):
        amaps, omaps = op.action_maps, op.observation_maps
        if not all(np.array_equal(amaps[0], m) for m in amaps[1:]) or not all(
            np.array_equal(omaps[0], m) for m in omaps[1:]
        ):
            return None
        inv = np.argsort(amaps[0])
        return DeterministicTablePolicy(self.name, inv[self.table[omaps[0]]], self.num_actions)

    def to_payload(self):
        return {"num_actions": self.num_actions, "table": [int(a) for a in self.table]}

    @classmethod
    def from_payload(cls, name, payload):
        return cls(name, _require(payload, "table", list), _require(payload, "num_actions", int))


class UniformRandomPolicy(PolicySpec):
    kind = "uniform_random"

    def __init__(self, name, num_actions):
        super().__init__(name)
        self.num_actions = int(num_actions)
        if self.num_actions < 1:
            raise ValueError("num_actions must be positive")
        self._probs = np.full(self.num_actions, 1.0 / self.num_actions)

    def action_distribution(self, aoh):
        return self._probs

    def act(self, aoh, rng):
        return int(rng.integers(self.num_actions))

    def is_relabel_invariant(self):
        return True

    def relabeled(self, op):
        return self

    def to_payload(self):
        return {"num_actions": self.num_actions}

    @classmethod
    def from_payload(cls, name, payload):
        return cls(name, _require(payload, "num_actions", int))


class MlpPolicy(PolicySpec):
    """Greedy policy over the action values of a lever-game MLP.

    The input is the lever-game observation encoding, so ``dims`` must be
    ``[num_levers + 2, ..., num_levers]``.  Ties go to the lowest action.
    """

    kind = "mlp"

    def __init__(self, name, params: MlpParams, num_rounds: int = 2):
        super().__init__(name)
        from .lever_game import LeverGameConfig, encoding_matrix

        self.params = params
        L = params.dims[-1]
        if params.dims[0] != L + 2:
            raise ValueError(f"mlp input size {params.dims[0]} != num_levers + 2 = {L + 2}")
        self.num_rounds = int(num_rounds)
        self.config = LeverGameConfig(num_levers=L, num_rounds=self.num_rounds)
        self.values = forward(params, encoding_matrix(self.config))
        self.table = np.argmax(self.values, axis=1)
        self._eye = np.eye(L)

    def action_distribution(self, aoh):
        return self._eye[self.table[aoh.last_observation]]

    def act(self, aoh, rng):
        return int(self.table[aoh.last_observation])

    def to_payload(self):
        return {
            "dims": list(self.params.dims),
            "num_rounds": self.num_rounds,
            "weights": [[float(x) for x in w.ravel()] for w in self.params.weights],
            "biases": [[float(x) for x in b] for b in self.params.biases],
        }

    @classmethod
    def from_payload(cls, name, payload):
        dims = [int(d) for d in _require(payload, "dims", list)]
        weights = _require(payload, "weights", list)
        biases = _require(payload, "biases", list)
        if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
            raise ValueError(f"mlp {name!r}: expected {len(dims) - 1} weight and bias arrays")
        ws, bs = [], []
        for k in range(len(dims) - 1):
            w = np.array(weights[k], dtype=float)
            b = np.array(biases[k], dtype=float)
            if w.ndim != 1 or w.size != dims[k] * dims[k + 1]:
                raise ValueError(
                    f"mlp {name!r}: layer {k} weight array has {w.size} values, expected {dims[k] * dims[k + 1]}"
                )
            if b.ndim != 1 or b.size != dims[k + 1]:
                raise ValueError(f"mlp {name!r}: layer {k} bias array has {b.size} values, expected {dims[k + 1]}")
            ws.append(w.reshape(dims[k], dims[k + 1]))
            bs.append(b)
        params = MlpParams(dims, ws, bs)
        if not params.is_finite():
            raise ValueError(f"mlp {name!r}: non-finite parameters")
        return cls(name, params, int(payload.get("num_rounds", 2)))


POLICY_KINDS = {cls.kind: cls for cls in (DeterministicTablePolicy, UniformRandomPolicy, MlpPolicy)}


def _require(payload, key, typ):
    if not isinstance(payload, dict) or key not in payload:
        raise ValueError(f"payload missing {key!r}")
    value = payload[key]
    if typ is int and isinstance(value, bool) or not isinstance(value, typ):
        raise ValueError(f"payload field {key!r} must be {typ.__name__}, got {type(value).__name__}")
    return value


def policy_from_dict(d: dict) -> PolicySpec:
    for key in ("name", "kind", "payload"):
        if key not in d:
            raise ValueError(f"policy record missing {key!r}")
    kind = d["kind"]
    if kind not in POLICY_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}; expected one of {sorted(POLICY_KINDS)}")
    return POLICY_KINDS[kind].from_payload(str(d["name"]), d["payload"])


def policy_to_dict(policy: PolicySpec) -> dict:
    return {"name": policy.name, "kind": policy.kind, "payload": policy.to_payload()}

