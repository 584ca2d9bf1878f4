"""Populations of policies: sampling, file format and crossplay matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .policies import PolicySpec, policy_from_dict, policy_to_dict

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Population:
    name: str
    members: tuple

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError(f"population {self.name!r} is empty")
        names = [m.name for m in self.members]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValueError(f"population {self.name!r} has duplicate member names {dupes}")

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    def by_name(self, name: str) -> PolicySpec:
        for m in self.members:
            if m.name == name:
                return m
        raise KeyError(name)


def sample_member(pop: Population, rng: np.random.Generator) -> PolicySpec:
    return pop.members[int(rng.integers(len(pop.members)))]


def serialize(pop: Population) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": pop.name,
        "members": [policy_to_dict(m) for m in pop.members],
    }
    # json writes floats with repr, which round-trips 64-bit values exactly
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def deserialize(text: str) -> Population:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"population file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("population document must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    if not isinstance(doc.get("name"), str):
        raise SchemaError("population name must be a string")
    members = doc.get("members")
    if not isinstance(members, list):
        raise SchemaError("members must be a list")
    try:
        policies = tuple(policy_from_dict(m) for m in members)
        return Population(doc["name"], policies)
    except (ValueError, TypeError) as exc:
        raise SchemaError(str(exc)) from None


def save_population(pop: Population, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize(pop))


def load_population(path) -> Population:
    with open(path, encoding="utf-8") as fh:
        return deserialize(fh.read())


def crossplay_matrix(env, pop: Population, evaluator: str = "exact", n_episodes: int = 10_000, rng=None,
                     return_stderr: bool = False):
    """Matrix of seat-averaged crossplay returns between all members.

    ``evaluator`` is ``"exact"`` or ``"mc"``.  With ``return_stderr`` the
    Monte Carlo standard errors are returned as a second matrix (zeros for
    exact evaluation).
    """
    from .metrics import crossplay

    n = len(pop)
    values = np.zeros((n, n))
    errors = np.zeros((n, n))
    seeds = np.random.default_rng(rng).integers(2**63, size=(n, n)) if evaluator == "mc" else None
    for i in range(n):
        for j in range(n):
            if evaluator == "exact":
                rep = crossplay(env, pop[i], pop[j], mode="exact")
            elif evaluator == "mc":
                rep = crossplay(env, pop[i], pop[j], mode="monte_carlo", n_episodes=n_episodes, rng=int(seeds[i, j]))
            else:
                raise ValueError(f"unknown evaluator {evaluator!r}")
            values[i, j] = rep.value
            errors[i, j] = rep.stderr or 0.0
    return (values, errors) if return_stderr else values
