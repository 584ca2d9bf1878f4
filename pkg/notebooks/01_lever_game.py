# %% [markdown]
# # The lever game and its symmetries
#
# Two players each pull one of ten levers, twice.  Matching pulls score 1
# per round.  In round two each player sees which lever the partner pulled
# in round one.  Renaming the levers (the same way for both players) changes
# nothing about the game, so every permutation of the ten labels is a
# symmetry.

# %%
import numpy as np

from sba_lab.lever_game import (
    LeverObservation,
    decode_observation,
    lever_permutation_op,
    lever_symmetry_group,
    make_env,
    observation_index,
)
from sba_lab.symmetry import SymmetryOp, compose, inverse, validate_symmetry

env = make_env()
print(env.config)
print("observation labels:", env.num_observations(0))

# %% [markdown]
# Observations are integers.  Label 0 means "nothing seen yet"; the rest
# encode the partner's previous lever.

# %%
for obs in (LeverObservation(1, None), LeverObservation(2, 0), LeverObservation(2, 9)):
    k = observation_index(obs, env.config)
    print(obs, "->", k, "->", decode_observation(k, env.config))

# %% [markdown]
# A symmetry is a set of index arrays.  The validator checks the transition,
# reward and observation laws exhaustively.

# %%
swap = lever_permutation_op(env, [1, 0] + list(range(2, 10)))
print("swap valid:", bool(validate_symmetry(env, swap)))
print("swap is an involution:", compose(swap, swap) == compose(swap, inverse(swap)))

bad = lever_permutation_op(env, list(range(10)))
amap = np.array(bad.action_maps[0])
amap[1] = amap[0]
broken = SymmetryOp(bad.env_id, bad.state_map, (amap, amap), bad.observation_maps)
report = validate_symmetry(env, broken)
print("broken op valid:", report.ok, "|", report.violations[0])

# %%
group = lever_symmetry_group(env)
print("group size:", group.size)
rng = np.random.default_rng(0)
print("a sampled permutation:", group.sample(rng).action_maps[0])
