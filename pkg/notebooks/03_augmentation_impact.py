# %% [markdown]
# # How much does relabelling matter to a population?
#
# AugImp averages |crossplay after relabelling - crossplay before| over
# ordered pairs of population members and uniformly drawn symmetries.  A
# population of constant lever pullers relies entirely on arbitrary labels;
# uniform-random players do not care.

# %%
from sba_lab.lever_game import lever_symmetry_group, make_deterministic_population, make_env
from sba_lab.metrics import AugImpBudget, augmentation_impact
from sba_lab.policies import UniformRandomPolicy
from sba_lab.populations import Population, crossplay_matrix
from sba_lab.symmetry import trivial_group

env = make_env()
group = lever_symmetry_group(env)
levers = make_deterministic_population(range(10))
print(crossplay_matrix(env, make_deterministic_population(range(4))))

# %% [markdown]
# With the self pairs counted, 10 pairs lose 2 points with probability 9/10
# and 90 pairs gain 2 points with probability 1/10: (18 + 18) / 100.

# %%
print("exact:", augmentation_impact(env, levers, group).value)
mc = augmentation_impact(env, levers, group, AugImpBudget(phi_samples=2000), mode="mc", rng=0)
print(f"monte carlo: {mc.value:.4f} +- {mc.stderr:.4f} over {mc.sample_count} triples")

# %%
uniform = Population("uniform", tuple(UniformRandomPolicy(f"u{k}", 10) for k in range(5)))
print("identity group:", augmentation_impact(env, levers, trivial_group(env)).value)
print("uniform players:", augmentation_impact(env, uniform, group).value)
