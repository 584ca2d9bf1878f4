# %% [markdown]
# # Best response with and without symmetry-breaking augmentation
#
# Train an MLP best response to teammates that always pull one of levers
# 0..4, then evaluate it against teammates pulling any of 0..9.  Without
# augmentation it learns "pull 0, then copy", which only helps for the
# levers it saw.  With augmentation each training episode relabels the
# learner, so it cannot prefer any lever and learns to copy every one.
#
# The full sweep (30 seeds, 1000 epochs) takes a few minutes; this demo runs
# a few seeds.

# %%
from dataclasses import replace

from sba_lab.harness import ExperimentConfig, run_experiment
from sba_lab.learner import tabular_br_oracle
from sba_lab.lever_game import lever_symmetry_group, make_deterministic_population, make_env, optimal_br_value
from sba_lab.metrics import robustness

env = make_env()
group = lever_symmetry_group(env)
train = make_deterministic_population(range(5))
evals = make_deterministic_population(range(10))

# %% [markdown]
# The best attainable (train, eval) values:

# %%
for sba in (False, True):
    print("sba" if sba else "br ", optimal_br_value(train, evals, sba))
    pol = tabular_br_oracle(env, train, group if sba else None)
    print("   oracle table:", pol.table, "eval:", robustness(env, pol, evals).value)

# %%
config = ExperimentConfig(num_seeds=3, root_seed=7)
for sba in (False, True):
    res = run_experiment(replace(config, sba=sba), workers=1)
    agg = res.aggregate
    print("sba" if sba else "br ", f"train {agg.mean_train[-1]:.3f}  eval {agg.mean_eval[-1]:.3f}")
    print("   greedy table of seed 0:", res.policies[0].table)
