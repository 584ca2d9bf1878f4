# %% [markdown]
# # Relabelling a policy
#
# Augmenting a policy with a symmetry makes it see the world through the
# relabelling and act back through its inverse.  If every player is
# relabelled by the same symmetry the expected return is unchanged; if only
# one is, the relabelling can be moved onto the partner instead.

# %%
import numpy as np

from sba_lab.core_env import expected_return_exact
from sba_lab.lever_game import lever_permutation_op, lever_symmetry_group, make_deterministic_population, make_env
from sba_lab.metrics import augmentation_difference, j_aht
from sba_lab.policies import DeterministicTablePolicy
from sba_lab.symmetry import augment_policy, inverse

env = make_env()
group = lever_symmetry_group(env)
lever = make_deterministic_population([0, 1, 2])

# %%
swap01 = lever_permutation_op(env, [1, 0] + list(range(2, 10)))
pulls_0 = lever.by_name("lever_0")
print("lever_0 relabelled now pulls:", augment_policy(pulls_0, swap01).constant_action())

# %% [markdown]
# Same relabelling on both seats: the return stays put.  Relabelling only one
# seat breaks the convention the two constant pullers shared.

# %%
print("self-play:", expected_return_exact(env, [pulls_0, pulls_0]))
both = [augment_policy(pulls_0, swap01)] * 2
print("both relabelled:", expected_return_exact(env, both))
print("one relabelled:", j_aht(env, augment_policy(pulls_0, swap01), pulls_0).value)

# %%
for a, b in (("lever_2", "lever_2"), ("lever_0", "lever_0"), ("lever_0", "lever_1")):
    ad = augmentation_difference(env, lever.by_name(a), lever.by_name(b), swap01).value
    print(f"AD({a}, {b}) = {ad:+.1f}")

# %% [markdown]
# Moving the relabelling to the partner gives the same value.  The copier
# opens on lever 0, so it only scores the first round when the relabelling
# fixes lever 0.

# %%
rng = np.random.default_rng(1)
copier = DeterministicTablePolicy("copier", np.r_[0, np.arange(10)], 10)
for _ in range(6):
    op = group.sample(rng)
    lhs = j_aht(env, augment_policy(copier, op), pulls_0).value
    rhs = j_aht(env, copier, augment_policy(pulls_0, inverse(op))).value
    print(f"{lhs:.6f} {rhs:.6f}")
