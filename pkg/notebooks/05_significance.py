# %% [markdown]
# # Comparing two sets of seeds
#
# A paired sign-flip permutation test on per-seed results.  With five pairs
# that all favour one side, only 2 of the 32 sign patterns are at least as
# extreme, so p = 1/16.

# %%
import numpy as np

from sba_lab.metrics import paired_permutation_test

a = [1.0] * 5
b = [0.0] * 5
print("exact:", paired_permutation_test(a, b, exact=True))
print("sampled:", paired_permutation_test(a, b, n_resamples=100_000, rng=0))

# %%
rng = np.random.default_rng(3)
base = rng.normal(0.6, 0.05, size=12)
better = base + rng.normal(0.4, 0.1, size=12)
print("clear gap:", paired_permutation_test(better, base, exact=True))
print("no gap:", paired_permutation_test(base + rng.normal(0, 0.05, size=12), base, exact=True))
