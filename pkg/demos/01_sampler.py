"""
Sequential weighted subsampling
===============================

Draw an ordered subsample without replacement, where each draw picks a
remaining point with probability proportional to its weight, and compare
the empirical tuple frequencies with the exact chain probabilities.
"""
from collections import Counter
import itertools

import numpy as np

from gds import DensitySpec, PerturbationSpec, WeightedPool, chain_prob_exact, gds_select, synth_estimate
from gds import weights as gds_weights

# six points with frozen weights; the pool answers draw-and-remove in O(log N)
weights = [2, 1, 1, 3, 0.5, 0.5]
pool = WeightedPool(weights)
stream = np.random.default_rng(0)

draws = 200_000
counts = Counter()
for _ in range(draws):
    pool.reset()
    counts[gds_select(pool, 2, stream).indices] += 1

# the exact probability of an ordered pair (i, j) is w_i/W * w_j/(W - w_i)
print(" pair   empirical   exact")
for pair in itertools.permutations(range(6), 2):
    if pair[0] in (0, 3):
        print(f"{pair}   {counts[pair] / draws:.4f}     {chain_prob_exact(weights, pair):.4f}")

# in a subsampling setting the weights are target density / estimated data density
f, g = DensitySpec("beta", (2, 2)), DensitySpec("uniform")
data = f.sample(5000, stream)
est = synth_estimate(f, data, PerturbationSpec(b1=0.3, r2=0.5), 5000, stream)
pool = WeightedPool(gds_weights(g, est, data), data)
sub = gds_select(pool, 1000, stream)
print("\nsubsample of 1000 from beta(2,2) data toward uniform:")
print("deciles", np.round(np.quantile(sub.draws[:, 0], np.linspace(0.1, 0.9, 9)), 2))
