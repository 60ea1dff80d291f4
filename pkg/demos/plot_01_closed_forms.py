"""
Closed-form pass@k and rank scores
==================================

pass@k and the "shortest of k" score both have closed forms over a pool of
n generations, so nothing needs to be sampled.
"""

# %%
# A pool of 8 generations, 3 of them correct.
from shortm import GenerationRecord
from shortm.metrics import RankedPool, pass_at_k, rank_score_at_k, rank_weights

for k in (1, 2, 4, 8):
    print(f"pass@{k} with n=8, c=3: {pass_at_k(8, 3, k):.4f}")

# %%
# Rank weights: the chance that the i-th shortest generation is the
# shortest member of a random k-subset. Every row sums to one.
import numpy as np

np.set_printoptions(precision=3, suppress=True)
for k in (1, 2, 4):
    print(k, rank_weights(8, k))

# %%
# When correct answers are the short ones, the score rises with k.
lengths = [900, 1200, 1500, 2600, 3100, 4000, 5200, 7000]
correct = [True, True, False, True, False, False, False, False]
pool = RankedPool.from_records(
    GenerationRecord("demo", i, n, answer_extracted="x", correct=c) for i, (n, c) in enumerate(zip(lengths, correct))
)
for k in (1, 2, 4, 8):
    print(f"shortest-1@{k}: {rank_score_at_k(pool, k):.4f}")
