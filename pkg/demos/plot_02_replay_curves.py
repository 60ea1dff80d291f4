"""
Replaying a pool: accuracy against compute and time
===================================================

Given 20 logged generations per question, every (method, k, m) point of the
curves is an average over all k-subsets of the pool.
"""

# %%
# A synthetic pool where shorter chains are more often right.
import numpy as np

from shortm import GenerationRecord, QuestionLog
from shortm.replay import CurveGrid, curve_points

rng = np.random.default_rng(0)
logs = []
for q in range(15):
    lengths = rng.gamma(4.0, 1500.0, 20).astype(int) + 200
    p_correct = np.clip(1.1 - lengths / lengths.max(), 0.05, 0.95)
    gens = []
    for i, (n, p) in enumerate(zip(lengths, p_correct)):
        answer = "42" if rng.random() < p else str(rng.integers(0, 4))
        gens.append(GenerationRecord(f"q{q}", i, int(n), answer_extracted=answer, correct=answer == "42"))
    logs.append(QuestionLog(f"q{q}", "...", "42", tuple(gens), model="synthetic"))

# %%
# Exact enumeration covers every subset up to the threshold; above it a
# seeded Monte-Carlo sample is used and the row says so.
grid = CurveGrid(k_set=(1, 3, 5), m_set=(1, 3), exact_threshold=2000, mc_samples=2000)
points = curve_points(logs, grid)
print(f"{'method':<11}{'k':>3}{'m':>3}  accuracy  compute  time   enumeration")
for p in points:
    m = "" if p.m is None else p.m
    print(f"{p.method.value:<11}{p.k:>3}{m!s:>3}  {p.accuracy_mean:8.3f}  {p.compute_mean:7.0f}  {p.time_mean:5.0f}  {p.enumeration}")

# %%
# shortest-1@k stops at the first finished chain, so its time stays near
# the shortest length while majority@k waits for the longest.
