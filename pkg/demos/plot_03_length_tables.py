"""
Length tables: difficulty thirds and shortest/longest/random
============================================================
"""

# %%
import numpy as np

from shortm import GenerationRecord, QuestionLog
from shortm.replay import emit_table1, emit_table2

rng = np.random.default_rng(1)
logs = []
for q in range(9):
    skill = 1.0 if q < 3 else 0.95 - q * 0.1
    gens = []
    for i in range(10):
        ok = rng.random() < skill
        n = int(rng.normal(3000 if ok else 9000, 800))
        gens.append(GenerationRecord(f"q{q}", i, max(n, 100), answer_extracted="1" if ok else "0", correct=ok))
    bench = "aime" if q % 2 else "hmmt"
    logs.append(QuestionLog(f"q{q}", "...", "1", tuple(gens), model="demo", meta={"benchmark": bench}))

# %%
# Mean thinking tokens in thousands; "–" marks a group with no records of
# that kind, such as the incorrect answers of questions that were always
# solved.
print(emit_table1(logs))

# %%
# Picking the shortest generation per question, against longest and random.
print(emit_table2(logs))
