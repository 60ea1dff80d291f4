"""
Short, long and random fine-tuning sets
=======================================
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from shortm import GenerationRecord, QuestionLog
from shortm.sft import build_variants, write_variants

rng = np.random.default_rng(2)
logs = []
for q in range(30):
    gens = tuple(
        GenerationRecord(f"q{q}", i, int(n), answer_raw=f"\\boxed{{{q}}}", answer_extracted=str(q), correct=True, extra={"think_text": f"chain {i}"})
        for i, n in enumerate(rng.lognormal(8, 0.5, 6))
    )
    logs.append(QuestionLog(f"q{q}", f"problem {q}", str(q), gens))

variants = build_variants(logs, seed=0, bins=8)

# %%
# All three variants share one set of histogram edges, so the bins line up.
for name, bins in variants.histograms.items():
    bar = " ".join(f"{c:>2}" for _, _, c in bins)
    mean = np.mean([r.think_tokens for r in variants.picks[name]])
    print(f"{name:<7} mean {mean:7.0f}  counts {bar}")

# %%
out = Path(tempfile.mkdtemp())
for path in write_variants(variants, out):
    print(path.name)
