"""Short / long / random fine-tuning sets built from a pool of generations.

Each prompt contributes exactly one trajectory to every variant: its
shortest, its longest and one seeded random completed generation. Prompts
without a usable generation are skipped in all three, so the variants
always cover the same prompts.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from shortm.metrics import question_seed
from shortm.records import GenerationRecord, QuestionLog

VARIANTS = ("short", "long", "random")


@dataclass(frozen=True)
class SFTVariants:
    rows: dict[str, list[dict[str, str]]]
    picks: dict[str, list[GenerationRecord]]
    skipped: list[str]
    histograms: dict[str, list[tuple[float, float, int]]]


def _trajectory(record: GenerationRecord) -> str:
    return str(record.extra.get("think_text", ""))


def build_variants(
    pool_logs: Sequence[QuestionLog],
    seed: int = 0,
    n_per_prompt: int | None = None,
    correct_only: bool = False,
    bins: int = 20,
) -> SFTVariants:
    """Select one generation per prompt for each variant.

    ``n_per_prompt`` limits the candidates to the first n completed
    generations by sample index. ``correct_only`` drops incorrect ones first.
    """
    picks: dict[str, list[GenerationRecord]] = {v: [] for v in VARIANTS}
    prompts: list[str] = []
    skipped = []
    for qlog in pool_logs:
        pool = sorted(qlog.usable, key=lambda r: r.sample_index)
        if n_per_prompt is not None:
            pool = pool[:n_per_prompt]
        if correct_only:
            pool = [r for r in pool if r.correct]
        if not pool:
            skipped.append(qlog.question_id)
            continue
        ranked = sorted(pool, key=lambda r: (r.think_tokens, r.sample_index))
        rng = np.random.default_rng(question_seed(seed, qlog.question_id))
        picks["short"].append(ranked[0])
        picks["long"].append(ranked[-1])
        picks["random"].append(pool[int(rng.integers(len(pool)))])
        prompts.append(qlog.prompt)

    rows = {
        v: [{"prompt": p, "trajectory": _trajectory(r), "answer": r.answer_raw} for p, r in zip(prompts, picks[v])]
        for v in VARIANTS
    }
    all_tokens = [r.think_tokens for v in VARIANTS for r in picks[v]]
    histograms: dict[str, list[tuple[float, float, int]]] = {}
    if all_tokens:
        edges = np.histogram_bin_edges(all_tokens, bins=bins)
        for v in VARIANTS:
            counts, _ = np.histogram([r.think_tokens for r in picks[v]], bins=edges)
            histograms[v] = [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]
    else:
        histograms = {v: [] for v in VARIANTS}
    return SFTVariants(rows, picks, skipped, histograms)


def histogram_csv(bins: Sequence[tuple[float, float, int]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin_left", "bin_right", "count"])
    for left, right, count in bins:
        writer.writerow([repr(left), repr(right), count])
    return buf.getvalue()


def write_variants(variants: SFTVariants, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for v in VARIANTS:
        path = out_dir / f"s1_{v}.jsonl"
        path.write_text(
            "".join(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n" for row in variants.rows[v]),
            encoding="utf-8",
            newline="\n",
        )
        hist = out_dir / f"s1_{v}_histogram.csv"
        hist.write_text(histogram_csv(variants.histograms[v]), encoding="utf-8", newline="\n")
        written += [path, hist]
    skip = out_dir / "skipped.json"
    skip.write_text(json.dumps({"skipped": variants.skipped}, indent=2) + "\n", encoding="utf-8", newline="\n")
    written.append(skip)
    return written
