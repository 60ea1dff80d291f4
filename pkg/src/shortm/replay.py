"""Offline replay: load generation logs, score method grids, render tables."""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from shortm.accounting import SECONDS_TIME_UNIT, TOKEN_TIME_UNIT
from shortm.answers import DEFAULT_POLICY, AnswerPolicy, extract_answer, grade
from shortm.metrics import (
    DEFAULT_EXACT_THRESHOLD,
    DEFAULT_MC_SAMPLES,
    difficulty_terciles,
    evaluate_curves,
    short_long_random_report,
)
from shortm.records import CurvePoint, Finish, LogFormatError, Method, QuestionLog, TieBreak, read_logs, validate_log

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("method", "k", "m", "accuracy", "compute_mean", "time_mean", "enumeration")
ABSENT = "–"
ABLATION_M = (1, 3, 4, 5, 7, 9)


class DataError(ValueError):
    """Inputs are well-formed but cannot support the requested evaluation."""


def _grade_log(qlog: QuestionLog, policy: AnswerPolicy) -> QuestionLog:
    changed = []
    for g in qlog.generations:
        if g.finish is not Finish.THINK_COMPLETED:
            changed.append(g)
            continue
        extracted = g.answer_extracted
        if extracted is None and g.answer_raw:
            extracted = extract_answer(g.answer_raw, policy)
        correct = g.correct
        if correct is None and qlog.gold_answer is not None:
            correct = grade(extracted, qlog.gold_answer, policy)
        changed.append(replace(g, answer_extracted=extracted, correct=correct))
    return qlog.with_generations(changed)


def ingest(paths: Iterable[str | Path], policy: AnswerPolicy = DEFAULT_POLICY) -> list[QuestionLog]:
    """Read and validate log files, grading completed records that lack a label.

    Truncated, cancelled and errored records are kept; they are simply not
    part of any question's usable pool.
    """
    out = []
    for path in paths:
        for qlog in read_logs(path):
            problems = validate_log(qlog)
            if problems:
                raise LogFormatError(f"question {qlog.question_id!r}: " + "; ".join(problems), str(path))
            out.append(_grade_log(qlog, policy))
    return out


@dataclass(frozen=True)
class CurveGrid:
    methods: tuple[Method, ...] = tuple(Method)
    k_set: tuple[int, ...] = tuple(range(1, 11))
    m_set: tuple[int, ...] = (1, 3)
    rng_seed: int = 0
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD
    mc_samples: int = DEFAULT_MC_SAMPLES
    majority_tie_break: TieBreak = TieBreak.RANDOM
    shortest_tie_break: TieBreak = TieBreak.SHORTEST
    workers: int = field(default=1, compare=False)


def curve_points(logs: Sequence[QuestionLog], grid: CurveGrid) -> list[CurvePoint]:
    if not logs:
        raise DataError("no questions to evaluate")
    points = []
    for k in sorted(set(grid.k_set)):
        kept = [q for q in logs if q.n >= k]
        dropped = [q.question_id for q in logs if q.n < k]
        if dropped:
            msg = f"k={k}: dropping {len(dropped)} question(s) with fewer than {k} usable generations"
            log.warning("%s: %s", msg, dropped)
            warnings.warn(msg, stacklevel=2)
        if not kept:
            raise DataError(f"k={k}: no question has {k} usable generations (largest pool is {max(q.n for q in logs)})")
        points.extend(
            evaluate_curves(
                kept,
                methods=grid.methods,
                k_set=(k,),
                m_set=grid.m_set,
                exact_threshold=grid.exact_threshold,
                mc_samples=grid.mc_samples,
                rng_seed=grid.rng_seed,
                majority_tie_break=grid.majority_tie_break,
                shortest_tie_break=grid.shortest_tie_break,
                workers=grid.workers,
            )
        )
    return points


def time_unit(logs: Sequence[QuestionLog]) -> str:
    records = [g for q in logs for g in q.usable]
    if records and all(g.duration_seconds is not None for g in records):
        return SECONDS_TIME_UNIT
    return TOKEN_TIME_UNIT


def format_curves_csv(points: Sequence[CurvePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for p in points:
        writer.writerow(
            [p.method.value, p.k, "" if p.m is None else p.m, repr(p.accuracy_mean), repr(p.compute_mean), repr(p.time_mean), p.enumeration]
        )
    return buf.getvalue()


def curves_summary(points: Sequence[CurvePoint], logs: Sequence[QuestionLog]) -> str:
    doc = {"time_unit": time_unit(logs), "points": [p.to_dict() for p in points]}
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def emit_curves(logs: Sequence[QuestionLog], grid: CurveGrid, out: str | Path | None = None) -> str:
    """CSV of one row per (method, k, m); also writes ``<out>.json`` when ``out`` is given."""
    points = curve_points(logs, grid)
    text = format_curves_csv(points)
    if out is not None:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8", newline="\n")
        out.with_suffix(".json").write_text(curves_summary(points, logs), encoding="utf-8", newline="\n")
    return text


# -- tables ------------------------------------------------------------------------


def _by_model(logs: Sequence[QuestionLog]) -> dict[str, list[QuestionLog]]:
    groups: dict[str, list[QuestionLog]] = {}
    for q in logs:
        groups.setdefault(q.model or "unknown", []).append(q)
    return groups


def _thousands(x: float | None) -> str:
    return ABSENT if x is None else f"{x / 1000:.1f}"


def _render(rows: list[list[str]], fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "csv":
        csv.writer(buf, lineterminator="\n").writerows(rows)
        return buf.getvalue()
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for j, row in enumerate(rows):
        buf.write("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() + "\n")
        if j == 0:
            buf.write("  ".join("-" * w for w in widths) + "\n")
    return buf.getvalue()


def emit_table1(logs: Sequence[QuestionLog], fmt: str = "text") -> str:
    """Mean thinking tokens (thousands) for correct/incorrect/all per difficulty third."""
    if fmt not in ("text", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    if not logs:
        raise DataError("no questions to tabulate")
    if fmt == "csv":
        rows = [["model", "group", "correct", "incorrect", "all", "n_questions"]]
    else:
        rows = [["model", "easy C/IC/A", "medium C/IC/A", "hard C/IC/A"]]
    for model, qs in _by_model(logs).items():
        try:
            groups = difficulty_terciles(qs)
        except ValueError as exc:
            raise DataError(f"model {model!r}: {exc}") from None
        if fmt == "csv":
            for g in groups:
                rows.append(
                    [model, g.label, _thousands(g.correct_mean), _thousands(g.incorrect_mean), _thousands(g.all_mean), str(len(g.question_ids))]
                )
        else:
            cells = ["/".join(_thousands(v) for v in (g.correct_mean, g.incorrect_mean, g.all_mean)) for g in groups]
            rows.append([model, *cells])
    return _render(rows, fmt)


def format_delta(pct: int | None) -> str:
    if pct is None:
        return ""
    return f"({'+' if pct > 0 else ''}{pct}%)"


def emit_table2(logs: Sequence[QuestionLog], seed: int = 0, fmt: str = "text", random_mode: str = "expectation") -> str:
    """Shortest/longest/random selection: mean tokens and accuracy (%) per benchmark."""
    if fmt not in ("text", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    if not logs:
        raise DataError("no questions to tabulate")
    benchmarks = list(dict.fromkeys(q.benchmark for q in logs))
    if fmt == "csv":
        rows = [["model", "selection", "benchmark", "think_tokens", "accuracy", "token_delta_pct"]]
    else:
        header = ["model", "selection"]
        for b in benchmarks:
            header += [f"{b} tokens", f"{b} acc"]
        rows = [header + ["average tokens", "average acc"]]
    for model, qs in _by_model(logs).items():
        try:
            report = short_long_random_report(qs, seed, random_mode)
        except ValueError as exc:
            raise DataError(f"model {model!r}: {exc}") from None
        for row in report:
            if fmt == "csv":
                for b, (tokens, acc) in row.per_benchmark.items():
                    rows.append([model, row.selection, b, f"{tokens:.1f}", f"{100 * acc:.1f}", ""])
                delta = "" if row.token_delta_pct is None else str(row.token_delta_pct)
                rows.append([model, row.selection, "average", f"{row.average_tokens:.1f}", f"{100 * row.average_accuracy:.1f}", delta])
            else:
                cells = [model, row.selection]
                for b in benchmarks:
                    tokens, acc = row.per_benchmark.get(b, (None, None))
                    cells += [ABSENT, ABSENT] if tokens is None else [f"{tokens:.0f}", f"{100 * acc:.1f}"]
                avg = f"{row.average_tokens:.0f}"
                if row.token_delta_pct is not None:
                    avg += " " + format_delta(row.token_delta_pct)
                rows.append(cells + [avg, f"{100 * row.average_accuracy:.1f}"])
    return _render(rows, fmt)
