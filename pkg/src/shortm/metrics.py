"""Aggregation methods and the metrics used to compare them.

Three ways of turning k parallel generations into one answer are scored here:

* majority@k: wait for every stream, vote over all k answers;
* shortest-m@k: stop when m streams have finished thinking, vote over those m;
* pass@k: the oracle that is right whenever any stream is right.

Per-subset functions (``majority_outcome`` and friends) are the readable
reference. ``evaluate_curves`` runs the same rules over every k-subset of a
question's pool with numpy, falling back to seeded sampling once the number
of subsets passes ``exact_threshold``.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Iterable, Sequence

import numpy as np

from shortm.accounting import CostCut, order_statistic_index
from shortm.records import CurvePoint, GenerationRecord, Method, QuestionLog, SubsetOutcome, TieBreak

DEFAULT_EXACT_THRESHOLD = 250_000
DEFAULT_MC_SAMPLES = 10_000


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k estimate, ``1 - C(n-c, k) / C(n, k)``."""
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if n - c < k:
        return 1.0
    # C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
    miss = 1.0
    for i in range(n - c + 1, n + 1):
        miss *= 1.0 - k / i
    return 1.0 - miss


def rank_weights(n: int, k: int) -> np.ndarray:
    """P(the i-th ranked entry is the minimum of a uniform k-subset), i = 1..n."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    total = math.comb(n, k)
    return np.array([math.comb(n - i, k - 1) / total for i in range(1, n + 1)])


def order_statistic_weights(n: int, k: int, j: int) -> np.ndarray:
    """P(the i-th ranked entry is the j-th smallest of a uniform k-subset)."""
    total = math.comb(n, k)
    return np.array(
        [math.comb(i - 1, j - 1) * math.comb(n - i, k - j) / total for i in range(1, n + 1)]
    )


@dataclass(frozen=True)
class RankedPool:
    """Usable generations sorted by (think_tokens, sample_index)."""

    entries: tuple[tuple[int, int, bool, str | None], ...]

    @classmethod
    def from_records(cls, records: Iterable[GenerationRecord]) -> "RankedPool":
        usable = [r for r in records if r.usable]
        usable.sort(key=lambda r: (r.think_tokens, r.sample_index))
        return cls(
            tuple((r.think_tokens, r.sample_index, bool(r.correct), r.answer_extracted) for r in usable)
        )

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def c(self) -> int:
        return sum(1 for e in self.entries if e[2])

    @property
    def correctness(self) -> np.ndarray:
        return np.array([e[2] for e in self.entries], dtype=float)


def rank_score_at_k(pool: RankedPool, k: int) -> float:
    if not 1 <= k <= pool.n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={pool.n}")
    return float(rank_weights(pool.n, k) @ pool.correctness)


# -- voting ------------------------------------------------------------------


def majority_vote(
    candidates: Sequence[tuple[Hashable, int]],
    tie_break: TieBreak = TieBreak.SHORTEST,
    rng: np.random.Generator | None = None,
) -> tuple[Hashable, int]:
    """Most frequent answer among ``(answer, think_tokens)`` pairs.

    ``None`` answers vote as one shared "no answer" value. Order of
    ``candidates`` is the sample order used to break equal lengths.
    """
    if not candidates:
        raise ValueError("majority_vote needs at least one candidate")
    tie_break = TieBreak(tie_break)
    votes = Counter(a for a, _ in candidates)
    top = max(votes.values())
    leaders = [a for a in dict.fromkeys(a for a, _ in candidates) if votes[a] == top]
    if len(leaders) == 1 or tie_break is TieBreak.RANDOM:
        if len(leaders) == 1:
            pick = leaders[0]
        else:
            if rng is None:
                raise ValueError("random tie-break needs an rng")
            pick = leaders[int(rng.integers(len(leaders)))]
        return pick, min(t for a, t in candidates if a == pick)
    indexed = list(enumerate(candidates))
    if tie_break is TieBreak.SHORTEST:
        i, (answer, tokens) = min(
            ((i, c) for i, c in indexed if c[0] in leaders), key=lambda x: (x[1][1], x[0])
        )
    else:
        i, (answer, tokens) = max(
            ((i, c) for i, c in indexed if c[0] in leaders), key=lambda x: (x[1][1], x[0])
        )
    return answer, tokens


def _answer_correct(records: Iterable[GenerationRecord]) -> dict[str | None, bool]:
    table: dict[str | None, bool] = {}
    for r in records:
        table[r.answer_extracted] = table.get(r.answer_extracted, False) or bool(r.correct)
    table[None] = False
    return table


def _check_subset(subset: Sequence[GenerationRecord]) -> None:
    if not subset:
        raise ValueError("subset must not be empty")
    bad = [r.sample_index for r in subset if not r.usable]
    if bad:
        raise ValueError(f"subset contains generations that did not finish thinking: {bad}")


def _durations(subset: Sequence[GenerationRecord]) -> tuple[float, ...] | None:
    if all(r.duration_seconds is not None for r in subset):
        return tuple(float(r.duration_seconds) for r in subset)
    return None


def shortest_m_outcome(
    subset: Sequence[GenerationRecord],
    m: int,
    tie_break: TieBreak = TieBreak.SHORTEST,
    rng: np.random.Generator | None = None,
) -> SubsetOutcome:
    _check_subset(subset)
    if not 1 <= m <= len(subset):
        raise ValueError(f"need 1 <= m <= k, got m={m}, k={len(subset)}")
    ranked = sorted(subset, key=lambda r: (r.think_tokens, r.sample_index))
    winners = ranked[:m]
    answer, _ = majority_vote([(r.answer_extracted, r.think_tokens) for r in winners], tie_break, rng)
    lengths = tuple(r.think_tokens for r in ranked)
    cut = CostCut(lengths, cut_index=m - 1, durations=_durations(ranked))
    return SubsetOutcome(
        Method.SHORTEST_M, answer, _answer_correct(subset)[answer], cut.compute(), cut.time()
    )


def majority_outcome(
    subset: Sequence[GenerationRecord],
    tie_break: TieBreak = TieBreak.RANDOM,
    rng: np.random.Generator | None = None,
) -> SubsetOutcome:
    _check_subset(subset)
    ranked = sorted(subset, key=lambda r: (r.think_tokens, r.sample_index))
    answer, _ = majority_vote([(r.answer_extracted, r.think_tokens) for r in ranked], tie_break, rng)
    cut = CostCut(tuple(r.think_tokens for r in ranked), None, _durations(ranked))
    return SubsetOutcome(
        Method.MAJORITY, answer, _answer_correct(subset)[answer], cut.compute(), cut.time()
    )


def oracle_outcome(subset: Sequence[GenerationRecord]) -> SubsetOutcome:
    _check_subset(subset)
    lengths = tuple(r.think_tokens for r in subset)
    correct = [i for i, r in enumerate(subset) if r.correct]
    if correct:
        cut_index = min(correct, key=lambda i: (lengths[i], subset[i].sample_index))
        answer = subset[cut_index].answer_extracted
    else:
        cut_index, answer = None, None
    cut = CostCut(lengths, cut_index, _durations(subset))
    return SubsetOutcome(Method.ORACLE, answer, bool(correct), cut.compute(), cut.time())


# -- subset enumeration --------------------------------------------------------


@lru_cache(maxsize=8)
def _all_subsets(n: int, k: int) -> np.ndarray:
    count = math.comb(n, k)
    dtype = np.int8 if n <= 127 else np.int32
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), k)), dtype=dtype, count=count * k
    )
    out = flat.reshape(count, k)
    out.setflags(write=False)
    return out


def _sampled_subsets(n: int, k: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    picks = np.argsort(rng.random((samples, n)), axis=1)[:, :k]
    return np.sort(picks, axis=1)


def question_seed(rng_seed: int, question_id: str) -> int:
    """Per-question seed, independent of worker count and question order."""
    digest = hashlib.sha256(f"{rng_seed}\x1f{question_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _vote_accuracy(codes: np.ndarray, code_correct: np.ndarray, tie_break: TieBreak) -> np.ndarray:
    """Per-row correctness of the vote over ``codes`` (rows already in rank order).

    A random tie-break is scored by its expectation over the uniform draw.
    """
    rows = np.arange(codes.shape[0])
    n_codes = code_correct.shape[0]
    counts = np.zeros((codes.shape[0], n_codes), dtype=np.int16)
    for j in range(codes.shape[1]):
        counts[rows, codes[:, j]] += 1
    top = counts.max(axis=1)
    if tie_break is TieBreak.RANDOM:
        leaders = counts == top[:, None]
        return (leaders & code_correct[None, :]).sum(axis=1) / leaders.sum(axis=1)
    leads = counts[rows[:, None], codes] == top[:, None]
    if tie_break is TieBreak.SHORTEST:
        pos = np.argmax(leads, axis=1)
    else:
        pos = codes.shape[1] - 1 - np.argmax(leads[:, ::-1], axis=1)
    return code_correct[codes[rows, pos]].astype(float)


@dataclass(frozen=True)
class _QuestionArrays:
    lengths: np.ndarray
    durations: np.ndarray | None
    correct: np.ndarray
    codes: np.ndarray
    code_correct: np.ndarray

    @classmethod
    def from_log(cls, log: QuestionLog) -> "_QuestionArrays":
        ranked = sorted(log.usable, key=lambda r: (r.think_tokens, r.sample_index))
        table = _answer_correct(ranked)
        keys = list(dict.fromkeys([None] + [r.answer_extracted for r in ranked]))
        index = {a: i for i, a in enumerate(keys)}
        durations = _durations(ranked)
        return cls(
            lengths=np.array([r.think_tokens for r in ranked], dtype=np.int64),
            durations=None if durations is None else np.array(durations),
            correct=np.array([bool(r.correct) for r in ranked]),
            codes=np.array([index[r.answer_extracted] for r in ranked], dtype=np.intp),
            code_correct=np.array([table[a] for a in keys]),
        )


@dataclass(frozen=True)
class CurveRequest:
    methods: tuple[Method, ...]
    m_set: tuple[int, ...]
    majority_tie_break: TieBreak
    shortest_tie_break: TieBreak
    exact_threshold: int
    mc_samples: int
    rng_seed: int


def _question_stats(log: QuestionLog, k: int, req: CurveRequest) -> dict[tuple[Method, int | None], tuple[float, float, float, bool]]:
    """Mean (accuracy, compute, time) per (method, m) for one question at one k."""
    q = _QuestionArrays.from_log(log)
    n = len(q.lengths)
    exact = math.comb(n, k) <= req.exact_threshold
    if exact:
        subsets = _all_subsets(n, k)
    else:
        rng = np.random.default_rng(question_seed(req.rng_seed, log.question_id) ^ k)
        subsets = _sampled_subsets(n, k, req.mc_samples, rng)
    lens = q.lengths[subsets]
    codes = q.codes[subsets]
    out = {}
    for method in req.methods:
        if method is Method.MAJORITY:
            acc = _vote_accuracy(codes, q.code_correct, req.majority_tie_break).mean()
            compute = lens.sum(axis=1)
            time = lens[:, -1] if q.durations is None else q.durations[subsets].max(axis=1)
            out[(method, None)] = (float(acc), float(compute.mean()), float(time.mean()), exact)
        elif method is Method.SHORTEST_M:
            for m in req.m_set:
                if m > k:
                    continue
                if m == 1:
                    acc = float(rank_weights(n, k) @ q.correct)
                else:
                    acc = float(_vote_accuracy(codes[:, :m], q.code_correct, req.shortest_tie_break).mean())
                compute = lens[:, :m].sum(axis=1) + (k - m) * lens[:, m - 1]
                time = lens[:, m - 1] if q.durations is None else q.durations[subsets[:, m - 1]]
                out[(method, m)] = (acc, float(compute.mean()), float(time.mean()), exact)
        elif method is Method.ORACLE:
            acc = pass_at_k(n, int(q.correct.sum()), k)
            hit = q.correct[subsets]
            found = hit.any(axis=1)
            first = np.argmax(hit, axis=1)
            rows = np.arange(len(subsets))
            cut = lens[rows, first]
            compute = np.where(found, lens[:, : k].cumsum(axis=1)[rows, first] + (k - first - 1) * cut, lens.sum(axis=1))
            if q.durations is None:
                time = np.where(found, cut, lens[:, -1])
            else:
                d = q.durations[subsets]
                time = np.where(found, d[rows, first], d.max(axis=1))
            out[(method, None)] = (acc, float(compute.mean()), float(time.mean()), exact)
    return out


def _question_job(args):
    log, k_set, req = args
    return {k: _question_stats(log, k, req) for k in k_set}


def evaluate_curves(
    logs: Sequence[QuestionLog],
    methods: Sequence[Method | str] = tuple(Method),
    k_set: Sequence[int] = tuple(range(1, 11)),
    m_set: Sequence[int] = (1, 3),
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    rng_seed: int = 0,
    majority_tie_break: TieBreak | str = TieBreak.RANDOM,
    shortest_tie_break: TieBreak | str = TieBreak.SHORTEST,
    workers: int = 1,
) -> list[CurvePoint]:
    """Average each method's per-question subset means into one point per (method, k, m).

    Rows come out ordered by k, then by ``methods`` order, then by m.
    Shortest-m rows with m > k are not emitted.
    """
    if not logs:
        raise ValueError("evaluate_curves needs at least one question")
    k_set = sorted(set(int(k) for k in k_set))
    if not k_set or k_set[0] < 1:
        raise ValueError(f"k values must be >= 1, got {k_set}")
    for log in logs:
        if log.n < k_set[-1]:
            raise ValueError(
                f"question {log.question_id!r} has {log.n} usable generations, fewer than k={k_set[-1]}"
            )
    req = CurveRequest(
        methods=tuple(dict.fromkeys(Method(mt) for mt in methods)),
        m_set=tuple(sorted(set(int(m) for m in m_set))),
        majority_tie_break=TieBreak(majority_tie_break),
        shortest_tie_break=TieBreak(shortest_tie_break),
        exact_threshold=exact_threshold,
        mc_samples=mc_samples,
        rng_seed=rng_seed,
    )
    if req.m_set and req.m_set[0] < 1:
        raise ValueError(f"m values must be >= 1, got {req.m_set}")
    jobs = [(log, tuple(k_set), req) for log in logs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_question = list(pool.map(_question_job, jobs))
    else:
        per_question = [_question_job(job) for job in jobs]

    points = []
    for k in k_set:
        keys = per_question[0][k].keys()
        for method in req.methods:
            for key in (kk for kk in keys if kk[0] is method):
                stats = np.array([pq[k][key][:3] for pq in per_question])
                all_exact = all(pq[k][key][3] for pq in per_question)
                acc, compute, time = stats.mean(axis=0)
                points.append(
                    CurvePoint(
                        method=method,
                        k=k,
                        m=key[1],
                        accuracy_mean=float(acc),
                        compute_mean=float(compute),
                        time_mean=float(time),
                        n_questions=len(per_question),
                        enumeration="exact" if all_exact else f"montecarlo({mc_samples})",
                    )
                )
    return points


# -- length analyses -------------------------------------------------------------


@dataclass(frozen=True)
class TercileGroup:
    label: str
    question_ids: tuple[str, ...]
    correct_mean: float | None
    incorrect_mean: float | None
    all_mean: float | None


def _success_rate(log: QuestionLog) -> float:
    usable = log.usable
    return sum(1 for r in usable if r.correct) / len(usable)


def difficulty_terciles(logs: Sequence[QuestionLog]) -> list[TercileGroup]:
    """Split questions into easy/medium/hard thirds by success rate.

    Token means pool every ThinkCompleted record of the group's questions.
    """
    if not logs:
        raise ValueError("difficulty_terciles needs at least one question")
    if len(logs) < 3:
        raise ValueError(f"need at least 3 questions to form terciles, got {len(logs)}")
    empty = [log.question_id for log in logs if log.n == 0]
    if empty:
        raise ValueError(f"questions without completed generations: {empty}")
    ordered = sorted(logs, key=lambda log: (-_success_rate(log), log.question_id))
    base, extra = divmod(len(ordered), 3)
    sizes = [base + (1 if i < extra else 0) for i in range(3)]
    groups, start = [], 0
    for label, size in zip(("easy", "medium", "hard"), sizes):
        chunk = ordered[start : start + size]
        start += size
        records = [r for log in chunk for r in log.usable]

        def mean(rs):
            return float(np.mean([r.think_tokens for r in rs])) if rs else None

        groups.append(
            TercileGroup(
                label=label,
                question_ids=tuple(log.question_id for log in chunk),
                correct_mean=mean([r for r in records if r.correct is True]),
                incorrect_mean=mean([r for r in records if r.correct is False]),
                all_mean=mean(records),
            )
        )
    return groups


@dataclass(frozen=True)
class SelectionRow:
    selection: str
    per_benchmark: dict[str, tuple[float, float]]  # benchmark -> (mean tokens, accuracy)
    average_tokens: float
    average_accuracy: float
    token_delta_pct: int | None  # vs the random row


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def short_long_random_report(
    logs: Sequence[QuestionLog], rng_seed: int = 0, random_mode: str = "expectation"
) -> list[SelectionRow]:
    """Shortest / longest / random single-generation selection per question.

    ``random_mode="expectation"`` scores the random row as the mean over the
    whole pool; ``"draw"`` picks one seeded record per question.
    Benchmarks are averaged with equal weight in the ``average_*`` columns.
    """
    if not logs:
        raise ValueError("short_long_random_report needs at least one question")
    if random_mode not in ("expectation", "draw"):
        raise ValueError(f"random_mode must be 'expectation' or 'draw', got {random_mode!r}")
    empty = [log.question_id for log in logs if log.n == 0]
    if empty:
        raise ValueError(f"questions without completed generations: {empty}")

    picks: dict[str, dict[str, list[tuple[float, float]]]] = {"random": {}, "longest": {}, "shortest": {}}
    for log in logs:
        usable = sorted(log.usable, key=lambda r: (r.think_tokens, r.sample_index))
        shortest, longest = usable[0], usable[-1]
        if random_mode == "expectation":
            rand = (
                float(np.mean([r.think_tokens for r in usable])),
                float(np.mean([bool(r.correct) for r in usable])),
            )
        else:
            rng = np.random.default_rng(question_seed(rng_seed, log.question_id))
            r = usable[int(rng.integers(len(usable)))]
            rand = (float(r.think_tokens), float(bool(r.correct)))
        bench = log.benchmark
        picks["random"].setdefault(bench, []).append(rand)
        picks["longest"].setdefault(bench, []).append((float(longest.think_tokens), float(bool(longest.correct))))
        picks["shortest"].setdefault(bench, []).append((float(shortest.think_tokens), float(bool(shortest.correct))))

    benchmarks = list(dict.fromkeys(log.benchmark for log in logs))
    rows = []
    random_tokens = None
    for selection in ("random", "longest", "shortest"):
        per = {b: tuple(np.mean(picks[selection][b], axis=0).tolist()) for b in benchmarks}
        avg_tokens = float(np.mean([per[b][0] for b in benchmarks]))
        avg_acc = float(np.mean([per[b][1] for b in benchmarks]))
        if selection == "random":
            random_tokens, delta = avg_tokens, None
        else:
            delta = round_half_away(100 * (avg_tokens - random_tokens) / random_tokens) if random_tokens else None
        rows.append(SelectionRow(selection, per, avg_tokens, avg_acc, delta))
    return rows


def usable_for_k(logs: Sequence[QuestionLog], k: int) -> list[QuestionLog]:
    """Questions with at least k usable generations; warns about the rest."""
    kept = [log for log in logs if log.n >= k]
    dropped = [log.question_id for log in logs if log.n < k]
    if dropped:
        warnings.warn(f"k={k}: dropping {len(dropped)} question(s) with fewer than {k} usable generations: {dropped}")
    return kept
