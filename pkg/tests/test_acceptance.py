"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import csv
import io
import json
import subprocess
import sys
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from conftest import make_log, random_log
from fixtures import length_biased_logs
from oracles import pass_at_k_enum, rank_score_enum, token_clock
from shortm.accounting import compute_with_cut, order_statistic_index, time_with_cut
from shortm.cli import main
from shortm.metrics import (
    RankedPool,
    evaluate_curves,
    majority_outcome,
    pass_at_k,
    rank_score_at_k,
    rank_weights,
    short_long_random_report,
    shortest_m_outcome,
)
from shortm.orchestrator import LogWriter, race_question
from shortm.records import Finish, GenerationRecord, Method, RunConfig, TieBreak, read_logs, write_logs
from shortm.replay import ABSENT, emit_table1, emit_table2


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def run(number, title):
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield
            status = "PASS"
        finally:
            with capsys.disabled():
                print(f"\n[acceptance] criterion {number:>2} {status} ({time.perf_counter() - start:.2f}s): {title}")

    return run


def test_c01_pass_at_k_matches_enumeration(criterion):
    rng = np.random.default_rng(1)
    triples = []
    for _ in range(500):
        n = int(rng.integers(1, 13))
        triples.append((n, int(rng.integers(0, n + 1)), int(rng.integers(1, n + 1))))
    expected = [float(pass_at_k_enum([True] * c + [False] * (n - c), k)) for n, c, k in triples]
    with criterion(1, "pass@k equals subset enumeration for 500 triples within 1e-12, < 5 s"):
        start = time.perf_counter()
        worst = max(abs(pass_at_k(n, c, k) - e) for (n, c, k), e in zip(triples, expected))
        elapsed = time.perf_counter() - start
        assert worst <= 1e-12, worst
        assert elapsed < 5, elapsed


def test_c02_rank_score_matches_enumeration(criterion):
    rng = np.random.default_rng(2)
    with criterion(2, "rank score equals min-of-subset enumeration for 500 pools within 1e-12; weights sum to 1"):
        for trial in range(500):
            n = int(rng.integers(1, 13))
            k = int(rng.integers(1, n + 1))
            lengths = rng.integers(0, 15, n).tolist()
            correct = (rng.random(n) < rng.random()).tolist()
            pool = RankedPool.from_records(
                GenerationRecord("q", i, lengths[i], answer_extracted="x", correct=correct[i]) for i in range(n)
            )
            assert abs(rank_score_at_k(pool, k) - float(rank_score_enum(lengths, correct, k))) <= 1e-12, trial
            assert abs(rank_weights(n, k).sum() - 1) <= 1e-12


def test_c03_accounting_matches_token_clock(criterion):
    rng = np.random.default_rng(3)
    cases = []
    for _ in range(1000):
        k = int(rng.integers(1, 9))
        lengths = rng.integers(0, 60, k).tolist()
        cases.append((lengths, int(rng.integers(1, k + 1))))
    with criterion(3, "compute/time with cut equal a token-clock simulation on 1000 subsets, < 10 s"):
        start = time.perf_counter()
        for lengths, m in cases:
            tokens, ticks, done = token_clock(lengths, stop_after=m)
            idx = order_statistic_index(lengths, m)
            assert compute_with_cut(lengths, lengths[idx]) == tokens
            assert time_with_cut(lengths, cut_index=idx) == ticks
            assert lengths[done[-1]] == lengths[idx]
            # majority waits for every stream
            all_tokens, all_ticks, _ = token_clock(lengths)
            assert (compute_with_cut(lengths, None), time_with_cut(lengths)) == (all_tokens, all_ticks)
        assert time.perf_counter() - start < 10


def test_c04_dominance(criterion):
    rng = np.random.default_rng(4)
    logs = [random_log(rng, f"d{i}", int(rng.integers(2, 9))) for i in range(200)]
    violations = []
    with criterion(4, "oracle >= others in accuracy, shortest-m cheaper than majority, m = k agrees; 200 logs, zero violations"):
        for log in logs:
            n = log.n
            ks = tuple(range(1, n + 1))
            rows = evaluate_curves([log], k_set=ks, m_set=ks, majority_tie_break=TieBreak.SHORTEST)
            by = {(p.method, p.k, p.m): p for p in rows}
            for k in ks:
                oracle, maj = by[(Method.ORACLE, k, None)], by[(Method.MAJORITY, k, None)]
                if oracle.accuracy_mean < maj.accuracy_mean - 1e-12:
                    violations.append((log.question_id, "oracle<majority", k))
                for m in range(1, k + 1):
                    sm = by[(Method.SHORTEST_M, k, m)]
                    if oracle.accuracy_mean < sm.accuracy_mean - 1e-12:
                        violations.append((log.question_id, "oracle<shortest", k, m))
                    if sm.compute_mean > maj.compute_mean + 1e-9 or sm.time_mean > maj.time_mean + 1e-9:
                        violations.append((log.question_id, "cost", k, m))
                if abs(by[(Method.SHORTEST_M, k, k)].accuracy_mean - maj.accuracy_mean) > 1e-12:
                    violations.append((log.question_id, "m=k accuracy", k))
            records = list(log.usable)
            for _ in range(5):
                subset = [records[i] for i in rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)]
                a = shortest_m_outcome(subset, len(subset), TieBreak.SHORTEST).chosen_answer
                b = majority_outcome(subset, TieBreak.SHORTEST).chosen_answer
                if a != b:
                    violations.append((log.question_id, "m=k answer"))
        assert violations == []


@pytest.mark.slow
def test_c05_exact_enumeration_scale(criterion):
    rng = np.random.default_rng(5)
    logs = [random_log(rng, f"s{i}", 20, max_len=4000) for i in range(30)]
    with criterion(5, "exact enumeration of C(20,10)=184756 subsets x 30 questions in < 60 s"):
        start = time.perf_counter()
        rows = evaluate_curves(logs, k_set=(10,), m_set=(1, 3, 5, 9))
        elapsed = time.perf_counter() - start
        assert {p.enumeration for p in rows} == {"exact"}
        assert len(rows) == 6 and all(p.n_questions == 30 for p in rows)
        assert elapsed < 60, elapsed


# Brute-force values for tests/fixtures.LENGTH_BIASED, from tests/oracles.method_means.
LENGTH_BIASED_EXPECTED = {
    2: {"shortest": (Fraction(10, 21), Fraction(3251, 84), Fraction(3251, 168)), "majority": (Fraction(7, 24), Fraction(1421, 24), Fraction(279, 7))},
    4: {"shortest": (Fraction(289, 420), Fraction(5081, 105), Fraction(5081, 420)), "majority": (Fraction(13, 56), Fraction(1421, 12), Fraction(20609, 420))},
}


def test_c06_length_biased_fixture(criterion):
    logs = length_biased_logs(benchmark="toy")
    with criterion(6, "shorter-is-correct fixture: shortest-1@k beats majority@k at k=2,4; shortest row beats random"):
        rows = evaluate_curves(logs, k_set=(2, 4), m_set=(1,))
        by = {(p.method, p.k): p for p in rows}
        for k, expected in LENGTH_BIASED_EXPECTED.items():
            for method, key in ((Method.SHORTEST_M, "shortest"), (Method.MAJORITY, "majority")):
                p = by[(method, k)]
                got = (p.accuracy_mean, p.compute_mean, p.time_mean)
                assert got == pytest.approx([float(x) for x in expected[key]], abs=1e-12), (k, key)
            assert by[(Method.SHORTEST_M, k)].accuracy_mean > by[(Method.MAJORITY, k)].accuracy_mean
        report = {r.selection: r for r in short_long_random_report(logs)}
        assert (report["shortest"].average_tokens, report["shortest"].average_accuracy) == pytest.approx((8.0, 5 / 6))
        assert (report["random"].average_tokens, report["random"].average_accuracy) == pytest.approx((1421 / 48, 7 / 24))
        table = list(csv.reader(io.StringIO(emit_table2(logs, fmt="csv"))))
        avg = {r[1]: r for r in table if r[2] == "average"}
        assert float(avg["shortest"][4]) > float(avg["random"][4])
        assert float(avg["shortest"][3]) < float(avg["random"][3])
        assert avg["shortest"][5] == "-73"


def test_c07_live_race(criterion, mock_server_factory, api_key, tmp_path):
    scenario = {
        "tick_seconds": 0.03,
        "barrier": 3,
        "streams": [
            {"think_tokens": 5, "answer": "so \\boxed{17}"},
            {"think_tokens": 10, "answer": "\\boxed{4}"},
            {"think_tokens": 20, "answer": "\\boxed{4}"},
        ],
    }
    with criterion(7, "live race [5,10,20], m=1, k=3: losers cancelled within 1 chunk, short answer, replay accounting, < 10 s"):
        start = time.perf_counter()
        server = mock_server_factory(scenario)
        config = RunConfig(endpoint_url=server.url, api_key_env=api_key, k=3, m=1)
        result = race_question(config, "q", gold_answer="17", log_writer=LogWriter(tmp_path / "race.jsonl"))
        gens = sorted(result.question_log.generations, key=lambda g: g.sample_index)
        assert result.answer == "17"
        assert [g.finish for g in gens] == [Finish.THINK_COMPLETED, Finish.CANCELLED, Finish.CANCELLED]
        assert all(g.think_tokens - 5 <= 1 for g in gens[1:])
        scheduled = [GenerationRecord("q", i, n, answer_extracted=a, correct=a == "17") for i, (n, a) in enumerate([(5, "17"), (10, "4"), (20, "4")])]
        replay = shortest_m_outcome(scheduled, 1)
        assert replay.chosen_answer == result.answer
        assert sum(g.think_tokens for g in gens) == replay.compute_tokens == 15
        assert max(g.think_tokens for g in gens) == replay.time_proxy == 5
        assert len(read_logs(tmp_path / "race.jsonl")) == 1
        time.sleep(0.1)
        assert all(log.client_disconnected for log in server.logs if log.sample_index in (1, 2))
        assert time.perf_counter() - start < 10


def test_c08_degradation_path(criterion, mock_server_factory, api_key, tmp_path):
    scenario = {
        "tick_seconds": 0.02,
        "barrier": 3,
        "streams": [
            {"think_tokens": 6, "answer": "\\boxed{21}"},
            {"think_tokens": 12, "drop_after_tokens": 3},
            {"think_tokens": 12, "drop_after_tokens": 5},
        ],
    }
    with criterion(8, "2 of 3 streams drop, m=3: Degraded(1) with surviving answer, exit 0, recorded in log"):
        server = mock_server_factory(scenario)
        cfg = tmp_path / "run.yaml"
        cfg.write_text(f"endpoint_url: {server.url}\napi_key_env: {api_key}\nk: 3\nm: 3\n")
        code = main(["race", "--config", str(cfg), "--prompt", "q", "--log", str(tmp_path / "race.jsonl")])
        assert code == 0
        (log,) = read_logs(tmp_path / "race.jsonl")
        race = log.meta["race"]
        assert race["status"] == "degraded(1)" and race["finishers"] == 1 and race["chosen_answer"] == "21"
        assert [g.finish for g in log.generations] == [Finish.THINK_COMPLETED, Finish.ERRORED, Finish.ERRORED]


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "shortm", *args], capture_output=True, text=True, check=True)


def test_c09_determinism(criterion, tmp_path):
    rng = np.random.default_rng(9)
    logs = []
    for i in range(12):
        log = random_log(rng, f"det{i}", 12)
        logs.append(log.with_generations([g.__class__(**{**g.__dict__, "extra": {"think_text": f"t{i}.{g.sample_index}"}}) for g in log.generations]))
    write_logs(tmp_path / "pool.jsonl", logs)
    pool = str(tmp_path / "pool.jsonl")
    with criterion(9, "eval and build-sft byte-identical across two invocations and workers {1,4}"):
        common = ["--logs", pool, "--k", "1..12", "--m", "1,3,5", "--exact-threshold", "300", "--mc-samples", "500", "--seed", "7"]
        _cli("eval", *common, "--workers", "1", "--out", str(tmp_path / "e1.csv"))
        _cli("eval", *common, "--workers", "1", "--out", str(tmp_path / "e2.csv"))
        _cli("eval", *common, "--workers", "4", "--out", str(tmp_path / "e4.csv"))
        ref = (tmp_path / "e1.csv").read_bytes()
        assert b"montecarlo(500)" in ref and b"exact" in ref
        for name in ("e2", "e4"):
            assert (tmp_path / f"{name}.csv").read_bytes() == ref
            assert (tmp_path / f"{name}.json").read_bytes() == (tmp_path / "e1.json").read_bytes()
        _cli("build-sft", "--logs", pool, "--seed", "7", "--out", str(tmp_path / "s1"))
        _cli("build-sft", "--logs", pool, "--seed", "7", "--out", str(tmp_path / "s2"))
        files = sorted(p.name for p in (tmp_path / "s1").iterdir())
        assert len(files) == 7
        for name in files:
            assert (tmp_path / "s1" / name).read_bytes() == (tmp_path / "s2" / name).read_bytes(), name


def test_c10_table1_absent_mean(criterion):
    logs = [
        make_log([1200, 1800, 2400], ["A", "A", "A"], qid="easy", model="qwq"),
        make_log([2000, 3000, 7000], ["A", "A", "B"], qid="medium", model="qwq"),
        make_log([4000, 8000, 9000], ["A", "B", "B"], qid="hard", model="qwq"),
    ]
    with criterion(10, "table 1 renders an absent incorrect mean as an en dash"):
        text = emit_table1(logs)
        line = next(l for l in text.splitlines() if l.startswith("qwq"))
        assert line.split()[1] == f"1.8/{ABSENT}/1.8"
        rows = list(csv.reader(io.StringIO(emit_table1(logs, "csv"))))
        assert rows[1] == ["qwq", "easy", "1.8", ABSENT, "1.8", "1"]
        assert rows[2][2:5] == ["2.5", "7.0", "4.0"]
