import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_log
from shortm.records import (
    Finish,
    GenerationRecord,
    LogFormatError,
    QuestionLog,
    RunConfig,
    format_log,
    iter_logs,
    parse_record,
    serialize_record,
    validate_log,
)


def test_well_formed_log_has_no_violations():
    log = make_log(range(1, 21), ["A"] * 20)
    assert validate_log(log) == []


def test_duplicate_sample_index_reported_once():
    log = make_log([5, 6, 7, 8], ["A"] * 4)
    gens = list(log.generations)
    gens[1] = GenerationRecord("q0", 3, 6, finish=Finish.THINK_COMPLETED)
    problems = validate_log(log.with_generations(gens))
    assert len(problems) == 1
    assert "('q0', 3)" in problems[0] and "duplicate" in problems[0]


def test_truncated_record_with_label_is_a_violation():
    log = make_log([5], ["A"])
    bad = GenerationRecord("q0", 0, 5, correct=True, finish=Finish.THINK_TRUNCATED)
    assert len(validate_log(log.with_generations([bad]))) == 1


def test_validate_does_not_mutate():
    log = make_log([5, 5], ["A", "B"])
    before = format_log(log)
    validate_log(log)
    assert format_log(log) == before


def test_zero_tokens_allowed_for_cancelled_and_empty_think_block():
    gens = [
        GenerationRecord("q0", 0, 0, finish=Finish.CANCELLED),
        GenerationRecord("q0", 1, 0, finish=Finish.ERRORED),
        GenerationRecord("q0", 2, 0, finish=Finish.THINK_COMPLETED),
    ]
    assert validate_log(QuestionLog("q0", "p", "1", gens)) == []


def test_field_order_is_the_schema_order():
    line = serialize_record(GenerationRecord("q", 1, 2, "x", "7", True, 1.5, Finish.THINK_COMPLETED))
    assert list(json.loads(line)) == [
        "question_id", "sample_index", "think_tokens", "answer_raw",
        "answer_extracted", "correct", "duration_seconds", "finish",
    ]


def test_unknown_fields_survive_round_trip():
    line = '{"question_id":"q","sample_index":0,"think_tokens":3,"answer_raw":"","answer_extracted":null,"correct":null,"duration_seconds":null,"finish":"Cancelled","think_text":"abc","x":{"y":1}}'
    rec = parse_record(line)
    assert rec.extra == {"think_text": "abc", "x": {"y": 1}}
    assert serialize_record(rec) == line


records = st.builds(
    GenerationRecord,
    question_id=st.text(min_size=1, max_size=8),
    sample_index=st.integers(0, 10**6),
    think_tokens=st.integers(0, 10**7),
    answer_raw=st.text(max_size=20),
    answer_extracted=st.none() | st.text(max_size=6),
    correct=st.none() | st.booleans(),
    duration_seconds=st.none() | st.floats(0, 1e5, allow_nan=False),
    finish=st.sampled_from(list(Finish)),
    extra=st.dictionaries(st.text(min_size=1, max_size=5).filter(lambda s: s not in ("question_id", "finish")), st.integers(), max_size=2),
)


@given(records)
def test_serialize_parse_is_byte_identical(rec):
    line = serialize_record(rec)
    assert serialize_record(parse_record(line)) == line


def test_multi_question_file_and_header_fields():
    a = make_log([1, 2], ["A", "B"], qid="a", benchmark="aime24")
    b = make_log([3], ["A"], qid="b")
    text = format_log(a) + format_log(b)
    logs = list(iter_logs(text.splitlines()))
    assert [q.question_id for q in logs] == ["a", "b"]
    assert logs[0].benchmark == "aime24" and logs[1].benchmark == "all"
    header = json.loads(text.splitlines()[0])
    assert list(header)[:6] == ["question_id", "prompt", "gold_answer", "model", "temperature", "top_p"]
    assert format_log(logs[0]) == format_log(a)


def test_malformed_line_error_cites_line_number():
    text = format_log(make_log([1, 2, 3, 4, 5], list("AAAAA"))).splitlines()
    text.insert(6, "{not json")
    with pytest.raises(LogFormatError, match=r"f.jsonl:7"):
        list(iter_logs(text, "f.jsonl"))


def test_record_before_header_is_rejected():
    line = serialize_record(GenerationRecord("q", 0, 1))
    with pytest.raises(LogFormatError, match="before any header"):
        list(iter_logs([line]))


@pytest.mark.parametrize(
    "kwargs",
    [dict(k=3, m=5), dict(m=0), dict(temperature=0), dict(top_p=1.5), dict(think_open="x", think_close="x")],
)
def test_run_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        RunConfig(**kwargs)


def test_run_config_defaults_match_sampling_setup():
    cfg = RunConfig()
    assert (cfg.temperature, cfg.top_p, cfg.max_tokens) == (0.7, 0.95, 32768)
    assert (cfg.think_open, cfg.think_close) == ("<think>", "</think>")
