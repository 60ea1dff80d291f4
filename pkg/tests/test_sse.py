import json

import pytest

from shortm.sse import SSEParser, chat_chunk, format_sse, parse_chat_chunk


def test_parser_assembles_multiline_data_and_skips_comments():
    p = SSEParser()
    events = [p.feed_line(line) for line in [": keepalive", "event: delta", "data: a", "data: b", ""]]
    assert [e for e in events if e] == [type(events[-1])("delta", "a\nb")]


def test_round_trip_of_emitted_chunks():
    p = SSEParser()
    frame = format_sse(chat_chunk("hi", None, "m"))
    events = [p.feed_line(line) for line in frame.split("\n")]
    (event,) = [e for e in events if e]
    delta = parse_chat_chunk(event.data)
    assert delta.content == "hi" and delta.finish_reason is None and not delta.done


def test_done_sentinel():
    assert parse_chat_chunk("[DONE]").done


def test_reasoning_field_and_finish_reason():
    payload = {"choices": [{"delta": {"reasoning_content": "hmm"}, "finish_reason": "length"}]}
    d = parse_chat_chunk(json.dumps(payload))
    assert d.reasoning == "hmm" and d.finish_reason == "length"


def test_server_error_payload_raises():
    with pytest.raises(RuntimeError):
        parse_chat_chunk('{"error": {"message": "boom"}}')
