"""Incremental server-sent-events parsing for OpenAI-style streaming responses."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any


@dataclass
class SSEEvent:
    event: str | None
    data: str


class SSEParser:
    """Line-oriented text/event-stream parser; feed it decoded lines."""

    def __init__(self) -> None:
        self._event: str | None = None
        self._data: list[str] = []

    def feed_line(self, line: str) -> SSEEvent | None:
        line = line.rstrip("\r")
        if line == "":
            if self._event is None and not self._data:
                return None
            out = SSEEvent(self._event, "\n".join(self._data))
            self._event, self._data = None, []
            return out
        if line.startswith(":"):
            return None
        name, _, value = line.partition(":")
        if value.startswith(" "):
            value = value[1:]
        if name == "data":
            self._data.append(value)
        elif name == "event":
            self._event = value
        return None

    def flush(self) -> SSEEvent | None:
        return self.feed_line("")


@dataclass
class ChatDelta:
    content: str = ""
    reasoning: str = ""
    finish_reason: str | None = None
    usage: dict[str, Any] | None = None
    done: bool = False


def parse_chat_chunk(data: str) -> ChatDelta:
    """Decode one ``data:`` payload of a streaming chat completion."""
    if data.strip() == "[DONE]":
        return ChatDelta(done=True)
    payload = json.loads(data)
    if "error" in payload:
        raise RuntimeError(f"server reported an error: {payload['error']}")
    out = ChatDelta(usage=payload.get("usage"))
    choices = payload.get("choices") or []
    if choices:
        choice = choices[0]
        delta = choice.get("delta") or {}
        out.content = delta.get("content") or ""
        out.reasoning = delta.get("reasoning_content") or delta.get("reasoning") or ""
        out.finish_reason = choice.get("finish_reason")
    return out


def format_sse(payload: dict[str, Any] | str) -> str:
    data = payload if isinstance(payload, str) else json.dumps(payload, separators=(",", ":"))
    return f"data: {data}\n\n"


def chat_chunk(content: str | None = None, finish_reason: str | None = None, model: str = "mock") -> dict[str, Any]:
    delta = {} if content is None else {"content": content}
    return {
        "object": "chat.completion.chunk",
        "model": model,
        "choices": [{"index": 0, "delta": delta, "finish_reason": finish_reason}],
    }
