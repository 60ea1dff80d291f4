"""Counting thinking tokens on a stream of text deltas.

Markers may arrive split across deltas, so the counter holds back any tail
of unresolved text that could still grow into a marker. Text seen before a
think-open marker is provisional: it is thrown away if the marker shows up
and counted as thinking if a think-close arrives first (models whose chat
template injects the open marker into the prompt never emit it).
"""

from __future__ import annotations

import re
from typing import Iterable

AWAITING = "awaiting"
THINKING = "thinking"
ANSWERING = "answering"

_WORD = re.compile(r"\S+")


def _held_suffix(text: str, markers: tuple[str, ...]) -> int:
    """Length of the longest tail of ``text`` that is a proper prefix of a marker."""
    best = 0
    for marker in markers:
        for size in range(min(len(marker) - 1, len(text)), best, -1):
            if marker.startswith(text[-size:]):
                best = size
                break
    return best


class _Tally:
    def __init__(self, unit: str):
        self.unit = unit
        self.tokens = 0
        self.text: list[str] = []
        self._in_word = False
        self._touched = False

    def add(self, s: str) -> None:
        if not s:
            return
        self.text.append(s)
        if self.unit == "chunk":
            self._touched = True
            return
        words = len(_WORD.findall(s))
        if words and self._in_word and not s[0].isspace():
            words -= 1
        self.tokens += words
        self._in_word = not s[-1].isspace()

    def end_chunk(self) -> bool:
        touched, self._touched = self._touched, False
        if touched:
            self.tokens += 1
        return touched


class ThinkCounter:
    """Feed deltas with :meth:`feed`; read ``phase`` and ``think_tokens``.

    ``unit="chunk"`` counts deltas that carried thinking text (the usual
    one-token-per-chunk streaming servers); ``unit="whitespace"`` counts
    whitespace-separated words.
    """

    def __init__(self, think_open: str = "<think>", think_close: str = "</think>", unit: str = "chunk"):
        if unit not in ("chunk", "whitespace"):
            raise ValueError(f"unknown token unit {unit!r}")
        if not think_open or not think_close or think_open == think_close:
            raise ValueError("think markers must be distinct and non-empty")
        self.think_open = think_open
        self.think_close = think_close
        self.unit = unit
        self.phase = AWAITING
        self.saw_open = False
        self._pending = ""
        self._pending_counted = False
        self._think = _Tally(unit)
        self._answer: list[str] = []

    @property
    def think_tokens(self) -> int:
        return self._think.tokens

    @property
    def think_text(self) -> str:
        return "".join(self._think.text)

    @property
    def answer_text(self) -> str:
        return "".join(self._answer)

    @property
    def closed(self) -> bool:
        return self.phase == ANSWERING

    def feed(self, delta: str) -> list[str]:
        """Consume one delta; returns the marker events it completed ("open", "close")."""
        events: list[str] = []
        text = self._pending + delta
        self._pending = ""
        while text:
            if self.phase == ANSWERING:
                self._answer.append(text)
                break
            if self.phase == AWAITING:
                i_open = text.find(self.think_open)
                i_close = text.find(self.think_close)
                if i_open >= 0 and (i_close < 0 or i_open < i_close):
                    self._think = _Tally(self.unit)
                    self.phase, self.saw_open = THINKING, True
                    events.append("open")
                    text = text[i_open + len(self.think_open) :]
                    continue
                if i_close >= 0:
                    self._think.add(text[:i_close])
                    self.phase = ANSWERING
                    events.append("close")
                    text = text[i_close + len(self.think_close) :]
                    continue
                hold = _held_suffix(text, (self.think_open, self.think_close))
            else:
                i_close = text.find(self.think_close)
                if i_close >= 0:
                    self._think.add(text[:i_close])
                    self.phase = ANSWERING
                    events.append("close")
                    text = text[i_close + len(self.think_close) :]
                    continue
                hold = _held_suffix(text, (self.think_close,))
            self._think.add(text[: len(text) - hold])
            self._pending = text[len(text) - hold :]
            break
        counted = self._think.end_chunk()
        self._pending_counted = bool(self._pending) and (counted or self._pending_counted)
        return events

    def finish(self) -> tuple[int, bool]:
        """Flush held-back text at end of stream; returns (think_tokens, closed)."""
        if self._pending:
            pending, self._pending = self._pending, ""
            if self.phase == ANSWERING:
                self._answer.append(pending)
            else:
                self._think.add(pending)
                if self._pending_counted:
                    self._think._touched = False
                self._think.end_chunk()
        return self.think_tokens, self.closed


def count_think_stream(
    token_events: Iterable[str],
    think_open: str = "<think>",
    think_close: str = "</think>",
    unit: str = "chunk",
) -> tuple[int, bool]:
    counter = ThinkCounter(think_open, think_close, unit)
    for delta in token_events:
        counter.feed(delta)
    return counter.finish()
