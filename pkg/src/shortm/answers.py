"""Final-answer extraction, normalization and grading for integer-answer math benchmarks."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass


class Strategy(str, enum.Enum):
    BOXED = "boxed"
    FINAL_ANSWER_LINE = "final_answer_line"
    LAST_NUMBER = "last_number"


@dataclass(frozen=True)
class AnswerPolicy:
    extraction_order: tuple[Strategy, ...] = (
        Strategy.BOXED,
        Strategy.FINAL_ANSWER_LINE,
        Strategy.LAST_NUMBER,
    )
    numeric_mode: bool = True
    think_close: str = "</think>"

    def __post_init__(self):
        order = tuple(Strategy(s) for s in self.extraction_order)
        if not order:
            raise ValueError("extraction_order must not be empty")
        object.__setattr__(self, "extraction_order", order)


DEFAULT_POLICY = AnswerPolicy()

_SPACING = re.compile(r"\\(?:qquad|quad|[,;:! ])|~")
_INTEGER = re.compile(r"[+-]?\d+")
_NUMBER = re.compile(r"-?\d[\d,]*(?:\.\d+)?")
_ANSWER_LINE = re.compile(r"answer\s*(?:is\b|:)\s*:?\s*(.+)", re.IGNORECASE)
_BOX_START = re.compile(r"\\(?:boxed|fbox)\s*\{")


def _boxed_contents(text: str) -> list[str]:
    out = []
    for match in _BOX_START.finditer(text):
        depth, i = 1, match.end()
        while i < len(text) and depth:
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
            i += 1
        if depth == 0:
            out.append(text[match.end() : i - 1])
    return out


def normalize(answer: str) -> str:
    s = _SPACING.sub("", answer).strip()
    while True:
        boxed = _boxed_contents(s)
        if len(boxed) == 1 and _BOX_START.match(s) and s.endswith("}"):
            s = boxed[0].strip()
            continue
        if len(s) >= 2 and s[0] == "$" and s[-1] == "$":
            s = s.strip("$").strip()
            continue
        break
    s = s.rstrip(".").strip()
    if _INTEGER.fullmatch(s):
        sign = "-" if s.startswith("-") else ""
        digits = s.lstrip("+-").lstrip("0") or "0"
        s = ("" if digits == "0" else sign) + digits
    return s


def _final_answer_line(text: str) -> str | None:
    matches = _ANSWER_LINE.findall(text)
    if not matches:
        return None
    candidate = matches[-1].strip().splitlines()[0].strip()
    boxed = _boxed_contents(candidate)
    if boxed:
        return boxed[-1]
    candidate = candidate.rstrip(".!").strip()
    number = _NUMBER.match(candidate.lstrip("$ "))
    if number and candidate.lstrip("$ ")[number.end():].strip(" $") == "":
        return number.group(0).replace(",", "")
    return candidate or None


def _last_number(text: str) -> str | None:
    matches = _NUMBER.findall(text)
    if not matches:
        return None
    return matches[-1].rstrip(",").replace(",", "")


def extract_answer(text: str, policy: AnswerPolicy = DEFAULT_POLICY) -> str | None:
    """Pull the final answer out of completion text; None if no strategy matches.

    Anything up to the last think-close marker is discarded first, so the full
    completion can be passed as well as the post-thinking segment.
    """
    if policy.think_close and policy.think_close in text:
        text = text.rsplit(policy.think_close, 1)[1]
    for strategy in policy.extraction_order:
        if strategy is Strategy.BOXED:
            boxed = _boxed_contents(text)
            found = boxed[-1] if boxed else None
        elif strategy is Strategy.FINAL_ANSWER_LINE:
            found = _final_answer_line(text)
        else:
            found = _last_number(text)
        if found is not None:
            value = normalize(found)
            if value:
                return value
    return None


def _as_int(s: str) -> int | None:
    s = s.replace(",", "")
    if _INTEGER.fullmatch(s):
        return int(s)
    try:
        value = float(s)
    except ValueError:
        return None
    return int(value) if value.is_integer() else None


def grade(extracted: str | None, gold: str, policy: AnswerPolicy = DEFAULT_POLICY) -> bool:
    if extracted is None:
        return False
    a, b = normalize(extracted), normalize(gold)
    if policy.numeric_mode:
        ia, ib = _as_int(a), _as_int(b)
        if ia is not None and ib is not None:
            return ia == ib
    return a == b
