"""Record types and the JSONL log schema.

A log file holds one or more questions. Each question starts with a header
line (``question_id``, ``prompt``, ``gold_answer`` and run metadata) followed
by one line per sampled generation. Serialization is canonical: fixed field
order, compact separators, unknown fields kept after the known ones.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

RECORD_FIELDS = (
    "question_id",
    "sample_index",
    "think_tokens",
    "answer_raw",
    "answer_extracted",
    "correct",
    "duration_seconds",
    "finish",
)
HEADER_FIELDS = ("question_id", "prompt", "gold_answer", "model", "temperature", "top_p")


class Finish(str, enum.Enum):
    THINK_COMPLETED = "ThinkCompleted"
    THINK_TRUNCATED = "ThinkTruncated"
    CANCELLED = "Cancelled"
    ERRORED = "Errored"


class Method(str, enum.Enum):
    MAJORITY = "majority"
    SHORTEST_M = "shortest_m"
    ORACLE = "oracle"


class TieBreak(str, enum.Enum):
    SHORTEST = "shortest"
    RANDOM = "random"
    LONGEST = "longest"


class LogFormatError(ValueError):
    """A log line could not be parsed into the schema."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class GenerationRecord:
    question_id: str
    sample_index: int
    think_tokens: int
    answer_raw: str = ""
    answer_extracted: str | None = None
    correct: bool | None = None
    duration_seconds: float | None = None
    finish: Finish = Finish.THINK_COMPLETED
    extra: Mapping[str, Any] = field(default_factory=dict, compare=False)

    @property
    def usable(self) -> bool:
        return self.finish is Finish.THINK_COMPLETED

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "question_id": self.question_id,
            "sample_index": self.sample_index,
            "think_tokens": self.think_tokens,
            "answer_raw": self.answer_raw,
            "answer_extracted": self.answer_extracted,
            "correct": self.correct,
            "duration_seconds": self.duration_seconds,
            "finish": self.finish.value,
        }
        for key, value in self.extra.items():
            if key not in out:
                out[key] = value
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GenerationRecord":
        missing = [k for k in ("question_id", "sample_index", "think_tokens", "finish") if k not in data]
        if missing:
            raise LogFormatError(f"record is missing fields {missing}")
        try:
            finish = Finish(data["finish"])
        except ValueError:
            raise LogFormatError(f"unknown finish value {data['finish']!r}") from None
        sample_index = data["sample_index"]
        think_tokens = data["think_tokens"]
        for name, value in (("sample_index", sample_index), ("think_tokens", think_tokens)):
            if not isinstance(value, int) or isinstance(value, bool):
                raise LogFormatError(f"{name} must be an integer, got {value!r}")
        correct = data.get("correct")
        if correct is not None and not isinstance(correct, bool):
            raise LogFormatError(f"correct must be a boolean or null, got {correct!r}")
        duration = data.get("duration_seconds")
        if duration is not None:
            if not isinstance(duration, (int, float)) or isinstance(duration, bool):
                raise LogFormatError(f"duration_seconds must be a number, got {duration!r}")
        extracted = data.get("answer_extracted")
        return cls(
            question_id=str(data["question_id"]),
            sample_index=sample_index,
            think_tokens=think_tokens,
            answer_raw=str(data.get("answer_raw", "") or ""),
            answer_extracted=None if extracted is None else str(extracted),
            correct=correct,
            duration_seconds=duration,
            finish=finish,
            extra={k: v for k, v in data.items() if k not in RECORD_FIELDS},
        )


@dataclass(frozen=True)
class QuestionLog:
    question_id: str
    prompt: str
    gold_answer: str | None
    generations: tuple[GenerationRecord, ...] = ()
    model: str | None = None
    temperature: float | None = None
    top_p: float | None = None
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not isinstance(self.generations, tuple):
            object.__setattr__(self, "generations", tuple(self.generations))

    @property
    def usable(self) -> tuple[GenerationRecord, ...]:
        """ThinkCompleted records, the pool subsets are drawn from."""
        return tuple(g for g in self.generations if g.usable)

    @property
    def n(self) -> int:
        return len(self.usable)

    @property
    def benchmark(self) -> str:
        return str(self.meta.get("benchmark", "all"))

    def with_generations(self, generations: Iterable[GenerationRecord]) -> "QuestionLog":
        return replace(self, generations=tuple(generations))

    def header_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "question_id": self.question_id,
            "prompt": self.prompt,
            "gold_answer": self.gold_answer,
            "model": self.model,
            "temperature": self.temperature,
            "top_p": self.top_p,
        }
        for key, value in self.meta.items():
            if key not in out:
                out[key] = value
        return out

    @classmethod
    def from_header(cls, data: Mapping[str, Any]) -> "QuestionLog":
        if "question_id" not in data or "prompt" not in data:
            raise LogFormatError("header needs question_id and prompt")
        gold = data.get("gold_answer")
        return cls(
            question_id=str(data["question_id"]),
            prompt=str(data["prompt"]),
            gold_answer=None if gold is None else str(gold),
            model=data.get("model"),
            temperature=data.get("temperature"),
            top_p=data.get("top_p"),
            meta={k: v for k, v in data.items() if k not in HEADER_FIELDS},
        )


@dataclass(frozen=True)
class RunConfig:
    endpoint_url: str = "http://127.0.0.1:8000"
    model_name: str = "default"
    temperature: float = 0.7
    top_p: float = 0.95
    max_tokens: int = 32768
    think_open: str = "<think>"
    think_close: str = "</think>"
    k: int = 1
    m: int = 1
    tie_break: TieBreak = TieBreak.SHORTEST
    rng_seed: int = 0
    api_key_env: str = "OPENAI_API_KEY"
    token_unit: str = "chunk"
    retry_budget: int = 2
    request_timeout: float = 600.0

    def __post_init__(self):
        if isinstance(self.tie_break, str) and not isinstance(self.tie_break, TieBreak):
            object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.k < 1:
            out.append(f"k must be >= 1, got {self.k}")
        if not 1 <= self.m <= max(self.k, 1):
            out.append(f"m must satisfy 1 <= m <= k, got m={self.m}, k={self.k}")
        if not self.temperature > 0:
            out.append(f"temperature must be > 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            out.append(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens < 1:
            out.append(f"max_tokens must be >= 1, got {self.max_tokens}")
        if not self.think_open or not self.think_close or self.think_open == self.think_close:
            out.append("think_open and think_close must be distinct non-empty markers")
        if self.token_unit not in ("chunk", "whitespace"):
            out.append(f"token_unit must be 'chunk' or 'whitespace', got {self.token_unit!r}")
        if not -(2**63) <= self.rng_seed < 2**64:
            out.append("rng_seed must fit in 64 bits")
        if self.retry_budget < 0:
            out.append("retry_budget must be >= 0")
        return out


@dataclass(frozen=True)
class SubsetOutcome:
    method: Method
    chosen_answer: str | None
    correct: bool
    compute_tokens: int
    time_proxy: float


@dataclass(frozen=True)
class CurvePoint:
    method: Method
    k: int
    m: int | None
    accuracy_mean: float
    compute_mean: float
    time_mean: float
    n_questions: int
    enumeration: str  # "exact" or "montecarlo(<samples>)"

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method.value,
            "k": self.k,
            "m": self.m,
            "accuracy_mean": self.accuracy_mean,
            "compute_mean": self.compute_mean,
            "time_mean": self.time_mean,
            "n_questions": self.n_questions,
            "enumeration": self.enumeration,
        }


def validate_log(log: QuestionLog) -> list[str]:
    """Return a list of human-readable invariant violations; empty means valid."""
    violations = []
    seen: set[int] = set()
    for g in log.generations:
        key = f"({g.question_id!r}, {g.sample_index})"
        if g.question_id != log.question_id:
            violations.append(f"{key}: question_id does not match header {log.question_id!r}")
        if g.sample_index < 0:
            violations.append(f"{key}: negative sample_index")
        if g.sample_index in seen:
            violations.append(f"{key}: duplicate sample_index")
        seen.add(g.sample_index)
        if g.think_tokens < 0:
            violations.append(f"{key}: negative think_tokens")
        if g.think_tokens == 0 and g.finish is Finish.THINK_TRUNCATED:
            violations.append(f"{key}: zero think_tokens on a truncated generation")
        if g.finish is Finish.THINK_TRUNCATED and g.correct is not None:
            violations.append(f"{key}: truncated generation must not carry a correctness label")
        if g.duration_seconds is not None and (
            not math.isfinite(g.duration_seconds) or g.duration_seconds < 0
        ):
            violations.append(f"{key}: duration_seconds must be finite and non-negative")
    return violations


def dumps(obj: Mapping[str, Any]) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def serialize_record(record: GenerationRecord) -> str:
    return dumps(record.to_dict())


def parse_record(line: str) -> GenerationRecord:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise LogFormatError("record line must be a JSON object")
    return GenerationRecord.from_dict(data)


def _is_header(data: Mapping[str, Any]) -> bool:
    return "sample_index" not in data and "prompt" in data


def iter_logs(lines: Iterable[str], path: str | None = None) -> Iterator[QuestionLog]:
    """Parse question blocks from JSONL lines. Line numbers in errors are 1-based."""
    current: QuestionLog | None = None
    records: list[GenerationRecord] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"invalid JSON ({exc.msg})", path, lineno) from None
        if not isinstance(data, dict):
            raise LogFormatError("line must be a JSON object", path, lineno)
        try:
            if _is_header(data):
                if current is not None:
                    yield current.with_generations(records)
                current, records = QuestionLog.from_header(data), []
                continue
            record = GenerationRecord.from_dict(data)
        except LogFormatError as exc:
            raise LogFormatError(str(exc), path, lineno) from None
        if current is None:
            raise LogFormatError("record before any header line", path, lineno)
        records.append(record)
    if current is not None:
        yield current.with_generations(records)


def read_logs(path: str | Path) -> list[QuestionLog]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return list(iter_logs(fh, str(path)))


def format_log(log: QuestionLog) -> str:
    lines = [dumps(log.header_dict())]
    lines.extend(serialize_record(g) for g in log.generations)
    return "\n".join(lines) + "\n"


def write_logs(path: str | Path, logs: Sequence[QuestionLog], append: bool = False) -> None:
    with Path(path).open("a" if append else "w", encoding="utf-8", newline="\n") as fh:
        for log in logs:
            fh.write(format_log(log))
