"""Live shortest-m@k racing against an OpenAI-compatible streaming endpoint.

One task per stream reads server-sent events, counts thinking tokens and
posts phase events to a :class:`RaceCoordinator`. Everything runs on one
event loop, so posting is a plain method call: events are handled in the
order they happen and the halt decision is made exactly once. When the
m-th stream closes its thinking block every stream still thinking is
flagged and its task cancelled, which closes the HTTP connection; flagged
streams stop counting before they touch another chunk. Winners keep
streaming their answers.
"""

from __future__ import annotations

import asyncio
import enum
import logging
import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import httpx

from shortm.answers import DEFAULT_POLICY, AnswerPolicy, extract_answer, grade
from shortm.metrics import majority_vote
from shortm.records import Finish, GenerationRecord, QuestionLog, RunConfig, format_log
from shortm.sse import SSEParser, parse_chat_chunk
from shortm.thinking import ANSWERING, ThinkCounter

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    """The endpoint could not be reached or rejected every attempt."""


class RaceError(RuntimeError):
    """No stream finished thinking, so there is nothing to vote on."""

    def __init__(self, message: str, question_log: QuestionLog | None = None):
        super().__init__(message)
        self.question_log = question_log


class CredentialError(RuntimeError):
    pass


class Phase(str, enum.Enum):
    AWAITING_THINK_OPEN = "AwaitingThinkOpen"
    THINKING = "Thinking"
    ANSWERING = "Answering"
    DONE = "Done"
    CANCELLED = "Cancelled"
    FAILED = "Failed"


_TERMINAL = {Phase.DONE, Phase.CANCELLED, Phase.FAILED}
_NEXT = {
    Phase.AWAITING_THINK_OPEN: {Phase.THINKING, Phase.ANSWERING},
    Phase.THINKING: {Phase.ANSWERING},
    Phase.ANSWERING: {Phase.DONE},
}


@dataclass
class StreamState:
    sample_index: int
    phase: Phase = Phase.AWAITING_THINK_OPEN
    think_tokens_so_far: int = 0
    answer_buffer: str = ""
    started_at: float | None = None
    think_closed_at: float | None = None
    truncated: bool = False
    cancel_requested: bool = False
    error: str | None = None
    attempts: int = 0
    history: list[Phase] = field(default_factory=list)

    def advance(self, phase: Phase) -> None:
        if self.phase in _TERMINAL:
            raise RuntimeError(f"stream {self.sample_index} already {self.phase.value}")
        if phase not in (Phase.CANCELLED, Phase.FAILED) and phase not in _NEXT.get(self.phase, ()):
            raise RuntimeError(f"illegal transition {self.phase.value} -> {phase.value}")
        self.history.append(self.phase)
        self.phase = phase


class RaceCoordinator:
    """Owns the halt decision for one question. ``m=None`` never halts (pool generation)."""

    def __init__(self, m: int | None):
        self.m = m
        self.states: dict[int, StreamState] = {}
        self.tasks: dict[int, asyncio.Task] = {}
        self.winners: list[int] = []
        self.halted = False
        self.halted_at: float | None = None
        self.cancelled: list[int] = []

    def post(self, sample_index: int, event: str) -> None:
        if event != "think_close":
            return
        self.winners.append(sample_index)
        if self.m is not None and not self.halted and len(self.winners) >= self.m:
            self._halt()

    def _halt(self) -> None:
        self.halted = True
        self.halted_at = time.monotonic()
        for index, state in self.states.items():
            if state.phase in (Phase.AWAITING_THINK_OPEN, Phase.THINKING) and not state.cancel_requested:
                state.cancel_requested = True
                self.cancelled.append(index)
                task = self.tasks.get(index)
                if task is not None and task is not asyncio.current_task():
                    task.cancel()


@dataclass(frozen=True)
class RaceResult:
    answer: str | None
    question_log: QuestionLog
    winners: tuple[int, ...]
    finishers: int
    degraded: bool

    @property
    def status(self) -> str:
        return f"degraded({self.finishers})" if self.degraded else "complete"


class _ConnectFailure(Exception):
    pass


def _completions_url(endpoint: str) -> str:
    endpoint = endpoint.rstrip("/")
    if endpoint.endswith("/chat/completions"):
        return endpoint
    if endpoint.endswith("/v1"):
        return endpoint + "/chat/completions"
    return endpoint + "/v1/chat/completions"


def _headers(config: RunConfig, question_id: str, sample_index: int) -> dict[str, str]:
    headers = {
        "Accept": "text/event-stream",
        "X-Question-Id": question_id,
        "X-Sample-Index": str(sample_index),
    }
    if config.api_key_env:
        key = os.environ.get(config.api_key_env)
        if key is None:
            raise CredentialError(f"environment variable {config.api_key_env} is not set")
        headers["Authorization"] = f"Bearer {key}"
    return headers


def _request_body(config: RunConfig, prompt: str, sample_index: int) -> dict[str, Any]:
    return {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "top_p": config.top_p,
        "max_tokens": config.max_tokens,
        "stream": True,
        "seed": (config.rng_seed + sample_index) % 2**63,
    }


async def _consume(response: httpx.Response, state: StreamState, counter: ThinkCounter, coord: RaceCoordinator) -> None:
    parser = SSEParser()
    in_reasoning = False
    async for line in response.aiter_lines():
        if state.cancel_requested:
            return
        event = parser.feed_line(line)
        if event is None:
            continue
        delta = parse_chat_chunk(event.data)
        if delta.done:
            break
        pieces = []
        # servers with a reasoning parser ship thinking in a separate field
        if delta.reasoning:
            if not in_reasoning and counter.phase != ANSWERING:
                pieces.append(counter.think_open)
                in_reasoning = True
            pieces.append(delta.reasoning)
        if delta.content:
            if in_reasoning:
                pieces.append(counter.think_close)
                in_reasoning = False
            pieces.append(delta.content)
        if pieces:
            markers = counter.feed("".join(pieces))
            if counter.phase != "awaiting":
                state.think_tokens_so_far = counter.think_tokens
            for marker in markers:
                if marker == "open":
                    state.advance(Phase.THINKING)
                else:
                    state.think_closed_at = time.monotonic()
                    state.advance(Phase.ANSWERING)
                    coord.post(state.sample_index, "think_close")
            state.answer_buffer = counter.answer_text
        if delta.finish_reason == "length" and counter.phase != ANSWERING:
            state.truncated = True
    if in_reasoning:
        counter.feed(counter.think_close)
        state.think_closed_at = time.monotonic()
        state.advance(Phase.ANSWERING)
        coord.post(state.sample_index, "think_close")
    counter.finish()
    state.answer_buffer = counter.answer_text
    if counter.phase == ANSWERING:
        state.think_tokens_so_far = counter.think_tokens
        state.advance(Phase.DONE)
    else:
        state.truncated = True
        state.think_tokens_so_far = max(state.think_tokens_so_far, counter.think_tokens)
        state.advance(Phase.FAILED)


async def _run_stream(
    client: httpx.AsyncClient,
    config: RunConfig,
    question_id: str,
    prompt: str,
    state: StreamState,
    counter: ThinkCounter,
    coord: RaceCoordinator,
) -> None:
    url = _completions_url(config.endpoint_url)
    body = _request_body(config, prompt, state.sample_index)
    headers = _headers(config, question_id, state.sample_index)
    rng = random.Random(config.rng_seed * 1_000_003 + state.sample_index)
    last_error = None
    try:
        for attempt in range(config.retry_budget + 1):
            state.attempts = attempt + 1
            try:
                state.started_at = time.monotonic()
                async with client.stream("POST", url, json=body, headers=headers) as response:
                    if response.status_code != 200:
                        await response.aread()
                        raise _ConnectFailure(f"HTTP {response.status_code}: {response.text[:200]}")
                    await _consume(response, state, counter, coord)
                    return
            except (httpx.ConnectError, httpx.ConnectTimeout, _ConnectFailure) as exc:
                last_error = str(exc) or type(exc).__name__
                if attempt < config.retry_budget:
                    await asyncio.sleep(0.05 * (2**attempt) * (0.5 + rng.random()))
        state.error = f"connect failed after {config.retry_budget + 1} attempt(s): {last_error}"
        state.advance(Phase.FAILED)
    except asyncio.CancelledError:
        if not state.cancel_requested:
            raise
        state.think_tokens_so_far = max(state.think_tokens_so_far, counter.think_tokens)
        state.advance(Phase.CANCELLED)
    except (httpx.HTTPError, RuntimeError, ValueError) as exc:
        if state.cancel_requested:
            state.advance(Phase.CANCELLED)
            return
        state.error = f"{type(exc).__name__}: {exc}"
        state.think_tokens_so_far = max(state.think_tokens_so_far, counter.think_tokens)
        state.advance(Phase.FAILED)
    finally:
        if state.cancel_requested and state.phase not in _TERMINAL:
            state.advance(Phase.CANCELLED)


def _to_record(
    question_id: str,
    state: StreamState,
    counter: ThinkCounter,
    gold: str | None,
    policy: AnswerPolicy,
) -> GenerationRecord:
    extra: dict[str, Any] = {"think_text": counter.think_text}
    if state.error:
        extra["error"] = state.error
    duration = None
    if state.think_closed_at is not None and state.started_at is not None:
        duration = round(state.think_closed_at - state.started_at, 6)
    if state.phase is Phase.CANCELLED:
        finish = Finish.CANCELLED
    elif state.think_closed_at is not None:
        finish = Finish.THINK_COMPLETED
    elif state.truncated and state.error is None:
        finish = Finish.THINK_TRUNCATED
    else:
        finish = Finish.ERRORED
    answer_raw = state.answer_buffer if finish is Finish.THINK_COMPLETED else ""
    extracted = extract_answer(answer_raw, policy) if finish is Finish.THINK_COMPLETED else None
    correct = None
    if finish is Finish.THINK_COMPLETED and gold is not None:
        correct = grade(extracted, gold, policy)
    return GenerationRecord(
        question_id=question_id,
        sample_index=state.sample_index,
        think_tokens=state.think_tokens_so_far,
        answer_raw=answer_raw,
        answer_extracted=extracted,
        correct=correct,
        duration_seconds=duration,
        finish=finish,
        extra=extra,
    )


async def _run_question(
    client: httpx.AsyncClient,
    config: RunConfig,
    question_id: str,
    prompt: str,
    n_streams: int,
    m: int | None,
    gold: str | None,
    policy: AnswerPolicy,
    concurrency: int | None = None,
) -> tuple[RaceCoordinator, list[GenerationRecord]]:
    coord = RaceCoordinator(m)
    counters = {}
    sem = asyncio.Semaphore(concurrency) if concurrency else None

    async def guarded(coro):
        async with sem:
            return await coro

    for i in range(n_streams):
        coord.states[i] = StreamState(i)
        counters[i] = ThinkCounter(config.think_open, config.think_close, config.token_unit)
    for i in range(n_streams):
        coro = _run_stream(client, config, question_id, prompt, coord.states[i], counters[i], coord)
        coord.tasks[i] = asyncio.ensure_future(guarded(coro) if sem else coro)
    await asyncio.gather(*coord.tasks.values(), return_exceptions=True)
    records = [_to_record(question_id, coord.states[i], counters[i], gold, policy) for i in range(n_streams)]
    return coord, records


class LogWriter:
    """Serializes appends to one JSONL log file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = asyncio.Lock()

    async def append(self, question_log: QuestionLog) -> None:
        async with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(format_log(question_log))


def _client(config: RunConfig) -> httpx.AsyncClient:
    timeout = httpx.Timeout(config.request_timeout, connect=min(10.0, config.request_timeout))
    return httpx.AsyncClient(timeout=timeout, limits=httpx.Limits(max_connections=None, max_keepalive_connections=0))


async def race_question_async(
    config: RunConfig,
    prompt: str,
    question_id: str = "q0",
    gold_answer: str | None = None,
    policy: AnswerPolicy = DEFAULT_POLICY,
    log_writer: LogWriter | None = None,
    client: httpx.AsyncClient | None = None,
    meta: dict[str, Any] | None = None,
) -> RaceResult:
    _headers(config, question_id, 0)  # fail on a missing credential before any I/O
    own = client is None
    client = client or _client(config)
    try:
        coord, records = await _run_question(
            client, config, question_id, prompt, config.k, config.m, gold_answer, policy
        )
    finally:
        if own:
            await client.aclose()
    if all(r.finish is Finish.ERRORED for r in records) and all(
        s.error and s.error.startswith("connect failed") for s in coord.states.values()
    ):
        raise TransportError(f"{question_id}: every stream failed to connect; last: {coord.states[0].error}")
    by_index = {r.sample_index: r for r in records}
    winners = [i for i in coord.winners if by_index[i].finish is Finish.THINK_COMPLETED]
    winners = winners[: config.m]
    degraded = len(winners) < config.m
    answer = None
    if winners:
        answer, _ = majority_vote(
            [(by_index[i].answer_extracted, by_index[i].think_tokens) for i in winners],
            config.tie_break,
            _vote_rng(config),
        )
    race_meta = {
        "k": config.k,
        "m": config.m,
        "tie_break": config.tie_break.value,
        "winners": winners,
        "cancelled": sorted(coord.cancelled),
        "status": f"degraded({len(winners)})" if degraded else "complete",
        "finishers": len(winners),
        "chosen_answer": answer,
    }
    question_log = QuestionLog(
        question_id=question_id,
        prompt=prompt,
        gold_answer=gold_answer,
        generations=tuple(records),
        model=config.model_name,
        temperature=config.temperature,
        top_p=config.top_p,
        meta={**(meta or {}), "race": race_meta},
    )
    if log_writer is not None:
        await log_writer.append(question_log)
    if not winners:
        raise RaceError(f"{question_id}: no stream finished thinking", question_log)
    if degraded:
        log.warning("%s: only %d of m=%d streams finished thinking", question_id, len(winners), config.m)
    return RaceResult(answer, question_log, tuple(winners), len(winners), degraded)


def _vote_rng(config: RunConfig):
    import numpy as np

    return np.random.default_rng(config.rng_seed % 2**64)


def race_question(config: RunConfig, prompt: str, **kwargs) -> RaceResult:
    """Race ``config.k`` streams for one prompt; see :func:`race_question_async`."""
    return asyncio.run(race_question_async(config, prompt, **kwargs))


@dataclass(frozen=True)
class PromptItem:
    question_id: str
    prompt: str
    gold_answer: str | None = None
    meta: dict[str, Any] = field(default_factory=dict)


def _safe_name(question_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in question_id) or "question"


async def generate_pool_async(
    config: RunConfig,
    prompts: Sequence[PromptItem],
    n_samples: int,
    out_dir: str | Path,
    policy: AnswerPolicy = DEFAULT_POLICY,
    concurrency: int | None = None,
) -> list[Path]:
    """Sample ``n_samples`` full completions per prompt; one log file per prompt."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    _headers(config, "", 0)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    async with _client(config) as client:
        for item in prompts:
            coord, records = await _run_question(
                client, config, item.question_id, item.prompt, n_samples, None, item.gold_answer, policy, concurrency
            )
            question_log = QuestionLog(
                question_id=item.question_id,
                prompt=item.prompt,
                gold_answer=item.gold_answer,
                generations=tuple(records),
                model=config.model_name,
                temperature=config.temperature,
                top_p=config.top_p,
                meta=dict(item.meta),
            )
            path = out_dir / f"{_safe_name(item.question_id)}.jsonl"
            path.write_text(format_log(question_log), encoding="utf-8", newline="\n")
            errored = sum(1 for r in records if r.finish is Finish.ERRORED)
            if errored:
                log.warning("%s: %d of %d generations errored", item.question_id, errored, n_samples)
            paths.append(path)
    return paths


def generate_pool(config: RunConfig, prompts: Sequence[PromptItem], n_samples: int, out_dir: str | Path, **kwargs) -> list[Path]:
    return asyncio.run(generate_pool_async(config, prompts, n_samples, out_dir, **kwargs))
