"""Scripted OpenAI-compatible streaming server for tests and demos.

A scenario fixes, per sample index, how many thinking chunks a stream emits
and what it answers. All streams of a question start on a shared clock once
``barrier`` requests have arrived; chunk t of every stream goes out at
``t * tick_seconds``, and the think-close marker goes out half a tick after
the last thinking chunk, so every stream that is still thinking has
emitted exactly as many chunks as the winner when it closes.

Scenario keys (JSON object; every stream key is optional)::

    {"tick_seconds": 0.02, "barrier": 3, "barrier_timeout": 2.0,
     "streams": [{"think_tokens": 5, "answer": "\\\\boxed{7}",
                  "emit_think_open": true, "close_think": true,
                  "drop_after_tokens": null, "connect_failures": 0,
                  "status": 200, "reasoning_field": false}],
     "questions": {"<question_id>": {"streams": [...]}}}

Streams are picked by the ``X-Sample-Index`` request header modulo the list
length, questions by ``X-Question-Id``.
"""

from __future__ import annotations

import asyncio
import json
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from shortm.sse import chat_chunk, format_sse


@dataclass
class StreamLog:
    question_id: str
    sample_index: int
    status: int
    think_chunks_sent: int = 0
    chunks_sent: int = 0
    completed: bool = False
    client_disconnected: bool = False
    dropped: bool = False


@dataclass
class _Barrier:
    arrived: int = 0
    event: asyncio.Event = field(default_factory=asyncio.Event)
    start: float | None = None


class MockChatServer:
    def __init__(self, scenario: dict[str, Any] | str | Path, host: str = "127.0.0.1", port: int = 0):
        if isinstance(scenario, (str, Path)):
            scenario = json.loads(Path(scenario).read_text())
        self.scenario = scenario
        self.host = host
        self.port = port
        self.logs: list[StreamLog] = []
        self.requests: list[dict[str, Any]] = []
        self._attempts: dict[tuple[str, int], int] = defaultdict(int)
        self._arrivals: dict[str, int] = defaultdict(int)
        self._barriers: dict[tuple[str, int], _Barrier] = {}
        self._loop: asyncio.AbstractEventLoop | None = None
        self._server: asyncio.AbstractServer | None = None
        self._thread: threading.Thread | None = None
        self._ready = threading.Event()

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "MockChatServer":
        self._thread = threading.Thread(target=self._serve, name="mock-chat-server", daemon=True)
        self._thread.start()
        if not self._ready.wait(5):
            raise RuntimeError("mock server failed to start")
        return self

    def stop(self) -> None:
        if self._loop is not None:
            self._loop.call_soon_threadsafe(self._loop.stop)
        if self._thread is not None:
            self._thread.join(5)

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _serve(self) -> None:
        loop = asyncio.new_event_loop()
        self._loop = loop
        asyncio.set_event_loop(loop)
        self._server = loop.run_until_complete(asyncio.start_server(self._handle, self.host, self.port))
        self.port = self._server.sockets[0].getsockname()[1]
        self._ready.set()
        try:
            loop.run_forever()
        finally:
            self._server.close()
            loop.run_until_complete(self._server.wait_closed())
            loop.close()

    # -- scenario --------------------------------------------------------------

    def _stream_spec(self, question_id: str, sample_index: int) -> dict[str, Any]:
        streams = self.scenario.get("questions", {}).get(question_id, {}).get("streams") or self.scenario.get(
            "streams"
        ) or [{}]
        spec = {
            "think_tokens": 5,
            "answer": "The answer is \\boxed{0}",
            "emit_think_open": True,
            "close_think": True,
            "drop_after_tokens": None,
            "connect_failures": 0,
            "status": 200,
            "reasoning_field": False,
        }
        spec.update(streams[sample_index % len(streams)])
        return spec

    async def _start_time(self, question_id: str) -> float:
        loop = asyncio.get_running_loop()
        size = int(self.scenario.get("barrier", 0))
        if size <= 1:
            return loop.time()
        arrivals = self._arrivals[question_id]
        self._arrivals[question_id] += 1
        barrier = self._barriers.setdefault((question_id, arrivals // size), _Barrier())
        barrier.arrived += 1
        if barrier.arrived >= size and not barrier.event.is_set():
            barrier.start = loop.time()
            barrier.event.set()
        try:
            await asyncio.wait_for(barrier.event.wait(), float(self.scenario.get("barrier_timeout", 2.0)))
        except asyncio.TimeoutError:
            return loop.time()
        return barrier.start

    # -- HTTP ---------------------------------------------------------------------

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            request = await self._read_request(reader)
            if request is None:
                return
            method, path, headers, body = request
            if method != "POST" or not path.rstrip("/").endswith("/chat/completions"):
                await self._plain(writer, 404, {"error": {"message": f"no route {method} {path}"}})
                return
            payload = json.loads(body or b"{}")
            self.requests.append({"headers": headers, "body": payload})
            await self._stream(reader, writer, headers, payload)
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            if not writer.is_closing():
                writer.close()

    async def _read_request(self, reader: asyncio.StreamReader):
        head = await reader.readuntil(b"\r\n\r\n")
        lines = head.decode("latin-1").split("\r\n")
        method, path, _ = lines[0].split(" ", 2)
        headers = {}
        for line in lines[1:]:
            if ":" in line:
                name, value = line.split(":", 1)
                headers[name.strip().lower()] = value.strip()
        length = int(headers.get("content-length", 0))
        body = await reader.readexactly(length) if length else b""
        return method, path, headers, body

    async def _plain(self, writer: asyncio.StreamWriter, status: int, obj: dict[str, Any]) -> None:
        data = json.dumps(obj).encode()
        writer.write(
            f"HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {len(data)}\r\n"
            f"Connection: close\r\n\r\n".encode()
            + data
        )
        await writer.drain()

    async def _stream(self, reader, writer, headers, payload) -> None:
        question_id = headers.get("x-question-id", "")
        sample_index = int(headers.get("x-sample-index", 0))
        spec = self._stream_spec(question_id, sample_index)
        key = (question_id, sample_index)
        self._attempts[key] += 1
        if self._attempts[key] <= int(spec["connect_failures"]) or int(spec["status"]) != 200:
            status = 503 if int(spec["status"]) == 200 else int(spec["status"])
            self.logs.append(StreamLog(question_id, sample_index, status))
            await self._plain(writer, status, {"error": {"message": "scripted failure"}})
            return
        entry = StreamLog(question_id, sample_index, 200)
        self.logs.append(entry)
        model = payload.get("model", "mock")
        writer.write(
            b"HTTP/1.1 200 OK\r\nContent-Type: text/event-stream\r\nCache-Control: no-cache\r\n"
            b"Transfer-Encoding: chunked\r\nConnection: close\r\n\r\n"
        )
        await writer.drain()

        gone = asyncio.Event()

        async def watch():
            await reader.read()
            gone.set()

        watcher = asyncio.ensure_future(watch())
        loop = asyncio.get_running_loop()
        tick = float(self.scenario.get("tick_seconds", 0.02))
        start = await self._start_time(question_id)

        async def send_at(t: float, text: str) -> bool:
            delay = start + t * tick - loop.time()
            if delay > 0:
                try:
                    await asyncio.wait_for(gone.wait(), delay)
                except asyncio.TimeoutError:
                    pass
            if gone.is_set() or writer.is_closing():
                entry.client_disconnected = True
                return False
            data = text.encode()
            writer.write(f"{len(data):x}\r\n".encode() + data + b"\r\n")
            try:
                await writer.drain()
            except ConnectionError:
                entry.client_disconnected = True
                return False
            entry.chunks_sent += 1
            return True

        def sse(content=None, finish=None):
            return format_sse(chat_chunk(content, finish, model))

        def think_sse(text):
            if not spec["reasoning_field"]:
                return sse(text)
            chunk = chat_chunk(None, None, model)
            chunk["choices"][0]["delta"] = {"reasoning_content": text}
            return format_sse(chunk)

        try:
            n_think = int(spec["think_tokens"])
            drop = spec["drop_after_tokens"]
            markers = spec["emit_think_open"] and not spec["reasoning_field"]
            if markers and not await send_at(0, sse("<think>")):
                return
            for t in range(1, n_think + 1):
                if drop is not None and entry.think_chunks_sent >= int(drop):
                    entry.dropped = True
                    writer.transport.abort()
                    return
                if not await send_at(t, think_sse(f"w{t} ")):
                    return
                entry.think_chunks_sent += 1
            if drop is not None and entry.think_chunks_sent >= int(drop):
                entry.dropped = True
                writer.transport.abort()
                return
            if not spec["close_think"]:
                await send_at(n_think + 0.5, sse(None, "length"))
                await send_at(n_think + 0.5, format_sse("[DONE]"))
                entry.completed = True
                return
            if not spec["reasoning_field"] and not await send_at(n_think + 0.5, sse("</think>")):
                return
            words = str(spec["answer"]).split(" ")
            for j, word in enumerate(words):
                piece = word if j == 0 else " " + word
                if not await send_at(n_think + 1 + j, sse(piece)):
                    return
            t_end = n_think + 1 + len(words)
            await send_at(t_end, sse(None, "stop"))
            await send_at(t_end, format_sse("[DONE]"))
            writer.write(b"0\r\n\r\n")
            await writer.drain()
            entry.completed = True
        finally:
            watcher.cancel()
