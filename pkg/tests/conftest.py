import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from shortm.mockserver import MockChatServer
from shortm.records import Finish, GenerationRecord, QuestionLog


def make_log(lengths, answers, gold="A", qid="q0", finish=None, durations=None, **meta):
    """QuestionLog whose correctness is ``answer == gold``."""
    gens = []
    for i, (length, answer) in enumerate(zip(lengths, answers)):
        f = Finish.THINK_COMPLETED if finish is None else finish[i]
        gens.append(
            GenerationRecord(
                question_id=qid,
                sample_index=i,
                think_tokens=int(length),
                answer_raw="" if answer is None else f"\\boxed{{{answer}}}",
                answer_extracted=answer,
                correct=None if f is Finish.THINK_TRUNCATED else (answer == gold),
                duration_seconds=None if durations is None else durations[i],
                finish=f,
            )
        )
    model = meta.pop("model", "m")
    return QuestionLog(qid, f"prompt {qid}", gold, tuple(gens), model=model, temperature=0.7, top_p=0.95, meta=meta)


def random_log(rng: np.random.Generator, qid: str, n: int, n_answers: int = 3, max_len: int = 40):
    lengths = rng.integers(0, max_len, n)
    labels = [chr(ord("A") + i) for i in range(n_answers)]
    answers = [None if rng.random() < 0.1 else str(rng.choice(labels)) for _ in range(n)]
    return make_log(lengths, answers, gold="A", qid=qid)


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("SHORTM_TEST_KEY", "sk-test")
    return "SHORTM_TEST_KEY"


@pytest.fixture
def mock_server_factory():
    servers = []

    def start(scenario):
        server = MockChatServer(scenario).start()
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.stop()
