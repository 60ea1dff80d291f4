"""
A live race against a scripted server
=====================================

Three streams race; the first one to close its thinking block wins and the
other two connections are closed at once.
"""

# %%
import os

from shortm import RunConfig
from shortm.mockserver import MockChatServer
from shortm.orchestrator import race_question

scenario = {
    "tick_seconds": 0.02,
    "barrier": 3,
    "streams": [
        {"think_tokens": 5, "answer": "so \\boxed{17}"},
        {"think_tokens": 10, "answer": "\\boxed{4}"},
        {"think_tokens": 20, "answer": "\\boxed{4}"},
    ],
}
os.environ.setdefault("DEMO_KEY", "sk-demo")

with MockChatServer(scenario) as server:
    config = RunConfig(endpoint_url=server.url, api_key_env="DEMO_KEY", k=3, m=1)
    result = race_question(config, "What is 10 + 7?", gold_answer="17")

# %%
print("answer:", result.answer, "status:", result.status)
for g in result.question_log.generations:
    print(f"stream {g.sample_index}: {g.think_tokens:>2} thinking chunks, {g.finish.value}")
print("compute charged:", sum(g.think_tokens for g in result.question_log.generations))
