"""Designed corpora shared by the replay and acceptance tests."""

from conftest import make_log

# Correct answers ("A") sit on the shorter chains; the long tail of each pool
# agrees on a wrong answer often enough to mislead a plain vote.
LENGTH_BIASED = [
    ([10, 14, 18, 25, 30, 36, 40, 50], ["A", "A", "B", "A", "C", "B", "B", "C"]),
    ([8, 12, 20, 22, 35, 41, 44, 60], ["A", "B", "A", "C", "C", "C", "B", "C"]),
    ([5, 9, 15, 27, 33, 38, 47, 55], ["A", "A", "A", "B", "B", "A", "B", "B"]),
    ([12, 16, 19, 24, 31, 45, 52, 58], ["B", "A", "C", "C", "C", "D", "C", "D"]),
    ([7, 11, 23, 29, 34, 39, 48, 57], ["A", "C", "A", "C", "C", "C", "B", "C"]),
    ([6, 13, 17, 21, 26, 37, 43, 59], ["A", "A", "B", "B", "B", "B", "C", "B"]),
]


def length_biased_logs(**meta):
    return [make_log(lengths, answers, gold="A", qid=f"lb{i}", **meta) for i, (lengths, answers) in enumerate(LENGTH_BIASED)]
