"""Shortest-m@k parallel reasoning: live racing and offline replay evaluation."""

from shortm.accounting import compute_with_cut, time_with_cut
from shortm.answers import AnswerPolicy, extract_answer, grade, normalize
from shortm.metrics import (
    RankedPool,
    difficulty_terciles,
    evaluate_curves,
    majority_outcome,
    majority_vote,
    oracle_outcome,
    pass_at_k,
    rank_score_at_k,
    short_long_random_report,
    shortest_m_outcome,
)
from shortm.records import (
    CurvePoint,
    Finish,
    GenerationRecord,
    Method,
    QuestionLog,
    RunConfig,
    SubsetOutcome,
    TieBreak,
    validate_log,
)

__version__ = "0.1.0"
