"""Format, evidence and answer rewards for a single rollout."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from rapidfuzz.distance import Levenshtein

from .grammar import ParseOutcome, page_problems, parse_alr

DEFAULT_BETA = 2.0
DEFAULT_TAU = 0.5

_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class GroundTruth:
    answers: tuple[str, ...]
    evidence_pages: frozenset[int] = frozenset()

    def __post_init__(self):
        answers = (self.answers,) if isinstance(self.answers, str) else tuple(self.answers)
        if not answers:
            raise ValueError("GroundTruth needs at least one answer")
        if not all(isinstance(a, str) for a in answers):
            raise ValueError("answers must be strings")
        pages = list(self.evidence_pages)
        problems = page_problems(pages)
        if problems:
            raise ValueError("; ".join(problems))
        object.__setattr__(self, "answers", answers)
        object.__setattr__(self, "evidence_pages", frozenset(pages))

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(tuple(d["answers"]), frozenset(d.get("evidence_pages", ())))


@dataclass(frozen=True)
class RewardWeights:
    lambda_format: float = 0.1
    lambda_evidence: float = 0.3
    lambda_answer: float = 0.6

    def __post_init__(self):
        ws = (self.lambda_format, self.lambda_evidence, self.lambda_answer)
        if any(w < 0 for w in ws) or sum(ws) <= 0:
            raise ValueError(f"weights must be non-negative with positive sum, got {ws}")

    @classmethod
    def parse(cls, text: str) -> "RewardWeights":
        parts = [float(x) for x in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated weights, got {text!r}")
        return cls(*parts)


@dataclass(frozen=True)
class RewardBreakdown:
    format: int
    evidence: float
    answer: float
    total: float

    def to_dict(self) -> dict:
        return {"format": self.format, "evidence": self.evidence,
                "answer": self.answer, "total": self.total}


def normalize_answer(text: str) -> str:
    """Lowercase, trim, collapse whitespace runs, drop terminal '.'/','."""
    text = _WS.sub(" ", text.strip().lower())
    return text.rstrip(".,").rstrip()


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert, delete, substitute)."""
    return Levenshtein.distance(a, b)


def anls_score(pred: str, gts: Sequence[str], tau: float = DEFAULT_TAU) -> float:
    """Thresholded normalized Levenshtein similarity, best over ``gts``."""
    if not gts:
        raise ValueError("anls_score needs at least one ground-truth answer")
    if not 0 < tau <= 1:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    p = normalize_answer(pred)
    best = 0.0
    for gt in gts:
        g = normalize_answer(gt)
        nl = levenshtein(p, g) / max(len(p), len(g), 1)
        score = 1.0 - nl if nl <= tau else 0.0
        best = max(best, score)
    return best


def fbeta(precision: float, recall: float, beta: float) -> float:
    if precision == 0 and recall == 0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * precision * recall / (b2 * precision + recall)


def evidence_reward(pred_pages: Iterable[int], gt_pages: Iterable[int],
                    beta: float = DEFAULT_BETA) -> float:
    """Recall-weighted F-beta between predicted and gold page sets.

    Both empty scores 1.0; exactly one empty scores 0.0.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    pred, gt = set(pred_pages), set(gt_pages)
    if not pred and not gt:
        return 1.0
    if not pred or not gt:
        return 0.0
    hit = len(pred & gt)
    return fbeta(hit / len(pred), hit / len(gt), beta)


def format_reward(outcome: ParseOutcome) -> int:
    return 1 if outcome.status == "ok" else 0


def combine(fmt: int, evidence: float, answer: float, w: RewardWeights) -> float:
    return w.lambda_format * fmt + w.lambda_evidence * evidence + w.lambda_answer * answer


def total_reward(raw: str, gt: GroundTruth, w: RewardWeights = RewardWeights(),
                 beta: float = DEFAULT_BETA, tau: float = DEFAULT_TAU) -> RewardBreakdown:
    outcome = parse_alr(raw)
    if not outcome.ok:
        return RewardBreakdown(0, 0.0, 0.0, combine(0, 0.0, 0.0, w))
    r = outcome.response
    evidence = evidence_reward(r.evidence_pages, gt.evidence_pages, beta)
    answer = anls_score(r.final_answer, gt.answers, tau)
    return RewardBreakdown(1, evidence, answer, combine(1, evidence, answer, w))
