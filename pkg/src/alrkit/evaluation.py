"""Benchmark metrics, stage-wise error breakdown, retrieval top-k sweeps and length truncation."""
from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .grammar import parse_alr
from .rewards import DEFAULT_TAU, GroundTruth, anls_score, fbeta, normalize_answer


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    pred_answer: str
    pred_pages: frozenset[int]
    gt: GroundTruth
    doc_num_pages: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "pred_pages", frozenset(self.pred_pages))
        if self.doc_num_pages is not None:
            bad = [p for p in self.pred_pages | self.gt.evidence_pages
                   if not 1 <= p <= self.doc_num_pages]
            if bad:
                raise ValueError(f"{self.sample_id}: pages {sorted(bad)} outside 1..{self.doc_num_pages}")

    @classmethod
    def from_json(cls, pred: dict, gt: dict) -> "EvalRecord":
        """Join a prediction row with its gold row.

        A prediction carries either ``answer`` (+ ``evidence_pages``) or a raw
        ``response`` in the answer template; unparsable responses count as empty.
        """
        if "response" in pred:
            outcome = parse_alr(pred["response"])
            answer = outcome.response.final_answer if outcome.ok else ""
            pages = outcome.response.evidence_pages if outcome.ok else ()
        else:
            answer = pred.get("answer", pred.get("pred_answer", ""))
            pages = pred.get("evidence_pages", pred.get("pred_pages", ()))
        sid = str(pred.get("sample_id", gt.get("sample_id", "")))
        return cls(sid, answer, frozenset(pages), GroundTruth.from_dict(gt), gt.get("doc_num_pages"))


@dataclass(frozen=True)
class RetrievalScores:
    sample_id: str
    scores: Mapping[int, float]


@dataclass(frozen=True)
class BreakdownTable:
    """Counts over (recall == 1 vs < 1) x (answer ANLS >= 0.5 vs below)."""
    full_hit: int
    full_miss: int
    partial_hit: int
    partial_miss: int

    @property
    def recall_full(self) -> int:
        return self.full_hit + self.full_miss

    @property
    def recall_partial(self) -> int:
        return self.partial_hit + self.partial_miss

    @property
    def acc_hit(self) -> int:
        return self.full_hit + self.partial_hit

    @property
    def acc_miss(self) -> int:
        return self.full_miss + self.partial_miss

    @property
    def total(self) -> int:
        return self.recall_full + self.recall_partial

    def to_dict(self) -> dict:
        return {
            "recall=1": {"acc>=0.5": self.full_hit, "acc=0": self.full_miss, "total": self.recall_full},
            "recall<1": {"acc>=0.5": self.partial_hit, "acc=0": self.partial_miss,
                         "total": self.recall_partial},
            "total": {"acc>=0.5": self.acc_hit, "acc=0": self.acc_miss, "total": self.total},
        }

    def to_text(self) -> str:
        rows = [("", "Acc>=0.5", "Acc=0", "Total"),
                ("Recall=1", self.full_hit, self.full_miss, self.recall_full),
                ("Recall<1", self.partial_hit, self.partial_miss, self.recall_partial),
                ("Total", self.acc_hit, self.acc_miss, self.total)]
        return "\n".join(f"{r[0]:<10}" + "".join(f"{c!s:>10}" for c in r[1:]) for r in rows)


def _require(records: Sequence) -> None:
    if not records:
        raise ValueError("no records to evaluate")


def metric_anls(records: Sequence[EvalRecord], tau: float = DEFAULT_TAU) -> float:
    _require(records)
    return sum(anls_score(r.pred_answer, r.gt.answers, tau) for r in records) / len(records)


def metric_accuracy(records: Sequence[EvalRecord], mode: str = "relaxed") -> float:
    """relaxed: ANLS >= 0.5; strict: normalized exact match with any gold answer."""
    _require(records)
    if mode == "relaxed":
        hits = sum(anls_score(r.pred_answer, r.gt.answers) >= 0.5 for r in records)
    elif mode == "strict":
        hits = sum(any(normalize_answer(r.pred_answer) == normalize_answer(a) for a in r.gt.answers)
                   for r in records)
    else:
        raise ValueError(f"unknown accuracy mode {mode!r}")
    return hits / len(records)


def evidence_prf(records: Sequence[EvalRecord], beta: float = 1.0) -> tuple[float, float, float]:
    """Micro-averaged page precision, recall and F-beta."""
    _require(records)
    hit = sum(len(r.pred_pages & r.gt.evidence_pages) for r in records)
    n_pred = sum(len(r.pred_pages) for r in records)
    n_gt = sum(len(r.gt.evidence_pages) for r in records)
    if n_pred == 0 and n_gt == 0:
        return 1.0, 1.0, 1.0
    p = hit / n_pred if n_pred else 0.0
    r = hit / n_gt if n_gt else 0.0
    return p, r, fbeta(p, r, beta)


_TOKEN = re.compile(r"\w+")


def _token_f1(pred: str, gold: str) -> float:
    p, g = _TOKEN.findall(normalize_answer(pred)), _TOKEN.findall(normalize_answer(gold))
    if not p and not g:
        return 1.0
    common = sum((Counter(p) & Counter(g)).values())
    if common == 0:
        return 0.0
    return fbeta(common / len(p), common / len(g), 1.0)


def metric_token_f1(records: Sequence[EvalRecord]) -> float:
    """Answer-level bag-of-tokens F1, best over gold answers, averaged."""
    _require(records)
    return sum(max(_token_f1(r.pred_answer, a) for a in r.gt.answers) for r in records) / len(records)


def error_breakdown(records: Iterable[EvalRecord], acc_threshold: float = 0.5) -> BreakdownTable:
    cells = Counter()
    for r in records:
        if not r.gt.evidence_pages:
            raise ValueError(f"{r.sample_id}: breakdown needs gold evidence pages")
        full = r.gt.evidence_pages <= r.pred_pages
        hit = anls_score(r.pred_answer, r.gt.answers) >= acc_threshold
        cells[(full, hit)] += 1
    return BreakdownTable(cells[(True, True)], cells[(True, False)],
                          cells[(False, True)], cells[(False, False)])


def rag_topk(scores: Mapping[int, float], k: int) -> list[int]:
    """Top-k pages by score (descending), ties by ascending page id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranked = sorted(scores, key=lambda p: (-scores[p], p))
    return ranked[:k]


@dataclass(frozen=True)
class SweepRow:
    k: int
    precision: float
    recall: float
    f1: float


def rag_sweep(samples: Sequence[tuple[Mapping[int, float], Iterable[int]]],
              ks: Sequence[int]) -> list[SweepRow]:
    """Micro retrieval P/R/F1 at each k over (scores, gold pages) pairs."""
    if not ks:
        raise ValueError("ks must be non-empty")
    golds = [(scores, set(gt)) for scores, gt in samples]
    n_gt = sum(len(gt) for _, gt in golds)
    rows = []
    for k in ks:
        hit = sum(len(set(rag_topk(s, k)) & gt) for s, gt in golds)
        n_ret = sum(min(k, len(s)) for s, _ in golds)
        p = hit / n_ret if n_ret else 0.0
        r = hit / n_gt if n_gt else 0.0
        rows.append(SweepRow(k, p, r, fbeta(p, r, 1.0)))
    return rows


def length_truncate(doc_num_pages: int, gt_pages: Iterable[int], target_len: int, seed=0) -> list[int]:
    """Keep all gold pages and fill up to ``target_len`` with seeded random other pages."""
    gt = set(gt_pages)
    if any(not 1 <= p <= doc_num_pages for p in gt):
        raise ValueError(f"evidence pages out of range 1..{doc_num_pages}")
    if not len(gt) <= target_len <= doc_num_pages:
        raise ValueError(f"target_len {target_len} infeasible for {len(gt)} evidence pages "
                         f"in a {doc_num_pages}-page document")
    pool = [p for p in range(1, doc_num_pages + 1) if p not in gt]
    return sorted(gt | set(random.Random(seed).sample(pool, target_len - len(gt))))
