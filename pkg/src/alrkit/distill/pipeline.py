"""Minimal-context teacher distillation with exact-match then judge verification."""
from __future__ import annotations

import hashlib
import json
import random
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib.resources import files
from typing import Callable, Iterable, Iterator, Optional

from ..grammar import AlrResponse, ParseOutcome, parse_alr, parse_vanilla
from ..rewards import GroundTruth, anls_score, normalize_answer
from .clients import ChatClient, TransportError, call_with_retries

PROMPT_KINDS = ("alr", "vanilla")
VERDICTS = ("em_pass", "judge_pass", "judge_corrected", "rejected")
JUDGE_ERROR = "Error"
DEFAULT_DISTRACTORS = 2


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    try:
        return (files("alrkit.distill") / "templates" / f"{name}.txt").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"missing prompt template asset {name!r}") from None


def template_sha256(name: str) -> str:
    return hashlib.sha256(load_template(name).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class DistillTask:
    sample_id: str
    question: str
    doc_id: str
    doc_num_pages: int
    gt: GroundTruth
    context_pages: tuple[tuple[int, str], ...]
    prompt_kind: str = "alr"

    def __post_init__(self):
        ids = [p for p, _ in self.context_pages]
        if self.prompt_kind not in PROMPT_KINDS:
            raise ValueError(f"prompt_kind must be one of {PROMPT_KINDS}")
        if len(set(ids)) != len(ids):
            raise ValueError(f"{self.sample_id}: duplicate context page ids")
        if any(not 1 <= p <= self.doc_num_pages for p in ids):
            raise ValueError(f"{self.sample_id}: context page out of range 1..{self.doc_num_pages}")
        if not self.gt.evidence_pages <= set(ids):
            raise ValueError(f"{self.sample_id}: context is missing evidence pages")

    @property
    def page_ids(self) -> list[int]:
        return [p for p, _ in self.context_pages]

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "question": self.question,
            "doc_id": self.doc_id,
            "doc_num_pages": self.doc_num_pages,
            "answers": list(self.gt.answers),
            "evidence_pages": sorted(self.gt.evidence_pages),
            "context_pages": [{"page_id": p, "image_path": path} for p, path in self.context_pages],
            "prompt_kind": self.prompt_kind,
        }


@dataclass
class DistillRecord:
    task: DistillTask
    teacher_raw: str = ""
    parsed: Optional[ParseOutcome] = None
    verdict: str = "rejected"
    final_label: Optional[tuple[str, tuple[int, ...]]] = None
    judge_output: Optional[str] = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.task.sample_id,
            "task": self.task.to_dict(),
            "teacher_raw": self.teacher_raw,
            "parsed": self.parsed.to_dict() if self.parsed else None,
            "verdict": self.verdict,
            "final_label": None if self.final_label is None else
            {"answer": self.final_label[0], "evidence_pages": list(self.final_label[1])},
            "judge_output": self.judge_output,
            "notes": self.notes,
        }


@dataclass
class DistillSummary:
    counts: dict[str, int]
    transport_failures: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def accepted(self) -> int:
        return self.total - self.counts["rejected"]

    @property
    def pass_rate(self) -> float:
        return self.accepted / self.total if self.total else 0.0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return tuple(self.counts[v] for v in VERDICTS)

    def to_dict(self) -> dict:
        return {**self.counts, "total": self.total, "pass_rate": self.pass_rate,
                "transport_failures": self.transport_failures}


def build_minimal_context(doc_num_pages: int, gt_pages: Iterable[int],
                          n_distractors: int = DEFAULT_DISTRACTORS, seed=0) -> list[int]:
    """Evidence pages plus up to ``n_distractors`` seeded same-document pages, ascending."""
    gt = set(gt_pages)
    if any(not 1 <= p <= doc_num_pages for p in gt):
        raise ValueError(f"evidence pages {sorted(gt)} out of range 1..{doc_num_pages}")
    if n_distractors < 0:
        raise ValueError("n_distractors must be >= 0")
    pool = [p for p in range(1, doc_num_pages + 1) if p not in gt]
    picked = random.Random(seed).sample(pool, min(n_distractors, len(pool)))
    return sorted(gt | set(picked))


def task_from_json(d: dict, n_distractors: int = DEFAULT_DISTRACTORS, seed: int = 0,
                   prompt_kind: str = "alr") -> DistillTask:
    """Build a task from a tasks.jsonl row; the distractor draw is seeded per sample."""
    n = int(d["doc_num_pages"])
    gt = GroundTruth(tuple(d["answers"]), frozenset(d.get("evidence_pages", ())))
    paths = list(d.get("page_paths") or [])
    if paths and len(paths) < n:
        raise ValueError(f"{d['sample_id']}: page_paths has {len(paths)} entries for {n} pages")
    pages = build_minimal_context(n, gt.evidence_pages, n_distractors, f"{seed}:{d['sample_id']}")
    context = tuple((p, paths[p - 1] if paths else "") for p in pages)
    return DistillTask(str(d["sample_id"]), d["question"], str(d.get("doc_id", "")), n, gt,
                       context, d.get("prompt_kind", prompt_kind))


def make_teacher_request(task: DistillTask) -> dict:
    instruction = load_template(task.prompt_kind)
    parts: list[dict] = []
    for page_id, path in task.context_pages:
        parts.append({"type": "text", "text": f"Page {page_id}"})
        parts.append({"type": "image_url", "image_url": {"url": path}})
    page_list = ", ".join(str(p) for p in task.page_ids)
    parts.append({"type": "text",
                  "text": f"Question: {task.question}\nDocument Page Number: [{page_list}]"})
    return {
        "prompt_kind": task.prompt_kind,
        "instruction": instruction,
        "messages": [{"role": "system", "content": instruction},
                     {"role": "user", "content": parts}],
    }


def em_verify(parsed: AlrResponse, gt: GroundTruth, check_pages: bool = True) -> bool:
    answer = normalize_answer(parsed.final_answer)
    if not any(answer == normalize_answer(a) for a in gt.answers):
        return False
    return not check_pages or set(parsed.evidence_pages) == set(gt.evidence_pages)


def make_judge_messages(question: str, response_answer: str, gt_answer: str) -> list[dict]:
    filled = (f"{load_template('judge')}\n\nQuestion:\n{question}\nResponse:\n{response_answer}\n"
              f"Answer:\n{gt_answer}\nOutput:\n")
    return [{"role": "user", "content": filled}]


def parse_judge_output(text: str) -> Optional[str]:
    """First non-empty line, minus an ``output:`` prefix; ``None`` means Error/empty."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if lines and lines[0].lower().startswith("output:"):
        head = lines[0][len("output:"):].strip()
        lines = ([head] if head else []) + lines[1:]
    if not lines or lines[0] == JUDGE_ERROR:
        return None
    return lines[0]


def judge_verify(question: str, response_answer: str, gt_answer: str, judge: ChatClient,
                 attempts: int = 3, base_delay: float = 1.0,
                 sleep: Callable[[float], None] | None = None) -> tuple[Optional[str], str]:
    """Return (corrected label or None for Error, raw judge output). Raises TransportError."""
    kwargs = {"sleep": sleep} if sleep else {}
    raw = call_with_retries(judge, make_judge_messages(question, response_answer, gt_answer),
                            attempts, base_delay, **kwargs)
    return parse_judge_output(raw), raw


def _closest_answer(pred: str, answers: tuple[str, ...]) -> str:
    scores = [anls_score(pred, [a]) for a in answers]
    return answers[scores.index(max(scores))]


@dataclass
class Distiller:
    teacher: ChatClient
    judge: ChatClient
    attempts: int = 3
    base_delay: float = 1.0
    sleep: Optional[Callable[[float], None]] = None

    def _call(self, client: ChatClient, messages: list[dict]) -> str:
        kwargs = {"sleep": self.sleep} if self.sleep else {}
        return call_with_retries(client, messages, self.attempts, self.base_delay, **kwargs)

    def process(self, task: DistillTask) -> DistillRecord:
        record = DistillRecord(task)
        try:
            record.teacher_raw = self._call(self.teacher, make_teacher_request(task)["messages"])
        except TransportError as exc:
            record.notes.append(f"transport: teacher: {exc}")
            return record
        parse = parse_alr if task.prompt_kind == "alr" else parse_vanilla
        record.parsed = parse(record.teacher_raw)
        if not record.parsed.ok:
            record.notes.extend(f"parse: {d}" for d in record.parsed.diagnostics)
            return record
        resp = record.parsed.response
        check_pages = task.prompt_kind == "alr"
        pages = tuple(sorted(resp.evidence_pages))
        if em_verify(resp, task.gt, check_pages):
            record.verdict = "em_pass"
            record.final_label = (resp.final_answer, pages)
            return record
        if check_pages and set(pages) != task.gt.evidence_pages:
            record.notes.append(f"evidence pages {list(pages)} != {sorted(task.gt.evidence_pages)}")
            return record
        gt_answer = _closest_answer(resp.final_answer, task.gt.answers)
        try:
            label, raw = judge_verify(task.question, resp.final_answer, gt_answer, self.judge,
                                      self.attempts, self.base_delay, self.sleep)
        except TransportError as exc:
            record.notes.append(f"transport: judge: {exc}")
            return record
        record.judge_output = raw
        if label is None:
            record.notes.append("judge returned Error")
            return record
        same = normalize_answer(label) == normalize_answer(resp.final_answer)
        record.verdict = "judge_pass" if same else "judge_corrected"
        record.final_label = (label, pages)
        return record

    def safe_process(self, task: DistillTask) -> DistillRecord:
        try:
            return self.process(task)
        except Exception as exc:  # a single bad task must not abort the stream
            return DistillRecord(task, notes=[f"error: {type(exc).__name__}: {exc}"])


def _ordered_map(fn, items: Iterable, workers: int) -> Iterator:
    with ThreadPoolExecutor(max_workers=workers) as pool:
        window: deque = deque()
        for item in items:
            window.append(pool.submit(fn, item))
            if len(window) >= workers:
                yield window.popleft().result()
        while window:
            yield window.popleft().result()


def record_line(record: DistillRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False)


def run_pipeline(tasks: Iterable[DistillTask], teacher: ChatClient, judge: ChatClient,
                 out, concurrency: int = 8, attempts: int = 3, base_delay: float = 1.0,
                 sleep: Optional[Callable[[float], None]] = None) -> DistillSummary:
    """Distill every task; ``out`` is a text stream (JSONL) or a callable taking each record.

    Records are emitted in input order by this thread only.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    distiller = Distiller(teacher, judge, attempts, base_delay, sleep)
    summary = DistillSummary({v: 0 for v in VERDICTS})
    emit = out if callable(out) else (lambda r: out.write(record_line(r) + "\n"))
    for record in _ordered_map(distiller.safe_process, tasks, concurrency):
        summary.counts[record.verdict] += 1
        if any(n.startswith("transport:") for n in record.notes):
            summary.transport_failures += 1
        emit(record)
    return summary
