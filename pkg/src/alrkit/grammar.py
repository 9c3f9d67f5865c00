"""Parser and renderer for the Analysis/Localization/Reasoning answer template.

A well-formed response looks like::

    <think>
    \\boxed{Question Analysis}
    ...
    \\boxed{Evidence Localization}
    ...
    \\boxed{Reasoning Process}
    ...
    </think>
    <answer>
    {"evidence_pages": [5], "answer": "Not answerable"}
    </answer>

``parse_alr`` never raises; every defect becomes a diagnostic on a malformed
``ParseOutcome``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

HEADINGS = ("Question Analysis", "Evidence Localization", "Reasoning Process")
SECTION_FIELDS = ("analysis", "localization", "reasoning")
ANSWER_KEYS = ("evidence_pages", "answer")

THINK_OPEN, THINK_CLOSE = "<think>", "</think>"
ANSWER_OPEN, ANSWER_CLOSE = "<answer>", "</answer>"
_TAGS = (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE)
_BOXED = re.compile(r"\\boxed\{([^{}]*)\}")
_RESERVED = _TAGS + ("\\boxed{",)


@dataclass(frozen=True)
class AlrResponse:
    analysis: str
    localization: str
    reasoning: str
    evidence_pages: tuple[int, ...]
    final_answer: str

    def __post_init__(self):
        pages = tuple(self.evidence_pages)
        object.__setattr__(self, "evidence_pages", pages)
        problems = page_problems(pages)
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self) -> dict:
        return {
            "analysis": self.analysis,
            "localization": self.localization,
            "reasoning": self.reasoning,
            "evidence_pages": list(self.evidence_pages),
            "final_answer": self.final_answer,
        }


@dataclass(frozen=True)
class Diagnostic:
    offset: int
    message: str

    def __str__(self):
        return f"at {self.offset}: {self.message}"


@dataclass(frozen=True)
class ParseOutcome:
    status: str
    response: Optional[AlrResponse] = None
    diagnostics: tuple[Diagnostic, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "response": self.response.to_dict() if self.response else None,
            "diagnostics": [{"offset": d.offset, "message": d.message} for d in self.diagnostics],
        }


def page_problems(pages) -> list[str]:
    """Return invariant violations for an evidence page list (empty if valid)."""
    problems = []
    seen = set()
    for p in pages:
        if isinstance(p, bool) or not isinstance(p, int):
            problems.append(f"non-integer page {p!r}")
            continue
        if p < 1:
            problems.append(f"page < 1: {p}")
        if p in seen:
            problems.append(f"duplicate page {p}")
        seen.add(p)
    return problems


class _Malformed(Exception):
    def __init__(self, offset: int, message: str):
        super().__init__(message)
        self.diagnostic = Diagnostic(offset, message)


def _find_single(raw: str, tag: str) -> int:
    first = raw.find(tag)
    if first < 0:
        raise _Malformed(len(raw), f"missing {tag} tag")
    second = raw.find(tag, first + len(tag))
    if second >= 0:
        raise _Malformed(second, f"duplicate {tag} tag")
    return first


def _parse_think(raw: str, start: int, end: int) -> dict[str, str]:
    body = raw[start:end]
    matches = list(_BOXED.finditer(body))
    if body.count("\\boxed{") != len(matches):
        stray = next(i for i in range(len(body)) if body.startswith("\\boxed{", i)
                     and not any(m.start() == i for m in matches))
        raise _Malformed(start + stray, "unterminated or nested \\boxed{} heading")
    titles = [m.group(1).strip() for m in matches]
    for m, title in zip(matches, titles):
        if title not in HEADINGS:
            raise _Malformed(start + m.start(), f"unexpected heading \\boxed{{{title}}}")
    for title in HEADINGS:
        if titles.count(title) > 1:
            second = [m for m, t in zip(matches, titles) if t == title][1]
            raise _Malformed(start + second.start(), f"duplicate heading \\boxed{{{title}}}")
    for title in HEADINGS:
        if title not in titles:
            raise _Malformed(start, f"missing heading \\boxed{{{title}}}")
    if tuple(titles) != HEADINGS:
        bad = next(i for i, t in enumerate(titles) if t != HEADINGS[i])
        raise _Malformed(start + matches[bad].start(),
                         f"heading out of order: \\boxed{{{titles[bad]}}}")
    lead = body[:matches[0].start()]
    if lead.strip():
        raise _Malformed(start, "text before first heading")
    sections = {}
    for i, m in enumerate(matches):
        stop = matches[i + 1].start() if i + 1 < len(matches) else len(body)
        sections[SECTION_FIELDS[i]] = body[m.end():stop].strip()
    return sections


def _reject_duplicate_keys(pairs):
    keys = [k for k, _ in pairs]
    dups = sorted({k for k in keys if keys.count(k) > 1})
    if dups:
        raise ValueError(f"duplicate JSON key {dups[0]!r}")
    return dict(pairs)


def _parse_answer(raw: str, start: int, end: int) -> tuple[tuple[int, ...], str]:
    body = raw[start:end]
    stripped = body.lstrip()
    offset = start + (len(body) - len(stripped))
    decoder = json.JSONDecoder(object_pairs_hook=_reject_duplicate_keys)
    try:
        obj, used = decoder.raw_decode(stripped)
    except json.JSONDecodeError as exc:
        raise _Malformed(offset + exc.pos, f"bad JSON: {exc.msg}") from None
    except ValueError as exc:
        raise _Malformed(offset, f"bad JSON: {exc}") from None
    if stripped[used:].strip():
        raise _Malformed(offset + used, "extra content after JSON object")
    if not isinstance(obj, dict):
        raise _Malformed(offset, "answer block is not a JSON object")
    if set(obj) != set(ANSWER_KEYS):
        raise _Malformed(offset, f"wrong key set {sorted(obj)}; expected {list(ANSWER_KEYS)}")
    pages, answer = obj["evidence_pages"], obj["answer"]
    if not isinstance(pages, list):
        raise _Malformed(offset, "evidence_pages is not an array")
    problems = page_problems(pages)
    if problems:
        raise _Malformed(offset, problems[0])
    if not isinstance(answer, str):
        raise _Malformed(offset, "answer is not a string")
    return tuple(pages), answer.strip()


def _first_text(raw: str, start: int) -> int:
    return start + (len(raw) - start - len(raw[start:].lstrip()))


def _parse(raw: str, strict: bool) -> AlrResponse:
    positions = {tag: _find_single(raw, tag) for tag in _TAGS}
    order = sorted(_TAGS, key=positions.get)
    if tuple(order) != _TAGS:
        tag = next(t for t, want in zip(order, _TAGS) if t != want)
        raise _Malformed(positions[tag], f"tag out of order: {tag}")
    t_open, t_close = positions[THINK_OPEN], positions[THINK_CLOSE]
    a_open, a_close = positions[ANSWER_OPEN], positions[ANSWER_CLOSE]
    if strict and raw[:t_open].strip():
        raise _Malformed(_first_text(raw, 0), f"text before {THINK_OPEN}")
    between = raw[t_close + len(THINK_CLOSE):a_open]
    if between.strip():
        raise _Malformed(_first_text(raw, t_close + len(THINK_CLOSE)), f"text between {THINK_CLOSE} and {ANSWER_OPEN}")
    tail = a_close + len(ANSWER_CLOSE)
    if strict and raw[tail:].strip():
        raise _Malformed(_first_text(raw, tail), f"trailing text after {ANSWER_CLOSE}")
    sections = _parse_think(raw, t_open + len(THINK_OPEN), t_close)
    pages, answer = _parse_answer(raw, a_open + len(ANSWER_OPEN), a_close)
    return AlrResponse(evidence_pages=pages, final_answer=answer, **sections)


def parse_alr(raw: str, strict: bool = True) -> ParseOutcome:
    """Parse raw model output into an ``AlrResponse``.

    With ``strict=False`` stray text before ``<think>`` and after
    ``</answer>`` is ignored instead of being reported.
    """
    if not isinstance(raw, str):
        return ParseOutcome("malformed", None, (Diagnostic(0, "input is not text"),))
    try:
        response = _parse(raw, strict)
    except _Malformed as exc:
        return ParseOutcome("malformed", None, (exc.diagnostic,))
    return ParseOutcome("ok", response, ())


def render_alr(r: AlrResponse) -> str:
    """Emit the canonical template text for ``r`` (pages ascending)."""
    problems = page_problems(r.evidence_pages)
    for name in SECTION_FIELDS + ("final_answer",):
        text = getattr(r, name)
        if not isinstance(text, str):
            problems.append(f"{name} is not text")
        elif name != "final_answer" and any(tok in text for tok in _RESERVED):
            problems.append(f"{name} contains a reserved tag or heading")
    if problems:
        raise ValueError("; ".join(problems))
    lines = [THINK_OPEN]
    for title, name in zip(HEADINGS, SECTION_FIELDS):
        lines.append(f"\\boxed{{{title}}}")
        body = getattr(r, name)
        if body:
            lines.append(body)
    lines.append(THINK_CLOSE)
    lines.append(ANSWER_OPEN)
    payload = json.dumps({"evidence_pages": sorted(r.evidence_pages), "answer": r.final_answer},
                         ensure_ascii=False)
    for tag in _TAGS:
        # keep tag text inside the answer string from being read as structure
        payload = payload.replace(tag, "\\u003c" + tag[1:])
    lines.append(payload)
    lines.append(ANSWER_CLOSE)
    return "\n".join(lines)


# Vanilla chain-of-thought output: <think>free text</think><answer>plain string</answer>.

def parse_vanilla(raw: str, strict: bool = True) -> ParseOutcome:
    """Parse free-form reasoning output; the think text lands in ``reasoning``."""
    if not isinstance(raw, str):
        return ParseOutcome("malformed", None, (Diagnostic(0, "input is not text"),))
    try:
        positions = {tag: _find_single(raw, tag) for tag in _TAGS}
        order = sorted(_TAGS, key=positions.get)
        if tuple(order) != _TAGS:
            tag = next(t for t, want in zip(order, _TAGS) if t != want)
            raise _Malformed(positions[tag], f"tag out of order: {tag}")
        t_open, t_close = positions[THINK_OPEN], positions[THINK_CLOSE]
        a_open, a_close = positions[ANSWER_OPEN], positions[ANSWER_CLOSE]
        if strict and raw[:t_open].strip():
            raise _Malformed(0, f"text before {THINK_OPEN}")
        if raw[t_close + len(THINK_CLOSE):a_open].strip():
            raise _Malformed(t_close, f"text between {THINK_CLOSE} and {ANSWER_OPEN}")
        tail = a_close + len(ANSWER_CLOSE)
        if strict and raw[tail:].strip():
            raise _Malformed(tail, f"trailing text after {ANSWER_CLOSE}")
    except _Malformed as exc:
        return ParseOutcome("malformed", None, (exc.diagnostic,))
    response = AlrResponse(
        analysis="",
        localization="",
        reasoning=raw[t_open + len(THINK_OPEN):t_close].strip(),
        evidence_pages=(),
        final_answer=raw[a_open + len(ANSWER_OPEN):a_close].strip(),
    )
    return ParseOutcome("ok", response, ())
