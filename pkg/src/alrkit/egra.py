"""Evidence-guided per-page visual-token budgets and sequence-length accounting.

Evidence pages always keep ``hi_budget``. Among the remaining pages exactly
``round(downsample_fraction * n)`` (half-to-even) are dropped to ``lo_budget``,
picked by a seeded shuffle so a given (document, seed) always gets the same plan.
"""
from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass
from typing import Iterable


@dataclass(frozen=True)
class EgraConfig:
    hi_budget: int = 1024
    lo_budget: int = 256
    downsample_fraction: float = 0.7
    page_id_overhead: int = 3
    question_tokens: int = 0
    px_per_token: int = 56

    def __post_init__(self):
        if not self.hi_budget > self.lo_budget > 0:
            raise ValueError(f"need hi_budget > lo_budget > 0, got {self.hi_budget}, {self.lo_budget}")
        if not 0.0 <= self.downsample_fraction <= 1.0:
            raise ValueError(f"downsample_fraction must be in [0, 1], got {self.downsample_fraction}")
        if self.page_id_overhead < 0 or self.question_tokens < 0:
            raise ValueError("token overheads must be non-negative")
        if self.px_per_token <= 0:
            raise ValueError("px_per_token must be positive")


@dataclass(frozen=True)
class ResolutionPlan:
    budgets: tuple[int, ...]
    evidence_pages: frozenset[int]
    seed: int
    total_visual_tokens: int
    total_sequence_tokens: int

    @property
    def num_pages(self) -> int:
        return len(self.budgets)

    def to_dict(self) -> dict:
        return {
            "budgets": list(self.budgets),
            "evidence_pages": sorted(self.evidence_pages),
            "seed": self.seed,
            "total_visual_tokens": self.total_visual_tokens,
            "total_sequence_tokens": self.total_sequence_tokens,
        }


def allocate(num_pages: int, evidence_pages: Iterable[int], cfg: EgraConfig = EgraConfig(),
             seed: int = 0) -> ResolutionPlan:
    if num_pages < 1:
        raise ValueError(f"num_pages must be >= 1, got {num_pages}")
    if seed < 0:
        raise ValueError("seed must be unsigned")
    evidence = frozenset(evidence_pages)
    bad = sorted(p for p in evidence if not 1 <= p <= num_pages)
    if bad:
        raise ValueError(f"evidence pages out of range 1..{num_pages}: {bad}")

    others = [p for p in range(1, num_pages + 1) if p not in evidence]
    k = round(cfg.downsample_fraction * len(others))
    random.Random(seed).shuffle(others)
    low = set(others[:k])

    budgets = tuple(cfg.lo_budget if p in low else cfg.hi_budget for p in range(1, num_pages + 1))
    visual = sum(budgets)
    seq = cfg.question_tokens + num_pages * cfg.page_id_overhead + visual
    return ResolutionPlan(budgets, evidence, seed, visual, seq)


def sequence_length(plan: ResolutionPlan, cfg: EgraConfig = EgraConfig()) -> int:
    """Token count of question + (page identifier + page tokens) for every page."""
    return cfg.question_tokens + sum(cfg.page_id_overhead + b for b in plan.budgets)


def inference_budget(width_px: int, height_px: int, px_per_token: int = 56) -> int:
    if min(width_px, height_px, px_per_token) <= 0:
        raise ValueError("dimensions and cell side must be positive")
    return math.ceil(width_px / px_per_token) * math.ceil(height_px / px_per_token)


def config_from_overrides(overrides: dict, base: EgraConfig = EgraConfig()) -> EgraConfig:
    fields = asdict(base)
    unknown = set(overrides) - set(fields)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    fields.update(overrides)
    return EgraConfig(**fields)
