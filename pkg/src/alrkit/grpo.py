"""Group-relative advantages and the zero-advantage group filter."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .rewards import (DEFAULT_BETA, DEFAULT_TAU, GroundTruth, RewardBreakdown,
                      RewardWeights, total_reward)

DEFAULT_EPSILON = 1e-8
DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class RolloutGroup:
    question_id: str
    rewards: tuple[float, ...]
    advantages: Optional[tuple[float, ...]] = None
    kept: Optional[bool] = None
    breakdowns: tuple[RewardBreakdown, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "rewards": list(self.rewards),
            "advantages": None if self.advantages is None else list(self.advantages),
            "kept": self.kept,
            "breakdowns": [b.to_dict() for b in self.breakdowns],
        }


def group_advantages(rewards: Sequence[float], epsilon: float = DEFAULT_EPSILON) -> list[float]:
    """Standardize rewards within a group using the population std."""
    if len(rewards) < 2:
        raise ValueError(f"a group needs at least 2 rewards, got {len(rewards)}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n = len(rewards)
    mean = math.fsum(rewards) / n
    std = math.sqrt(math.fsum((r - mean) ** 2 for r in rewards) / n)
    return [(r - mean) / (std + epsilon) for r in rewards]


def zero_advantage_filter(group: RolloutGroup, tol: float = DEFAULT_TOL) -> RolloutGroup:
    """Drop groups whose reward spread is at most ``tol``; dropped groups get zero advantages."""
    spread = max(group.rewards) - min(group.rewards)
    if spread <= tol:
        return replace(group, kept=False, advantages=tuple(0.0 for _ in group.rewards))
    return replace(group, kept=True)


def score_group(raws: Sequence[str], gt: GroundTruth, w: RewardWeights = RewardWeights(),
                beta: float = DEFAULT_BETA, tau: float = DEFAULT_TAU,
                epsilon: float = DEFAULT_EPSILON, tol: float = DEFAULT_TOL,
                question_id: str = "") -> RolloutGroup:
    if len(raws) < 2:
        raise ValueError(f"a group needs at least 2 rollouts, got {len(raws)}")
    breakdowns = tuple(total_reward(raw, gt, w, beta, tau) for raw in raws)
    rewards = tuple(b.total for b in breakdowns)
    group = RolloutGroup(question_id, rewards, tuple(group_advantages(rewards, epsilon)),
                         None, breakdowns)
    return zero_advantage_filter(group, tol)
