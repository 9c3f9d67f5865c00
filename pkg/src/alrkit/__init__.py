"""Parsing, reward, allocation, distillation and evaluation tools for evidence-citing document QA."""

__version__ = "0.1.0"

from .egra import EgraConfig, ResolutionPlan, allocate, inference_budget, sequence_length
from .grammar import AlrResponse, Diagnostic, ParseOutcome, parse_alr, render_alr
from .grpo import RolloutGroup, group_advantages, score_group, zero_advantage_filter
from .rewards import (GroundTruth, RewardBreakdown, RewardWeights, anls_score, evidence_reward,
                      format_reward, levenshtein, normalize_answer, total_reward)
