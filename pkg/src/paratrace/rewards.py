"""Reward rules and the rejection-sampling filter.

Format-valid outputs score 0.0 on the format channel and then earn +1/-1 on
answer accuracy; format-broken outputs earn a penalty in (0, -2] that scales
with how many of the six structural categories failed, and accuracy is not
granted. The acceptance filter keeps a trajectory only when it is both
answer-correct and format-valid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .validation import CATEGORIES_TOTAL, ValidationReport, validate_structure


def exact_boxed_match(pred: str | None, gold: str) -> bool:
    """Default answer comparator: exact string equality on the boxed payload."""
    return pred is not None and pred == gold


Comparator = Callable[[str | None, str], bool]


@dataclass(frozen=True)
class RewardConfig:
    categories_total: int = CATEGORIES_TOTAL
    penalty_scale: float = 2.0
    accuracy_correct: float = 1.0
    accuracy_incorrect: float = -1.0
    comparator: Comparator = field(default=exact_boxed_match)


DEFAULT_CONFIG = RewardConfig()


def format_reward(report: ValidationReport, config: RewardConfig = DEFAULT_CONFIG) -> float:
    """0.0 when the report is clean, else a penalty in (0, -penalty_scale]."""
    if report.ok:
        return 0.0
    return -config.penalty_scale * report.categories_failed / config.categories_total


def stage1_reward(report: ValidationReport, pred: str | None, gold: str,
                  config: RewardConfig = DEFAULT_CONFIG) -> float:
    """Format penalty when the check fails; otherwise accuracy on top of 0.0."""
    if not report.ok:
        return format_reward(report, config)
    if config.comparator(pred, gold):
        return config.accuracy_correct
    return config.accuracy_incorrect


def stage3_reward(pred: str | None, gold: str,
                  config: RewardConfig = DEFAULT_CONFIG) -> float:
    """Accuracy-only reward for already schema-filtered trajectories."""
    return config.accuracy_correct if config.comparator(pred, gold) \
        else config.accuracy_incorrect


def accept_filter(tokens, pred: str | None, gold: str,
                  config: RewardConfig = DEFAULT_CONFIG) -> bool:
    """Keep a trajectory iff it is answer-correct and format-valid."""
    return bool(config.comparator(pred, gold)) and validate_structure(tokens).ok
