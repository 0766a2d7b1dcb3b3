"""Advantage normalization and the policy-gradient surrogates.

Two normalizations are provided. The group-relative form standardizes each
reward against its own group's mean and population std. The parallel-aware
form keeps the group mean as the baseline but divides by the population std
of the whole batch, which stays informative when per-group variance
collapses. In both, a vanishing divisor flags the result as degenerate and
zeroes the advantages instead of dividing; this keeps the outputs exactly
invariant under shifting and positive scaling of the rewards.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .rollouts import RolloutBatch

# Divisors at or below this are treated as zero variance.
EPSILON = 1e-6


class GroupAdvantage(NamedTuple):
    advantages: tuple[float, ...]
    mean: float
    std: float
    degenerate: bool


def dapo_advantage(rewards: Sequence[float]) -> GroupAdvantage:
    """Group-relative advantages: (R - mean(group)) / std(group)."""
    if len(rewards) < 2:
        raise ValueError("group must contain at least two rewards")
    arr = np.asarray(rewards, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std())
    if std <= EPSILON:
        return GroupAdvantage((0.0,) * len(rewards), mean, std, True)
    values = tuple(float(v) for v in (arr - mean) / std)
    return GroupAdvantage(values, mean, std, False)


def dynamic_sampling_check(outcomes) -> bool:
    """True iff the number of correct responses is strictly between 0 and G.

    Accepts booleans or numeric rewards (positive means correct).
    """
    flags = [bool(o) if isinstance(o, bool) else o > 0 for o in outcomes]
    correct = sum(flags)
    return 0 < correct < len(flags)


class BatchAdvantage(NamedTuple):
    advantages: tuple[tuple[float, ...], ...]
    group_means: tuple[float, ...]
    divisor: float
    degenerate: bool


def papo_group_values(reward_groups: Sequence[Sequence[float]]) -> BatchAdvantage:
    """Group-mean baseline, batch-std divisor, over N reward groups."""
    flat = np.asarray([r for g in reward_groups for r in g], dtype=np.float64)
    if flat.size < 2:
        raise ValueError("batch must contain at least two rewards")
    group_means = tuple(float(np.mean(np.asarray(g, dtype=np.float64)))
                        for g in reward_groups)
    divisor = float(flat.std())
    if divisor <= EPSILON:
        advantages = tuple(tuple(0.0 for _ in g) for g in reward_groups)
        return BatchAdvantage(advantages, group_means, divisor, True)
    advantages = tuple(
        tuple(float((r - mean) / divisor) for r in g)
        for g, mean in zip(reward_groups, group_means))
    return BatchAdvantage(advantages, group_means, divisor, False)


class AdvantageTable(NamedTuple):
    """Per-record advantages broadcast over every token of the record."""

    record_ids: tuple[str, ...]
    group_ids: tuple[str, ...]
    advantages: tuple[float, ...]
    token_counts: tuple[int, ...]
    group_means: tuple[float, ...]
    divisor: float
    epsilon: float
    degenerate: bool

    def per_token(self, i: int) -> list[float]:
        return [self.advantages[i]] * self.token_counts[i]

    def rows(self):
        for i, rid in enumerate(self.record_ids):
            yield {"id": rid, "group": self.group_ids[i],
                   "advantage": self.advantages[i],
                   "num_tokens": self.token_counts[i],
                   "group_mean": self.group_means[i],
                   "divisor": self.divisor, "epsilon": self.epsilon}


def papo_advantage(batch: RolloutBatch) -> AdvantageTable:
    """Batch-normalized advantage table; every token of a record shares its value."""
    values = papo_group_values(batch.rewards())
    record_ids, group_ids, advantages, counts, means = [], [], [], [], []
    for g, group in enumerate(batch.groups):
        for i, record in enumerate(group):
            record_ids.append(record.record_id)
            group_ids.append(record.group_id)
            advantages.append(values.advantages[g][i])
            counts.append(len(record.tokens))
            means.append(values.group_means[g])
    return AdvantageTable(tuple(record_ids), tuple(group_ids), tuple(advantages),
                          tuple(counts), tuple(means), values.divisor,
                          EPSILON, values.degenerate)


def _broadcast(advantages, streams) -> list[list[float]]:
    out = []
    for adv, stream in zip(advantages, streams):
        if isinstance(adv, (int, float)):
            out.append([float(adv)] * len(stream))
        else:
            if len(adv) != len(stream):
                raise ValueError("per-token advantages misaligned with stream")
            out.append([float(a) for a in adv])
    return out


def dapo_surrogate(old_logprobs: Sequence[Sequence[float]],
                   new_logprobs: Sequence[Sequence[float]],
                   advantages,
                   eps_low: float = 0.2,
                   eps_high: float = 0.28) -> float:
    """Clipped-ratio surrogate loss, token-normalized across the group.

    ``advantages`` may be one scalar per record (broadcast) or per-token
    lists. Returns the loss value; ratios outside the clip band contribute
    the clipped constant, so those tokens carry no gradient.
    """
    if len(old_logprobs) != len(new_logprobs):
        raise ValueError("old/new streams differ in record count")
    adv = _broadcast(advantages, new_logprobs)
    total_tokens = sum(len(s) for s in new_logprobs)
    if total_tokens == 0:
        raise ValueError("empty token streams")
    acc = 0.0
    for old, new, a_row in zip(old_logprobs, new_logprobs, adv):
        if len(old) != len(new):
            raise ValueError("old/new streams differ in token count")
        for lo, ln, a in zip(old, new, a_row):
            ratio = float(np.exp(ln - lo))
            clipped = min(max(ratio, 1.0 - eps_low), 1.0 + eps_high)
            acc += min(ratio * a, clipped * a)
    return -acc / total_tokens


class PapoSurrogate(NamedTuple):
    loss: float
    sensitivities: tuple[tuple[float, ...], ...]


def papo_surrogate(logprobs: Sequence[Sequence[float]], advantages) -> PapoSurrogate:
    """Strict on-policy surrogate and its gradient contract.

    The value is the negative token-averaged advantage (the policy ratio is
    identically one in value). The gradient contract gives the sensitivity
    of the loss to each token's log-probability: -advantage / total_tokens,
    with no clipping and no importance reweighting, so every token with a
    nonzero advantage receives gradient, structural tags included.
    """
    adv = _broadcast(advantages, logprobs)
    total_tokens = sum(len(s) for s in logprobs)
    if total_tokens == 0:
        raise ValueError("empty token streams")
    loss = -sum(a for row in adv for a in row) / total_tokens
    grads = tuple(tuple(-a / total_tokens for a in row) for row in adv)
    return PapoSurrogate(loss, grads)


def papo_surrogate_frozen(logprobs: Sequence[Sequence[float]],
                          ref_logprobs: Sequence[Sequence[float]],
                          advantages) -> float:
    """The surrogate as a differentiable surface: reference held stop-gradient.

    Evaluating at ``logprobs == ref_logprobs`` recovers the on-policy value;
    finite differences of this function against the frozen reference measure
    the gradient contract of :func:`papo_surrogate`.
    """
    adv = _broadcast(advantages, logprobs)
    total_tokens = sum(len(s) for s in logprobs)
    acc = 0.0
    for lp_row, ref_row, a_row in zip(logprobs, ref_logprobs, adv):
        for lp, ref, a in zip(lp_row, ref_row, a_row):
            acc += a * float(np.exp(lp - ref))
    return -acc / total_tokens
