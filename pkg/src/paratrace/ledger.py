"""Branch-aware global token accounting.

Every decode step charges one token per active branch against a single
shared budget, so a three-way fork burns the budget three times as fast as
sequential decode. The timeline records the branching factor seen at each
charge for audit and replay.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class LedgerEntry:
    step: int
    active_branches: int
    charged: int


class TokenLedger:
    def __init__(self, max_new_tokens: int):
        if max_new_tokens < 0:
            raise ValueError("max_new_tokens must be non-negative")
        self.max_new_tokens = max_new_tokens
        self.charged = 0
        self._timeline: list[LedgerEntry] = []

    @property
    def remaining(self) -> int:
        return self.max_new_tokens - self.charged

    @property
    def exhausted(self) -> bool:
        return self.charged >= self.max_new_tokens

    @property
    def timeline(self) -> tuple[LedgerEntry, ...]:
        return tuple(self._timeline)

    def charge(self, active_branches: int) -> int:
        """Charge one token per active branch, capped by the remaining budget.

        Returns how many tokens were accepted; when it is less than
        ``active_branches``, the caller must truncate the unfunded branches
        in this step.
        """
        if active_branches < 1:
            raise ValueError("active_branches must be >= 1")
        accepted = min(active_branches, self.remaining)
        self.charged += accepted
        self._timeline.append(LedgerEntry(len(self._timeline), active_branches, accepted))
        return accepted
