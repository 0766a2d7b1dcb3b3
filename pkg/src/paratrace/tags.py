"""Tag vocabulary and the token model for parallel-reasoning markup."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum


class Tag(str, Enum):
    GUIDELINE_OPEN = "<guideline>"
    GUIDELINE_CLOSE = "</guideline>"
    PLAN_OPEN = "<plan>"
    PLAN_CLOSE = "</plan>"
    STEP_OPEN = "<step>"
    STEP_CLOSE = "</step>"
    TAKEAWAY_OPEN = "<takeaway>"
    TAKEAWAY_CLOSE = "</takeaway>"


TAG_STRINGS = frozenset(t.value for t in Tag)
_TAG_BY_TEXT = {t.value: t for t in Tag}

# Splits a whitespace-free chunk around embedded tag strings.
_TAG_SPLIT = re.compile("(" + "|".join(re.escape(t.value) for t in Tag) + ")")


def tag_of(text: str) -> Tag | None:
    """Return the tag for ``text``, or None for content."""
    return _TAG_BY_TEXT.get(text)


def is_tag(text: str) -> bool:
    return text in TAG_STRINGS


@dataclass(frozen=True)
class Token:
    """One unit of a trace: either a reserved tag or a content word."""

    text: str
    kind: str = field(default="")
    tag_id: Tag | None = field(default=None)

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")
        tag = tag_of(self.text)
        expected_kind = "tag" if tag is not None else "content"
        if not self.kind:
            object.__setattr__(self, "kind", expected_kind)
        elif self.kind != expected_kind:
            raise ValueError(f"token {self.text!r} must have kind {expected_kind!r}")
        if self.tag_id is None:
            object.__setattr__(self, "tag_id", tag)
        elif self.tag_id is not tag:
            raise ValueError(f"token {self.text!r} carries wrong tag_id")

    @property
    def is_tag(self) -> bool:
        return self.kind == "tag"


def token_texts(tokens) -> list[str]:
    """Normalize a sequence of Token or str into plain texts."""
    out = []
    for t in tokens:
        out.append(t.text if isinstance(t, Token) else str(t))
    return out


def as_tokens(tokens) -> list[Token]:
    """Normalize a sequence of Token or str into Token objects."""
    return [t if isinstance(t, Token) else Token(str(t)) for t in tokens]
