"""Parallel attention-mask and position-id construction.

Both builders run a single streaming pass over the tag stream. Sibling step
regions of a block are mutually blocked in the mask, and their position ids
all restart one past the guideline close, so a document's decode depth is
``max(position) + 1`` instead of its token count.

Step regions include their opening and closing step tags: the close tag
occupies a position inside the step's extent, so it must be isolated along
with the content for positions and visibility to stay consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .document import Span, parse_document
from .errors import ParseError, StructureError
from .tags import Tag, tag_of, token_texts
from .validation import validate_structure

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class Rect:
    """A blocked rectangle: ``rows`` cannot attend to ``cols``."""

    rows: Span
    cols: Span


class AttentionMask:
    """Sub-causal visibility over ``length`` tokens.

    Stored as the causal mask minus a coordinate list of blocked rectangles;
    a dense boolean view (True = visible) is materialized lazily for
    sequences up to ``DENSE_LIMIT``.
    """

    def __init__(self, length: int, blocked: tuple[Rect, ...] = (),
                 dense: np.ndarray | None = None):
        self.length = length
        self.blocked = tuple(blocked)
        self._dense = dense

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "AttentionMask":
        dense = np.asarray(dense, dtype=bool)
        return cls(dense.shape[0], (), dense)

    def is_visible(self, i: int, j: int) -> bool:
        if j > i:
            return False
        if self._dense is not None:
            return bool(self._dense[i, j])
        return not any(i in r.rows and j in r.cols for r in self.blocked)

    def dense(self) -> np.ndarray:
        """Dense boolean view, True where attention is allowed."""
        if self._dense is None:
            if self.length > DENSE_LIMIT:
                raise ValueError(
                    f"dense mask unavailable above {DENSE_LIMIT} tokens; "
                    "use the rectangle list")
            m = np.tril(np.ones((self.length, self.length), dtype=bool))
            for r in self.blocked:
                m[r.rows.start:r.rows.end, r.cols.start:r.cols.end] = False
            self._dense = m
        return self._dense

    def additive(self) -> np.ndarray:
        """Float view with 0 where visible and -inf where blocked."""
        out = np.where(self.dense(), 0.0, -np.inf)
        return out

    def to_coords_dict(self) -> dict:
        return {
            "v": 1,
            "length": self.length,
            "blocked": [
                {"row_span": [r.rows.start, r.rows.end],
                 "col_span": [r.cols.start, r.cols.end]}
                for r in self.blocked
            ],
        }

    def to_dense_bytes(self) -> bytes:
        """Row-major bitset, little-endian, LSB-first within each byte."""
        flat = self.dense().astype(np.uint8).ravel()
        return np.packbits(flat, bitorder="little").tobytes()

    def same_visibility(self, other: "AttentionMask") -> bool:
        return self.length == other.length and np.array_equal(self.dense(), other.dense())


def _require_balanced(texts: list[str]) -> None:
    report = validate_structure(texts)
    for v in report.violations:
        if v.category == 1:
            raise StructureError(f"tag structure broken: {v.message}", v.index)


class _TopoFrame:
    __slots__ = ("steps", "open_step", "p_end", "l_max")

    def __init__(self):
        self.steps: list[Span] = []
        self.open_step: int | None = None
        self.p_end = -1
        self.l_max = 0


def build_attention_mask(tokens) -> AttentionMask:
    """Streaming mask builder.

    Starts from the causal mask and, when a block joins at its takeaway,
    blocks every ordered pair of distinct sibling step regions. Raises
    :class:`StructureError` if the tag structure is unbalanced.
    """
    texts = token_texts(tokens)
    _require_balanced(texts)

    stack: list[_TopoFrame] = []
    blocked: list[Rect] = []
    for i, text in enumerate(texts):
        tag = tag_of(text)
        if tag is Tag.GUIDELINE_OPEN:
            stack.append(_TopoFrame())
        elif tag is Tag.STEP_OPEN:
            stack[-1].open_step = i
        elif tag is Tag.STEP_CLOSE:
            frame = stack[-1]
            frame.steps.append(Span(frame.open_step, i + 1))
            frame.open_step = None
        elif tag is Tag.TAKEAWAY_OPEN:
            frame = stack.pop()
            for j, a in enumerate(frame.steps):
                for k, b in enumerate(frame.steps):
                    if j != k:
                        blocked.append(Rect(rows=a, cols=b))
    return AttentionMask(len(texts), tuple(blocked))


def mask_from_spans_oracle(tokens) -> AttentionMask:
    """Independent mask construction from the parsed block tree.

    Enumerates step spans via :func:`parse_document` and zeroes rectangles
    directly in a dense array, bypassing the streaming stack entirely.
    """
    texts = token_texts(tokens)
    try:
        doc = parse_document(texts)
    except (ParseError, ValueError) as exc:
        index = getattr(exc, "index", None)
        raise StructureError(f"tag structure broken: {exc}", index) from exc
    n = len(texts)
    dense = np.tril(np.ones((n, n), dtype=bool))
    for block in doc.iter_blocks():
        for a in block.steps:
            for b in block.steps:
                if a is not b:
                    dense[a.start:a.end, b.start:b.end] = False
                    dense[b.start:b.end, a.start:a.end] = False
    return AttentionMask.from_dense(dense)


def build_position_ids(tokens) -> list[int]:
    """Streaming position-id builder.

    Positions start sequential. Each step open resets the running position
    to one past the guideline close; each step close records the longest
    step; the takeaway realigns the suffix so the join token sits one past
    the longest step. Raises :class:`StructureError` on unbalanced tags.
    """
    texts = token_texts(tokens)
    _require_balanced(texts)

    n = len(texts)
    pos = np.arange(n, dtype=np.int64)
    stack: list[_TopoFrame] = []
    for i, text in enumerate(texts):
        tag = tag_of(text)
        if tag is None:
            continue
        top = stack[-1] if stack else None
        if tag is Tag.GUIDELINE_OPEN:
            stack.append(_TopoFrame())
        elif tag is Tag.GUIDELINE_CLOSE:
            top.p_end = int(pos[i])
        elif tag is Tag.STEP_OPEN and top is not None and top.p_end >= 0:
            pos[i:] -= int(pos[i]) - top.p_end - 1
        elif tag is Tag.STEP_CLOSE:
            top.l_max = max(top.l_max, int(pos[i]) - top.p_end)
        elif tag is Tag.TAKEAWAY_OPEN:
            pos[i:] -= int(pos[i]) - top.p_end - top.l_max - 1
            stack.pop()
    return [int(p) for p in pos]


@dataclass(frozen=True)
class BlockStats:
    branch_count: int
    longest_step: int


@dataclass(frozen=True)
class TopologyStats:
    total_tokens: int
    critical_path: int
    compression_ratio: float
    blocks: tuple[BlockStats, ...]

    def to_json_dict(self) -> dict:
        return {
            "total_tokens": self.total_tokens,
            "critical_path": self.critical_path,
            "compression_ratio": self.compression_ratio,
            "blocks": [
                {"branch_count": b.branch_count, "longest_step": b.longest_step}
                for b in self.blocks
            ],
        }


def topology_stats(tokens) -> TopologyStats:
    """Decode-depth statistics: critical path and compression ratio.

    The compression ratio (total tokens over critical path) is the simulated
    speedup of parallel decode relative to left-to-right decode.
    """
    texts = token_texts(tokens)
    if not texts:
        return TopologyStats(0, 0, 1.0, ())
    pos = build_position_ids(texts)
    critical = max(pos) + 1

    stack: list[_TopoFrame] = []
    blocks: list[BlockStats] = []
    for i, text in enumerate(texts):
        tag = tag_of(text)
        if tag is Tag.GUIDELINE_OPEN:
            stack.append(_TopoFrame())
        elif tag is Tag.GUIDELINE_CLOSE:
            stack[-1].p_end = pos[i]
        elif tag is Tag.STEP_CLOSE:
            frame = stack[-1]
            frame.steps.append(Span(i, i + 1))  # count only; extent unused here
            frame.l_max = max(frame.l_max, pos[i] - frame.p_end)
        elif tag is Tag.TAKEAWAY_OPEN:
            frame = stack.pop()
            blocks.append(BlockStats(len(frame.steps), frame.l_max))
    return TopologyStats(
        total_tokens=len(texts),
        critical_path=critical,
        compression_ratio=len(texts) / critical,
        blocks=tuple(blocks),
    )
