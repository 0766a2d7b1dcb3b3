"""Synthetic trace corpora for testing and benchmarking.

Documents come out in canonical tight form: inside a block the step regions
directly follow the guideline close and the takeaway directly follows the
last step, which is the shape parallel decode produces. Free-form content is
allowed before a block, between blocks, and in the epilogue.

Corruption injects exactly one category-targeted structural violation per
corrupted document and records which one in a sidecar key.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .document import parse_document
from .tags import Tag


def _words(rng: random.Random, n: int) -> list[str]:
    return [f"w{rng.randrange(512)}" for _ in range(n)]


def _sample(rng: random.Random, weights: dict[int, float]) -> int:
    keys = sorted(weights)
    return rng.choices(keys, weights=[weights[k] for k in keys], k=1)[0]


def _block(rng: random.Random, depth: int, max_depth: int,
           n_plans: int, n_steps: int, step_len) -> list[str]:
    out = [Tag.GUIDELINE_OPEN.value]
    for j in range(n_plans):
        out += [Tag.PLAN_OPEN.value, f"{j + 1}:"]
        out += _words(rng, rng.randint(1, 3))
        out.append(Tag.PLAN_CLOSE.value)
    out.append(Tag.GUIDELINE_CLOSE.value)

    nest_at = rng.randrange(n_steps) if depth < max_depth and rng.random() < 0.3 else -1
    for j in range(n_steps):
        out += [Tag.STEP_OPEN.value, f"{j + 1}:"]
        out += _words(rng, step_len())
        if j == nest_at:
            out += _block(rng, depth + 1, max_depth,
                          n_plans=rng.randint(1, 2), n_steps=2,
                          step_len=lambda: rng.randint(1, 4))
            out += _words(rng, rng.randint(0, 2))
        out.append(Tag.STEP_CLOSE.value)

    out.append(Tag.TAKEAWAY_OPEN.value)
    out += _words(rng, rng.randint(1, 3))
    out.append(Tag.TAKEAWAY_CLOSE.value)
    return out


def random_valid_document(rng: random.Random, max_depth: int = 2,
                          answer: str | None = None,
                          pair_plans_with_steps: bool = False,
                          n_blocks: int | None = None,
                          n_steps_weights: dict[int, float] | None = None,
                          step_length_weights: dict[int, float] | None = None) -> list[str]:
    """One structurally valid document, at most 256 tokens."""
    if n_blocks is None:
        n_blocks = rng.randint(1, 3)
    steps_weights = n_steps_weights or {1: 1, 2: 3, 3: 2}
    len_weights = step_length_weights or {1: 1, 2: 2, 4: 2, 6: 1}
    out: list[str] = []
    if rng.random() < 0.4:
        out += _words(rng, rng.randint(1, 3))
    for _ in range(n_blocks):
        n_steps = _sample(rng, steps_weights)
        n_plans = n_steps if pair_plans_with_steps else rng.randint(1, 3)
        out += _block(rng, 1, max_depth, n_plans, n_steps,
                      step_len=lambda: _sample(rng, len_weights))
        if rng.random() < 0.3:
            out += _words(rng, rng.randint(1, 2))
    out += _words(rng, rng.randint(0, 2))
    out.append("\\boxed{%s}" % (answer if answer is not None else f"a{rng.randrange(1000)}"))
    if len(out) > 256:
        raise AssertionError("generator parameters exceeded the 256-token cap")
    return out


# -- corruption ------------------------------------------------------------

def _delete_spans(tokens: list[str], spans) -> list[str]:
    drop = set()
    for s in spans:
        drop.update(range(s.start, s.end))
    return [t for i, t in enumerate(tokens) if i not in drop]


def corrupt(tokens: list[str], category: int, rng: random.Random) -> list[str]:
    """Inject one violation of the given category into a valid document."""
    tokens = list(tokens)
    doc = parse_document(tokens)
    block = doc.blocks[0]
    if category == 1:
        at = next(i for i, t in enumerate(tokens) if t == Tag.STEP_CLOSE.value)
        return tokens[:at] + tokens[at + 1:]
    if category == 2:
        return _delete_spans(tokens, block.plans)
    if category == 3:
        return _delete_spans(tokens, block.steps)
    if category == 4:
        # Use the last block: a later block's takeaway would otherwise be
        # absorbed as the mutilated block's join during tolerant scanning.
        ts = doc.blocks[-1].takeaway_span
        return [t for i, t in enumerate(tokens) if i not in (ts.start, ts.end - 1)]
    if category == 5:
        return tokens + [Tag.PLAN_CLOSE.value]
    if category == 6:
        return [t for t in tokens if not t.startswith("\\boxed{")]
    raise ValueError(f"unknown category {category}")


# -- corpus spec -----------------------------------------------------------

def _default_blocks() -> dict[int, float]:
    return {1: 2.0, 2: 1.0}


def _default_steps() -> dict[int, float]:
    return {2: 3.0, 3: 2.0, 4: 1.0}


def _default_step_len() -> dict[int, float]:
    return {2: 1.0, 4: 2.0, 6: 1.0}


@dataclass(frozen=True)
class CorpusSpec:
    documents: int = 100
    block_count_weights: dict[int, float] = field(default_factory=_default_blocks)
    steps_per_block_weights: dict[int, float] = field(default_factory=_default_steps)
    step_length_weights: dict[int, float] = field(default_factory=_default_step_len)
    corruption_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.documents < 0:
            raise ValueError("documents must be non-negative")
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise ValueError("corruption_rate must be in [0, 1]")

    def to_json_dict(self) -> dict:
        return {
            "documents": self.documents,
            "block_count_weights": {str(k): v for k, v in self.block_count_weights.items()},
            "steps_per_block_weights": {str(k): v for k, v in self.steps_per_block_weights.items()},
            "step_length_weights": {str(k): v for k, v in self.step_length_weights.items()},
            "corruption_rate": self.corruption_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CorpusSpec":
        def intkeys(d):
            return {int(k): float(v) for k, v in d.items()}
        kwargs = {}
        if "documents" in data:
            kwargs["documents"] = int(data["documents"])
        for name in ("block_count_weights", "steps_per_block_weights", "step_length_weights"):
            if name in data:
                kwargs[name] = intkeys(data[name])
        if "corruption_rate" in data:
            kwargs["corruption_rate"] = float(data["corruption_rate"])
        if "seed" in data:
            kwargs["seed"] = int(data["seed"])
        return cls(**kwargs)


@dataclass(frozen=True)
class KeyEntry:
    doc_id: str
    corrupted: bool
    category: int | None
    gold: str


def generate_corpus(spec: CorpusSpec):
    """Deterministic corpus: returns (documents, key entries).

    Documents are dicts {id, tokens, gold}. Clean documents validate in both
    lenient and strict mode (plans are paired one-to-one with steps, no
    nesting) and carry a boxed answer equal to their gold answer.
    """
    rng = random.Random(spec.seed)
    docs = []
    keys = []
    for i in range(spec.documents):
        doc_id = f"doc{i:05d}"
        gold = f"ans{rng.randrange(10_000)}"
        tokens = random_valid_document(
            rng, max_depth=1, answer=gold, pair_plans_with_steps=True,
            n_blocks=_sample(rng, spec.block_count_weights),
            n_steps_weights=spec.steps_per_block_weights,
            step_length_weights=spec.step_length_weights,
        )
        corrupted = rng.random() < spec.corruption_rate
        category = None
        if corrupted:
            category = rng.randint(1, 6)
            tokens = corrupt(tokens, category, rng)
        docs.append({"id": doc_id, "tokens": tokens, "gold": gold})
        keys.append(KeyEntry(doc_id, corrupted, category, gold))
    return docs, keys
