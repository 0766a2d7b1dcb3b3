"""Line-oriented JSON file formats and the run manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InputError
from .rollouts import RolloutBatch, RolloutRecord


@dataclass(frozen=True)
class TraceDoc:
    doc_id: str
    tokens: tuple[str, ...]
    gold: str | None = None

    def to_json_dict(self) -> dict:
        out = {"id": self.doc_id, "tokens": list(self.tokens)}
        if self.gold is not None:
            out["gold"] = self.gold
        return out


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def read_jsonl_numbered(path) -> list[tuple[int, dict]]:
    """(source line number, row) pairs; blank lines are skipped but counted."""
    path = Path(path)
    if not path.exists():
        raise InputError("file not found", str(path))
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise InputError(f"bad JSON: {exc.msg}", str(path), lineno) from exc
    return rows


def read_jsonl(path) -> list[dict]:
    return [row for _, row in read_jsonl_numbered(path)]


def write_jsonl(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(dumps(row) + "\n")


def read_trace(path) -> list[tuple[int, TraceDoc]]:
    docs = []
    for lineno, row in read_jsonl_numbered(path):
        try:
            docs.append((lineno, TraceDoc(doc_id=str(row["id"]),
                                          tokens=tuple(str(t) for t in row["tokens"]),
                                          gold=row.get("gold"))))
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad trace record: {exc!r}", str(path), lineno) from exc
    return docs


def read_rollout_batch(path) -> RolloutBatch:
    records = []
    for lineno, row in read_jsonl_numbered(path):
        try:
            records.append(RolloutRecord.from_json_dict(row))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad rollout record: {exc}", str(path), lineno) from exc
    if not records:
        raise InputError("empty rollout batch", str(path))
    try:
        return RolloutBatch.from_records(records)
    except ValueError as exc:
        raise InputError(str(exc), str(path)) from exc


def read_outcomes(path) -> list[tuple[str, bool]]:
    out = []
    for lineno, row in read_jsonl_numbered(path):
        try:
            out.append((str(row["id"]), bool(row["correct"])))
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad outcome record: {exc!r}", str(path), lineno) from exc
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


TOOL_VERSION = "0.1.0"


def write_manifest(path, subcommand: str, inputs, config: dict, outputs) -> dict:
    """Reproducibility record: inputs, echoed config, output digests."""
    manifest = {
        "v": 1,
        "subcommand": subcommand,
        "tool_version": TOOL_VERSION,
        "inputs": [{"path": str(p), "sha256": sha256_file(p)} for p in inputs],
        "config": config,
        "outputs": [{"path": str(p), "sha256": sha256_file(p)} for p in outputs],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(manifest) + "\n", encoding="utf-8")
    return manifest
