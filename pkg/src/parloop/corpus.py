"""Labeled loop corpus: assembly, class balancing, JSONL storage and real-code ingestion."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    EmptyClassError,
    MalformedAnnotationError,
    MissingAnnotationError,
    ParloopError,
    SchemaVersionError,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ORIGINS = ("synthetic", "real")
ANNOTATION_FILE = "annotations.csv"
SOURCE_SUFFIXES = (".c", ".h", ".cc", ".cpp", ".txt", ".src")
EPOCH = "1970-01-01T00:00:00+00:00"


def content_id(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class LoopSample:
    id: str
    source_text: str
    label: int
    origin: str
    provenance: str = ""

    @classmethod
    def make(cls, source_text: str, label: int, origin: str, provenance: str = "") -> "LoopSample":
        if not source_text:
            raise ValueError("source_text must be non-empty")
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label!r}")
        if origin not in ORIGINS:
            raise ValueError(f"unknown origin {origin!r}")
        return cls(content_id(source_text), source_text, int(label), origin, provenance)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "source_text": self.source_text,
            "label": self.label,
            "origin": self.origin,
            "provenance": self.provenance,
        }


@dataclass
class Corpus:
    samples: list
    manifest: dict = field(default_factory=dict)

    @property
    def counts(self) -> dict:
        return class_counts(self.samples)

    @property
    def labels(self) -> list[int]:
        return [s.label for s in self.samples]

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other):
        return (
            isinstance(other, Corpus)
            and self.samples == other.samples
            and self.manifest == other.manifest
        )

    def digest(self) -> str:
        """Hash of the serialized corpus; identical inputs give identical digests."""
        return hashlib.sha256(dumps(self).encode("utf-8")).hexdigest()


def class_counts(samples: Iterable[LoopSample]) -> dict:
    counts = {"0": 0, "1": 0}
    for s in samples:
        counts[str(s.label)] += 1
    return counts


def _created() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return EPOCH
    from datetime import datetime, timezone

    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()


def assemble(
    synthetic: Sequence[LoopSample],
    real: Sequence[LoopSample] = (),
    balance: bool = True,
    per_class_cap: int | None = None,
    config_hash: str = "",
) -> Corpus:
    """Merge, deduplicate by id, and optionally balance the two classes.

    Synthetic inputs are expected in fitness-rank order (best first), which is
    how :func:`parloop.ga.evolve` returns them. When a class must shrink,
    synthetic samples are dropped from the tail first, real ones only after
    every synthetic sample of that class is gone.
    """
    decisions: list[str] = []
    seen: dict[str, LoopSample] = {}
    merged: list[LoopSample] = []
    for s in [*real, *synthetic]:
        prev = seen.get(s.id)
        if prev is not None:
            if prev.origin != s.origin:
                decisions.append(f"cross-origin duplicate {s.id} kept as {prev.origin}")
            if prev.label != s.label:
                decisions.append(f"label clash on {s.id}: kept {prev.label} from {prev.origin}")
            continue
        seen[s.id] = s
        merged.append(s)
    dropped = len(real) + len(synthetic) - len(merged)
    if dropped:
        decisions.append(f"removed {dropped} duplicate samples")

    by_class = {0: [s for s in merged if s.label == 0], 1: [s for s in merged if s.label == 1]}
    for label, group in by_class.items():
        if not group:
            raise EmptyClassError(f"class {label} has no samples")

    target = None
    if balance:
        target = min(len(g) for g in by_class.values())
    if per_class_cap is not None:
        target = per_class_cap if target is None else min(target, per_class_cap)
    keep: set[str] = set()
    for label, group in by_class.items():
        if target is None or len(group) <= target:
            keep.update(s.id for s in group)
            continue
        excess = len(group) - target
        real_part = [s for s in group if s.origin == "real"]
        syn_part = [s for s in group if s.origin == "synthetic"]
        drop_syn = min(excess, len(syn_part))
        drop_real = excess - drop_syn
        syn_part = syn_part[: len(syn_part) - drop_syn]
        real_part = real_part[: len(real_part) - drop_real]
        keep.update(s.id for s in syn_part)
        keep.update(s.id for s in real_part)
        decisions.append(
            f"class {label}: truncated {len(group)} -> {target} "
            f"({drop_syn} synthetic, {drop_real} real dropped)"
        )
    samples = [s for s in merged if s.id in keep]
    manifest = {
        "schema": SCHEMA_VERSION,
        "created": _created(),
        "config_hash": config_hash,
        "counts": class_counts(samples),
        "decisions": decisions,
    }
    return Corpus(samples, manifest)


# ----------------------------------------------------------------- storage


def dumps(corpus: Corpus) -> str:
    lines = [json.dumps(corpus.manifest, sort_keys=True, ensure_ascii=False)]
    lines += [json.dumps(s.to_json(), ensure_ascii=False) for s in corpus.samples]
    return "\n".join(lines) + "\n"


def save(corpus: Corpus, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_text(dumps(corpus), encoding="utf-8")
    except OSError as exc:
        raise ParloopError(f"cannot write corpus to {path}: {exc}") from exc


def load(path) -> Corpus:
    """Read a corpus written by :func:`save`; never returns a partial corpus."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParloopError(f"cannot read corpus {path}: {exc}") from exc
    return loads(text)


def loads(text: str) -> Corpus:
    if not text.endswith("\n"):
        raise SchemaVersionError("corpus file is truncated (missing final newline)")
    lines = text.splitlines()
    if not lines:
        raise SchemaVersionError("empty corpus file")
    try:
        manifest = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaVersionError(f"unreadable manifest line: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("schema") != SCHEMA_VERSION:
        raise SchemaVersionError(f"unknown corpus schema {manifest.get('schema') if isinstance(manifest, dict) else manifest!r}")
    samples = []
    for k, line in enumerate(lines[1:], start=2):
        try:
            d = json.loads(line)
            s = LoopSample(d["id"], d["source_text"], int(d["label"]), d["origin"], d["provenance"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SchemaVersionError(f"line {k}: malformed sample ({exc})") from exc
        if s.id != content_id(s.source_text) or s.label not in (0, 1):
            raise SchemaVersionError(f"line {k}: sample fails its integrity check")
        samples.append(s)
    counts = manifest.get("counts")
    if counts is not None and counts != class_counts(samples):
        raise SchemaVersionError("class counts disagree with the manifest; file is truncated or edited")
    return Corpus(samples, manifest)


def save_samples(samples: Sequence[LoopSample], path) -> None:
    """Write bare samples (no manifest), as produced by the generator and ingestion stages."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def load_samples(path) -> list[LoopSample]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for k, line in enumerate(fh, start=1):
            try:
                d = json.loads(line)
                out.append(LoopSample(d["id"], d["source_text"], int(d["label"]), d["origin"], d["provenance"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SchemaVersionError(f"{path}:{k}: malformed sample ({exc})") from exc
    return out


# ---------------------------------------------------------------- ingestion


def read_annotations(path) -> dict[str, int]:
    labels: dict[str, int] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise MalformedAnnotationError(f"{path}:{row_no}: expected 2 columns, got {len(row)}")
            name, raw = row[0].strip(), row[1].strip()
            if row_no == 1 and (name.lower(), raw.lower()) == ("filename", "label"):
                continue
            if raw not in ("0", "1"):
                raise MalformedAnnotationError(f"{path}:{row_no}: label must be 0 or 1, got {raw!r}")
            if name in labels:
                raise MalformedAnnotationError(f"{path}:{row_no}: duplicate entry for {name!r}")
            labels[name] = int(raw)
    return labels


def ingest_real(directory, errors: list | None = None, check_oracle: bool = True) -> list[LoopSample]:
    """One sample per annotated source file, label taken verbatim from ``annotations.csv``.

    Unannotated files are skipped; a :class:`MissingAnnotationError` for each
    is appended to ``errors`` (when given) and logged. Oracle disagreement on
    files that parse in the loop subset is logged, never applied.
    """
    directory = Path(directory)
    labels = read_annotations(directory / ANNOTATION_FILE)
    files = sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.name != ANNOTATION_FILE and p.suffix.lower() in SOURCE_SUFFIXES
    )
    samples = []
    for p in files:
        if p.name not in labels:
            err = MissingAnnotationError(f"{p.name}: no annotation, skipped")
            log.warning(str(err))
            if errors is not None:
                errors.append(err)
            continue
        text = p.read_text(encoding="utf-8")
        sample = LoopSample.make(text, labels[p.name], "real", f"file:{p.name}")
        if check_oracle:
            _log_disagreement(sample)
        samples.append(sample)
    for name in sorted(set(labels) - {p.name for p in files}):
        log.warning("annotation for %s has no matching file", name)
    return samples


def _log_disagreement(sample: LoopSample) -> None:
    from .dependence import classify
    from .loop_model import validate
    from .parse import parse_source

    try:
        loop = parse_source(sample.source_text)
    except ParloopError:
        return
    if not validate(loop):
        return
    try:
        oracle = int(classify(loop))
    except ParloopError:
        return
    if oracle != sample.label:
        log.warning(
            "%s: human label %d disagrees with oracle label %d (human label kept)",
            sample.provenance, sample.label, oracle,
        )
