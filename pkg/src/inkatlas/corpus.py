"""Painting records, six-dimension annotations, and the corpus store.

The corpus file format is line-delimited JSON, one record per line:

    {"id": "...", "image": "...", "type": "gongbi"|"xieyi"|null,
     "tags": {"cultural_symbol": [...], "emotion": [...], ...},
     "source": "...", "description": "..."}

Tag arrays hold plain strings; cultural-symbol entries may instead be
objects ``{"name": ..., "description": ...}``.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)


class TagDimension(str, Enum):
    CULTURAL_SYMBOL = "cultural_symbol"
    EMOTION = "emotion"
    COMPOSITION = "composition"
    STYLE = "style"
    BRUSHSTROKE = "brushstroke"
    COLOR_TONE = "color_tone"


# The UI shows four dimensions on every card; the last two sit behind a "+".
DISPLAYED_DIMENSIONS = (
    TagDimension.CULTURAL_SYMBOL,
    TagDimension.EMOTION,
    TagDimension.COMPOSITION,
    TagDimension.STYLE,
)
COLLAPSED_DIMENSIONS = (TagDimension.BRUSHSTROKE, TagDimension.COLOR_TONE)


class PaintingType(str, Enum):
    GONGBI = "gongbi"
    XIEYI = "xieyi"
    UNKNOWN = "unknown"


class CorpusError(Exception):
    """Raised for unrecoverable corpus problems (unreadable file, empty ingest)."""


class SchemaError(CorpusError):
    """Raised when an annotation document does not match the expected shape."""


@dataclass(frozen=True)
class Tag:
    dimension: TagDimension
    concept: str
    explanation: str | None = None

    def __post_init__(self) -> None:
        if not self.concept or self.concept != self.concept.strip():
            raise ValueError(f"tag concept must be non-empty and trimmed: {self.concept!r}")


@dataclass(frozen=True)
class AnnotationSet:
    """One tag list per dimension; no duplicate (dimension, concept) pairs."""

    by_dimension: Mapping[TagDimension, tuple[Tag, ...]]

    def __post_init__(self) -> None:
        full = {dim: tuple(self.by_dimension.get(dim, ())) for dim in TagDimension}
        for dim, tags in full.items():
            seen: set[str] = set()
            for tag in tags:
                if tag.dimension is not dim:
                    raise ValueError(f"tag {tag.concept!r} has dimension {tag.dimension}, stored under {dim}")
                if tag.concept in seen:
                    raise ValueError(f"duplicate concept {tag.concept!r} in dimension {dim.value}")
                seen.add(tag.concept)
        object.__setattr__(self, "by_dimension", full)

    @classmethod
    def empty(cls) -> "AnnotationSet":
        return cls({})

    def tags_for(self, dimension: TagDimension) -> tuple[Tag, ...]:
        return self.by_dimension[dimension]

    def all_tags(self) -> tuple[Tag, ...]:
        return tuple(t for dim in TagDimension for t in self.by_dimension[dim])

    def is_empty(self) -> bool:
        return not any(self.by_dimension.values())

    def concepts(self, dimension: TagDimension) -> tuple[str, ...]:
        return tuple(t.concept for t in self.by_dimension[dimension])

    def merged_with(self, other: "AnnotationSet") -> "AnnotationSet":
        """Union of two sets; on duplicate (dimension, concept) the first wins."""
        out: dict[TagDimension, list[Tag]] = {}
        for dim in TagDimension:
            seen: set[str] = set()
            merged: list[Tag] = []
            for tag in self.by_dimension[dim] + other.by_dimension[dim]:
                if tag.concept not in seen:
                    seen.add(tag.concept)
                    merged.append(tag)
            out[dim] = merged
        return AnnotationSet({d: tuple(v) for d, v in out.items()})

    def to_wire(self) -> dict:
        out: dict[str, list] = {}
        for dim in TagDimension:
            entries: list = []
            for tag in self.by_dimension[dim]:
                if tag.explanation is not None:
                    entries.append({"name": tag.concept, "description": tag.explanation})
                else:
                    entries.append(tag.concept)
            out[dim.value] = entries
        return out


@dataclass(frozen=True)
class PaintingRecord:
    id: str
    image_ref: str
    painting_type: PaintingType = PaintingType.UNKNOWN
    annotations: AnnotationSet = field(default_factory=AnnotationSet.empty)
    source: str = ""
    description: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("record id must be non-empty")
        if not self.image_ref:
            raise ValueError(f"record {self.id!r}: image_ref must be non-empty")

    def to_wire(self) -> dict:
        doc = {
            "id": self.id,
            "image": self.image_ref,
            "type": None if self.painting_type is PaintingType.UNKNOWN else self.painting_type.value,
            "tags": self.annotations.to_wire(),
            "source": self.source,
        }
        if self.description is not None:
            doc["description"] = self.description
        return doc


@dataclass(frozen=True)
class CorpusStats:
    total: int
    per_type: Mapping[PaintingType, int]
    per_dimension_tagged: Mapping[TagDimension, int]


@dataclass
class IngestReport:
    stats: CorpusStats
    errors: list[tuple[int, str]] = field(default_factory=list)  # (line number, reason)


def validate_annotation(raw: Mapping) -> AnnotationSet:
    """Normalize a parsed annotation document into an AnnotationSet.

    Unknown keys are ignored with a warning; duplicate concepts within a
    dimension are deduplicated (first occurrence wins). Raises SchemaError
    when none of the six dimension keys is present, or when a present
    dimension value is not a list.
    """
    if not isinstance(raw, Mapping):
        raise SchemaError(f"annotation document must be a mapping, got {type(raw).__name__}")
    known = {dim.value: dim for dim in TagDimension}
    present = [key for key in raw if key in known]
    if not present:
        raise SchemaError(f"no dimension keys found; expected some of {sorted(known)}")
    for key in raw:
        if key not in known:
            logger.warning("ignoring unknown annotation key %r", key)

    by_dim: dict[TagDimension, list[Tag]] = {dim: [] for dim in TagDimension}
    for key in present:
        dim = known[key]
        value = raw[key]
        if not isinstance(value, (list, tuple)):
            raise SchemaError(f"dimension {key!r} must be a list, got {type(value).__name__}")
        seen: set[str] = set()
        for entry in value:
            concept, explanation = _parse_tag_entry(key, entry)
            if concept is None:
                continue
            if concept in seen:
                continue
            seen.add(concept)
            by_dim[dim].append(Tag(dim, concept, explanation))
    return AnnotationSet({d: tuple(v) for d, v in by_dim.items()})


def _parse_tag_entry(key: str, entry) -> tuple[str | None, str | None]:
    if isinstance(entry, str):
        concept = entry.strip()
        return (concept or None), None
    if isinstance(entry, Mapping):
        name = entry.get("name")
        if not isinstance(name, str):
            raise SchemaError(f"dimension {key!r}: object entry missing string 'name': {entry!r}")
        desc = entry.get("description")
        concept = name.strip()
        return (concept or None), (desc if isinstance(desc, str) else None)
    raise SchemaError(f"dimension {key!r}: entries must be strings or objects, got {type(entry).__name__}")


def record_from_wire(doc: Mapping) -> PaintingRecord:
    """Build a PaintingRecord from one corpus-file document."""
    if not isinstance(doc, Mapping):
        raise SchemaError(f"record must be an object, got {type(doc).__name__}")
    rec_id = doc.get("id")
    image = doc.get("image")
    if not isinstance(rec_id, str) or not rec_id:
        raise SchemaError("missing or empty 'id'")
    if not isinstance(image, str) or not image:
        raise SchemaError(f"record {rec_id!r}: missing or empty 'image'")
    raw_type = doc.get("type")
    if raw_type is None:
        ptype = PaintingType.UNKNOWN
    elif raw_type in (PaintingType.GONGBI.value, PaintingType.XIEYI.value):
        ptype = PaintingType(raw_type)
    else:
        raise SchemaError(f"record {rec_id!r}: unknown type {raw_type!r}")
    tags = doc.get("tags", {})
    annotations = validate_annotation(tags) if tags else AnnotationSet.empty()
    description = doc.get("description")
    if description is not None and not isinstance(description, str):
        raise SchemaError(f"record {rec_id!r}: 'description' must be a string")
    return PaintingRecord(
        id=rec_id,
        image_ref=image,
        painting_type=ptype,
        annotations=annotations,
        source=str(doc.get("source", "")),
        description=description,
    )


class CorpusSnapshot:
    """Immutable view of the corpus at one point in time."""

    def __init__(self, records: Mapping[str, PaintingRecord], version: int):
        self._records = dict(records)
        self.version = version

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records.values())

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._records

    def get(self, record_id: str) -> PaintingRecord | None:
        return self._records.get(record_id)

    def records(self) -> tuple[PaintingRecord, ...]:
        return tuple(self._records.values())

    def ids(self) -> tuple[str, ...]:
        return tuple(self._records)

    def stats(self) -> CorpusStats:
        per_type = {t: 0 for t in PaintingType}
        per_dim = {d: 0 for d in TagDimension}
        for rec in self._records.values():
            per_type[rec.painting_type] += 1
            for dim in TagDimension:
                if rec.annotations.tags_for(dim):
                    per_dim[dim] += 1
        return CorpusStats(total=len(self._records), per_type=per_type, per_dimension_tagged=per_dim)


class CorpusStore:
    """One writer, many readers. Readers take a consistent snapshot;
    mutations swap in a fresh snapshot under the writer lock."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._snapshot = CorpusSnapshot({}, version=0)

    def snapshot(self) -> CorpusSnapshot:
        return self._snapshot

    def _swap(self, records: Mapping[str, PaintingRecord]) -> None:
        self._snapshot = CorpusSnapshot(records, version=self._snapshot.version + 1)

    def ingest_file(self, path: str | Path) -> IngestReport:
        """Load a line-delimited corpus file, skipping and reporting malformed
        lines. Raises CorpusError if the file is unreadable or yields zero
        valid records."""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

        with self._lock:
            records = dict(self._snapshot._records)
            errors: list[tuple[int, str]] = []
            loaded = 0
            for lineno, line in enumerate(text.splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    record = record_from_wire(doc)
                except (json.JSONDecodeError, SchemaError, ValueError) as exc:
                    errors.append((lineno, str(exc)))
                    continue
                if record.id in records:
                    errors.append((lineno, f"duplicate id {record.id!r}"))
                    continue
                records[record.id] = record
                loaded += 1
            if loaded == 0:
                raise CorpusError(f"zero valid records in {path}")
            self._swap(records)
            snapshot = self._snapshot
        for lineno, reason in errors:
            logger.warning("corpus line %d skipped: %s", lineno, reason)
        return IngestReport(stats=snapshot.stats(), errors=errors)

    def export_file(self, path: str | Path) -> int:
        """Write the current snapshot in the corpus-file format; returns the
        record count."""
        snapshot = self.snapshot()
        lines = [json.dumps(rec.to_wire(), ensure_ascii=False) for rec in snapshot]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        return len(snapshot)

    def add_records(self, records: Iterable[PaintingRecord]) -> None:
        with self._lock:
            merged = dict(self._snapshot._records)
            for rec in records:
                if rec.id in merged:
                    raise CorpusError(f"duplicate id {rec.id!r}")
                merged[rec.id] = rec
            self._swap(merged)

    def set_annotations(self, record_id: str, annotations: AnnotationSet) -> PaintingRecord:
        with self._lock:
            records = dict(self._snapshot._records)
            rec = records.get(record_id)
            if rec is None:
                raise CorpusError(f"unknown record {record_id!r}")
            updated = replace(rec, annotations=annotations)
            records[record_id] = updated
            self._swap(records)
            return updated

    def set_painting_type(self, record_id: str, painting_type: PaintingType) -> PaintingRecord:
        with self._lock:
            records = dict(self._snapshot._records)
            rec = records.get(record_id)
            if rec is None:
                raise CorpusError(f"unknown record {record_id!r}")
            updated = replace(rec, painting_type=painting_type)
            records[record_id] = updated
            self._swap(records)
            return updated

    def stats(self) -> CorpusStats:
        return self.snapshot().stats()


def ingest_corpus(store: CorpusStore, path: str | Path) -> CorpusStats:
    """Convenience wrapper: ingest a file and return the resulting stats."""
    return store.ingest_file(path).stats
