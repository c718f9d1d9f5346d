"""Two-stage vision-language annotation of paintings.

Stage 1 sends a four-part prompt (role play, dimension analysis, knowledge
injection, response format) and parses five dimensions: cultural symbols,
emotion, composition, brushstroke, color tone. Stage 2 derives style
keywords from the stage-1 analysis. Prompt building is pure: identical
inputs produce identical bytes, which the golden-file tests pin down.

The exact wording here is a structural reconstruction; the deployed
system's original prompts are not public.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .clients import ClientError, RetryPolicy, TextModelClient, TranscriptLog, call_text_model
from .corpus import (
    AnnotationSet,
    CorpusStore,
    PaintingRecord,
    PaintingType,
    SchemaError,
    TagDimension,
    validate_annotation,
)

logger = logging.getLogger(__name__)

STAGE_ONE_DIMENSIONS = (
    TagDimension.CULTURAL_SYMBOL,
    TagDimension.EMOTION,
    TagDimension.COMPOSITION,
    TagDimension.BRUSHSTROKE,
    TagDimension.COLOR_TONE,
)

DIMENSION_ENDPOINT = "vlm.dimensions"
STYLE_ENDPOINT = "vlm.style"


class AnnotatorError(Exception):
    pass


class ParseError(AnnotatorError):
    """Response could not be parsed; carries the raw text for the log."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class KnowledgeEntry:
    term: str
    definition: str
    visual_characteristics: str
    usage_scenarios: str
    applicable_types: frozenset[PaintingType]

    def __post_init__(self) -> None:
        if not self.term:
            raise AnnotatorError("knowledge entry term must be non-empty")
        bad = self.applicable_types - {PaintingType.GONGBI, PaintingType.XIEYI}
        if bad or not self.applicable_types:
            raise AnnotatorError(
                f"{self.term!r}: applicable_types must be a non-empty subset of gongbi/xieyi"
            )


class KnowledgeBase:
    """Flat, maintainer-editable list of painting-technique knowledge.

    Lookup methods bump access_count so pipelines can assert they never
    touched the knowledge base (the baseline prompt contract)."""

    def __init__(self, entries: Iterable[KnowledgeEntry] = ()):
        self._entries: dict[str, KnowledgeEntry] = {}
        self.access_count = 0
        for entry in entries:
            if entry.term.casefold() in self._entries:
                raise AnnotatorError(f"duplicate knowledge term {entry.term!r}")
            self._entries[entry.term.casefold()] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def entries_for_type(self, painting_type: PaintingType) -> list[KnowledgeEntry]:
        self.access_count += 1
        entries = list(self._entries.values())
        if painting_type is PaintingType.UNKNOWN:
            return entries
        return [e for e in entries if painting_type in e.applicable_types]

    def lookup(self, term: str) -> KnowledgeEntry | None:
        self.access_count += 1
        return self._entries.get(term.casefold())

    @classmethod
    def load_file(cls, path: str | Path) -> "KnowledgeBase":
        entries = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                raw_types = doc.get("applicable_types", "both")
                if raw_types == "both":
                    types = frozenset({PaintingType.GONGBI, PaintingType.XIEYI})
                else:
                    types = frozenset(PaintingType(t) for t in raw_types)
                entries.append(
                    KnowledgeEntry(
                        term=doc["term"],
                        definition=doc.get("definition", ""),
                        visual_characteristics=doc.get("visual_characteristics", ""),
                        usage_scenarios=doc.get("usage_scenarios", ""),
                        applicable_types=types,
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise AnnotatorError(f"{path}:{lineno}: bad knowledge entry: {exc}") from exc
        return cls(entries)

    def save_file(self, path: str | Path) -> None:
        lines = []
        for entry in self._entries.values():
            types = sorted(t.value for t in entry.applicable_types)
            lines.append(
                json.dumps(
                    {
                        "term": entry.term,
                        "definition": entry.definition,
                        "visual_characteristics": entry.visual_characteristics,
                        "usage_scenarios": entry.usage_scenarios,
                        "applicable_types": "both" if len(types) == 2 else types,
                    },
                    ensure_ascii=False,
                )
            )
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


@dataclass(frozen=True)
class AnnotationPrompt:
    role_section: str
    dimension_section: str
    knowledge_section: str
    format_section: str
    attached_image_ref: str

    def __post_init__(self) -> None:
        for name in ("role_section", "dimension_section", "knowledge_section", "format_section"):
            if not getattr(self, name):
                raise AnnotatorError(f"prompt section {name} must be non-empty")

    def text(self) -> str:
        return "\n\n".join(
            (self.role_section, self.dimension_section, self.knowledge_section, self.format_section)
        )


_ROLE_SECTION = (
    "You are an expert in traditional Chinese painting with deep knowledge of "
    "its cultural symbols, techniques, and aesthetics. Examine the attached "
    "painting closely before answering."
)

_DIMENSION_SECTION = """Analyze the painting along these dimensions:
1. Cultural symbols: every depicted object carrying conventional cultural meaning; give its name and one sentence on the meaning it carries here.
2. Emotion: the emotions or spiritual qualities the painting conveys.
3. Composition: the compositional arrangements used (for example S-shaped composition, triangular composition, central composition).
4. Brushstroke: the brush techniques visible (for example thick ink, fine line drawing, layered shading).
5. Color tone: the dominant color tones (for example black ink, malachite green, light ochre)."""

_FORMAT_SECTION = """Respond with a single JSON object and nothing else, using exactly these keys:
{"cultural_symbol": [{"name": "...", "description": "..."}], "emotion": ["..."], "composition": ["..."], "brushstroke": ["..."], "color_tone": ["..."]}
Use an empty list for any dimension that does not apply."""


def _render_knowledge(entries: Sequence[KnowledgeEntry]) -> str:
    if not entries:
        return "Reference knowledge: none."
    lines = ["Reference knowledge about Chinese painting concepts:"]
    for e in entries:
        parts = [f"- {e.term}: {e.definition}"]
        if e.visual_characteristics:
            parts.append(f"Visual characteristics: {e.visual_characteristics}")
        if e.usage_scenarios:
            parts.append(f"Usage: {e.usage_scenarios}")
        if e.applicable_types == {PaintingType.GONGBI}:
            parts.append("(commonly used in gongbi)")
        elif e.applicable_types == {PaintingType.XIEYI}:
            parts.append("(commonly used in xieyi)")
        lines.append(" ".join(parts))
    return "\n".join(lines)


def build_dimension_prompt(record: PaintingRecord, kb: KnowledgeBase) -> AnnotationPrompt:
    """Stage-1 prompt. Knowledge entries are filtered by the record's
    painting type when known; an unknown type injects everything."""
    if not record.image_ref:
        raise AnnotatorError(f"record {record.id!r} has no image_ref")
    entries = kb.entries_for_type(record.painting_type)
    return AnnotationPrompt(
        role_section=_ROLE_SECTION,
        dimension_section=_DIMENSION_SECTION,
        knowledge_section=_render_knowledge(entries),
        format_section=_FORMAT_SECTION,
        attached_image_ref=record.image_ref,
    )


def build_style_prompt(dimension_results: AnnotationSet) -> str:
    """Stage-2 prompt: summarize every first-stage tag and ask for style
    keywords only."""
    if dimension_results.is_empty():
        raise AnnotatorError("cannot derive style from an empty dimension analysis")
    lines = [
        "You are an expert in traditional Chinese painting styles.",
        "A painting was analyzed along these dimensions:",
    ]
    for dim in STAGE_ONE_DIMENSIONS:
        concepts = dimension_results.concepts(dim)
        if concepts:
            lines.append(f"- {dim.value}: " + "; ".join(concepts))
    lines.append(
        "A painting's style is shaped by its cultural symbols and the combined "
        "effect of color tone, brushstroke, and composition. Name the style "
        "keywords that characterize this painting."
    )
    lines.append('Respond with a single JSON object and nothing else: {"style": ["..."]}')
    return "\n".join(lines)


def parse_annotation_response(raw: str) -> AnnotationSet:
    """Strip code fences / surrounding prose and validate the JSON body."""
    if not raw or not raw.strip():
        raise ParseError("empty response", raw=raw)
    start = raw.find("{")
    end = raw.rfind("}")
    if start == -1 or end == -1 or end <= start:
        raise ParseError("no JSON object found in response", raw=raw)
    body = raw[start : end + 1]
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ParseError(f"response is not valid JSON: {exc}", raw=raw) from exc
    try:
        return validate_annotation(doc)
    except SchemaError as exc:
        raise ParseError(str(exc), raw=raw) from exc


def _without_style(annotations: AnnotationSet) -> AnnotationSet:
    kept = {
        dim: annotations.by_dimension[dim]
        for dim in TagDimension
        if dim is not TagDimension.STYLE
    }
    return AnnotationSet(kept)


def annotate_painting(
    client: TextModelClient,
    record: PaintingRecord,
    kb: KnowledgeBase,
    log: TranscriptLog,
    policy: RetryPolicy | None = None,
) -> AnnotationSet:
    """Run both stages and return the merged AnnotationSet.

    Stage-1 failure raises and leaves the record untouched; stage-2 failure
    keeps the stage-1 tags with an empty style dimension and a warning.
    """
    prompt = build_dimension_prompt(record, kb)
    raw = call_text_model(
        client, log, DIMENSION_ENDPOINT, prompt.text(), image_ref=prompt.attached_image_ref, policy=policy
    )
    stage_one = _without_style(parse_annotation_response(raw))

    style_tags: AnnotationSet | None = None
    try:
        style_prompt = build_style_prompt(stage_one)
        raw_style = call_text_model(client, log, STYLE_ENDPOINT, style_prompt, policy=policy)
        style_tags = parse_annotation_response(raw_style)
    except (ClientError, AnnotatorError) as exc:
        logger.warning("style pass failed for record %s: %s", record.id, exc)

    if style_tags is None:
        return stage_one
    style_only = AnnotationSet({TagDimension.STYLE: style_tags.by_dimension[TagDimension.STYLE]})
    return stage_one.merged_with(style_only)


@dataclass
class BatchReport:
    annotated: list[str]
    failed: list[tuple[str, str]]


def annotate_corpus(
    store: CorpusStore,
    client: TextModelClient,
    kb: KnowledgeBase,
    log: TranscriptLog,
    worker_count: int = 4,
    policy: RetryPolicy | None = None,
    record_ids: Sequence[str] | None = None,
) -> BatchReport:
    """Annotate records with bounded parallelism; per-record failures are
    collected, not fatal. Only successful records are written back."""
    snapshot = store.snapshot()
    targets = [snapshot.get(rid) for rid in record_ids] if record_ids else list(snapshot)
    report = BatchReport(annotated=[], failed=[])
    report_lock = threading.Lock()

    def work(record: PaintingRecord | None) -> None:
        if record is None:
            return
        try:
            merged = annotate_painting(client, record, kb, log, policy=policy)
            store.set_annotations(record.id, merged)
            with report_lock:
                report.annotated.append(record.id)
        except (ClientError, AnnotatorError) as exc:
            with report_lock:
                report.failed.append((record.id, str(exc)))

    with ThreadPoolExecutor(max_workers=max(1, worker_count)) as pool:
        list(pool.map(work, targets))
    report.annotated.sort()
    report.failed.sort()
    return report
