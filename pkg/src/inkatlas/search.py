"""In-process inverted index over painting tags and descriptions.

Scoring is deliberately simple and oracle-checkable:

    score = 3 * (tag concepts exactly equal to the query, case/whitespace
                 insensitive)
          + 1 * (distinct query tokens present in the record's tokens)

Dimension and type filters are applied before scoring. CJK text is indexed
as whole segments plus character bigrams so Chinese concepts match without
a dictionary.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .clients import OnlineResult, OnlineSearchClient
from .corpus import CorpusSnapshot, PaintingType, TagDimension


class SearchError(Exception):
    pass


class SearchMode(str, Enum):
    LOCAL = "local"
    ONLINE = "online"


_WORD_RE = re.compile(r"\w+", re.UNICODE)
_CJK_RE = re.compile(r"[㐀-䶿一-鿿]")


def _is_cjk(ch: str) -> bool:
    return bool(_CJK_RE.match(ch))


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; CJK runs contribute the whole run plus its
    character bigrams (and the single character for length-1 runs)."""
    tokens: list[str] = []
    for run in _WORD_RE.findall(text.lower()):
        segment = ""
        segments: list[tuple[str, bool]] = []
        cjk = None
        for ch in run:
            ch_cjk = _is_cjk(ch)
            if cjk is None or ch_cjk == cjk:
                segment += ch
            else:
                segments.append((segment, cjk))
                segment = ch
            cjk = ch_cjk
        if segment:
            segments.append((segment, bool(cjk)))
        for seg, seg_cjk in segments:
            if not seg_cjk:
                tokens.append(seg)
                continue
            tokens.append(seg)
            if len(seg) == 1:
                continue
            tokens.extend(seg[i : i + 2] for i in range(len(seg) - 1))
    return tokens


def normalize_concept(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class SearchQuery:
    text: str
    mode: SearchMode = SearchMode.LOCAL
    dimension_filter: TagDimension | None = None
    type_filter: PaintingType | None = None
    limit: int = 30

    def __post_init__(self) -> None:
        if self.limit < 1:
            raise SearchError("limit must be >= 1")


@dataclass(frozen=True)
class SearchHit:
    record_id: str
    score: float
    matched_fields: tuple[tuple[str, str], ...]  # (dimension value or "description", concept)
    external: OnlineResult | None = None


@dataclass
class SearchIndex:
    """Immutable once built; rebuilds swap in a fresh instance."""

    version: int
    token_postings: dict[str, dict[str, set[tuple[str, str]]]] = field(default_factory=dict)
    concept_postings: dict[str, dict[str, set[tuple[str, str]]]] = field(default_factory=dict)
    record_types: dict[str, PaintingType] = field(default_factory=dict)

    # token_postings: token -> record_id -> {(field, source concept/description)}
    # concept_postings: normalized concept -> record_id -> {(dimension, stored concept)}


def build_index(snapshot: CorpusSnapshot) -> SearchIndex:
    """Index tag concepts (exact and tokenized) and description words. An
    empty corpus yields a valid empty index."""
    index = SearchIndex(version=snapshot.version)
    for record in snapshot:
        index.record_types[record.id] = record.painting_type
        for dim in TagDimension:
            for tag in record.annotations.tags_for(dim):
                norm = normalize_concept(tag.concept)
                index.concept_postings.setdefault(norm, {}).setdefault(record.id, set()).add(
                    (dim.value, tag.concept)
                )
                for token in tokenize(tag.concept):
                    index.token_postings.setdefault(token, {}).setdefault(record.id, set()).add(
                        (dim.value, tag.concept)
                    )
        if record.description:
            for token in tokenize(record.description):
                index.token_postings.setdefault(token, {}).setdefault(record.id, set()).add(
                    ("description", token)
                )
    return index


EXACT_WEIGHT = 3.0
TOKEN_WEIGHT = 1.0


def search(
    index: SearchIndex,
    query: SearchQuery,
    online_client: OnlineSearchClient | None = None,
) -> list[SearchHit]:
    if not query.text.strip():
        raise SearchError("query text must be non-empty")
    if query.mode is SearchMode.ONLINE:
        if online_client is None:
            raise SearchError("online mode requires a configured online-source client")
        results = online_client.search(query.text, query.limit)
        hits = [
            SearchHit(
                record_id=r.image_url,
                score=0.0,
                matched_fields=(("online", r.title),),
                external=r,
            )
            for r in results
        ]
        hits.sort(key=lambda h: (-h.score, h.record_id))
        return hits[: query.limit]

    dim_value = query.dimension_filter.value if query.dimension_filter else None

    def field_allowed(field_name: str) -> bool:
        if dim_value is None:
            return True
        return field_name == dim_value

    def type_allowed(record_id: str) -> bool:
        if query.type_filter is None:
            return True
        return index.record_types.get(record_id) is query.type_filter

    exact_counts: dict[str, int] = {}
    matches: dict[str, set[tuple[str, str]]] = {}

    norm = normalize_concept(query.text)
    for record_id, fields in index.concept_postings.get(norm, {}).items():
        if not type_allowed(record_id):
            continue
        allowed = {f for f in fields if field_allowed(f[0])}
        if allowed:
            exact_counts[record_id] = len(allowed)
            matches.setdefault(record_id, set()).update(allowed)

    token_hits: dict[str, set[str]] = {}
    for token in set(tokenize(query.text)):
        for record_id, fields in index.token_postings.get(token, {}).items():
            if not type_allowed(record_id):
                continue
            allowed = {f for f in fields if field_allowed(f[0])}
            if allowed:
                token_hits.setdefault(record_id, set()).add(token)
                matches.setdefault(record_id, set()).update(allowed)

    hits = []
    for record_id in set(exact_counts) | set(token_hits):
        score = EXACT_WEIGHT * exact_counts.get(record_id, 0) + TOKEN_WEIGHT * len(
            token_hits.get(record_id, ())
        )
        hits.append(
            SearchHit(
                record_id=record_id,
                score=score,
                matched_fields=tuple(sorted(matches[record_id])),
            )
        )
    hits.sort(key=lambda h: (-h.score, h.record_id))
    return hits[: query.limit]


def tag_lookup(index: SearchIndex, dimension: TagDimension, concept: str) -> list[str]:
    """Records carrying exactly this (dimension, concept) tag, id ascending.
    Concept comparison is exact on the stored string."""
    if not concept:
        raise SearchError("concept must be non-empty")
    norm = normalize_concept(concept)
    ids = [
        record_id
        for record_id, fields in index.concept_postings.get(norm, {}).items()
        if (dimension.value, concept) in fields
    ]
    return sorted(ids)
