"""Design-space mining: concept normalization, embedding, clustering, and
the dimension -> category catalog.

Only cultural symbols and emotions are clustered; composition, style,
brushstroke, and color tone stay flat concept lists.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .clients import EmbeddingClient, RetryPolicy, TranscriptLog, call_embedding
from .corpus import CorpusSnapshot, TagDimension

CLUSTERED_DIMENSIONS = (TagDimension.CULTURAL_SYMBOL, TagDimension.EMOTION)
FLAT_DIMENSIONS = (
    TagDimension.COMPOSITION,
    TagDimension.STYLE,
    TagDimension.BRUSHSTROKE,
    TagDimension.COLOR_TONE,
)


class DesignSpaceError(Exception):
    pass


# -- concept normalization --

@dataclass(frozen=True)
class ConceptNormalizationRules:
    denylist: frozenset[str]  # casefolded full-string matches to drop
    embellishment_prefixes: tuple[str, ...]  # stripped in order, repeatedly
    conjunctions: tuple[str, ...]  # split tokens ("and" splits on word boundary)

    def __post_init__(self) -> None:
        for name, values in (
            ("denylist", self.denylist),
            ("embellishment_prefixes", self.embellishment_prefixes),
            ("conjunctions", self.conjunctions),
        ):
            if not values:
                raise DesignSpaceError(f"normalization rules: {name} must be non-empty")
            for v in values:
                if not v or v != v.strip():
                    raise DesignSpaceError(f"normalization rules: {name} entry {v!r} must be trimmed and non-empty")


DEFAULT_RULES = ConceptNormalizationRules(
    denylist=frozenset({"cultural connotation", "background"}),
    embellishment_prefixes=("It expresses", "It represents"),
    conjunctions=("and", "和"),
)


def load_rules(path: str | Path) -> ConceptNormalizationRules:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return ConceptNormalizationRules(
        denylist=frozenset(data["denylist"]),
        embellishment_prefixes=tuple(data["embellishment_prefixes"]),
        conjunctions=tuple(data["conjunctions"]),
    )


def save_rules(rules: ConceptNormalizationRules, path: str | Path) -> None:
    doc = {
        "denylist": sorted(rules.denylist),
        "embellishment_prefixes": list(rules.embellishment_prefixes),
        "conjunctions": list(rules.conjunctions),
    }
    Path(path).write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def _split_pattern(conjunctions: Sequence[str]) -> re.Pattern:
    parts = []
    for token in conjunctions:
        escaped = re.escape(token)
        if re.fullmatch(r"[A-Za-z]+", token):
            parts.append(rf"\b{escaped}\b")
        else:
            parts.append(escaped)
    return re.compile("|".join(parts), re.IGNORECASE)


def _normalize_pass(concepts: Sequence[str], rules: ConceptNormalizationRules) -> list[str]:
    denylist = {d.casefold() for d in rules.denylist}
    splitter = _split_pattern(rules.conjunctions)
    out: list[str] = []
    for raw in concepts:
        concept = raw.strip()
        if not concept or concept.casefold() in denylist:
            continue
        # strip embellishment prefixes ("It expresses ...") until stable
        stripped = True
        while stripped:
            stripped = False
            for prefix in rules.embellishment_prefixes:
                low = concept.casefold()
                p = prefix.casefold()
                if low.startswith(p) and (len(concept) == len(prefix) or not concept[len(prefix)].isalnum()):
                    concept = concept[len(prefix):].strip(" ,:;-")
                    stripped = True
        if not concept or concept.casefold() in denylist:
            continue
        for part in splitter.split(concept):
            part = part.strip(" ,:;-")
            if part:
                out.append(part)
    seen: set[str] = set()
    deduped = []
    for c in out:
        if c not in seen:
            seen.add(c)
            deduped.append(c)
    return deduped


def normalize_concepts(
    raw: Sequence[str], rules: ConceptNormalizationRules = DEFAULT_RULES
) -> list[str]:
    """Denylist filtering, embellishment stripping, conjunction splitting,
    trimming, and deduplication, applied to a fixed point so the result is
    idempotent. Surviving-concept order is preserved."""
    current = list(raw)
    for _ in range(32):
        nxt = _normalize_pass(current, rules)
        if nxt == current:
            return nxt
        current = nxt
    raise DesignSpaceError("concept normalization did not reach a fixed point")


# -- embeddings --

class ConceptEmbedder:
    """Embeds concept strings through a pluggable endpoint, caching by
    concept so repeats cost a single external call. Rows are L2-normalized."""

    def __init__(
        self,
        client: EmbeddingClient,
        log: TranscriptLog,
        endpoint_id: str = "embedding",
        policy: RetryPolicy | None = None,
    ):
        self._client = client
        self._log = log
        self._endpoint_id = endpoint_id
        self._policy = policy
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, concepts: Sequence[str]) -> np.ndarray:
        if not concepts:
            raise DesignSpaceError("cannot embed an empty concept list")
        uncached: list[str] = []
        for c in concepts:
            if c not in self._cache and c not in uncached:
                uncached.append(c)
        if uncached:
            vectors = call_embedding(self._client, self._log, self._endpoint_id, uncached, self._policy)
            if len(vectors) != len(uncached):
                raise DesignSpaceError(
                    f"endpoint returned {len(vectors)} vectors for {len(uncached)} inputs"
                )
            for text, vec in zip(uncached, vectors):
                arr = np.asarray(vec, dtype=np.float64)
                norm = float(np.linalg.norm(arr))
                if not np.isfinite(norm) or norm == 0.0:
                    raise DesignSpaceError(f"degenerate embedding for {text!r}")
                self._cache[text] = arr / norm
        return np.vstack([self._cache[c] for c in concepts])


# -- k-means and the elbow rule --

# below this many candidate assignments the optimum is found by enumeration:
# Lloyd restarts demonstrably miss global optima on tiny point sets, and the
# acceptance contract requires oracle-exact answers there
_EXACT_ENUMERATION_LIMIT = 100_000


def kmeans(
    points: np.ndarray, k: int, seed: int = 0, restarts: int = 10, max_iter: int = 300
) -> tuple[np.ndarray, np.ndarray, float]:
    """Best-of-`restarts` Lloyd iterations (k-means++ seeding, assignment
    stability or max_iter, empty clusters re-seeded to the farthest point).
    Tiny inputs (k**n small) are solved exactly by partition enumeration,
    where seeding and restarts are irrelevant."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DesignSpaceError("points must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(pts)):
        raise DesignSpaceError("points contain NaN/Inf")
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise DesignSpaceError(f"k must be in [1, {n}], got {k}")
    if k**n <= _EXACT_ENUMERATION_LIMIT:
        return _exact_kmeans(pts, k)
    best: tuple[np.ndarray, np.ndarray, float] | None = None
    for restart in range(max(1, restarts)):
        rng = np.random.default_rng([seed, restart])
        assign, centroids, wcss = _lloyd_once(pts, k, rng, max_iter)
        if best is None or wcss < best[2]:
            best = (assign, centroids, wcss)
    return best


def _exact_kmeans(pts: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, float]:
    import itertools

    n = pts.shape[0]
    best_wcss = np.inf
    best_assign: np.ndarray | None = None
    # point 0 pinned to cluster 0 to skip label permutations
    for rest in itertools.product(range(k), repeat=n - 1):
        assign = np.array((0,) + rest)
        if len(set(assign)) != k:
            continue
        wcss = 0.0
        for c in range(k):
            members = pts[assign == c]
            wcss += float(((members - members.mean(axis=0)) ** 2).sum())
            if wcss >= best_wcss:
                break
        if wcss < best_wcss:
            best_wcss = wcss
            best_assign = assign
    assert best_assign is not None
    centroids = np.vstack([pts[best_assign == c].mean(axis=0) for c in range(k)])
    return best_assign, centroids, float(best_wcss)


def _dsquared_init(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial centroids by squared distance."""
    n = pts.shape[0]
    centroids = [pts[int(rng.integers(n))]]
    for _ in range(k - 1):
        d2 = np.min(
            ((pts[:, None, :] - np.asarray(centroids)[None, :, :]) ** 2).sum(axis=2), axis=1
        )
        total = float(d2.sum())
        if total == 0.0:
            centroids.append(pts[int(rng.integers(n))])
            continue
        centroids.append(pts[int(rng.choice(n, p=d2 / total))])
    return np.asarray(centroids, dtype=np.float64).copy()


def _lloyd_once(pts: np.ndarray, k: int, rng: np.random.Generator, max_iter: int):
    n = pts.shape[0]
    centroids = _dsquared_init(pts, k, rng)
    assign: np.ndarray | None = None
    prev_wcss = np.inf
    for _ in range(max_iter):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)
        own = d2[np.arange(n), new_assign].copy()
        for c in range(k):
            if not np.any(new_assign == c):
                far = int(np.argmax(own))
                new_assign[far] = c
                own[far] = -1.0  # a stolen point cannot be stolen again
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        centroids = np.vstack([pts[assign == c].mean(axis=0) for c in range(k)])
        if __debug__:
            wcss_now = _wcss(pts, centroids, assign)
            assert wcss_now <= prev_wcss + 1e-9, "Lloyd iteration increased WCSS"
            prev_wcss = wcss_now
    assert assign is not None
    return assign, centroids, _wcss(pts, centroids, assign)


def _wcss(pts: np.ndarray, centroids: np.ndarray, assign: np.ndarray) -> float:
    return float(((pts - centroids[assign]) ** 2).sum())


def choose_k(
    points: np.ndarray,
    k_range: Sequence[int],
    seed: int = 0,
    restarts: int = 10,
) -> tuple[int, list[tuple[int, float]]]:
    """Elbow rule: the k maximizing the discrete second difference of the
    WCSS curve. Returns (chosen k, full curve) so a human can override."""
    pts = np.asarray(points, dtype=np.float64)
    ks = sorted(set(int(k) for k in k_range))
    if len(ks) < 3:
        raise DesignSpaceError("k_range must contain at least 3 candidate values")
    n = pts.shape[0] if pts.ndim == 2 else 0
    if ks[0] < 1 or ks[-1] > n:
        raise DesignSpaceError(f"k_range must lie within [1, {n}]")
    if float(np.var(pts, axis=0).sum()) == 0.0:
        raise DesignSpaceError("no elbow: zero variance")
    curve = [(k, kmeans(pts, k, seed=seed, restarts=restarts)[2]) for k in ks]
    best_k = None
    best_curvature = -np.inf
    for i in range(1, len(curve) - 1):
        curvature = curve[i - 1][1] - 2 * curve[i][1] + curve[i + 1][1]
        if curvature > best_curvature + 1e-12:
            best_curvature = curvature
            best_k = curve[i][0]
    assert best_k is not None
    return best_k, curve


# -- clusters and the catalog --

@dataclass(frozen=True)
class ConceptCluster:
    label: str
    members: tuple[str, ...]
    dimension: TagDimension

    def __post_init__(self) -> None:
        if not self.label:
            raise DesignSpaceError("cluster label must be non-empty")
        if not self.members:
            raise DesignSpaceError(f"cluster {self.label!r} has no members")
        if len(set(self.members)) != len(self.members):
            raise DesignSpaceError(f"cluster {self.label!r} has duplicate members")


@dataclass(frozen=True)
class CatalogCategory:
    label: str
    concepts: tuple[str, ...]
    concept_count: int
    painting_count: int


@dataclass(frozen=True)
class DesignSpaceCatalog:
    clustered: Mapping[TagDimension, tuple[CatalogCategory, ...]]
    flat: Mapping[TagDimension, tuple[str, ...]]
    flat_counts: Mapping[TagDimension, int]

    def concepts_for(self, dimension: TagDimension) -> tuple[str, ...]:
        if dimension in self.clustered:
            return tuple(c for cat in self.clustered[dimension] for c in cat.concepts)
        return self.flat.get(dimension, ())


def _check_cluster_partition(clusters: Sequence[ConceptCluster]) -> dict[TagDimension, list[ConceptCluster]]:
    by_dim: dict[TagDimension, list[ConceptCluster]] = {}
    for cluster in clusters:
        if cluster.dimension not in CLUSTERED_DIMENSIONS:
            raise DesignSpaceError(
                f"dimension {cluster.dimension.value} is flat and cannot carry clusters"
            )
        by_dim.setdefault(cluster.dimension, []).append(cluster)
    for dim, group in by_dim.items():
        labels = [c.label for c in group]
        if len(set(labels)) != len(labels):
            raise DesignSpaceError(f"duplicate cluster label in {dim.value}")
        seen: dict[str, str] = {}
        for cluster in group:
            for concept in cluster.members:
                if concept in seen:
                    raise DesignSpaceError(
                        f"concept {concept!r} assigned to clusters {seen[concept]!r} and {cluster.label!r} in {dim.value}"
                    )
                seen[concept] = cluster.label
    return by_dim


def build_catalog(
    snapshot: CorpusSnapshot,
    clusters: Sequence[ConceptCluster],
    rules: ConceptNormalizationRules | None = None,
) -> DesignSpaceCatalog:
    """Count concepts and paintings per category. painting_count is the
    number of records whose tags (normalized when rules are given) include
    at least one member concept; a record counts once per category."""
    by_dim = _check_cluster_partition(clusters)

    def record_concepts(record, dim: TagDimension) -> set[str]:
        concepts = [t.concept for t in record.annotations.tags_for(dim)]
        if rules is not None:
            concepts = normalize_concepts(concepts, rules)
        return set(concepts)

    clustered: dict[TagDimension, tuple[CatalogCategory, ...]] = {}
    for dim, group in by_dim.items():
        categories = []
        for cluster in group:
            members = set(cluster.members)
            count = sum(1 for rec in snapshot if record_concepts(rec, dim) & members)
            categories.append(
                CatalogCategory(
                    label=cluster.label,
                    concepts=cluster.members,
                    concept_count=len(cluster.members),
                    painting_count=count,
                )
            )
        clustered[dim] = tuple(categories)

    flat: dict[TagDimension, tuple[str, ...]] = {}
    flat_counts: dict[TagDimension, int] = {}
    for dim in FLAT_DIMENSIONS:
        distinct: set[str] = set()
        for rec in snapshot:
            distinct |= record_concepts(rec, dim)
        flat[dim] = tuple(sorted(distinct))
        flat_counts[dim] = len(distinct)
    return DesignSpaceCatalog(clustered=clustered, flat=flat, flat_counts=flat_counts)


def catalog_to_doc(catalog: DesignSpaceCatalog) -> dict:
    doc: dict = {"dimensions": {}}
    for dim, categories in catalog.clustered.items():
        doc["dimensions"][dim.value] = {
            "categories": [
                {
                    "label": cat.label,
                    "concepts": list(cat.concepts),
                    "concept_count": cat.concept_count,
                    "painting_count": cat.painting_count,
                }
                for cat in categories
            ]
        }
    for dim, concepts in catalog.flat.items():
        doc["dimensions"][dim.value] = {
            "concepts": list(concepts),
            "concept_count": catalog.flat_counts.get(dim, len(concepts)),
        }
    return doc


def save_catalog(catalog: DesignSpaceCatalog, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(catalog_to_doc(catalog), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def load_catalog(path: str | Path) -> DesignSpaceCatalog:
    """Load a catalog file. Stored counts are preserved as-is: reference
    catalogs may carry counts for concept lists they do not enumerate."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    clustered: dict[TagDimension, tuple[CatalogCategory, ...]] = {}
    flat: dict[TagDimension, tuple[str, ...]] = {}
    flat_counts: dict[TagDimension, int] = {}
    for key, entry in data.get("dimensions", {}).items():
        dim = TagDimension(key)
        if "categories" in entry:
            clustered[dim] = tuple(
                CatalogCategory(
                    label=cat["label"],
                    concepts=tuple(cat.get("concepts", ())),
                    concept_count=int(cat["concept_count"]),
                    painting_count=int(cat["painting_count"]),
                )
                for cat in entry["categories"]
            )
        else:
            flat[dim] = tuple(entry.get("concepts", ()))
            flat_counts[dim] = int(entry["concept_count"])
    return DesignSpaceCatalog(clustered=clustered, flat=flat, flat_counts=flat_counts)


# -- manual cluster curation --

@dataclass(frozen=True)
class MergeClusters:
    first: str
    second: str
    new_label: str | None = None


@dataclass(frozen=True)
class SplitCluster:
    label: str
    subset: tuple[str, ...]
    new_label: str


@dataclass(frozen=True)
class MoveConcept:
    concept: str
    from_label: str
    to_label: str


ClusterEdit = MergeClusters | SplitCluster | MoveConcept


def apply_cluster_edits(
    clusters: Sequence[ConceptCluster], edits: Sequence[ClusterEdit]
) -> tuple[list[ConceptCluster], list[str]]:
    """Apply merge/split/move commands to one dimension's clusters.

    Returns the edited clusters and a provenance log, one line per edit.
    A move that empties its source cluster drops that cluster.
    """
    dims = {c.dimension for c in clusters}
    if len(dims) > 1:
        raise DesignSpaceError("edits operate on a single dimension's clusters")
    work: dict[str, list[str]] = {c.label: list(c.members) for c in clusters}
    if len(work) != len(clusters):
        raise DesignSpaceError("duplicate cluster labels")
    dimension = next(iter(dims)) if dims else TagDimension.CULTURAL_SYMBOL
    log: list[str] = []

    for edit in edits:
        if isinstance(edit, MergeClusters):
            if edit.first not in work or edit.second not in work:
                raise DesignSpaceError(f"merge: unknown cluster {edit.first!r} or {edit.second!r}")
            if edit.first == edit.second:
                raise DesignSpaceError("merge: clusters must differ")
            label = edit.new_label or edit.first
            others = set(work) - {edit.first, edit.second}
            if label in others:
                raise DesignSpaceError(f"merge: label {label!r} already in use")
            merged = work.pop(edit.first) + work.pop(edit.second)
            work[label] = merged
            log.append(f"merge {edit.first!r} + {edit.second!r} -> {label!r}")
        elif isinstance(edit, SplitCluster):
            if edit.label not in work:
                raise DesignSpaceError(f"split: unknown cluster {edit.label!r}")
            if edit.new_label in work:
                raise DesignSpaceError(f"split: label {edit.new_label!r} already in use")
            members = work[edit.label]
            subset = list(edit.subset)
            unknown = [c for c in subset if c not in members]
            if unknown:
                raise DesignSpaceError(f"split: concepts {unknown!r} not in {edit.label!r}")
            if not subset or len(subset) == len(members):
                raise DesignSpaceError("split: subset must be a non-empty proper subset")
            work[edit.label] = [c for c in members if c not in set(subset)]
            work[edit.new_label] = [c for c in members if c in set(subset)]
            log.append(f"split {edit.label!r} -> {edit.label!r} + {edit.new_label!r}")
        elif isinstance(edit, MoveConcept):
            if edit.from_label not in work or edit.to_label not in work:
                raise DesignSpaceError(
                    f"move: unknown cluster {edit.from_label!r} or {edit.to_label!r}"
                )
            if edit.concept not in work[edit.from_label]:
                raise DesignSpaceError(
                    f"move: concept {edit.concept!r} not in cluster {edit.from_label!r}"
                )
            work[edit.from_label].remove(edit.concept)
            work[edit.to_label].append(edit.concept)
            log.append(f"move {edit.concept!r}: {edit.from_label!r} -> {edit.to_label!r}")
            if not work[edit.from_label]:
                del work[edit.from_label]
                log.append(f"drop emptied cluster {edit.from_label!r}")
        else:
            raise DesignSpaceError(f"unknown edit type {type(edit).__name__}")

    result = [
        ConceptCluster(label=label, members=tuple(members), dimension=dimension)
        for label, members in work.items()
    ]
    return result, log
