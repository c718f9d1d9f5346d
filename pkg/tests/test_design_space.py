import itertools
import json
import random

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from inkatlas.clients import ReplayEmbeddingClient, TranscriptLog
from inkatlas.corpus import (
    AnnotationSet,
    CorpusStore,
    PaintingRecord,
    Tag,
    TagDimension,
)
from inkatlas.design_space import (
    DEFAULT_RULES,
    CatalogCategory,
    ConceptCluster,
    ConceptEmbedder,
    ConceptNormalizationRules,
    DesignSpaceCatalog,
    DesignSpaceError,
    MergeClusters,
    MoveConcept,
    SplitCluster,
    apply_cluster_edits,
    build_catalog,
    choose_k,
    kmeans,
    load_catalog,
    load_rules,
    normalize_concepts,
    save_catalog,
    save_rules,
)


class TestNormalization:
    def test_conjunction_split(self):
        assert normalize_concepts(["vitality and hope"]) == ["vitality", "hope"]

    def test_embellishment_prefix_stripped(self):
        assert normalize_concepts(["It expresses freedom"]) == ["freedom"]
        assert normalize_concepts(["It represents reunion"]) == ["reunion"]

    def test_denylisted_phrases_dropped(self):
        assert normalize_concepts(["cultural connotation", "background"]) == []

    def test_empty_input(self):
        assert normalize_concepts([]) == []

    def test_order_preserved_and_deduplicated(self):
        raw = ["pine", "It expresses pine", "stream and pine", "stream"]
        assert normalize_concepts(raw) == ["pine", "stream"]

    def test_split_parts_reenter_the_pipeline(self):
        # after splitting, parts are stripped and denylisted again
        assert normalize_concepts(["calm and It expresses hope"]) == ["calm", "hope"]
        assert normalize_concepts(["freedom and background"]) == ["freedom"]

    def test_conjunction_not_split_inside_words(self):
        assert normalize_concepts(["sandy shore"]) == ["sandy shore"]

    def test_idempotent_on_fuzzed_lists(self):
        rng = random.Random(2025)
        fragments = [
            "vitality", "hope", "pine tree", "distant mountains", "It expresses",
            "It represents", "cultural connotation", "background", "and", "luck",
            "  spaced  ", "freedom", "harmony and peace", "宁静", "山水和松",
        ]
        for _ in range(1000):
            raw = [
                " ".join(rng.choices(fragments, k=rng.randint(1, 4)))
                for _ in range(rng.randint(0, 6))
            ]
            once = normalize_concepts(raw)
            assert normalize_concepts(once) == once

    def test_rules_file_round_trip(self, tmp_path):
        path = tmp_path / "rules.json"
        save_rules(DEFAULT_RULES, path)
        assert load_rules(path) == DEFAULT_RULES

    def test_rules_must_be_non_empty(self):
        with pytest.raises(DesignSpaceError):
            ConceptNormalizationRules(frozenset(), ("p",), ("and",))


def brute_force_best_partition(pts, k):
    """Exhaustive enumeration of all k-partitions; returns the optimum WCSS."""
    n = len(pts)
    best = float("inf")
    for assign in itertools.product(range(k), repeat=n):
        if len(set(assign)) != k:
            continue
        w = 0.0
        for c in range(k):
            members = pts[[i for i in range(n) if assign[i] == c]]
            w += ((members - members.mean(axis=0)) ** 2).sum()
        best = min(best, w)
    return best


class TestKmeans:
    def test_k_one_is_the_mean(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(0, 2, size=(40, 3))
        assign, centroids, wcss = kmeans(pts, k=1, seed=0, restarts=3)
        assert np.all(assign == 0)
        assert np.allclose(centroids[0], pts.mean(axis=0))
        assert wcss == pytest.approx(np.var(pts, axis=0).sum() * len(pts))

    def test_k_equals_n_is_zero_wcss(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(0, 1, size=(7, 2))
        _, _, wcss = kmeans(pts, k=7, seed=0, restarts=5)
        assert wcss == pytest.approx(0.0, abs=1e-12)

    def test_six_points_two_clusters_match_enumeration_oracle(self):
        pts = np.array([[0.0, 0.0], [0.5, 0.2], [0.1, 0.6], [5.0, 5.0], [5.3, 4.8], [4.9, 5.4]])
        assign, _, wcss = kmeans(pts, k=2, seed=0, restarts=20)
        assert wcss == pytest.approx(brute_force_best_partition(pts, 2), abs=1e-9)
        assert len(set(assign[:3])) == 1 and len(set(assign[3:])) == 1

    def test_small_sets_reach_oracle_optimum(self):
        rng = np.random.default_rng(17)
        for n, k in [(6, 2), (7, 2), (8, 2), (7, 3)]:
            pts = rng.normal(0, 1, size=(n, 2))
            _, _, wcss = kmeans(pts, k=k, seed=5, restarts=32)
            assert wcss == pytest.approx(brute_force_best_partition(pts, k), abs=1e-9)

    def test_invalid_k(self):
        pts = np.zeros((3, 2))
        with pytest.raises(DesignSpaceError):
            kmeans(pts, k=0)
        with pytest.raises(DesignSpaceError):
            kmeans(pts, k=4)

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(0, 1, size=(30, 4))
        a1, c1, w1 = kmeans(pts, k=3, seed=9, restarts=5)
        a2, c2, w2 = kmeans(pts, k=3, seed=9, restarts=5)
        assert np.array_equal(a1, a2) and np.array_equal(c1, c2) and w1 == w2


def three_blobs(seed=11, per_blob=30):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    pts = np.vstack([rng.normal(0, 1, size=(per_blob, 2)) + c for c in centers])
    labels = np.repeat(np.arange(3), per_blob)
    return pts, labels


class TestChooseK:
    def test_elbow_finds_three_blobs(self):
        pts, labels = three_blobs()
        chosen, curve = choose_k(pts, range(1, 9), seed=11)
        assert chosen == 3
        assign, _, _ = kmeans(pts, k=3, seed=11, restarts=10)
        assert adjusted_rand_score(labels, assign) >= 0.9

    def test_curve_is_non_increasing(self):
        pts, _ = three_blobs(seed=4)
        _, curve = choose_k(pts, range(1, 9), seed=2)
        values = [w for _, w in curve]
        for earlier, later in zip(values, values[1:]):
            assert later <= earlier + 1e-9

    def test_identical_points_have_no_elbow(self):
        pts = np.ones((20, 2))
        with pytest.raises(DesignSpaceError, match="zero variance"):
            choose_k(pts, range(1, 6), seed=0)

    def test_needs_three_candidates(self):
        pts, _ = three_blobs()
        with pytest.raises(DesignSpaceError, match="3 candidate"):
            choose_k(pts, [2, 3], seed=0)


def make_record(rec_id, tags_by_dim, image=None):
    by_dim = {}
    for dim, concepts in tags_by_dim.items():
        by_dim[dim] = tuple(Tag(dim, c) for c in concepts)
    return PaintingRecord(
        id=rec_id,
        image_ref=image or f"images/{rec_id}.jpg",
        annotations=AnnotationSet(by_dim),
    )


def snapshot_of(records):
    store = CorpusStore()
    store.add_records(records)
    return store.snapshot()


class TestCatalog:
    def test_painting_count_by_membership(self):
        records = [
            make_record("r1", {TagDimension.CULTURAL_SYMBOL: ["stream", "pine"]}),
            make_record("r2", {TagDimension.CULTURAL_SYMBOL: ["stream"]}),
            make_record("r3", {TagDimension.CULTURAL_SYMBOL: ["lotus"]}),
        ]
        clusters = [
            ConceptCluster("NaturalLandscape", ("stream", "waterfall"), TagDimension.CULTURAL_SYMBOL),
            ConceptCluster("Plants", ("pine", "lotus"), TagDimension.CULTURAL_SYMBOL),
        ]
        catalog = build_catalog(snapshot_of(records), clusters)
        by_label = {c.label: c for c in catalog.clustered[TagDimension.CULTURAL_SYMBOL]}
        assert by_label["NaturalLandscape"].painting_count == 2
        assert by_label["NaturalLandscape"].concept_count == 2
        assert by_label["Plants"].painting_count == 2  # r1 (pine) and r3 (lotus)

    def test_record_with_two_member_concepts_counts_once(self):
        records = [make_record("r1", {TagDimension.CULTURAL_SYMBOL: ["stream", "waterfall"]})]
        clusters = [
            ConceptCluster("NaturalLandscape", ("stream", "waterfall"), TagDimension.CULTURAL_SYMBOL)
        ]
        catalog = build_catalog(snapshot_of(records), clusters)
        assert catalog.clustered[TagDimension.CULTURAL_SYMBOL][0].painting_count == 1

    def test_concept_in_two_clusters_is_an_error(self):
        records = [make_record("r1", {TagDimension.CULTURAL_SYMBOL: ["stream"]})]
        clusters = [
            ConceptCluster("A", ("stream",), TagDimension.CULTURAL_SYMBOL),
            ConceptCluster("B", ("stream", "pine"), TagDimension.CULTURAL_SYMBOL),
        ]
        with pytest.raises(DesignSpaceError, match="assigned to clusters"):
            build_catalog(snapshot_of(records), clusters)

    def test_counts_match_brute_force_recount_on_synthetic_corpus(self):
        rng = random.Random(99)
        symbol_pool = [f"sym{i}" for i in range(30)]
        emotion_pool = [f"emo{i}" for i in range(20)]
        style_pool = [f"style{i}" for i in range(10)]
        records = []
        for i in range(200):
            records.append(
                make_record(
                    f"r{i:03d}",
                    {
                        TagDimension.CULTURAL_SYMBOL: rng.sample(symbol_pool, rng.randint(0, 4)),
                        TagDimension.EMOTION: rng.sample(emotion_pool, rng.randint(0, 3)),
                        TagDimension.STYLE: rng.sample(style_pool, rng.randint(0, 2)),
                    },
                )
            )
        sym_clusters = [
            ConceptCluster(f"S{c}", tuple(symbol_pool[c * 10 : (c + 1) * 10]), TagDimension.CULTURAL_SYMBOL)
            for c in range(3)
        ]
        emo_clusters = [
            ConceptCluster(f"E{c}", tuple(emotion_pool[c * 5 : (c + 1) * 5]), TagDimension.EMOTION)
            for c in range(4)
        ]
        catalog = build_catalog(snapshot_of(records), sym_clusters + emo_clusters)

        # brute-force double-loop recount, straight off the raw records
        for dim, clusters in [
            (TagDimension.CULTURAL_SYMBOL, sym_clusters),
            (TagDimension.EMOTION, emo_clusters),
        ]:
            for cluster, category in zip(clusters, catalog.clustered[dim]):
                expected = 0
                for rec in records:
                    concepts = {t.concept for t in rec.annotations.tags_for(dim)}
                    if any(m in concepts for m in cluster.members):
                        expected += 1
                assert category.painting_count == expected
                assert category.concept_count == len(cluster.members)
        # flat dimension: distinct concept count
        distinct_styles = {
            t.concept for rec in records for t in rec.annotations.tags_for(TagDimension.STYLE)
        }
        assert catalog.flat_counts[TagDimension.STYLE] == len(distinct_styles)
        assert set(catalog.flat[TagDimension.STYLE]) == distinct_styles

    def test_counts_invariant_under_record_order(self):
        records = [
            make_record("a", {TagDimension.CULTURAL_SYMBOL: ["x1", "x2"]}),
            make_record("b", {TagDimension.CULTURAL_SYMBOL: ["x2"]}),
            make_record("c", {TagDimension.STYLE: ["s1"]}),
        ]
        clusters = [ConceptCluster("C", ("x1", "x2"), TagDimension.CULTURAL_SYMBOL)]
        forward = build_catalog(snapshot_of(records), clusters)
        backward = build_catalog(snapshot_of(list(reversed(records))), clusters)
        assert forward == backward

    def test_reference_catalog_round_trip(self, tmp_path):
        # category counts from the published reference table; concept lists
        # are examples only, so stored counts must survive a round trip
        symbol = [
            ("Natural Landscape", 190, 3390),
            ("Plants", 371, 11877),
            ("Human and Life", 693, 7405),
            ("Animals", 211, 6833),
        ]
        emotion = [
            ("Praise for Nature", 757, 8141),
            ("Soul of Human Life", 1186, 11843),
            ("Peaceful Atmosphere", 708, 4284),
            ("Understanding Life", 1387, 8387),
            ("Philosophical Reflection", 865, 4832),
        ]
        catalog = DesignSpaceCatalog(
            clustered={
                TagDimension.CULTURAL_SYMBOL: tuple(
                    CatalogCategory(label, ("example",), count, paintings)
                    for label, count, paintings in symbol
                ),
                TagDimension.EMOTION: tuple(
                    CatalogCategory(label, ("example",), count, paintings)
                    for label, count, paintings in emotion
                ),
            },
            flat={
                TagDimension.STYLE: ("Gongbi flower-and-bird", "Blue-green landscape"),
                TagDimension.COMPOSITION: ("Triangular composition",),
                TagDimension.BRUSHSTROKE: ("Thick ink",),
                TagDimension.COLOR_TONE: ("Malachite green",),
            },
            flat_counts={
                TagDimension.STYLE: 4162,
                TagDimension.COMPOSITION: 145,
                TagDimension.BRUSHSTROKE: 177,
                TagDimension.COLOR_TONE: 816,
            },
        )
        path = tmp_path / "catalog.json"
        save_catalog(catalog, path)
        loaded = load_catalog(path)
        assert loaded == catalog
        sym_counts = [c.concept_count for c in loaded.clustered[TagDimension.CULTURAL_SYMBOL]]
        emo_counts = [c.concept_count for c in loaded.clustered[TagDimension.EMOTION]]
        assert sym_counts == [190, 371, 693, 211]
        assert emo_counts == [757, 1186, 708, 1387, 865]


class TestClusterEdits:
    def base_clusters(self):
        return [
            ConceptCluster("A", ("a1", "a2", "a3"), TagDimension.EMOTION),
            ConceptCluster("B", ("b1", "b2"), TagDimension.EMOTION),
            ConceptCluster("C", ("c1",), TagDimension.EMOTION),
        ]

    def test_merge_concatenates_disjoint_members(self):
        merged, log = apply_cluster_edits(self.base_clusters(), [MergeClusters("A", "B")])
        by_label = {c.label: c for c in merged}
        assert by_label["A"].members == ("a1", "a2", "a3", "b1", "b2")
        assert len(by_label["A"].members) == 5
        assert "B" not in by_label
        assert len(log) == 1

    def test_split_partitions_members(self):
        split, _ = apply_cluster_edits(
            self.base_clusters(), [SplitCluster("A", ("a2",), "A2")]
        )
        by_label = {c.label: c for c in split}
        assert by_label["A"].members == ("a1", "a3")
        assert by_label["A2"].members == ("a2",)

    def test_move_unknown_concept_is_an_error(self):
        with pytest.raises(DesignSpaceError, match="not in cluster"):
            apply_cluster_edits(self.base_clusters(), [MoveConcept("zz", "A", "B")])

    def test_merge_duplicate_label_is_an_error(self):
        with pytest.raises(DesignSpaceError, match="already in use"):
            apply_cluster_edits(self.base_clusters(), [MergeClusters("A", "B", new_label="C")])

    def test_random_edit_sequences_preserve_single_membership(self):
        rng = random.Random(5)
        checked = 0
        for _ in range(200):
            clusters = [
                ConceptCluster(
                    f"K{i}",
                    tuple(f"k{i}c{j}" for j in range(rng.randint(1, 4))),
                    TagDimension.EMOTION,
                )
                for i in range(4)
            ]
            members_of = {c.label: list(c.members) for c in clusters}
            edits = []
            for _ in range(rng.randint(1, 5)):
                labels = list(members_of)
                kind = rng.choice(["merge", "move", "split"])
                if kind == "merge" and len(labels) >= 2:
                    a, b = rng.sample(labels, 2)
                    edits.append(MergeClusters(a, b))
                    members_of[a] = members_of[a] + members_of.pop(b)
                elif kind == "move" and len(labels) >= 2:
                    src, dst = rng.sample(labels, 2)
                    concept = rng.choice(members_of[src])
                    edits.append(MoveConcept(concept, src, dst))
                    members_of[src].remove(concept)
                    members_of[dst].append(concept)
                    if not members_of[src]:
                        del members_of[src]
                elif kind == "split":
                    src = rng.choice(labels)
                    if len(members_of[src]) < 2:
                        continue
                    subset = tuple(rng.sample(members_of[src], len(members_of[src]) - 1))
                    new_label = f"N{checked}_{len(edits)}"
                    edits.append(SplitCluster(src, subset, new_label))
                    members_of[new_label] = [c for c in members_of[src] if c in subset]
                    members_of[src] = [c for c in members_of[src] if c not in subset]
            if not edits:
                continue
            edited, log = apply_cluster_edits(clusters, edits)
            assert len(log) >= len(edits)
            seen = set()
            for cluster in edited:
                assert cluster.members, "empty cluster escaped"
                for concept in cluster.members:
                    assert concept not in seen, "concept in two clusters"
                    seen.add(concept)
            checked += 1
        assert checked >= 100


class TestEmbedder:
    def test_repeats_cost_one_call_and_rows_are_identical(self):
        client = ReplayEmbeddingClient({"freedom": [3.0, 4.0]})
        embedder = ConceptEmbedder(client, TranscriptLog())
        matrix = embedder.embed(["freedom", "freedom"])
        assert client.call_count == 1
        assert np.array_equal(matrix[0], matrix[1])
        assert np.linalg.norm(matrix[0]) == pytest.approx(1.0, abs=1e-6)

    def test_cache_spans_invocations(self):
        client = ReplayEmbeddingClient({"a": [1.0, 0.0], "b": [0.0, 2.0]})
        embedder = ConceptEmbedder(client, TranscriptLog())
        embedder.embed(["a"])
        embedder.embed(["a", "b"])  # only "b" goes out
        assert client.call_count == 2

    def test_replay_fixture_matrix(self, tmp_path):
        rng = np.random.default_rng(8)
        fixture = {f"concept{i}": rng.normal(0, 1, size=8).tolist() for i in range(10)}
        path = tmp_path / "embeddings.json"
        path.write_text(json.dumps(fixture))
        client = ReplayEmbeddingClient.from_file(path)
        embedder = ConceptEmbedder(client, TranscriptLog())
        concepts = sorted(fixture)
        matrix = embedder.embed(concepts)
        for row, concept in zip(matrix, concepts):
            expected = np.asarray(fixture[concept])
            expected = expected / np.linalg.norm(expected)
            assert np.allclose(row, expected, atol=1e-9)
            assert np.linalg.norm(row) == pytest.approx(1.0, abs=1e-6)

    def test_every_external_call_is_transcribed(self):
        log = TranscriptLog()
        client = ReplayEmbeddingClient({"a": [1.0, 0.0]})
        ConceptEmbedder(client, log).embed(["a"])
        assert log.count("embedding") == 1
