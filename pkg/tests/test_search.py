import random

import pytest

from inkatlas.clients import OnlineResult
from inkatlas.corpus import (
    AnnotationSet,
    CorpusStore,
    PaintingRecord,
    PaintingType,
    Tag,
    TagDimension,
)
from inkatlas.search import (
    SearchError,
    SearchHit,
    SearchMode,
    SearchQuery,
    build_index,
    normalize_concept,
    search,
    tag_lookup,
    tokenize,
)


def make_record(rec_id, tags_by_dim=None, description=None, ptype=PaintingType.UNKNOWN):
    by_dim = {
        dim: tuple(Tag(dim, c) for c in concepts)
        for dim, concepts in (tags_by_dim or {}).items()
    }
    return PaintingRecord(
        id=rec_id,
        image_ref=f"img/{rec_id}.jpg",
        painting_type=ptype,
        annotations=AnnotationSet(by_dim),
        description=description,
    )


def index_of(records):
    store = CorpusStore()
    store.add_records(records)
    return build_index(store.snapshot()), store.snapshot()


def oracle_search(records, query):
    """Brute-force rescoring straight off the records, no index."""
    norm_q = normalize_concept(query.text)
    q_tokens = set(tokenize(query.text))
    hits = []
    for rec in records:
        if query.type_filter is not None and rec.painting_type is not query.type_filter:
            continue
        exact = 0
        rec_tokens = set()
        for dim in TagDimension:
            if query.dimension_filter is not None and dim is not query.dimension_filter:
                continue
            for tag in rec.annotations.tags_for(dim):
                if normalize_concept(tag.concept) == norm_q:
                    exact += 1
                rec_tokens |= set(tokenize(tag.concept))
        if query.dimension_filter is None and rec.description:
            rec_tokens |= set(tokenize(rec.description))
        score = 3 * exact + len(q_tokens & rec_tokens)
        if score > 0:
            hits.append((rec.id, score))
    hits.sort(key=lambda h: (-h[1], h[0]))
    return hits[: query.limit]


class TestTokenize:
    def test_ascii_words_lowercased_and_split(self):
        assert tokenize("Nine-Colored Deer") == ["nine", "colored", "deer"]

    def test_cjk_whole_run_plus_bigrams(self):
        assert tokenize("鹿") == ["鹿"]
        assert tokenize("山水画") == [
            "山水画",
            "山水",
            "水画",
        ]

    def test_mixed_script(self):
        tokens = tokenize("ink山水 style")
        assert "ink" in tokens and "山水" in tokens and "style" in tokens


class TestSearch:
    def test_exact_tag_outranks_token_match(self):
        records = [
            make_record("partial", {TagDimension.CULTURAL_SYMBOL: ["Nine-Colored Deer"]}),
            make_record("exact", {TagDimension.CULTURAL_SYMBOL: ["deer"]}),
        ]
        index, _ = index_of(records)
        hits = search(index, SearchQuery(text="deer"))
        assert [h.record_id for h in hits] == ["exact", "partial"]
        assert hits[0].score == 4.0  # 3 exact + 1 token
        assert hits[1].score == 1.0

    def test_single_tag_token_posting(self):
        records = [make_record("r1", {TagDimension.CULTURAL_SYMBOL: ["deer"]})]
        index, _ = index_of(records)
        hits = search(index, SearchQuery(text="deer"))
        assert hits[0].record_id == "r1"
        assert ("cultural_symbol", "deer") in hits[0].matched_fields

    def test_dimension_filter_excludes_cross_dimension_matches(self):
        records = [
            make_record("emotion-hit", {TagDimension.EMOTION: ["loneliness"]}),
            make_record("symbol-only", {TagDimension.CULTURAL_SYMBOL: ["loneliness"]}),
            make_record(
                "description-only",
                {TagDimension.STYLE: ["dry landscape"]},
                description="a scene of loneliness",
            ),
        ]
        index, _ = index_of(records)
        hits = search(
            index, SearchQuery(text="loneliness", dimension_filter=TagDimension.EMOTION)
        )
        assert [h.record_id for h in hits] == ["emotion-hit"]

    def test_type_filter(self):
        records = [
            make_record("g", {TagDimension.EMOTION: ["calm"]}, ptype=PaintingType.GONGBI),
            make_record("x", {TagDimension.EMOTION: ["calm"]}, ptype=PaintingType.XIEYI),
        ]
        index, _ = index_of(records)
        hits = search(index, SearchQuery(text="calm", type_filter=PaintingType.XIEYI))
        assert [h.record_id for h in hits] == ["x"]

    def test_description_matches(self):
        records = [make_record("r1", description="mist over distant mountains")]
        index, _ = index_of(records)
        hits = search(index, SearchQuery(text="mountains"))
        assert hits[0].record_id == "r1"
        assert ("description", "mountains") in hits[0].matched_fields

    def test_empty_corpus_empty_hits(self):
        index, _ = index_of([])
        # build over a store with no records: snapshot has no postings
        assert search(index, SearchQuery(text="anything")) == []

    def test_empty_query_is_an_error(self):
        index, _ = index_of([make_record("r1", {TagDimension.EMOTION: ["x"]})])
        with pytest.raises(SearchError, match="non-empty"):
            search(index, SearchQuery(text="   "))

    def test_limit_is_validated(self):
        with pytest.raises(SearchError):
            SearchQuery(text="x", limit=0)

    def test_cjk_query_matches_bigrams(self):
        records = [make_record("r1", {TagDimension.CULTURAL_SYMBOL: ["九色鹿"]})]
        index, _ = index_of(records)
        hits = search(index, SearchQuery(text="色鹿"))
        assert hits and hits[0].record_id == "r1"

    def test_deterministic(self):
        records = [
            make_record(f"r{i}", {TagDimension.EMOTION: ["calm", f"mood{i}"]}) for i in range(20)
        ]
        index, _ = index_of(records)
        q = SearchQuery(text="calm")
        assert search(index, q) == search(index, q)


def _empty_index():
    store = CorpusStore()
    return build_index(store.snapshot())


@pytest.fixture(scope="module")
def big_corpus():
    rng = random.Random(424242)
    english = ["deer", "pine", "lotus", "stream", "mountain", "crane", "bridge",
               "moon", "plum blossom", "goldfish", "tranquility", "freedom",
               "loneliness", "vitality", "thick ink", "fine line", "blue-green landscape",
               "dry landscape", "black ink", "malachite green", "peach pink"]
    cjk = ["九色鹿", "山水", "松树", "宁静",
           "自由", "水墨", "工笔", "写意"]
    pool = english + cjk
    descriptions = [
        "a quiet scene with mist over the river",
        "deer grazing under ancient pines",
        "bold strokes of black ink 水墨",
        "delicate gongbi detail with malachite green",
        None,
    ]
    records = []
    for i in range(1000):
        tags = {}
        for dim in TagDimension:
            if rng.random() < 0.6:
                tags[dim] = rng.sample(pool, rng.randint(1, 3))
        records.append(
            make_record(
                f"rec{i:04d}",
                tags,
                description=rng.choice(descriptions),
                ptype=rng.choice(list(PaintingType)),
            )
        )
    index, snapshot = index_of(records)
    return records, index


class TestSearchOracle:

    def test_hundred_random_queries_match_linear_scan(self, big_corpus):
        records, index = big_corpus
        rng = random.Random(7)
        query_texts = ["deer", "pine", "ink", "landscape", "plum blossom", "black ink",
                       "九色鹿", "山水", "mist river", "green",
                       "freedom", "tranquility loneliness", "gongbi detail"]
        for _ in range(100):
            query = SearchQuery(
                text=rng.choice(query_texts),
                dimension_filter=rng.choice([None, *TagDimension]),
                type_filter=rng.choice([None, PaintingType.GONGBI, PaintingType.XIEYI]),
                limit=rng.choice([5, 30, 100, 2000]),
            )
            expected = oracle_search(records, query)
            got = [(h.record_id, h.score) for h in search(index, query)]
            assert got == expected, f"query {query} diverged from oracle"

    def test_tag_lookup_matches_membership_scan(self, big_corpus):
        records, index = big_corpus
        rng = random.Random(11)
        for _ in range(30):
            dim = rng.choice(list(TagDimension))
            concept = rng.choice(["deer", "pine", "山水", "thick ink", "unknown-concept"])
            expected = sorted(
                rec.id
                for rec in records
                if concept in {t.concept for t in rec.annotations.tags_for(dim)}
            )
            assert tag_lookup(index, dim, concept) == expected

    def test_every_hit_resolves_in_snapshot(self, big_corpus):
        records, index = big_corpus
        ids = {r.id for r in records}
        hits = search(index, SearchQuery(text="deer", limit=2000))
        assert all(h.record_id in ids for h in hits)


class TestTagLookup:
    def test_exact_membership(self):
        records = [
            make_record("a", {TagDimension.CULTURAL_SYMBOL: ["deer"]}),
            make_record("b", {TagDimension.CULTURAL_SYMBOL: ["deer", "pine"]}),
            make_record("c", {TagDimension.EMOTION: ["deer"]}),
        ]
        index, _ = index_of(records)
        assert tag_lookup(index, TagDimension.CULTURAL_SYMBOL, "deer") == ["a", "b"]

    def test_unknown_concept_empty(self):
        records = [make_record("a", {TagDimension.EMOTION: ["calm"]})]
        index, _ = index_of(records)
        assert tag_lookup(index, TagDimension.EMOTION, "storm") == []

    def test_empty_concept_is_an_error(self):
        records = [make_record("a", {TagDimension.EMOTION: ["calm"]})]
        index, _ = index_of(records)
        with pytest.raises(SearchError):
            tag_lookup(index, TagDimension.EMOTION, "")


class FakeOnlineClient:
    def __init__(self, results):
        self._results = results
        self.queries = []

    def search(self, query, limit):
        self.queries.append((query, limit))
        return self._results[:limit]


class TestOnlineMode:
    def test_online_results_wrapped_with_zero_score(self):
        client = FakeOnlineClient(
            [
                OnlineResult("http://img/2.jpg", "Nine-Colored Deer mural", "http://src/2"),
                OnlineResult("http://img/1.jpg", "Deer in forest", "http://src/1"),
            ]
        )
        hits = search(_empty_index(), SearchQuery(text="deer", mode=SearchMode.ONLINE), client)
        assert all(h.score == 0.0 for h in hits)
        assert [h.record_id for h in hits] == ["http://img/1.jpg", "http://img/2.jpg"]
        assert hits[0].external.source_url == "http://src/1"
        assert client.queries == [("deer", 30)]

    def test_online_without_client_is_an_error(self):
        with pytest.raises(SearchError, match="online"):
            search(_empty_index(), SearchQuery(text="deer", mode=SearchMode.ONLINE))
