import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inkatlas.corpus import (
    AnnotationSet,
    CorpusError,
    CorpusStore,
    PaintingRecord,
    PaintingType,
    SchemaError,
    Tag,
    TagDimension,
    ingest_corpus,
    record_from_wire,
    validate_annotation,
)


def write_corpus(path, docs):
    path.write_text("\n".join(json.dumps(d, ensure_ascii=False) for d in docs) + "\n")


def doc(rec_id, ptype=None, tags=None, image=None, **extra):
    base = {
        "id": rec_id,
        "image": image or f"images/{rec_id}.jpg",
        "type": ptype,
        "tags": tags or {},
        "source": "fixture",
    }
    base.update(extra)
    return base


class TestIngest:
    def test_counts_by_type(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_corpus(
            path,
            [doc("a", "xieyi"), doc("b", "xieyi"), doc("c", "gongbi")],
        )
        store = CorpusStore()
        stats = ingest_corpus(store, path)
        assert stats.total == 3
        assert stats.per_type[PaintingType.XIEYI] == 2
        assert stats.per_type[PaintingType.GONGBI] == 1
        assert sum(stats.per_type.values()) == stats.total

    def test_empty_file_is_an_error(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(CorpusError, match="zero valid records"):
            CorpusStore().ingest_file(path)

    def test_unreadable_file_is_an_error(self, tmp_path):
        with pytest.raises(CorpusError, match="cannot read"):
            CorpusStore().ingest_file(tmp_path / "missing.jsonl")

    def test_malformed_lines_skipped_and_reported(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text(
            "\n".join(
                [
                    json.dumps(doc("ok1")),
                    "{not json",
                    json.dumps({"id": "", "image": "x.jpg"}),
                    json.dumps(doc("ok2")),
                    json.dumps(doc("ok1")),  # duplicate id
                ]
            )
        )
        report = CorpusStore().ingest_file(path)
        assert report.stats.total == 2
        assert [lineno for lineno, _ in report.errors] == [2, 3, 5]
        assert "duplicate id" in report.errors[2][1]

    def test_thousand_record_fixture_matches_line_count_oracle(self, tmp_path):
        rng = random.Random(1000)
        docs = []
        for i in range(1000):
            ptype = rng.choice(["gongbi", "xieyi", None])
            tags = {"cultural_symbol": [f"sym{rng.randint(0, 50)}"]} if rng.random() < 0.8 else {}
            docs.append(doc(f"rec{i:04d}", ptype, tags))
        path = tmp_path / "big.jsonl"
        write_corpus(path, docs)
        stats = ingest_corpus(CorpusStore(), path)

        # independent line-by-line recount, straight off the file text
        lines = [json.loads(l) for l in path.read_text().splitlines() if l.strip()]
        assert stats.total == len(lines)
        for ptype, key in [(PaintingType.GONGBI, "gongbi"), (PaintingType.XIEYI, "xieyi")]:
            assert stats.per_type[ptype] == sum(1 for l in lines if l["type"] == key)
        assert stats.per_type[PaintingType.UNKNOWN] == sum(1 for l in lines if l["type"] is None)
        tagged = sum(1 for l in lines if l["tags"].get("cultural_symbol"))
        assert stats.per_dimension_tagged[TagDimension.CULTURAL_SYMBOL] == tagged

    def test_export_ingest_round_trip(self, tmp_path):
        src = tmp_path / "src.jsonl"
        write_corpus(
            src,
            [
                doc("a", "gongbi", {"cultural_symbol": [{"name": "deer", "description": "auspicious"}]}),
                doc("b", "xieyi", {"emotion": ["tranquility", "freedom"]}, description="a quiet scene"),
                doc("c", None, {"color_tone": ["black ink"]}),
            ],
        )
        store = CorpusStore()
        store.ingest_file(src)
        out = tmp_path / "out.jsonl"
        store.export_file(out)
        reloaded = CorpusStore()
        reloaded.ingest_file(out)
        assert set(reloaded.snapshot().ids()) == set(store.snapshot().ids())
        for rec in store.snapshot():
            assert reloaded.snapshot().get(rec.id) == rec


records_strategy = st.lists(
    st.builds(
        lambda rid, ptype, concepts: PaintingRecord(
            id=rid,
            image_ref=f"img/{rid}.jpg",
            painting_type=ptype,
            annotations=AnnotationSet(
                {
                    TagDimension.EMOTION: tuple(
                        Tag(TagDimension.EMOTION, c) for c in sorted(set(concepts))
                    )
                }
            ),
            source="hyp",
        ),
        st.uuids().map(lambda u: u.hex),
        st.sampled_from(list(PaintingType)),
        st.lists(st.text(alphabet="abcdefg", min_size=1, max_size=5), max_size=4),
    ),
    min_size=1,
    max_size=20,
    unique_by=lambda r: r.id,
)


class TestProperties:
    @given(records_strategy)
    @settings(max_examples=40, deadline=None)
    def test_ingest_export_is_identity_on_record_sets(self, records):
        import tempfile
        from pathlib import Path

        store = CorpusStore()
        store.add_records(records)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "corpus.jsonl"
            store.export_file(path)
            reloaded = CorpusStore()
            reloaded.ingest_file(path)
        assert {r.id: r for r in reloaded.snapshot()} == {r.id: r for r in store.snapshot()}

    @given(records_strategy)
    @settings(max_examples=30, deadline=None)
    def test_total_equals_distinct_ids(self, records):
        store = CorpusStore()
        store.add_records(records)
        assert store.stats().total == len({r.id for r in records})


class TestValidateAnnotation:
    def test_full_schema_document(self):
        raw = {
            "cultural_symbol": [
                {"name": "Plum blossoms", "description": "resilience in adversity"},
                "Distant mountains",
            ],
            "emotion": ["tranquility"],
            "composition": ["diagonal composition"],
            "style": ["gongbi flower-and-bird"],
            "brushstroke": ["fine line drawing"],
            "color_tone": ["light ochre"],
        }
        result = validate_annotation(raw)
        symbols = result.tags_for(TagDimension.CULTURAL_SYMBOL)
        assert [t.concept for t in symbols] == ["Plum blossoms", "Distant mountains"]
        assert symbols[0].explanation == "resilience in adversity"
        assert result.concepts(TagDimension.EMOTION) == ("tranquility",)
        assert result.concepts(TagDimension.STYLE) == ("gongbi flower-and-bird",)
        assert len(result.all_tags()) == 7

    def test_all_empty_lists(self):
        raw = {dim.value: [] for dim in TagDimension}
        result = validate_annotation(raw)
        assert result.is_empty()

    def test_duplicate_concepts_deduplicated(self):
        raw = {"cultural_symbol": ["lotus", "lotus"]}
        result = validate_annotation(raw)
        assert result.concepts(TagDimension.CULTURAL_SYMBOL) == ("lotus",)

    def test_no_dimension_keys_is_a_schema_error(self):
        with pytest.raises(SchemaError, match="no dimension keys"):
            validate_annotation({"foo": []})

    def test_wrong_shape_names_the_key(self):
        with pytest.raises(SchemaError, match="'emotion'"):
            validate_annotation({"emotion": "tranquility"})

    def test_unknown_keys_ignored_with_warning(self, caplog):
        import logging

        with caplog.at_level(logging.WARNING, logger="inkatlas.corpus"):
            result = validate_annotation({"emotion": ["calm"], "mood": ["x"]})
        assert result.concepts(TagDimension.EMOTION) == ("calm",)
        assert any("mood" in message for message in caplog.messages)

    def test_whitespace_concepts_trimmed_or_dropped(self):
        result = validate_annotation({"emotion": ["  calm  ", "   "]})
        assert result.concepts(TagDimension.EMOTION) == ("calm",)


class TestTypes:
    def test_tag_rejects_untrimmed_or_empty(self):
        with pytest.raises(ValueError):
            Tag(TagDimension.EMOTION, " calm")
        with pytest.raises(ValueError):
            Tag(TagDimension.EMOTION, "")

    def test_annotation_set_rejects_mismatched_dimension(self):
        with pytest.raises(ValueError, match="dimension"):
            AnnotationSet({TagDimension.EMOTION: (Tag(TagDimension.STYLE, "x"),)})

    def test_annotation_set_rejects_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            AnnotationSet(
                {TagDimension.EMOTION: (Tag(TagDimension.EMOTION, "x"), Tag(TagDimension.EMOTION, "x"))}
            )

    def test_record_requires_image_ref(self):
        with pytest.raises(ValueError, match="image_ref"):
            PaintingRecord(id="a", image_ref="")

    def test_unknown_type_only_before_classification(self):
        rec = record_from_wire(doc("a"))
        assert rec.painting_type is PaintingType.UNKNOWN
        store = CorpusStore()
        store.add_records([rec])
        updated = store.set_painting_type("a", PaintingType.GONGBI)
        assert updated.painting_type is PaintingType.GONGBI
        assert store.snapshot().get("a").painting_type is PaintingType.GONGBI

    def test_snapshot_isolation(self):
        store = CorpusStore()
        store.add_records([record_from_wire(doc("a"))])
        before = store.snapshot()
        store.add_records([record_from_wire(doc("b"))])
        assert len(before) == 1
        assert len(store.snapshot()) == 2
        assert store.snapshot().version > before.version

    def test_merged_with_prefers_first(self):
        first = AnnotationSet({TagDimension.STYLE: (Tag(TagDimension.STYLE, "a"),)})
        second = AnnotationSet(
            {TagDimension.STYLE: (Tag(TagDimension.STYLE, "a"), Tag(TagDimension.STYLE, "b"))}
        )
        merged = first.merged_with(second)
        assert merged.concepts(TagDimension.STYLE) == ("a", "b")
