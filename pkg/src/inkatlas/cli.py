"""Operational CLI: batch pipeline steps over a DATA_DIR plus `serve`.

Each subcommand is a thin wrapper over the core package; no business
logic lives here.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import classifier as clf
from .annotator import KnowledgeBase, annotate_corpus
from .clients import (
    HttpEmbeddingClient,
    HttpTextModelClient,
    ReplayEmbeddingClient,
    ReplayTextModelClient,
    TranscriptLog,
)
from .corpus import CorpusStore, PaintingType, TagDimension
from .design_space import (
    DEFAULT_RULES,
    ConceptCluster,
    ConceptEmbedder,
    DesignSpaceCatalog,
    build_catalog,
    choose_k,
    kmeans,
    load_catalog,
    load_rules,
    normalize_concepts,
    save_catalog,
    save_rules,
)
from .ideation import GenerationMode, run_eval_batch, save_eval_bundle
from .search import build_index
from .stats import cronbach_alpha, load_rating_sheet, matrix_for_item, paired_t_test, wilcoxon_signed_rank
from .stats import StatsError


@click.group()
@click.option(
    "--data-dir",
    type=click.Path(path_type=Path),
    default=Path("data"),
    envvar="DATA_DIR",
    show_default=True,
    help="Directory holding the corpus, stores, and images.",
)
@click.pass_context
def main(ctx: click.Context, data_dir: Path):
    ctx.ensure_object(dict)
    ctx.obj["data_dir"] = data_dir


def _open_corpus(data_dir: Path) -> CorpusStore:
    store = CorpusStore()
    corpus_file = data_dir / "corpus.jsonl"
    if corpus_file.exists():
        store.ingest_file(corpus_file)
    return store


@main.command()
@click.argument("corpus_file", type=click.Path(exists=True, path_type=Path))
@click.pass_context
def ingest(ctx: click.Context, corpus_file: Path):
    """Load a line-delimited corpus file into DATA_DIR."""
    data_dir: Path = ctx.obj["data_dir"]
    data_dir.mkdir(parents=True, exist_ok=True)
    store = CorpusStore()
    report = store.ingest_file(corpus_file)
    store.export_file(data_dir / "corpus.jsonl")
    stats = report.stats
    click.echo(f"ingested {stats.total} records")
    for ptype, count in stats.per_type.items():
        if count:
            click.echo(f"  {ptype.value}: {count}")
    if report.errors:
        click.echo(f"  skipped {len(report.errors)} malformed lines:", err=True)
        for lineno, reason in report.errors[:20]:
            click.echo(f"    line {lineno}: {reason}", err=True)


@main.group()
def classify():
    """Train or apply the painting-type classification head."""


@classify.command("train")
@click.option("--features", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--labels", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=Path("model.npz"), show_default=True)
@click.option("--ratio", default=0.7, show_default=True, help="Train split fraction.")
@click.option("--seed", default=0, show_default=True)
@click.option("--hidden", default=256, show_default=True)
@click.option("--epochs", default=30, show_default=True)
def classify_train(features: Path, labels: Path, out: Path, ratio: float, seed: int, hidden: int, epochs: int):
    vectors = clf.load_feature_file(features)
    label_map = clf.load_labels_file(labels)
    data = clf.LabeledFeatures.from_vectors(vectors, label_map)
    train_ids, val_ids = clf.split_dataset(data.ids, ratio, seed)
    config = clf.HeadConfig(hidden_width=hidden, epochs=epochs, seed=seed)
    model, val_acc = clf.train_head(data.subset(train_ids), data.subset(val_ids), config)
    clf.save_model(model, out)
    click.echo(f"trained on {len(train_ids)} rows, validated on {len(val_ids)}")
    click.echo(f"validation accuracy: {val_acc:.4f}")
    click.echo(f"model written to {out}")


@classify.command("apply")
@click.option("--features", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--update-corpus/--no-update-corpus", default=True, show_default=True)
@click.pass_context
def classify_apply(ctx: click.Context, features: Path, model_path: Path, update_corpus: bool):
    data_dir: Path = ctx.obj["data_dir"]
    model = clf.load_model(model_path)
    vectors = clf.load_feature_file(features)
    store = _open_corpus(data_dir) if update_corpus else None
    counts = {PaintingType.GONGBI: 0, PaintingType.XIEYI: 0}
    for vector in vectors:
        label, confidence = clf.classify(model, vector)
        counts[label] += 1
        click.echo(f"{vector.record_id},{label.value},{confidence:.4f}")
        if store is not None and vector.record_id in store.snapshot():
            store.set_painting_type(vector.record_id, label)
    if store is not None:
        store.export_file(data_dir / "corpus.jsonl")
    click.echo(
        f"# classified {len(vectors)}: {counts[PaintingType.XIEYI]} xieyi, "
        f"{counts[PaintingType.GONGBI]} gongbi",
        err=True,
    )


@main.command()
@click.option("--kb", "kb_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--workers", default=4, show_default=True)
@click.option("--replay", type=click.Path(exists=True, path_type=Path), default=None,
              help="Replay fixture instead of the live VLM endpoint.")
@click.pass_context
def annotate(ctx: click.Context, kb_path: Path | None, workers: int, replay: Path | None):
    """Annotate corpus records through the vision-language pipeline."""
    data_dir: Path = ctx.obj["data_dir"]
    store = _open_corpus(data_dir)
    if not len(store.snapshot()):
        raise click.ClickException("no corpus in DATA_DIR; run `inkatlas ingest` first")
    kb = KnowledgeBase.load_file(kb_path) if kb_path else KnowledgeBase()
    client = (
        ReplayTextModelClient.from_file(replay) if replay else HttpTextModelClient.from_env()
    )
    log = TranscriptLog(data_dir / "transcripts.jsonl")
    report = annotate_corpus(store, client, kb, log, worker_count=workers)
    store.export_file(data_dir / "corpus.jsonl")
    click.echo(f"annotated {len(report.annotated)} records, {len(report.failed)} failed")
    for record_id, reason in report.failed[:20]:
        click.echo(f"  {record_id}: {reason}", err=True)


@main.command()
@click.option("--rules", "rules_path", type=click.Path(path_type=Path), default=None,
              help="Normalization rules JSON; defaults are written there when missing.")
@click.option("--k-min", default=2, show_default=True)
@click.option("--k-max", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--restarts", default=10, show_default=True)
@click.option("--embeddings-fixture", type=click.Path(exists=True, path_type=Path), default=None,
              help="JSON map of concept -> vector; otherwise EMBED_API_URL is used.")
@click.pass_context
def mine(ctx: click.Context, rules_path: Path | None, k_min: int, k_max: int, seed: int,
         restarts: int, embeddings_fixture: Path | None):
    """Normalize concepts, embed, cluster, and build the design-space catalog."""
    data_dir: Path = ctx.obj["data_dir"]
    store = _open_corpus(data_dir)
    snapshot = store.snapshot()
    if not len(snapshot):
        raise click.ClickException("no corpus in DATA_DIR; run `inkatlas ingest` first")

    if rules_path is not None and rules_path.exists():
        rules = load_rules(rules_path)
    else:
        rules = DEFAULT_RULES
        if rules_path is not None:
            save_rules(rules, rules_path)
            click.echo(f"wrote default rules to {rules_path}")

    client = (
        ReplayEmbeddingClient.from_file(embeddings_fixture)
        if embeddings_fixture
        else HttpEmbeddingClient.from_env()
    )
    embedder = ConceptEmbedder(client, TranscriptLog(data_dir / "transcripts.jsonl"))

    clusters: list[ConceptCluster] = []
    from .design_space import CLUSTERED_DIMENSIONS

    for dim in CLUSTERED_DIMENSIONS:
        raw = [t.concept for rec in snapshot for t in rec.annotations.tags_for(dim)]
        concepts = normalize_concepts(raw, rules)
        if len(concepts) < 2:
            click.echo(f"{dim.value}: fewer than 2 concepts, skipping clustering", err=True)
            continue
        matrix = embedder.embed(concepts)
        k_hi = min(k_max, len(concepts))
        k_range = list(range(max(1, k_min - 1), k_hi + 1))
        if len(k_range) < 3:
            chosen = min(2, len(concepts))
            curve = []
        else:
            chosen, curve = choose_k(matrix, k_range, seed=seed, restarts=restarts)
        assignments, _, _ = kmeans(matrix, chosen, seed=seed, restarts=restarts)
        click.echo(f"{dim.value}: {len(concepts)} concepts -> k={chosen}")
        for k_val, wcss in curve:
            click.echo(f"    k={k_val}: wcss={wcss:.4f}")
        for c in range(chosen):
            members = tuple(concepts[i] for i in range(len(concepts)) if assignments[i] == c)
            if members:
                clusters.append(
                    ConceptCluster(f"{dim.value} cluster {c + 1}", members, dim)
                )
    catalog = build_catalog(snapshot, clusters, rules=rules)
    out = data_dir / "catalog.json"
    save_catalog(catalog, out)
    click.echo(f"catalog written to {out}")


@main.command()
@click.pass_context
def index(ctx: click.Context):
    """Build the search index and report its size."""
    data_dir: Path = ctx.obj["data_dir"]
    store = _open_corpus(data_dir)
    idx = build_index(store.snapshot())
    click.echo(
        f"indexed {len(store.snapshot())} records: "
        f"{len(idx.token_postings)} tokens, {len(idx.concept_postings)} exact concepts"
    )


@main.command()
@click.option("--bind", default="127.0.0.1:8000", envvar="BIND_ADDR", show_default=True)
@click.option("--workers", default=2, envvar="WORKERS", show_default=True,
              help="Generation job workers.")
@click.option("--mock-clients", is_flag=True, help="Serve with offline mock endpoints.")
@click.pass_context
def serve(ctx: click.Context, bind: str, workers: int, mock_clients: bool):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import create_app
    from .service.state import AppState

    host, _, port = bind.partition(":")
    state = AppState(ctx.obj["data_dir"], workers=workers, use_mock_clients=mock_clients)
    app = create_app(state)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


@main.group("eval")
def eval_group():
    """Evaluation batches and rating-sheet statistics."""


@eval_group.command("run")
@click.option("--sets", "set_count", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--image-prompts", default=5, show_default=True)
@click.option("--mock-clients", is_flag=True, help="Use offline mock endpoints.")
@click.pass_context
def eval_run(ctx: click.Context, set_count: int, seed: int, out_dir: Path, image_prompts: int,
             mock_clients: bool):
    """Generate an evaluation bundle (tags, intentions, images, poems)."""
    data_dir: Path = ctx.obj["data_dir"]
    catalog_file = data_dir / "catalog.json"
    if not catalog_file.exists():
        raise click.ClickException("no catalog in DATA_DIR; run `inkatlas mine` first")
    catalog: DesignSpaceCatalog = load_catalog(catalog_file)
    store = _open_corpus(data_dir)
    log = TranscriptLog(data_dir / "transcripts.jsonl")
    if mock_clients:
        from .service.mocks import MockImageGenClient, MockTextModelClient

        text_client = MockTextModelClient()
        image_client = MockImageGenClient(data_dir / "images")
    else:
        from .clients import HttpImageGenClient

        text_client = HttpTextModelClient.from_env()
        image_client = HttpImageGenClient.from_env()
    bundle = run_eval_batch(
        catalog,
        set_count,
        seed,
        text_client,
        image_client,
        log,
        KnowledgeBase(),
        image_prompt_count=image_prompts,
        corpus_snapshot=store.snapshot() if len(store.snapshot()) else None,
    )
    images_dir = data_dir / "images"

    def resolver(ref: str):
        path = images_dir / ref
        return path if path.exists() else None

    save_eval_bundle(bundle, out_dir, image_resolver=resolver)
    failed = sum(1 for s in bundle.sets if s.error)
    click.echo(f"wrote {len(bundle.sets)} sets to {out_dir} ({failed} failed)")


@eval_group.command("stats")
@click.option("--sheet", type=click.Path(exists=True, path_type=Path), required=True)
def eval_stats(sheet: Path):
    """Wilcoxon, paired-t, and Cronbach's alpha over a filled rating sheet."""
    rows = load_rating_sheet(sheet)
    if not rows:
        raise click.ClickException("rating sheet has no scored rows")
    items = sorted({r.item for r in rows})
    click.echo("inter-rater agreement (Cronbach's alpha, raters as items):")
    for item in items:
        try:
            matrix = matrix_for_item(rows, item)
            alpha = cronbach_alpha(matrix, item_axis="raters")
            click.echo(f"  {item}: alpha = {alpha:.3f}")
        except StatsError as exc:
            click.echo(f"  {item}: not computable ({exc})")

    bases = sorted({i.rsplit(".", 1)[0] for i in items if "." in i})
    for base in bases:
        crafted = f"{base}.{GenerationMode.CRAFTED.value}"
        baseline = f"{base}.{GenerationMode.BASELINE.value}"
        if crafted not in items or baseline not in items:
            continue
        crafted_scores = {(r.set_id, r.rater): r.score for r in rows if r.item == crafted}
        baseline_scores = {(r.set_id, r.rater): r.score for r in rows if r.item == baseline}
        keys = sorted(set(crafted_scores) & set(baseline_scores))
        pairs = [(crafted_scores[k], baseline_scores[k]) for k in keys]
        if len(pairs) < 2:
            continue
        click.echo(f"{base}: crafted vs baseline over {len(pairs)} (set, rater) pairs")
        try:
            w = wilcoxon_signed_rank(pairs)
            z = f", z = {w.z_value:.3f}" if w.z_value is not None else ""
            click.echo(
                f"  Wilcoxon signed-rank: W = {w.statistic:.1f}, p = {w.p_value:.4f}"
                f" ({w.method_detail.value}, n = {w.n_effective}{z})"
            )
        except StatsError as exc:
            click.echo(f"  Wilcoxon signed-rank: not computable ({exc})")
        try:
            t = paired_t_test(pairs)
            click.echo(f"  paired t-test: t = {t.statistic:.4f}, p = {t.p_value:.4f}")
        except StatsError as exc:
            click.echo(f"  paired t-test: not computable ({exc})")


if __name__ == "__main__":
    main()
