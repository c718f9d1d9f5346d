"""Application state: stores, index, clients, and the job runner.

Everything lives under one DATA_DIR:

    corpus.jsonl      ingested painting records
    kb.jsonl          knowledge base (optional)
    catalog.json      design-space catalog (optional, built by `mine`)
    boards.json       moodboards
    jobs.json         generation jobs
    transcripts.jsonl external-call transcripts
    images/           served image files (generated/ subtree is written by
                      the image client)
"""

from __future__ import annotations

import os
from pathlib import Path

from ..annotator import KnowledgeBase
from ..clients import (
    HttpImageGenClient,
    HttpOnlineSearchClient,
    HttpTextModelClient,
    ImageGenClient,
    OnlineSearchClient,
    RetryPolicy,
    TextModelClient,
    TranscriptLog,
)
from ..corpus import CorpusStore
from ..design_space import DesignSpaceCatalog, load_catalog
from ..ideation import GenerationRequest, GenerationResult, run_generation_chain
from ..search import SearchIndex, build_index
from .boards import BoardStore
from .jobs import JobQueue, JobStore
from .mocks import MockImageGenClient, MockOnlineSearchClient, MockTextModelClient

DEFAULT_WORKERS = 2


class AppState:
    def __init__(
        self,
        data_dir: str | Path,
        workers: int | None = None,
        use_mock_clients: bool = False,
        text_client: TextModelClient | None = None,
        image_client: ImageGenClient | None = None,
        online_client: OnlineSearchClient | None = None,
        retry_policy: RetryPolicy | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.images_dir = self.data_dir / "images"
        self.images_dir.mkdir(exist_ok=True)

        self.corpus = CorpusStore()
        corpus_file = self.data_dir / "corpus.jsonl"
        if corpus_file.exists():
            self.corpus.ingest_file(corpus_file)

        kb_file = self.data_dir / "kb.jsonl"
        self.kb = KnowledgeBase.load_file(kb_file) if kb_file.exists() else KnowledgeBase()

        catalog_file = self.data_dir / "catalog.json"
        self.catalog: DesignSpaceCatalog | None = (
            load_catalog(catalog_file) if catalog_file.exists() else None
        )

        self.transcripts = TranscriptLog(self.data_dir / "transcripts.jsonl")
        self.boards = BoardStore(self.data_dir / "boards.json")
        self.policy = retry_policy or RetryPolicy()

        if use_mock_clients:
            self.text_client: TextModelClient = MockTextModelClient()
            self.image_client: ImageGenClient = MockImageGenClient(self.images_dir)
            self.online_client: OnlineSearchClient | None = MockOnlineSearchClient()
        else:
            self.text_client = text_client or HttpTextModelClient.from_env()
            self.image_client = image_client or HttpImageGenClient.from_env()
            if online_client is not None:
                self.online_client = online_client
            else:
                self.online_client = (
                    HttpOnlineSearchClient.from_env() if os.environ.get("ONLINE_SEARCH_URL") else None
                )

        self.index: SearchIndex = build_index(self.corpus.snapshot())

        n_workers = workers if workers is not None else int(os.environ.get("WORKERS", DEFAULT_WORKERS))
        self.job_store = JobStore(self.data_dir / "jobs.json")
        self.job_queue = JobQueue(self.job_store, self._run_chain, workers=n_workers)

    def reindex(self) -> SearchIndex:
        self.index = build_index(self.corpus.snapshot())
        return self.index

    def _resolve_image_prompt(self, ref: str) -> str:
        record = self.corpus.snapshot().get(ref)
        if record is not None:
            return record.image_ref
        return ref

    def _run_chain(self, request: GenerationRequest) -> GenerationResult:
        return run_generation_chain(
            self.text_client,
            self.image_client,
            self.transcripts,
            request,
            self.kb,
            policy=self.policy,
            resolve_image_ref=self._resolve_image_prompt,
        )

    def image_path(self, ref: str) -> Path | None:
        """Resolve a servable image file under the data dir; refuses path
        escapes and URLs."""
        if ref.startswith(("http://", "https://")):
            return None
        for base in (self.images_dir, self.data_dir):
            candidate = (base / ref).resolve()
            try:
                candidate.relative_to(base.resolve())
            except ValueError:
                continue
            if candidate.is_file():
                return candidate
        return None

    def persist_corpus(self) -> None:
        self.corpus.export_file(self.data_dir / "corpus.jsonl")

    def shutdown(self) -> None:
        self.job_queue.shutdown(wait=True)
