"""FastAPI application exposing the ideation workbench."""

from __future__ import annotations

from pathlib import Path

from fastapi import Depends, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from ..clients import ClientError
from ..corpus import PaintingRecord, PaintingType, Tag, TagDimension
from ..design_space import catalog_to_doc
from ..ideation import GenerationMode, GenerationRequest, IdeationError, TagSet, suggest_symbols
from ..search import SearchError, SearchMode, SearchQuery, search as run_search, tag_lookup
from .boards import (
    BoardError,
    ItemSourceKind,
    StaleVersionError,
    UnknownBoardError,
)
from .jobs import UnknownJobError
from .schemas import (
    AddItemRequest,
    AddTagRequest,
    BoardCreateResponse,
    BoardPatchRequest,
    GenerateRequest,
    GenerateResponse,
    HighlightResponse,
    JobOut,
    PaintingOut,
    PoemOut,
    SearchHitOut,
    SearchResponse,
    SuggestRequest,
    SuggestResponse,
    SuggestionOut,
)
from .state import AppState


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


def _envelope(status: int, code: str, message: str, detail=None) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"code": code, "message": message, "detail": detail}
    )


def _painting_out(record: PaintingRecord, state: AppState) -> PaintingOut:
    local = state.image_path(record.image_ref)
    if record.image_ref.startswith(("http://", "https://")):
        image_url = record.image_ref
    elif local is not None:
        image_url = f"/images/{record.image_ref}"
    else:
        image_url = None
    return PaintingOut(
        id=record.id,
        image_url=image_url,
        image_ref=record.image_ref,
        type=record.painting_type.value,
        tags=record.annotations.to_wire(),
        source=record.source,
        description=record.description,
    )


def _parse_dimension(raw: str) -> TagDimension:
    try:
        return TagDimension(raw)
    except ValueError:
        raise ApiError(400, "invalid_request", f"unknown dimension {raw!r}")


def create_app(state: AppState) -> FastAPI:
    app = FastAPI(title="inkatlas", version="0.1.0")
    app.state.ink = state

    @app.exception_handler(ApiError)
    async def handle_api_error(_: Request, exc: ApiError):
        return _envelope(exc.status, exc.code, exc.message, exc.detail)

    @app.exception_handler(UnknownBoardError)
    async def handle_unknown_board(_: Request, exc: UnknownBoardError):
        return _envelope(404, "not_found", str(exc))

    @app.exception_handler(UnknownJobError)
    async def handle_unknown_job(_: Request, exc: UnknownJobError):
        return _envelope(404, "not_found", str(exc))

    @app.exception_handler(StaleVersionError)
    async def handle_stale(_: Request, exc: StaleVersionError):
        return _envelope(409, "stale_version", str(exc))

    @app.exception_handler(BoardError)
    async def handle_board_error(_: Request, exc: BoardError):
        return _envelope(400, "invalid_request", str(exc))

    @app.exception_handler(SearchError)
    async def handle_search_error(_: Request, exc: SearchError):
        return _envelope(400, "invalid_request", str(exc))

    @app.exception_handler(IdeationError)
    async def handle_ideation_error(_: Request, exc: IdeationError):
        return _envelope(400, "invalid_request", str(exc))

    @app.exception_handler(ClientError)
    async def handle_client_error(_: Request, exc: ClientError):
        return _envelope(502, "upstream_error", str(exc))

    @app.exception_handler(RequestValidationError)
    async def handle_validation(_: Request, exc: RequestValidationError):
        return _envelope(422, "validation_error", "request body failed validation", exc.errors())

    def board_token(authorization: str | None = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise ApiError(401, "unauthorized", "missing bearer owner token")
        return authorization.removeprefix("Bearer ").strip()

    def authorized_board(board_id: str, token: str) -> None:
        try:
            state.boards.check_token(board_id, token)
        except UnknownBoardError:
            raise
        except BoardError:
            raise ApiError(401, "unauthorized", "owner token does not match this board")

    # -- symbols --

    @app.post("/symbols/suggest", response_model=SuggestResponse)
    def symbols_suggest(body: SuggestRequest):
        suggestions = suggest_symbols(
            state.text_client, state.transcripts, body.theme, body.count, policy=state.policy
        )
        return SuggestResponse(
            theme=body.theme,
            suggestions=[
                SuggestionOut(
                    symbol=s.symbol,
                    explanation=s.explanation,
                    poem=PoemOut(text=s.poem_text, attribution=s.poem_attribution),
                )
                for s in suggestions
            ],
        )

    # -- search / paintings / images --

    @app.get("/search", response_model=SearchResponse)
    def search_endpoint(
        q: str,
        mode: str = "local",
        dimension: str | None = None,
        type: str | None = None,  # noqa: A002 - wire name fixed by the interface
        limit: int = 30,
    ):
        try:
            search_mode = SearchMode(mode)
        except ValueError:
            raise ApiError(400, "invalid_request", f"unknown mode {mode!r}")
        type_filter = None
        if type is not None:
            try:
                type_filter = PaintingType(type)
            except ValueError:
                raise ApiError(400, "invalid_request", f"unknown type {type!r}")
        query = SearchQuery(
            text=q,
            mode=search_mode,
            dimension_filter=_parse_dimension(dimension) if dimension else None,
            type_filter=type_filter,
            limit=limit,
        )
        hits = run_search(state.index, query, online_client=state.online_client)
        snapshot = state.corpus.snapshot()
        out = []
        for hit in hits:
            record = snapshot.get(hit.record_id)
            out.append(
                SearchHitOut(
                    record_id=hit.record_id,
                    score=hit.score,
                    matched_fields=list(hit.matched_fields),
                    painting=_painting_out(record, state) if record else None,
                    external=None
                    if hit.external is None
                    else {
                        "image_url": hit.external.image_url,
                        "title": hit.external.title,
                        "source_url": hit.external.source_url,
                    },
                )
            )
        return SearchResponse(query=q, mode=search_mode.value, hits=out)

    @app.get("/paintings/{record_id}", response_model=PaintingOut)
    def get_painting(record_id: str):
        record = state.corpus.snapshot().get(record_id)
        if record is None:
            raise ApiError(404, "not_found", f"unknown painting {record_id!r}")
        return _painting_out(record, state)

    @app.get("/images/{ref:path}")
    def get_image(ref: str):
        path = state.image_path(ref)
        if path is None:
            raise ApiError(404, "not_found", f"image {ref!r} is not servable")
        return FileResponse(path)

    # -- boards --

    @app.post("/boards", response_model=BoardCreateResponse, status_code=201)
    def create_board():
        board = state.boards.create_board()
        return BoardCreateResponse(
            board_id=board.board_id, owner_token=board.owner_token, version=board.version
        )

    @app.get("/boards/{board_id}")
    def get_board(board_id: str, token: str = Depends(board_token)):
        authorized_board(board_id, token)
        return state.boards.get(board_id).to_wire()

    @app.patch("/boards/{board_id}")
    def patch_board(board_id: str, body: BoardPatchRequest, token: str = Depends(board_token)):
        authorized_board(board_id, token)
        version = body.version
        board = None
        for op in body.ops:
            if op.op == "move_item":
                if op.x is None or op.y is None:
                    raise ApiError(400, "invalid_request", "move_item needs x and y")
                board = state.boards.move_item(board_id, version, op.item_id, op.x, op.y)
            elif op.op == "resize_item":
                if op.width is None or op.height is None:
                    raise ApiError(400, "invalid_request", "resize_item needs width and height")
                board = state.boards.resize_item(board_id, version, op.item_id, op.width, op.height)
            elif op.op == "remove_item":
                board = state.boards.remove_item(board_id, version, op.item_id)
            elif op.op == "set_collected":
                if op.collected is None:
                    raise ApiError(400, "invalid_request", "set_collected needs collected")
                board = state.boards.set_collected(
                    board_id, version, op.item_id, op.collected
                )
            version = board.version
        if board is None:
            board = state.boards.get(board_id)
        return board.to_wire()

    @app.post("/boards/{board_id}/items")
    def add_item(board_id: str, body: AddItemRequest, token: str = Depends(board_token)):
        authorized_board(board_id, token)
        kind = ItemSourceKind(body.source.kind)
        system_tags = None
        if kind is ItemSourceKind.CORPUS_PAINTING:
            record = state.corpus.snapshot().get(body.source.ref)
            if record is None:
                raise ApiError(404, "not_found", f"unknown painting {body.source.ref!r}")
            system_tags = record.annotations
        board = state.boards.add_item(
            board_id,
            body.version,
            kind,
            body.source.ref,
            body.x,
            body.y,
            body.width,
            body.height,
            system_tags=system_tags,
        )
        return board.to_wire()

    @app.post("/boards/{board_id}/items/{item_id}/tags")
    def add_custom_tag(
        board_id: str, item_id: str, body: AddTagRequest, token: str = Depends(board_token)
    ):
        dimension = _parse_dimension(body.dimension)
        concept = body.concept.strip()
        if not concept:
            raise ApiError(400, "invalid_request", "concept must be non-empty")
        board = state.boards.add_custom_tag(
            board_id, body.version, item_id, Tag(dimension, concept)
        )
        return board.to_wire()

    @app.get("/boards/{board_id}/highlight", response_model=HighlightResponse)
    def highlight(board_id: str, dimension: str, concept: str, token: str = Depends(board_token)):
        authorized_board(board_id, token)
        ids = state.boards.highlight_by_tag(board_id, _parse_dimension(dimension), concept)
        return HighlightResponse(item_ids=ids)

    # -- generation jobs --

    @app.post("/generate", response_model=GenerateResponse, status_code=202)
    def generate(body: GenerateRequest):
        tags = TagSet(tuple(Tag(_parse_dimension(t.dimension), t.concept) for t in body.tags))
        request = GenerationRequest(
            tag_set=tags,
            free_text=body.free_text,
            image_prompt=body.image_prompt,
            mode=GenerationMode(body.mode),
            image_count=body.image_count,
        )
        job_id = state.job_queue.submit(request)
        return GenerateResponse(job_id=job_id)

    @app.get("/jobs/{job_id}", response_model=JobOut)
    def get_job(job_id: str):
        job = state.job_queue.poll(job_id)
        return JobOut(**job.to_wire())

    # -- catalog --

    @app.get("/catalog")
    def get_catalog():
        if state.catalog is None:
            raise ApiError(404, "not_found", "no catalog has been mined yet")
        return catalog_to_doc(state.catalog)

    frontend_dist = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    if frontend_dist.is_dir():
        app.mount("/app", StaticFiles(directory=frontend_dist, html=True), name="frontend")

    return app
