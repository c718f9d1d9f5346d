"""Pydantic request/response models for the HTTP surface."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class ErrorEnvelope(BaseModel):
    code: str
    message: str
    detail: dict | list | str | None = None


class TagIn(BaseModel):
    dimension: str
    concept: str


class SuggestRequest(BaseModel):
    theme: str
    count: int = Field(default=5, ge=1, le=20)


class PoemOut(BaseModel):
    text: str
    attribution: str


class SuggestionOut(BaseModel):
    symbol: str
    explanation: str
    poem: PoemOut


class SuggestResponse(BaseModel):
    theme: str
    suggestions: list[SuggestionOut]


class PaintingOut(BaseModel):
    id: str
    image_url: str | None
    image_ref: str
    type: str
    tags: dict[str, list]
    source: str
    description: str | None = None


class SearchHitOut(BaseModel):
    record_id: str
    score: float
    matched_fields: list[tuple[str, str]]
    painting: PaintingOut | None = None
    external: dict | None = None


class SearchResponse(BaseModel):
    query: str
    mode: str
    hits: list[SearchHitOut]


class BoardCreateResponse(BaseModel):
    board_id: str
    owner_token: str
    version: int


class ItemSourceIn(BaseModel):
    kind: Literal["corpus", "generated", "online"]
    ref: str


class AddItemRequest(BaseModel):
    version: int
    source: ItemSourceIn
    x: float = 0.0
    y: float = 0.0
    width: float = 240.0
    height: float = 240.0


class PatchOp(BaseModel):
    op: Literal["move_item", "resize_item", "remove_item", "set_collected"]
    item_id: str
    x: float | None = None
    y: float | None = None
    width: float | None = None
    height: float | None = None
    collected: bool | None = None


class BoardPatchRequest(BaseModel):
    version: int
    ops: list[PatchOp]


class AddTagRequest(BaseModel):
    version: int
    dimension: str
    concept: str


class HighlightResponse(BaseModel):
    item_ids: list[str]


class GenerateRequest(BaseModel):
    tags: list[TagIn] = Field(default_factory=list)
    free_text: str | None = None
    image_prompt: str | None = None
    mode: Literal["crafted", "baseline"] = "crafted"
    image_count: int = Field(default=3, ge=1, le=9)


class GenerateResponse(BaseModel):
    job_id: str


class JobOut(BaseModel):
    job_id: str
    status: str
    request: dict
    result: dict | None = None
    error: str | None = None
    timestamps: dict[str, float]
