"""Moodboard persistence with optimistic concurrency.

Every mutation carries the caller's board version; a stale version is
rejected so replayed or racing mutations cannot clobber each other. The
store persists to one JSON file with atomic replace.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from ..corpus import AnnotationSet, Tag, TagDimension, validate_annotation


class BoardError(Exception):
    pass


class UnknownBoardError(BoardError):
    pass


class StaleVersionError(BoardError):
    pass


class ItemSourceKind(str, Enum):
    CORPUS_PAINTING = "corpus"
    GENERATED_IMAGE = "generated"
    ONLINE_IMAGE = "online"


@dataclass(frozen=True)
class BoardItem:
    item_id: str
    source_kind: ItemSourceKind
    source_ref: str  # record id, generated image ref, or external URL
    x: float
    y: float
    width: float = 240.0
    height: float = 240.0
    system_tags: AnnotationSet = field(default_factory=AnnotationSet.empty)
    custom_tags: tuple[Tag, ...] = ()
    collected: bool = False  # member of the image-prompt collection

    def __post_init__(self) -> None:
        for value in (self.x, self.y, self.width, self.height):
            if not math.isfinite(value):
                raise BoardError(f"item {self.item_id}: non-finite geometry")
        system = {(t.dimension, t.concept) for t in self.system_tags.all_tags()}
        seen: set[tuple[TagDimension, str]] = set()
        for tag in self.custom_tags:
            key = (tag.dimension, tag.concept)
            if key in system:
                raise BoardError(f"custom tag {key} duplicates a system tag")
            if key in seen:
                raise BoardError(f"duplicate custom tag {key}")
            seen.add(key)

    def all_tag_pairs(self) -> set[tuple[TagDimension, str]]:
        pairs = {(t.dimension, t.concept) for t in self.system_tags.all_tags()}
        pairs |= {(t.dimension, t.concept) for t in self.custom_tags}
        return pairs

    def to_wire(self) -> dict:
        return {
            "item_id": self.item_id,
            "source": {"kind": self.source_kind.value, "ref": self.source_ref},
            "x": self.x,
            "y": self.y,
            "width": self.width,
            "height": self.height,
            "system_tags": self.system_tags.to_wire(),
            "custom_tags": [{"dimension": t.dimension.value, "concept": t.concept} for t in self.custom_tags],
            "collected": self.collected,
        }

    @classmethod
    def from_wire(cls, doc: dict) -> "BoardItem":
        return cls(
            item_id=doc["item_id"],
            source_kind=ItemSourceKind(doc["source"]["kind"]),
            source_ref=doc["source"]["ref"],
            x=float(doc["x"]),
            y=float(doc["y"]),
            width=float(doc.get("width", 240.0)),
            height=float(doc.get("height", 240.0)),
            system_tags=validate_annotation(doc.get("system_tags", {}))
            if doc.get("system_tags")
            else AnnotationSet.empty(),
            custom_tags=tuple(
                Tag(TagDimension(t["dimension"]), t["concept"]) for t in doc.get("custom_tags", [])
            ),
            collected=bool(doc.get("collected", False)),
        )


@dataclass(frozen=True)
class Moodboard:
    board_id: str
    owner_token: str
    version: int
    created_at: float
    updated_at: float
    items: tuple[BoardItem, ...] = ()

    def item(self, item_id: str) -> BoardItem:
        for item in self.items:
            if item.item_id == item_id:
                return item
        raise UnknownBoardError(f"unknown item {item_id!r}")

    def to_wire(self, include_token: bool = False) -> dict:
        doc = {
            "board_id": self.board_id,
            "version": self.version,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "items": [item.to_wire() for item in self.items],
        }
        if include_token:
            doc["owner_token"] = self.owner_token
        return doc

    @classmethod
    def from_wire(cls, doc: dict) -> "Moodboard":
        return cls(
            board_id=doc["board_id"],
            owner_token=doc["owner_token"],
            version=int(doc["version"]),
            created_at=float(doc["created_at"]),
            updated_at=float(doc["updated_at"]),
            items=tuple(BoardItem.from_wire(i) for i in doc.get("items", [])),
        )


class BoardStore:
    """Thread-safe board store; mutations serialize through one lock and
    persist before returning."""

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.Lock()
        self._boards: dict[str, Moodboard] = {}
        self._path = Path(path) if path is not None else None
        if self._path is not None and self._path.exists():
            data = json.loads(self._path.read_text(encoding="utf-8"))
            self._boards = {doc["board_id"]: Moodboard.from_wire(doc) for doc in data["boards"]}

    def _persist_locked(self) -> None:
        if self._path is None:
            return
        doc = {"boards": [b.to_wire(include_token=True) for b in self._boards.values()]}
        tmp = self._path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, self._path)

    def create_board(self) -> Moodboard:
        with self._lock:
            now = time.time()
            board = Moodboard(
                board_id=uuid.uuid4().hex[:12],
                owner_token=uuid.uuid4().hex,
                version=1,
                created_at=now,
                updated_at=now,
            )
            self._boards[board.board_id] = board
            self._persist_locked()
            return board

    def get(self, board_id: str) -> Moodboard:
        with self._lock:
            board = self._boards.get(board_id)
            if board is None:
                raise UnknownBoardError(f"unknown board {board_id!r}")
            return board

    def check_token(self, board_id: str, token: str) -> None:
        if self.get(board_id).owner_token != token:
            raise BoardError("owner token does not match")

    def _mutate(self, board_id: str, expected_version: int, fn) -> Moodboard:
        with self._lock:
            board = self._boards.get(board_id)
            if board is None:
                raise UnknownBoardError(f"unknown board {board_id!r}")
            if board.version != expected_version:
                raise StaleVersionError(
                    f"board {board_id} is at version {board.version}, mutation expected {expected_version}"
                )
            items = fn(board)
            updated = replace(
                board, items=tuple(items), version=board.version + 1, updated_at=time.time()
            )
            self._boards[board_id] = updated
            self._persist_locked()
            return updated

    def add_item(
        self,
        board_id: str,
        expected_version: int,
        source_kind: ItemSourceKind,
        source_ref: str,
        x: float,
        y: float,
        width: float = 240.0,
        height: float = 240.0,
        system_tags: AnnotationSet | None = None,
        item_id: str | None = None,
    ) -> Moodboard:
        new_item = BoardItem(
            item_id=item_id or uuid.uuid4().hex[:10],
            source_kind=source_kind,
            source_ref=source_ref,
            x=x,
            y=y,
            width=width,
            height=height,
            system_tags=system_tags or AnnotationSet.empty(),
        )

        def mutate(board: Moodboard):
            if any(i.item_id == new_item.item_id for i in board.items):
                raise BoardError(f"duplicate item id {new_item.item_id!r}")
            return board.items + (new_item,)

        return self._mutate(board_id, expected_version, mutate)

    def move_item(
        self, board_id: str, expected_version: int, item_id: str, x: float, y: float
    ) -> Moodboard:
        def mutate(board: Moodboard):
            target = board.item(item_id)
            return tuple(
                replace(i, x=x, y=y) if i.item_id == item_id else i for i in board.items
            ) if target else board.items

        return self._mutate(board_id, expected_version, mutate)

    def resize_item(
        self, board_id: str, expected_version: int, item_id: str, width: float, height: float
    ) -> Moodboard:
        def mutate(board: Moodboard):
            board.item(item_id)
            return tuple(
                replace(i, width=width, height=height) if i.item_id == item_id else i
                for i in board.items
            )

        return self._mutate(board_id, expected_version, mutate)

    def remove_item(self, board_id: str, expected_version: int, item_id: str) -> Moodboard:
        def mutate(board: Moodboard):
            board.item(item_id)
            return tuple(i for i in board.items if i.item_id != item_id)

        return self._mutate(board_id, expected_version, mutate)

    def set_collected(
        self, board_id: str, expected_version: int, item_id: str, collected: bool
    ) -> Moodboard:
        def mutate(board: Moodboard):
            board.item(item_id)
            return tuple(
                replace(i, collected=collected) if i.item_id == item_id else i
                for i in board.items
            )

        return self._mutate(board_id, expected_version, mutate)

    def add_custom_tag(
        self, board_id: str, expected_version: int, item_id: str, tag: Tag
    ) -> Moodboard:
        def mutate(board: Moodboard):
            target = board.item(item_id)
            # BoardItem validation rejects duplicates of system or custom tags
            updated = replace(target, custom_tags=target.custom_tags + (tag,))
            return tuple(updated if i.item_id == item_id else i for i in board.items)

        return self._mutate(board_id, expected_version, mutate)

    def highlight_by_tag(self, board_id: str, dimension: TagDimension, concept: str) -> list[str]:
        board = self.get(board_id)
        return [
            item.item_id for item in board.items if (dimension, concept) in item.all_tag_pairs()
        ]
