"""External-endpoint clients and the record/replay substrate.

Every outbound call is persisted as a ModelTranscript through a
TranscriptLog, one transcript per attempt. Tests never hit live
endpoints: replay clients serve recorded exchanges, and the HTTP
clients here are thin wrappers configured from environment variables.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx


class ClientError(Exception):
    """An external endpoint failed (after retries, where applicable)."""


@dataclass(frozen=True)
class ModelTranscript:
    endpoint_id: str
    request: dict
    raw_response: str
    timestamp: float
    transcript_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    error: str | None = None

    def to_wire(self) -> dict:
        doc = {
            "transcript_id": self.transcript_id,
            "endpoint_id": self.endpoint_id,
            "request": self.request,
            "raw_response": self.raw_response,
            "timestamp": self.timestamp,
        }
        if self.error is not None:
            doc["error"] = self.error
        return doc


class TranscriptLog:
    """Append-only transcript store; single serialized writer, optional
    JSONL persistence."""

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.Lock()
        self._entries: list[ModelTranscript] = []
        self._path = Path(path) if path is not None else None

    def append(self, transcript: ModelTranscript) -> str:
        with self._lock:
            self._entries.append(transcript)
            if self._path is not None:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(transcript.to_wire(), ensure_ascii=False) + "\n")
        return transcript.transcript_id

    def entries(self) -> tuple[ModelTranscript, ...]:
        with self._lock:
            return tuple(self._entries)

    def count(self, endpoint_id: str | None = None) -> int:
        with self._lock:
            if endpoint_id is None:
                return len(self._entries)
            return sum(1 for t in self._entries if t.endpoint_id == endpoint_id)


@dataclass(frozen=True)
class OnlineResult:
    image_url: str
    title: str
    source_url: str


class TextModelClient(Protocol):
    def complete(self, prompt: str, image_ref: str | None = None) -> str: ...


class EmbeddingClient(Protocol):
    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


class ImageGenClient(Protocol):
    def generate(self, prompt: str, n: int, reference_image: str | None = None) -> list[str]: ...


class OnlineSearchClient(Protocol):
    def search(self, query: str, limit: int) -> list[OnlineResult]: ...


DEFAULT_RETRIES = 3  # retries after the first attempt, exponential backoff


@dataclass
class RetryPolicy:
    retries: int = DEFAULT_RETRIES
    base_delay: float = 0.5
    sleep: Callable[[float], None] = time.sleep

    @property
    def attempts(self) -> int:
        return self.retries + 1


def _attempt_with_log(
    log: TranscriptLog,
    endpoint_id: str,
    request: dict,
    call: Callable[[], object],
    policy: RetryPolicy,
):
    """Run `call` under the retry policy; persist one transcript per attempt."""
    last_error: Exception | None = None
    for attempt in range(policy.attempts):
        try:
            result = call()
        except Exception as exc:  # noqa: BLE001 - endpoint failures are arbitrary
            last_error = exc
            log.append(
                ModelTranscript(
                    endpoint_id=endpoint_id,
                    request=request,
                    raw_response="",
                    timestamp=time.time(),
                    error=str(exc),
                )
            )
            if attempt < policy.attempts - 1:
                policy.sleep(policy.base_delay * (2**attempt))
            continue
        log.append(
            ModelTranscript(
                endpoint_id=endpoint_id,
                request=request,
                raw_response=_raw_of(result),
                timestamp=time.time(),
            )
        )
        return result
    raise ClientError(f"{endpoint_id}: failed after {policy.attempts} attempts: {last_error}")


def _raw_of(result) -> str:
    if isinstance(result, str):
        return result
    try:
        return json.dumps(result, ensure_ascii=False, default=str)
    except TypeError:
        return str(result)


def call_text_model(
    client: TextModelClient,
    log: TranscriptLog,
    endpoint_id: str,
    prompt: str,
    image_ref: str | None = None,
    policy: RetryPolicy | None = None,
) -> str:
    request = {"prompt": prompt}
    if image_ref is not None:
        request["image_ref"] = image_ref
    return _attempt_with_log(
        log, endpoint_id, request, lambda: client.complete(prompt, image_ref), policy or RetryPolicy()
    )


def call_embedding(
    client: EmbeddingClient,
    log: TranscriptLog,
    endpoint_id: str,
    texts: Sequence[str],
    policy: RetryPolicy | None = None,
) -> list[list[float]]:
    request = {"texts": list(texts)}
    return _attempt_with_log(
        log, endpoint_id, request, lambda: client.embed(texts), policy or RetryPolicy()
    )


def call_image_gen(
    client: ImageGenClient,
    log: TranscriptLog,
    endpoint_id: str,
    prompt: str,
    n: int,
    reference_image: str | None = None,
    policy: RetryPolicy | None = None,
) -> list[str]:
    request = {"prompt": prompt, "n": n}
    if reference_image is not None:
        request["reference_image"] = reference_image
    return _attempt_with_log(
        log,
        endpoint_id,
        request,
        lambda: client.generate(prompt, n, reference_image),
        policy or RetryPolicy(),
    )


# -- HTTP implementations (wire formats per the service contract) --

class HttpTextModelClient:
    """POST {model, prompt, image} -> {"text": ...}"""

    def __init__(self, url: str, api_key: str = "", model_id: str = "default", timeout: float = 120.0):
        self._url = url
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._model_id = model_id
        self._timeout = timeout

    @classmethod
    def from_env(cls, model_id: str = "default") -> "HttpTextModelClient":
        url = os.environ.get("VLM_API_URL")
        if not url:
            raise ClientError("VLM_API_URL is not set")
        return cls(url, os.environ.get("VLM_API_KEY", ""), model_id)

    def complete(self, prompt: str, image_ref: str | None = None) -> str:
        payload = {"model": self._model_id, "prompt": prompt}
        if image_ref is not None:
            payload["image"] = image_ref
        resp = httpx.post(self._url, json=payload, headers=self._headers, timeout=self._timeout)
        resp.raise_for_status()
        return resp.json()["text"]


class HttpEmbeddingClient:
    """POST {model, inputs} -> {"vectors": [[...], ...]}"""

    def __init__(self, url: str, api_key: str = "", model_id: str = "default", timeout: float = 60.0):
        self._url = url
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._model_id = model_id
        self._timeout = timeout

    @classmethod
    def from_env(cls, model_id: str = "default") -> "HttpEmbeddingClient":
        url = os.environ.get("EMBED_API_URL")
        if not url:
            raise ClientError("EMBED_API_URL is not set")
        return cls(url, os.environ.get("EMBED_API_KEY", ""), model_id)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        payload = {"model": self._model_id, "inputs": list(texts)}
        resp = httpx.post(self._url, json=payload, headers=self._headers, timeout=self._timeout)
        resp.raise_for_status()
        return resp.json()["vectors"]


class HttpImageGenClient:
    """POST {prompt, reference_image?, n} -> {"job_id"}; GET /{job_id} polls
    {"status": "pending"|"done"|"failed", "images": [...]}."""

    def __init__(
        self,
        url: str,
        api_key: str = "",
        poll_interval: float = 2.0,
        timeout: float = 300.0,
    ):
        self._url = url.rstrip("/")
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._poll_interval = poll_interval
        self._timeout = timeout

    @classmethod
    def from_env(cls) -> "HttpImageGenClient":
        url = os.environ.get("IMG_API_URL")
        if not url:
            raise ClientError("IMG_API_URL is not set")
        return cls(url, os.environ.get("IMG_API_KEY", ""))

    def generate(self, prompt: str, n: int, reference_image: str | None = None) -> list[str]:
        payload: dict = {"prompt": prompt, "n": n}
        if reference_image is not None:
            payload["reference_image"] = reference_image
        resp = httpx.post(self._url, json=payload, headers=self._headers, timeout=30.0)
        resp.raise_for_status()
        job_id = resp.json()["job_id"]
        deadline = time.time() + self._timeout
        while time.time() < deadline:
            poll = httpx.get(f"{self._url}/{job_id}", headers=self._headers, timeout=30.0)
            poll.raise_for_status()
            body = poll.json()
            if body["status"] == "done":
                return list(body["images"])
            if body["status"] == "failed":
                raise ClientError(f"image generation failed: {body.get('error', 'unknown')}")
            time.sleep(self._poll_interval)
        raise ClientError(f"image generation timed out after {self._timeout}s")


class HttpOnlineSearchClient:
    """GET ?q=&limit= -> {"results": [{image_url, title, source_url}]}"""

    def __init__(self, url: str, timeout: float = 30.0):
        self._url = url
        self._timeout = timeout

    @classmethod
    def from_env(cls) -> "HttpOnlineSearchClient":
        url = os.environ.get("ONLINE_SEARCH_URL")
        if not url:
            raise ClientError("ONLINE_SEARCH_URL is not set")
        return cls(url)

    def search(self, query: str, limit: int) -> list[OnlineResult]:
        resp = httpx.get(self._url, params={"q": query, "limit": limit}, timeout=self._timeout)
        resp.raise_for_status()
        return [
            OnlineResult(
                image_url=item["image_url"],
                title=item.get("title", ""),
                source_url=item.get("source_url", ""),
            )
            for item in resp.json()["results"]
        ]


# -- record/replay fixtures --

def load_exchanges(path: str | Path) -> list[dict]:
    """Read a fixture file: a JSON list of {request: {...}, response: ...}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ClientError(f"fixture {path} must be a JSON list of exchanges")
    return data


def save_exchanges(path: str | Path, exchanges: Sequence[dict]) -> None:
    Path(path).write_text(
        json.dumps(list(exchanges), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


class ReplayTextModelClient:
    """Serves recorded completions, matched on the exact request."""

    def __init__(self, exchanges: Sequence[dict]):
        self._byreq: dict[tuple[str, str | None], str] = {}
        for ex in exchanges:
            req = ex["request"]
            self._byreq[(req["prompt"], req.get("image_ref"))] = ex["response"]
        self.call_count = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayTextModelClient":
        return cls(load_exchanges(path))

    def complete(self, prompt: str, image_ref: str | None = None) -> str:
        self.call_count += 1
        key = (prompt, image_ref)
        if key not in self._byreq:
            raise ClientError(f"no recorded exchange for prompt starting {prompt[:80]!r}")
        return self._byreq[key]


class ReplayEmbeddingClient:
    """Serves recorded embeddings, matched per concept string."""

    def __init__(self, vectors_by_text: dict[str, list[float]]):
        self._vectors = dict(vectors_by_text)
        self.call_count = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayEmbeddingClient":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self.call_count += 1
        missing = [t for t in texts if t not in self._vectors]
        if missing:
            raise ClientError(f"no recorded embedding for {missing[:5]!r}")
        return [list(self._vectors[t]) for t in texts]


class RecordingTextModelClient:
    """Wraps a live client and collects exchanges for later replay."""

    def __init__(self, inner: TextModelClient):
        self._inner = inner
        self.exchanges: list[dict] = []

    def complete(self, prompt: str, image_ref: str | None = None) -> str:
        response = self._inner.complete(prompt, image_ref)
        request: dict = {"prompt": prompt}
        if image_ref is not None:
            request["image_ref"] = image_ref
        self.exchanges.append({"request": request, "response": response})
        return response

    def save(self, path: str | Path) -> None:
        save_exchanges(path, self.exchanges)
