"""Async generation jobs: a bounded worker pool over a durable job store.

Status lifecycle is Queued -> Running -> Done | Failed, persisted at every
transition. Jobs found non-terminal when the store loads (a restart killed
them mid-flight) are marked Failed; terminal statuses always survive.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable

from ..ideation import GenerationRequest, GenerationResult


class JobError(Exception):
    pass


class UnknownJobError(JobError):
    pass


class JobStatus(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


TERMINAL = (JobStatus.DONE, JobStatus.FAILED)

_ALLOWED = {
    JobStatus.QUEUED: {JobStatus.RUNNING},
    JobStatus.RUNNING: {JobStatus.DONE, JobStatus.FAILED},
    JobStatus.DONE: set(),
    JobStatus.FAILED: set(),
}


@dataclass(frozen=True)
class GenerationJob:
    job_id: str
    request: dict  # GenerationRequest wire form
    status: JobStatus
    result: dict | None = None  # GenerationResult wire form, present iff Done
    error: str | None = None
    timestamps: dict = field(default_factory=dict)  # status value -> epoch seconds

    def __post_init__(self) -> None:
        if (self.status is JobStatus.DONE) != (self.result is not None):
            raise JobError("result must be present exactly when status is done")

    def to_wire(self) -> dict:
        return {
            "job_id": self.job_id,
            "request": self.request,
            "status": self.status.value,
            "result": self.result,
            "error": self.error,
            "timestamps": dict(self.timestamps),
        }

    @classmethod
    def from_wire(cls, doc: dict) -> "GenerationJob":
        return cls(
            job_id=doc["job_id"],
            request=doc["request"],
            status=JobStatus(doc["status"]),
            result=doc.get("result"),
            error=doc.get("error"),
            timestamps=dict(doc.get("timestamps", {})),
        )


class JobStore:
    """Durable map of jobs; single JSON file, atomic replace per write."""

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.Lock()
        self._jobs: dict[str, GenerationJob] = {}
        self._path = Path(path) if path is not None else None
        if self._path is not None and self._path.exists():
            data = json.loads(self._path.read_text(encoding="utf-8"))
            for doc in data["jobs"]:
                job = GenerationJob.from_wire(doc)
                if job.status not in TERMINAL:
                    job = replace(
                        job,
                        status=JobStatus.FAILED,
                        error="interrupted by service restart",
                        timestamps={**job.timestamps, JobStatus.FAILED.value: time.time()},
                    )
                self._jobs[job.job_id] = job

    def _persist_locked(self) -> None:
        if self._path is None:
            return
        doc = {"jobs": [j.to_wire() for j in self._jobs.values()]}
        tmp = self._path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, self._path)

    def create(self, request_wire: dict) -> GenerationJob:
        with self._lock:
            job = GenerationJob(
                job_id=uuid.uuid4().hex[:12],
                request=request_wire,
                status=JobStatus.QUEUED,
                timestamps={JobStatus.QUEUED.value: time.time()},
            )
            self._jobs[job.job_id] = job
            self._persist_locked()
            return job

    def get(self, job_id: str) -> GenerationJob:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJobError(f"unknown job {job_id!r}")
            return job

    def transition(
        self,
        job_id: str,
        status: JobStatus,
        result: dict | None = None,
        error: str | None = None,
    ) -> GenerationJob:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJobError(f"unknown job {job_id!r}")
            if status not in _ALLOWED[job.status]:
                raise JobError(f"illegal transition {job.status.value} -> {status.value}")
            job = replace(
                job,
                status=status,
                result=result,
                error=error,
                timestamps={**job.timestamps, status.value: time.time()},
            )
            self._jobs[job_id] = job
            self._persist_locked()
            return job

    def all_jobs(self) -> list[GenerationJob]:
        with self._lock:
            return list(self._jobs.values())

    def count_running(self) -> int:
        with self._lock:
            return sum(1 for j in self._jobs.values() if j.status is JobStatus.RUNNING)


class JobQueue:
    """Bounded worker pool executing generation chains for queued jobs."""

    def __init__(
        self,
        store: JobStore,
        runner: Callable[[GenerationRequest], GenerationResult],
        workers: int = 2,
    ):
        self._store = store
        self._runner = runner
        self._pool = ThreadPoolExecutor(max_workers=max(1, workers))
        self.workers = max(1, workers)

    def submit(self, request: GenerationRequest) -> str:
        from ..ideation import TagSet  # local import to avoid cycle at module load

        wire = {
            "tags": request.tag_set.to_wire(),
            "free_text": request.free_text,
            "image_prompt": request.image_prompt,
            "mode": request.mode.value,
            "image_count": request.image_count,
        }
        job = self._store.create(wire)
        self._pool.submit(self._run, job.job_id, request)
        return job.job_id

    def _run(self, job_id: str, request: GenerationRequest) -> None:
        self._store.transition(job_id, JobStatus.RUNNING)
        try:
            result = self._runner(request)
        except Exception as exc:  # noqa: BLE001 - chain failures become job state
            self._store.transition(job_id, JobStatus.FAILED, error=str(exc))
            return
        self._store.transition(job_id, JobStatus.DONE, result=result.to_wire())

    def poll(self, job_id: str) -> GenerationJob:
        return self._store.get(job_id)

    def shutdown(self, wait: bool = True) -> None:
        self._pool.shutdown(wait=wait)
