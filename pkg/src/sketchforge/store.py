"""Content-addressed artifact store with an append-only job log.

Blobs are stored under blobs/<sha256-hex>; identical content dedupes to
the same file. Job events append to jobs.jsonl, one JSON object per line,
and the job table is reconstructed purely by replaying that log. Jobs
that were running when the process died replay as failed("interrupted").
Corrupt log lines are skipped with a warning.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

__all__ = ["Job", "ArtifactStore", "replay_store", "JOB_KINDS"]

JOB_KINDS = ("fit", "infer", "stylize", "pipeline")
_STATES = ("queued", "running", "done", "failed")
_TRANSITIONS = {
    ("queued", "running"),
    ("running", "done"),
    ("running", "failed"),
}


@dataclass
class Job:
    id: str
    kind: str
    state: str = "queued"
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    error: str = ""
    progress_done: int = 0
    progress_total: int = 0
    created_at: float = 0.0
    finished_at: float | None = None

    def to_status(self) -> dict:
        out = {
            "job_id": self.id,
            "kind": self.kind,
            "state": self.state,
            "progress": {
                "done": self.progress_done,
                "total": self.progress_total,
            },
        }
        if self.state == "failed":
            out["error"] = self.error or "unknown error"
        if self.state == "done":
            out["outputs"] = self.outputs
        return out


class ArtifactStore:
    """Filesystem store; all writes go through one lock-guarded appender."""

    def __init__(self, root):
        self.root = Path(root)
        (self.root / "blobs").mkdir(parents=True, exist_ok=True)
        self._log_path = self.root / "jobs.jsonl"
        self._lock = threading.Lock()
        self.jobs: dict[str, Job] = replay_store(self.root)

    # --- blobs ----------------------------------------------------------

    def put_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / "blobs" / digest
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
        return digest

    def get_blob(self, blob_id: str) -> bytes:
        path = self.root / "blobs" / blob_id
        if not path.is_file():
            raise KeyError(f"no blob {blob_id}")
        return path.read_bytes()

    def has_blob(self, blob_id: str) -> bool:
        return (self.root / "blobs" / blob_id).is_file()

    # --- jobs -----------------------------------------------------------

    def _append(self, event: dict):
        line = json.dumps(event, sort_keys=True, separators=(",", ":"))
        with self._lock:
            with open(self._log_path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
                f.flush()

    def create_job(self, kind: str, inputs: dict) -> Job:
        if kind not in JOB_KINDS:
            raise ValueError(f"unknown job kind {kind!r}")
        job = Job(
            id=str(uuid.uuid4()), kind=kind, inputs=inputs,
            created_at=time.time(),
        )
        with self._lock:
            self.jobs[job.id] = job
        self._append({
            "event": "created", "job_id": job.id, "kind": kind,
            "inputs": inputs, "ts": job.created_at,
        })
        return job

    def get_job(self, job_id: str) -> Job:
        with self._lock:
            job = self.jobs.get(job_id)
        if job is None:
            raise KeyError(f"no job {job_id}")
        return job

    def _transition(self, job: Job, state: str):
        if (job.state, state) not in _TRANSITIONS:
            raise ValueError(f"illegal transition {job.state} -> {state}")
        job.state = state

    def mark_running(self, job_id: str):
        job = self.get_job(job_id)
        self._transition(job, "running")
        self._append({"event": "started", "job_id": job_id, "ts": time.time()})

    def mark_progress(self, job_id: str, done: int, total: int):
        job = self.get_job(job_id)
        job.progress_done = done
        job.progress_total = total

    def mark_done(self, job_id: str, outputs: dict):
        job = self.get_job(job_id)
        self._transition(job, "done")
        job.outputs = outputs
        job.finished_at = time.time()
        self._append({
            "event": "finished", "job_id": job_id, "outputs": outputs,
            "ts": job.finished_at,
        })

    def mark_failed(self, job_id: str, error: str):
        job = self.get_job(job_id)
        self._transition(job, "failed")
        job.error = error or "unknown error"
        job.finished_at = time.time()
        self._append({
            "event": "failed", "job_id": job_id, "error": job.error,
            "ts": job.finished_at,
        })


def replay_store(root) -> dict[str, Job]:
    """Rebuild the job table from jobs.jsonl alone."""
    root = Path(root)
    log_path = root / "jobs.jsonl"
    jobs: dict[str, Job] = {}
    if not log_path.exists():
        return jobs
    with open(log_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
                kind = event["event"]
                job_id = event["job_id"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                logger.warning("skipping corrupt log line %d: %s", lineno, exc)
                continue
            if kind == "created":
                jobs[job_id] = Job(
                    id=job_id,
                    kind=event.get("kind", "fit"),
                    inputs=event.get("inputs", {}),
                    created_at=event.get("ts", 0.0),
                )
            elif job_id not in jobs:
                logger.warning(
                    "skipping event for unknown job %s at line %d",
                    job_id, lineno,
                )
            elif kind == "started":
                jobs[job_id].state = "running"
            elif kind == "finished":
                jobs[job_id].state = "done"
                jobs[job_id].outputs = event.get("outputs", {})
                jobs[job_id].finished_at = event.get("ts")
            elif kind == "failed":
                jobs[job_id].state = "failed"
                jobs[job_id].error = event.get("error", "unknown error")
                jobs[job_id].finished_at = event.get("ts")
    for job in jobs.values():
        if job.state == "running":
            # the worker died mid-flight; partial state is unrecoverable
            job.state = "failed"
            job.error = "interrupted"
    return jobs
