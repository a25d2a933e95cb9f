"""Session and job state for the edit service.

Each session lives in its own directory (source image, current latent,
masks, history) so a restarted service resumes where it left off. Within a
session operations are serialized by a lock, and at most one optimization
job may run at a time; a job commits its result to the session only on
success, so cancelled or failed jobs never change session state.
"""

from __future__ import annotations

import json
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from maskedit.containers import sha256_hex
from maskedit.embedding import load_latent, save_latent
from maskedit.generator import ExtendedLatent


def latent_hash(latent: ExtendedLatent) -> str:
    return sha256_hex(np.ascontiguousarray(latent.w_plus, dtype=np.float32).tobytes())


@dataclass
class Session:
    session_id: str
    directory: Path
    latent: ExtendedLatent
    resolution: int
    lock: threading.Lock = field(default_factory=threading.Lock)
    active_job: Optional[str] = None
    history: list[dict] = field(default_factory=list)
    applied: list[dict] = field(default_factory=list)

    # -- persistence -------------------------------------------------------

    def _meta_path(self) -> Path:
        return self.directory / "session.json"

    def persist_meta(self) -> None:
        meta = {"session_id": self.session_id, "resolution": self.resolution,
                "history": self.history, "applied": self.applied}
        self._meta_path().write_text(json.dumps(meta, indent=2))

    def persist_latent(self) -> None:
        save_latent(self.directory / "latent.egl", self.latent,
                    source_hash=latent_hash(self.latent))

    def record(self, operation: str, **detail) -> None:
        self.history.append({"operation": operation,
                             "latent_hash": latent_hash(self.latent),
                             "time": time.time(), **detail})
        self.persist_meta()

    # -- artifact files ------------------------------------------------------

    def write_bytes(self, name: str, data: bytes) -> None:
        (self.directory / name).write_bytes(data)

    def read_bytes(self, name: str) -> Optional[bytes]:
        path = self.directory / name
        return path.read_bytes() if path.exists() else None


class SessionStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._store_lock = threading.Lock()
        self._load_existing()

    def _load_existing(self) -> None:
        for meta_path in sorted(self.root.glob("*/session.json")):
            try:
                meta = json.loads(meta_path.read_text())
                latent, _ = load_latent(meta_path.parent / "latent.egl")
                session = Session(
                    session_id=meta["session_id"],
                    directory=meta_path.parent,
                    latent=latent,
                    resolution=meta["resolution"],
                    history=meta.get("history", []),
                    applied=meta.get("applied", []),
                )
                self._sessions[session.session_id] = session
            except Exception:
                continue  # unreadable session directories are skipped, not fatal

    def create(self, latent: ExtendedLatent, resolution: int) -> Session:
        session_id = uuid.uuid4().hex[:16]
        directory = self.root / session_id
        directory.mkdir(parents=True, exist_ok=True)
        session = Session(session_id=session_id, directory=directory,
                          latent=latent, resolution=resolution)
        with self._store_lock:
            self._sessions[session_id] = session
        session.persist_latent()
        return session

    def get(self, session_id: str) -> Optional[Session]:
        return self._sessions.get(session_id)

    def all_ids(self) -> list[str]:
        return sorted(self._sessions)


@dataclass
class Job:
    job_id: str
    session_id: str
    status: str = "running"  # running | done | cancelled | error
    step: int = 0
    error: Optional[str] = None
    result: Optional[dict] = None
    cancel_event: threading.Event = field(default_factory=threading.Event)
    events: list[dict] = field(default_factory=list)
    _subscribers: list[queue.Queue] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def publish(self, event: dict) -> None:
        with self._lock:
            self.events.append(event)
            for q in self._subscribers:
                q.put(event)

    def subscribe(self) -> tuple[list[dict], queue.Queue]:
        """Snapshot of past events plus a live queue for subsequent ones."""
        with self._lock:
            q: queue.Queue = queue.Queue()
            if self.status == "running":
                self._subscribers.append(q)
            return list(self.events), q

    def finish(self, status: str, error: Optional[str] = None,
               result: Optional[dict] = None) -> None:
        with self._lock:
            self.status = status
            self.error = error
            self.result = result
            terminal = {"status": status}
            if error:
                terminal["error"] = error
            self.events.append(terminal)
            for q in self._subscribers:
                q.put(terminal)
                q.put(None)  # sentinel: stream ends
            self._subscribers.clear()


class JobManager:
    def __init__(self):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def create(self, session_id: str) -> Job:
        job = Job(job_id=uuid.uuid4().hex[:16], session_id=session_id)
        with self._lock:
            self._jobs[job.job_id] = job
        return job

    def get(self, job_id: str) -> Optional[Job]:
        return self._jobs.get(job_id)


class IdempotencyCache:
    """Replay cache for mutating POSTs keyed by the Idempotency-Key header."""

    def __init__(self):
        self._seen: dict[str, tuple[int, dict]] = {}
        self._lock = threading.Lock()

    def get(self, key: Optional[str]) -> Optional[tuple[int, dict]]:
        if key is None:
            return None
        with self._lock:
            return self._seen.get(key)

    def put(self, key: Optional[str], status_code: int, body: dict) -> None:
        if key is None:
            return
        with self._lock:
            self._seen[key] = (status_code, body)
