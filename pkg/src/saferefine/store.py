"""Append-only persistence of runs with crash recovery and resume.

Layout per run: ``<root>/<run_id>/manifest.json`` plus ``events.jsonl``,
an append-only log of self-delimiting JSON records (kind = query, trace,
result, failure). Records are flushed and fsynced before the append call
returns, so at most the final line can be lost or truncated by a crash;
the loader detects and drops a partial tail and reports it. The index of
completed queries is always rebuilt from the log, never trusted from a
cache.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import (
    ConfigMismatchError,
    SealedRunError,
    StorageError,
    UnknownRunError,
)
from .model import IterationTrace, Query, QueryFailure, QueryRunResult, RunOutcome

HASH_ALGORITHM = "sha256"

STATUS_IN_PROGRESS = "in_progress"
STATUS_COMPLETE = "complete"


def digest_config(record: Mapping[str, Any]) -> str:
    """Deterministic content hash of a configuration record."""
    canonical = json.dumps(record, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    started_at: str
    config_digest: str
    generator_label: str
    status: str = STATUS_IN_PROGRESS
    hash_algorithm: str = HASH_ALGORITHM

    def to_record(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "started_at": self.started_at,
            "config_digest": self.config_digest,
            "generator_label": self.generator_label,
            "status": self.status,
            "hash_algorithm": self.hash_algorithm,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "RunManifest":
        return cls(
            run_id=rec["run_id"],
            started_at=rec["started_at"],
            config_digest=rec["config_digest"],
            generator_label=rec.get("generator_label", ""),
            status=rec.get("status", STATUS_IN_PROGRESS),
            hash_algorithm=rec.get("hash_algorithm", HASH_ALGORITHM),
        )


def new_run_id() -> str:
    return time.strftime("%Y%m%d-%H%M%S") + "-" + uuid.uuid4().hex[:8]


def _manifest_path(run_dir: Path) -> Path:
    return run_dir / "manifest.json"


def _events_path(run_dir: Path) -> Path:
    return run_dir / "events.jsonl"


def read_manifest(run_dir: str | Path) -> RunManifest:
    run_dir = Path(run_dir)
    path = _manifest_path(run_dir)
    if not path.is_file():
        raise UnknownRunError(f"no run manifest at {path}")
    try:
        return RunManifest.from_record(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError) as exc:
        raise StorageError(f"corrupt manifest at {path}: {exc}") from None


def _write_manifest(run_dir: Path, manifest: RunManifest) -> None:
    tmp = _manifest_path(run_dir).with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest.to_record(), indent=2, sort_keys=True), encoding="utf-8")
    os.replace(tmp, _manifest_path(run_dir))


class RunWriter:
    """Single-writer append sink for one run.

    Serializes appends from concurrent query workers through one lock, so
    the log is a totally ordered record stream. Implements the engine's
    TraceSink protocol.
    """

    def __init__(self, run_dir: Path, manifest: RunManifest, durable: bool = True):
        self.run_dir = Path(run_dir)
        self.manifest = manifest
        self.durable = durable
        self._lock = threading.Lock()
        self._fh = _events_path(self.run_dir).open("a", encoding="utf-8")
        self._sealed = manifest.status == STATUS_COMPLETE

    # -- lifecycle -------------------------------------------------------

    @classmethod
    def create(
        cls,
        root: str | Path,
        config_digest: str,
        generator_label: str,
        run_id: str | None = None,
        durable: bool = True,
    ) -> "RunWriter":
        run_id = run_id or new_run_id()
        run_dir = Path(root) / run_id
        if run_dir.exists():
            raise StorageError(f"run directory already exists: {run_dir}")
        run_dir.mkdir(parents=True)
        manifest = RunManifest(
            run_id=run_id,
            started_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
            config_digest=config_digest,
            generator_label=generator_label,
        )
        _write_manifest(run_dir, manifest)
        return cls(run_dir, manifest, durable=durable)

    @classmethod
    def reopen(
        cls, root: str | Path, run_id: str, config_digest: str, durable: bool = True
    ) -> "RunWriter":
        """Reopen an in-progress run for appending, repairing a truncated
        tail left by a crash. Refuses sealed runs and digest mismatches."""
        run_dir = Path(root) / run_id
        manifest = read_manifest(run_dir)
        if manifest.status == STATUS_COMPLETE:
            raise SealedRunError(f"run {run_id!r} is complete; it accepts no appends")
        if manifest.config_digest != config_digest:
            raise ConfigMismatchError(
                f"run {run_id!r} was started with config digest "
                f"{manifest.config_digest[:12]}..., refusing to resume with "
                f"{config_digest[:12]}..."
            )
        _repair_tail(_events_path(run_dir))
        return cls(run_dir, manifest, durable=durable)

    def seal(self) -> None:
        """Mark the run complete; further appends raise SealedRunError."""
        with self._lock:
            self._fh.flush()
            if self.durable:
                os.fsync(self._fh.fileno())
            self._fh.close()
            self.manifest = RunManifest(
                run_id=self.manifest.run_id,
                started_at=self.manifest.started_at,
                config_digest=self.manifest.config_digest,
                generator_label=self.manifest.generator_label,
                status=STATUS_COMPLETE,
                hash_algorithm=self.manifest.hash_algorithm,
            )
            _write_manifest(self.run_dir, self.manifest)
            self._sealed = True

    def close(self) -> None:
        """Close the file handle without sealing (run stays in progress)."""
        with self._lock:
            if not self._fh.closed:
                self._fh.flush()
                if self.durable:
                    os.fsync(self._fh.fileno())
                self._fh.close()

    # -- appends ---------------------------------------------------------

    def _append(self, record: Mapping[str, Any]) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":"))
        with self._lock:
            if self._sealed:
                raise SealedRunError(
                    f"run {self.manifest.run_id!r} is complete; it accepts no appends"
                )
            try:
                self._fh.write(line + "\n")
                self._fh.flush()
                if self.durable:
                    os.fsync(self._fh.fileno())
            except OSError as exc:
                raise StorageError(f"append failed: {exc}") from exc

    def record_query(self, query: Query) -> None:
        self._append({"kind": "query", **query.to_record()})

    def record_trace(self, trace: IterationTrace) -> None:
        self._append({"kind": "trace", **trace.to_record()})

    def record_result(self, result: QueryRunResult) -> None:
        self._append({"kind": "result", **result.to_record()})

    def record_failure(self, failure: QueryFailure) -> None:
        self._append({"kind": "failure", **failure.to_record()})


def _repair_tail(path: Path) -> None:
    """Truncate a torn final record so future appends stay line-aligned.

    Covers both an unterminated tail and a terminated final line holding
    invalid JSON; either would end up mid-file after the next append and
    turn a recoverable crash artifact into unrecoverable corruption.
    """
    if not path.exists():
        return
    data = path.read_bytes()
    if not data:
        return
    if not data.endswith(b"\n"):
        # unterminated tail: certainly torn
        data = data[: data.rfind(b"\n") + 1]
    if data:
        # a crash tears at most one record; check only the final line
        start = data.rfind(b"\n", 0, len(data) - 1) + 1
        try:
            json.loads(data[start:-1].decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            data = data[:start]
    with path.open("rb+") as fh:
        fh.truncate(len(data))


@dataclass
class LoadedRun:
    """Reconstructed state of one run directory."""

    manifest: RunManifest
    queries: dict[str, Query]
    query_order: list[str]
    outcomes: list[RunOutcome]
    pending_query_ids: list[str]
    truncated_records: int
    ignored_records: int

    @property
    def failures(self) -> list[QueryFailure]:
        return [o for o in self.outcomes if isinstance(o, QueryFailure)]


def load_run(run_dir: str | Path) -> LoadedRun:
    """Rebuild queries, traces, and terminal outcomes from the event log.

    A partial final line (torn write) is dropped and counted. Trace
    sequences restart at iteration 1 when a query was re-executed after an
    interrupted attempt; only the attempt closed by a terminal record
    counts. Corruption anywhere before the tail raises StorageError.
    """
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    events = _events_path(run_dir)

    queries: dict[str, Query] = {}
    query_order: list[str] = []
    open_traces: dict[str, list[IterationTrace]] = {}
    closed: dict[str, RunOutcome] = {}
    truncated = 0
    ignored = 0

    raw = events.read_bytes() if events.exists() else b""
    lines = raw.split(b"\n")
    incomplete_tail = lines and lines[-1] != b""
    if not incomplete_tail and lines:
        lines = lines[:-1]

    for index, blob in enumerate(lines):
        if not blob.strip():
            continue
        is_last = index == len(lines) - 1
        try:
            rec = json.loads(blob.decode("utf-8"))
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
        except (ValueError, UnicodeDecodeError) as exc:
            if is_last:
                truncated += 1
                continue
            raise StorageError(f"corrupt record at line {index + 1}: {exc}") from None

        kind = rec.get("kind")
        try:
            if kind == "query":
                query = Query.from_record(rec)
                if query.id not in queries:
                    queries[query.id] = query
                    query_order.append(query.id)
            elif kind == "trace":
                trace = IterationTrace.from_record(rec)
                qid = trace.response.query_id
                if qid in closed:
                    ignored += 1
                    continue
                bucket = open_traces.setdefault(qid, [])
                if trace.iteration == 1:
                    bucket.clear()
                elif trace.iteration != len(bucket) + 1:
                    raise StorageError(
                        f"line {index + 1}: trace iteration {trace.iteration} does not "
                        f"extend the {len(bucket)} traces recorded for {qid!r}"
                    )
                bucket.append(trace)
            elif kind == "result":
                qid = rec["query_id"]
                if qid in closed:
                    ignored += 1
                    continue
                query = queries.get(qid)
                traces = open_traces.pop(qid, [])
                if query is None or not traces:
                    raise StorageError(
                        f"line {index + 1}: result for {qid!r} without its query/traces"
                    )
                result = QueryRunResult.from_parts(
                    query, traces, max_iterations=rec.get("max_iterations", 5)
                )
                if (
                    result.status.value != rec["status"]
                    or result.iterations_used != rec["iterations_used"]
                ):
                    raise StorageError(
                        f"line {index + 1}: result record for {qid!r} disagrees with "
                        "its traces"
                    )
                closed[qid] = result
            elif kind == "failure":
                qid = rec["query_id"]
                if qid in closed:
                    ignored += 1
                    continue
                query = queries.get(qid)
                if query is None:
                    raise StorageError(f"line {index + 1}: failure for unknown query {qid!r}")
                closed[qid] = QueryFailure(
                    query=query,
                    stage=rec.get("stage", "unknown"),
                    error=rec.get("error", ""),
                    partial_traces=tuple(open_traces.pop(qid, [])),
                )
            else:
                raise StorageError(f"line {index + 1}: unknown record kind {kind!r}")
        except StorageError:
            raise
        except Exception as exc:
            if is_last:
                truncated += 1
                continue
            raise StorageError(f"corrupt record at line {index + 1}: {exc}") from None

    outcomes = [closed[qid] for qid in query_order if qid in closed]
    pending = [qid for qid in query_order if qid not in closed]
    return LoadedRun(
        manifest=manifest,
        queries=queries,
        query_order=query_order,
        outcomes=outcomes,
        pending_query_ids=pending,
        truncated_records=truncated,
        ignored_records=ignored,
    )


def resume_run(
    root: str | Path, run_id: str, dataset: Iterable[Query], config_digest: str
) -> list[str]:
    """Queries with no terminal record, in dataset order.

    Completed (or terminally failed) queries are never re-executed.
    Raises ConfigMismatchError when the supplied configuration digest does
    not match the manifest.
    """
    run_dir = Path(root) / run_id
    loaded = load_run(run_dir)
    if loaded.manifest.config_digest != config_digest:
        raise ConfigMismatchError(
            f"run {run_id!r} was started with config digest "
            f"{loaded.manifest.config_digest[:12]}..., got {config_digest[:12]}..."
        )
    done = {qid for qid in loaded.query_order if qid not in loaded.pending_query_ids}
    return [q.id for q in dataset if q.id not in done]


def find_runs(root: str | Path, status: str | None = None) -> list[RunManifest]:
    """Manifests under a store root, newest directory name last."""
    root = Path(root)
    if not root.is_dir():
        return []
    manifests = []
    for child in sorted(root.iterdir()):
        if child.is_dir() and _manifest_path(child).is_file():
            manifest = read_manifest(child)
            if status is None or manifest.status == status:
                manifests.append(manifest)
    return manifests


def is_complete(manifest: RunManifest) -> bool:
    return manifest.status == STATUS_COMPLETE
