"""HTTP annotation service: humans label the batches an active learner queries.

Each session runs the learning loop in its own thread.  The loop blocks
inside an oracle whenever it needs labels; HTTP handlers deposit labels
and wake it.  Because the loop is the same `learner.run` the simulation
harness uses, a session driven by a scripted client with gold labels
produces a trace identical to a simulated run with the same seeds.

Durability: every session appends to an event log (created, batch_issued,
label_received, model_trained, stopped).  Labels are fsynced before the
submit call is acknowledged; restarting the service replays logged labels
through the loop, which re-issues the same batches and lands in the same
state.
"""

from __future__ import annotations

import asyncio
import json
import os
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import learner, svm
from .data import Dataset, LabeledInstance, LibsvmParseError, parse_libsvm, serialize_libsvm, to_csr
from .learner import AlConfig, OracleError
from .stopping import StopConfig

__version__ = "0.1.0"

AWAITING = "awaiting_labels"
TRAINING = "training"
STOPPED = "stopped"
COMPLETED = "completed"
FAILED = "failed"


class ApiError(Exception):
    def __init__(self, status: int, error: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.error = error
        self.detail = detail


class SessionOracle:
    """Hands the loop's label requests to HTTP and blocks until satisfied."""

    def __init__(self, session: "Session"):
        self._session = session

    def labels_for(self, indices):
        s = self._session
        with s.cond:
            s.pending = [int(i) for i in indices]
            s.received = {}
            s.pending_values = s.compute_pending_values()
            s.state = AWAITING
            s.log_event("batch_issued", {"indices": s.pending})
            s.apply_replay_locked()
            s.cond.notify_all()
            while len(s.received) < len(s.pending) and not s.closed:
                s.cond.wait()
            if s.closed:
                raise OracleError("session closed")
            labels = [s.received[i] for i in s.pending]
            s.pending = []
            s.received = {}
            s.pending_values = {}
            s.state = TRAINING
            return labels


class Session:
    """One annotation session: pool, live loop thread, event log, mirrors.

    HTTP handlers and the loop thread synchronize on ``cond``; every
    mutable field below is accessed only while holding it (the loop
    thread's trace object is never touched directly by handlers).
    """

    def __init__(
        self,
        session_id: str,
        pool: Dataset,
        al_config: AlConfig,
        stop_config: StopConfig,
        halt_on_stop: bool,
        directory: Path,
    ):
        self.id = session_id
        self.pool = pool
        self.pool_csr = to_csr(pool.instances, pool.dimension)
        self.al_config = al_config
        self.stop_config = stop_config
        self.halt_on_stop = halt_on_stop
        self.directory = directory
        self.cond = threading.Condition()
        self.state = TRAINING
        self.closed = False
        self.error: str | None = None

        self.pending: list[int] = []
        self.received: dict[int, int] = {}
        self.pending_values: dict[int, float] = {}
        self.labels_in_order: list[tuple[int, int]] = []
        self.labels_by_index: dict[int, int] = {}

        self.pa: float | None = None
        self.agreements: list[float] = []
        self.stopped_at: int | None = None
        self.last_model: svm.SvmModel | None = None
        self.trace_header: dict = {}
        # record objects, not snapshots: the loop writes each record's batch
        # after the observer fires (at selection time), and the blocking
        # label request publishes that write before the batch is observable
        self.trace_rows: list[learner.IterationRecord] = []

        self.replay_labels: dict[int, int] = {}
        self.replaying = False

        self.directory.mkdir(parents=True, exist_ok=True)
        self._log_path = self.directory / "events.jsonl"
        self._log_handle = open(self._log_path, "a", encoding="utf-8")
        self.thread = threading.Thread(target=self._drive, daemon=True)

    # -- event log ---------------------------------------------------------

    def log_event(self, kind: str, payload: dict, fsync: bool = False) -> None:
        if self.replaying and kind != "label_received":
            return  # recovery re-walks the loop; informational events are already logged
        record = {"event": kind, **payload}
        self._log_handle.write(json.dumps(record, sort_keys=True) + "\n")
        self._log_handle.flush()
        if fsync:
            os.fsync(self._log_handle.fileno())

    # -- loop thread -------------------------------------------------------

    def start(self) -> None:
        self.thread.start()

    def _drive(self) -> None:
        try:
            trace = learner.run(
                self.pool,
                self.al_config,
                SessionOracle(self),
                self.stop_config,
                strategy="closest",
                halt_on_stop=self.halt_on_stop,
                observer=self._observe,
            )
        except Exception as exc:  # surfaced via status; the log keeps the labels safe
            with self.cond:
                self.error = f"{type(exc).__name__}: {exc}"
                self.state = FAILED
                self.cond.notify_all()
            return
        with self.cond:
            self.trace_header = {
                "strategy": trace.strategy,
                "seed": trace.seed,
                "pa": trace.pa,
                "init_indices": list(trace.init_indices),
                "stopped_at": trace.stopped_at,
                "halted": trace.halted,
                "aborted": trace.aborted,
            }
            if trace.aborted and not self.closed:
                self.error = "run aborted"
                self.state = FAILED
            else:
                self.state = STOPPED if trace.halted else COMPLETED
            self.log_event("stopped" if trace.halted else "completed",
                           {"stopped_at": trace.stopped_at})
            self.cond.notify_all()

    def _observe(self, trace, record) -> None:
        with self.cond:
            self.pa = trace.pa
            self.stopped_at = trace.stopped_at
            self.last_model = record.model
            if record.agreement is not None:
                self.agreements.append(record.agreement)
            self.trace_header = {
                "strategy": trace.strategy,
                "seed": trace.seed,
                "pa": trace.pa,
                "init_indices": list(trace.init_indices),
                "stopped_at": trace.stopped_at,
                "halted": trace.halted,
                "aborted": trace.aborted,
            }
            self.trace_rows.append(record)
            self.log_event(
                "model_trained",
                {"iteration": record.iteration, "labeled_count": record.labeled_count,
                 "agreement": record.agreement, "stopped": record.stopped},
            )

    # -- label intake ------------------------------------------------------

    def compute_pending_values(self) -> dict[int, float]:
        if self.last_model is None or not self.pending:
            return {}
        values = svm.decision_values(self.last_model, self.pool_csr[self.pending])
        return {i: float(abs(v)) for i, v in zip(self.pending, values)}

    def apply_replay_locked(self) -> None:
        """Feed logged labels to the freshly issued batch during recovery."""
        if not self.replay_labels:
            return
        matched = False
        for idx in self.pending:
            if idx in self.replay_labels and idx not in self.received:
                self._accept_locked(idx, self.replay_labels.pop(idx))
                matched = True
        if not matched:
            # the loop is deterministic, so logged labels always match the
            # re-issued batches; leftovers mean a foreign or corrupt log
            self.replay_labels.clear()
        if not self.replay_labels:
            self.replaying = False

    def _accept_locked(self, index: int, label: int) -> None:
        self.received[index] = label
        self.labels_by_index[index] = label
        self.labels_in_order.append((index, label))

    def submit(self, pairs: list[tuple[int, int]]) -> int:
        """Apply labels for pending indices; returns how many were new.

        Exact duplicates (index already labeled with the same label) are
        acknowledged without effect; conflicting or non-pending indices
        raise 409.
        """
        with self.cond:
            fresh = []
            for index, label in pairs:
                if index in self.labels_by_index:
                    if self.labels_by_index[index] == label:
                        continue  # exact duplicate: acknowledged, no effect
                    raise ApiError(
                        409, "conflict",
                        f"index {index} already labeled {self.labels_by_index[index]:+d}",
                    )
                if self.state in (STOPPED, COMPLETED, FAILED):
                    raise ApiError(409, "conflict", f"session is {self.state}")
                if index not in self.pending:
                    raise ApiError(409, "conflict", f"index {index} is not pending")
                fresh.append((index, label))
            for index, label in fresh:
                self.log_event("label_received", {"index": index, "label": label}, fsync=True)
                self._accept_locked(index, label)
            if fresh:
                self.cond.notify_all()
            return len(fresh)

    # -- views (all under lock) --------------------------------------------

    def batch_view(self) -> dict:
        with self.cond:
            items = [
                {
                    "index": i,
                    "text": self.pool.text_of(i),
                    "abs_decision_value": self.pending_values.get(i),
                }
                for i in self.pending
                if i not in self.received
            ]
            return {
                "session_id": self.id,
                "pending": [item["index"] for item in items],
                "items": items,
                "state": self.state,
                "stopped": self.state == STOPPED,
            }

    def status_view(self) -> dict:
        with self.cond:
            labeled = len(self.labels_by_index)
            return {
                "session_id": self.id,
                "state": self.state,
                "labeled_count": labeled,
                "pool_size": len(self.pool),
                "percent_labeled": 100.0 * labeled / len(self.pool),
                "pa": self.pa,
                "agreements": self.agreements[-self.stop_config.window :],
                "stopped_at": self.stopped_at,
                "error": self.error,
            }

    def export_view(self) -> dict:
        with self.cond:
            instances = [
                LabeledInstance(self.pool.instances[i].features, label)
                for i, label in self.labels_in_order
            ]
            libsvm = serialize_libsvm(Dataset(tuple(instances), dimension=self.pool.dimension))
            model_text = svm.save_model(self.last_model) if self.last_model else None
            rows = []
            if self.trace_header:
                rows = [self.trace_header] + [r.to_dict() for r in self.trace_rows]
            trace = "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
            return {
                "session_id": self.id,
                "labeled_count": len(self.labels_in_order),
                "libsvm": libsvm,
                "model": model_text,
                "trace": trace,
            }

    def close(self) -> None:
        with self.cond:
            self.closed = True
            self.cond.notify_all()
        self.thread.join(timeout=5.0)
        self._log_handle.close()


class Registry:
    """All live sessions plus the on-disk layout they persist under."""

    def __init__(self, state_dir: Path, halt_on_stop: bool):
        self.state_dir = Path(state_dir)
        self.halt_on_stop = halt_on_stop
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self.state_dir.mkdir(parents=True, exist_ok=True)

    def create(self, body: dict) -> Session:
        session_id = uuid.uuid4().hex[:16]
        session = self._build(session_id, body)
        session.log_event("created", {"session_id": session_id, "body": body})
        with self.lock:
            self.sessions[session_id] = session
        session.start()
        return session

    def _build(self, session_id: str, body: dict) -> Session:
        dataset_text = body.get("dataset")
        if dataset_text is None and body.get("dataset_path"):
            try:
                dataset_text = Path(body["dataset_path"]).read_text()
            except OSError as exc:
                raise ApiError(422, "unprocessable", f"cannot read dataset_path: {exc}")
        if not isinstance(dataset_text, str) or not dataset_text.strip():
            raise ApiError(422, "unprocessable", "dataset (LIBSVM text) is required")
        try:
            pool = parse_libsvm(dataset_text)
        except LibsvmParseError as exc:
            raise ApiError(422, "unprocessable", f"dataset: {exc}")
        texts = body.get("texts")
        if texts is not None:
            if not isinstance(texts, list) or len(texts) != len(pool):
                raise ApiError(422, "unprocessable", "texts must align with dataset rows")
            pool = Dataset(pool.instances, pool.dimension, texts=tuple(str(t) for t in texts))
        if len(pool) < 2:
            raise ApiError(422, "unprocessable", "dataset needs at least two instances")
        try:
            al_config = AlConfig(
                init_size=body.get("init_size"),
                batch_size=body.get("batch_size"),
                pa_grid=tuple(body.get("pa_grid", AlConfig.pa_grid)),
                c_minus=body.get("c_minus", 1.0),
                seed=body.get("seed", 0),
            )
            stop_config = StopConfig(
                stop_set_size=body.get("stop_set_size", 2000),
                agreement_threshold=body.get("stop_threshold", 0.99),
                window=body.get("stop_window", 3),
                seed=body.get("stop_seed", body.get("seed", 0)),
            )
        except (TypeError, ValueError) as exc:
            raise ApiError(422, "unprocessable", str(exc))
        halt = bool(body.get("halt_on_stop", self.halt_on_stop))
        return Session(
            session_id, pool, al_config, stop_config, halt, self.state_dir / session_id
        )

    def recover(self) -> int:
        """Rebuild sessions from their event logs; returns how many."""
        count = 0
        for directory in sorted(self.state_dir.iterdir()) if self.state_dir.exists() else []:
            log_path = directory / "events.jsonl"
            if not log_path.is_file():
                continue
            created = None
            labels: dict[int, int] = {}
            with open(log_path, encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    event = json.loads(line)
                    if event["event"] == "created":
                        created = event
                    elif event["event"] == "label_received":
                        labels[int(event["index"])] = int(event["label"])
            if created is None:
                continue
            session_id = created["session_id"]
            try:
                session = self._build(session_id, created["body"])
            except ApiError:
                continue  # directory is not restorable; leave its log untouched
            session.replay_labels = labels
            session.replaying = bool(labels)
            with self.lock:
                self.sessions[session_id] = session
            session.start()
            count += 1
        return count

    def get(self, session_id: str) -> Session:
        with self.lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "not_found", f"no session {session_id!r}")
        return session

    def shutdown(self) -> None:
        with self.lock:
            sessions = list(self.sessions.values())
        for session in sessions:
            session.close()


async def _await_not_training(session: Session, timeout: float = 30.0) -> None:
    """Poll until the loop thread leaves `training` without blocking the
    event loop (the loop signals a threading.Condition, not an asyncio one)."""
    steps = max(1, int(timeout / 0.02))
    for _ in range(steps):
        with session.cond:
            if session.state != TRAINING:
                return
        await asyncio.sleep(0.02)


def create_app(state_dir, halt_on_stop: bool = True, ui_dir=None) -> FastAPI:
    """Assemble the service; recovers any sessions already on disk."""
    app = FastAPI(title="alpool annotation service", version=__version__)
    registry = Registry(Path(state_dir), halt_on_stop)
    recovered = registry.recover()
    app.state.registry = registry
    app.state.recovered = recovered

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.error, "detail": exc.detail}
        )

    @app.get("/health")
    def health():
        with registry.lock:
            n = len(registry.sessions)
        return {"status": "ok", "version": __version__, "sessions": n}

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        try:
            body = await request.json()
        except Exception:
            raise ApiError(400, "bad_request", "body must be JSON")
        if not isinstance(body, dict):
            raise ApiError(400, "bad_request", "body must be a JSON object")
        session = registry.create(body)
        # the init batch is issued by the loop thread almost immediately
        await _await_not_training(session)
        view = session.batch_view()
        view["halt_on_stop"] = session.halt_on_stop
        return view

    @app.get("/sessions/{session_id}/batch")
    def get_batch(session_id: str):
        return registry.get(session_id).batch_view()

    @app.post("/sessions/{session_id}/labels")
    async def submit_labels(session_id: str, request: Request):
        session = registry.get(session_id)
        try:
            body = await request.json()
        except Exception:
            raise ApiError(400, "bad_request", "body must be JSON")
        raw = body.get("labels") if isinstance(body, dict) else None
        if not isinstance(raw, list) or not raw:
            raise ApiError(422, "unprocessable", "labels must be a non-empty list")
        pairs = []
        for entry in raw:
            if not isinstance(entry, dict) or "index" not in entry or "label" not in entry:
                raise ApiError(422, "unprocessable", "each label needs index and label")
            try:
                index, label = int(entry["index"]), int(entry["label"])
            except (TypeError, ValueError):
                raise ApiError(422, "unprocessable", "index and label must be integers")
            if label not in (1, -1):
                raise ApiError(422, "unprocessable", f"label must be +1 or -1, got {label}")
            pairs.append((index, label))
        accepted = session.submit(pairs)
        view = session.batch_view()
        view["accepted"] = accepted
        view["labeled_count"] = len(session.labels_by_index)
        return view

    @app.get("/sessions/{session_id}/status")
    def get_status(session_id: str):
        return registry.get(session_id).status_view()

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str):
        return registry.get(session_id).export_view()

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
