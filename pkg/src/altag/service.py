"""HTTP annotation service: live select/annotate/advance sessions.

Sessions are durable: a JSON manifest plus an append-only NDJSON event log
per session.  Runtime state is a pure fold over (manifest, events), so
killing the process at any point loses at most an unacknowledged request;
replaying the log reconstructs the store, the iteration counter, and the
open batch exactly (selection and fine-tuning are deterministic given the
session seed).
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from altag.corpus import (
    UPOS,
    AnnotationRecord,
    AnnotationStore,
    Corpus,
    TypeIndex,
    parse_conllu,
    write_conllu,
)
from altag.loop import LoopState, derive_seed, fine_tune_lr, frame_with_language, select_batch
from altag.metrics import token_accuracy
from altag.strategies import ORACLE_STRATEGIES, STRATEGIES, SelectionBatch
from altag.tagger.model import Tagger, load_checkpoint
from altag.tagger.training import train

MANIFEST_SCHEMA = 1


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, details=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.details = details if details is not None else []


@dataclass
class ServiceConfig:
    pool_path: str
    model_path: str
    log_dir: str
    strategy: str = "cral"
    batch_size: int = 50
    seed: int = 0
    test_path: str | None = None
    language_code: str | None = None
    fine_tune_lr_coeff: float = 2.5e-5
    fine_tune_lr_max: float | None = None
    fine_tune_max_epochs: int | None = None
    show_suggestions: bool = False


@dataclass
class AnnotationItem:
    item_id: str
    sentence: list[str]
    highlight_index: int
    type_key: str
    sentence_id: str
    token_index: int
    allowed_tags: list[str] = field(default_factory=lambda: list(UPOS.symbols))
    suggestion: list[str] | None = None

    def to_payload(self) -> dict:
        return {
            "item_id": self.item_id,
            "sentence": self.sentence,
            "highlight_index": self.highlight_index,
            "type_key": self.type_key,
            "sentence_id": self.sentence_id,
            "token_index": self.token_index,
            "allowed_tags": self.allowed_tags,
            "suggestion": self.suggestion,
        }


class Session:
    """One annotation session: loop state plus an open batch of items."""

    def __init__(self, session_id: str, config: ServiceConfig, request: dict,
                 pool: Corpus, model: Tagger, test: Corpus | None):
        self.id = session_id
        self.config = config
        self.request = request
        self.strategy = request.get("strategy") or config.strategy
        self.batch_size = int(request.get("batch_size") or config.batch_size)
        self.seed = int(request.get("seed") if request.get("seed") is not None
                        else config.seed)
        self.show_suggestions = bool(request.get("show_suggestions",
                                                 config.show_suggestions))
        self.test = test
        self.lock = threading.Lock()
        self.state = LoopState(model=model, pool_corpus=pool,
                               index=TypeIndex(pool), store=AnnotationStore())
        self.open_batch: list[AnnotationItem] = []
        self.batch_positions: dict[str, tuple[int, int]] = {}
        self.pending: dict[str, dict] = {}
        self.metrics_rows: list[dict] = []
        self.last_timestamp = 0.0
        self.log: SessionLog | None = None

        if self.strategy not in STRATEGIES:
            raise ApiError(400, "unknown-strategy",
                           f"unknown strategy {self.strategy!r}",
                           details=list(STRATEGIES))
        if self.strategy in ORACLE_STRATEGIES:
            raise ApiError(400, "oracle-strategy",
                           f"strategy {self.strategy!r} reads gold labels and is "
                           "not available in live annotation sessions")

    # -------------------------------------------------------------- #

    def _select_open_batch(self) -> None:
        iteration = self.state.iteration + 1
        batch = select_batch(self.state, self.strategy, self.batch_size,
                             seed=derive_seed(self.seed, iteration),
                             iteration=iteration)
        self.open_batch = []
        self.batch_positions = {}
        self.pending = {}
        suggestions = None
        if self.show_suggestions and batch:
            marginals = self.state.model.predict_marginals(self.state.pool_corpus)
            suggestions = marginals
        for k, item in enumerate(batch):
            si, ti = item.position
            sent = self.state.pool_corpus.sentences[si]
            item_id = f"{self.id[:8]}-{iteration}-{k}"
            suggestion = None
            if suggestions is not None:
                row = suggestions[si][ti]
                top2 = row.argsort()[::-1][:2]
                suggestion = [UPOS.symbol(int(t)) for t in top2]
            self.open_batch.append(AnnotationItem(
                item_id=item_id,
                sentence=[t.surface for t in sent.tokens],
                highlight_index=ti,
                type_key=item.type_key,
                sentence_id=sent.id,
                token_index=ti,
                suggestion=suggestion,
            ))
            self.batch_positions[item_id] = (si, ti)

    def batch_payload(self) -> dict:
        return {
            "session_id": self.id,
            "iteration": self.state.iteration,
            "items": [i.to_payload() for i in self.open_batch],
            "submitted_count": len(self.pending),
            "pending_count": len(self.open_batch) - len(self.pending),
            "pool_remaining": len(self.state.pool_corpus.sentences),
        }

    def apply_annotation(self, label: dict) -> list[str]:
        """Record one label into the pending set; returns warnings."""
        warnings = []
        item_id = label.get("item_id")
        if item_id not in self.batch_positions:
            raise ApiError(400, "unknown-item",
                           f"item {item_id!r} is not part of the open batch",
                           details=[item_id])
        tag = label.get("tag")
        if tag not in UPOS:
            raise ApiError(400, "unknown-tag", f"unknown tag symbol {tag!r}",
                           details=[tag])
        if item_id in self.pending:
            warnings.append(f"item {item_id} resubmitted; last write wins")
        self.pending[item_id] = {
            "tag": tag,
            "elapsed_ms": float(label.get("elapsed_ms", 0.0)),
            "annotator_id": label.get("annotator_id", "anon"),
        }
        return warnings

    def commit_and_advance(self) -> dict:
        missing = [i.item_id for i in self.open_batch if i.item_id not in self.pending]
        if missing:
            raise ApiError(409, "batch-incomplete",
                           f"{len(missing)} items still need labels",
                           details=missing)
        iteration = self.state.iteration + 1
        for item in self.open_batch:
            label = self.pending[item.item_id]
            self.state.store.put(
                self.batch_positions[item.item_id],
                AnnotationRecord(tag=UPOS.index(label["tag"]), iteration=iteration,
                                 annotator=label["annotator_id"],
                                 elapsed_ms=label["elapsed_ms"]),
                allow_overwrite=True,
            )
        started = time.perf_counter()
        if self.open_batch:
            train(self.state.model, self.state.pool_corpus, store=self.state.store,
                  dev=None,
                  lr=self._lr(),
                  seed=derive_seed(self.seed, 10_000 + iteration),
                  max_epochs=self.config.fine_tune_max_epochs)
        self.state.iteration = iteration
        row = {
            "iteration": iteration,
            "n_annotations": len(self.state.store),
            "train_seconds": round(time.perf_counter() - started, 3),
        }
        if self.test is not None:
            row["accuracy"] = token_accuracy(
                self.state.model.predict_tags(self.test), self.test)
        self.metrics_rows.append(row)
        self._select_open_batch()
        return row

    def _lr(self) -> float:
        lr = self.config.fine_tune_lr_coeff * self.state.store.labeled_sentence_count()
        if self.config.fine_tune_lr_max is not None:
            lr = min(lr, self.config.fine_tune_lr_max)
        return lr

    def export_conllu(self) -> str:
        return write_conllu(self.state.pool_corpus, self.state.store)


# ------------------------------------------------------------------------- #
# persistence


class SessionLog:
    """Append-only NDJSON event log plus a manifest, one directory per session."""

    def __init__(self, root: str, session_id: str):
        self.dir = os.path.join(root, session_id)
        os.makedirs(self.dir, exist_ok=True)
        self.manifest_path = os.path.join(self.dir, "manifest.json")
        self.events_path = os.path.join(self.dir, "events.ndjson")

    def write_manifest(self, payload: dict) -> None:
        with open(self.manifest_path, "w", encoding="utf-8") as f:
            json.dump(payload, f, sort_keys=True)
            f.flush()
            os.fsync(f.fileno())

    def append(self, event: dict) -> None:
        with open(self.events_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(event, sort_keys=True) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def read_manifest(self) -> dict:
        with open(self.manifest_path, encoding="utf-8") as f:
            return json.load(f)

    def read_events(self) -> list[dict]:
        if not os.path.exists(self.events_path):
            return []
        events = []
        with open(self.events_path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events


def _monotonic_timestamp(session: Session) -> float:
    now = time.time()
    if now <= session.last_timestamp:
        now = session.last_timestamp + 1e-6
    session.last_timestamp = now
    return now


class AnnotationService:
    """Owns all sessions; one writer per session, serialized by its lock."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        os.makedirs(config.log_dir, exist_ok=True)
        with open(config.pool_path, encoding="utf-8") as f:
            pool = parse_conllu(f.read(), provenance=config.pool_path)
        self.pool = frame_with_language(pool, config.language_code)
        self.test: Corpus | None = None
        if config.test_path:
            with open(config.test_path, encoding="utf-8") as f:
                test = parse_conllu(f.read(), provenance=config.test_path)
            self.test = frame_with_language(test, config.language_code)
        self.sessions: dict[str, Session] = {}
        self.restore_all()

    # ---------------------------------------------------------------- #

    def _fresh_model(self) -> Tagger:
        return load_checkpoint(self.config.model_path)

    def create_session(self, request: dict) -> Session:
        session_id = request.get("session_id") or uuid.uuid4().hex
        if session_id in self.sessions:
            raise ApiError(400, "duplicate-session",
                           f"session {session_id!r} already exists")
        session = Session(session_id, self.config, request,
                          pool=self.pool, model=self._fresh_model(),
                          test=self.test)
        log = SessionLog(self.config.log_dir, session_id)
        log.write_manifest({
            "schema_version": MANIFEST_SCHEMA,
            "session_id": session_id,
            "created_at": time.time(),
            "pool_path": self.config.pool_path,
            "model_path": self.config.model_path,
            "strategy": session.strategy,
            "batch_size": session.batch_size,
            "seed": session.seed,
            "show_suggestions": session.show_suggestions,
        })
        session.log = log
        session._select_open_batch()
        self.sessions[session_id] = session
        return session

    def restore_all(self) -> None:
        if not os.path.isdir(self.config.log_dir):
            return
        for name in sorted(os.listdir(self.config.log_dir)):
            log = SessionLog(self.config.log_dir, name)
            if not os.path.exists(log.manifest_path):
                continue
            self.sessions[name] = self._replay(log)

    def _replay(self, log: SessionLog) -> Session:
        manifest = log.read_manifest()
        request = {
            "strategy": manifest["strategy"],
            "batch_size": manifest["batch_size"],
            "seed": manifest["seed"],
            "show_suggestions": manifest.get("show_suggestions", False),
        }
        session = Session(manifest["session_id"], self.config, request,
                          pool=self.pool, model=self._fresh_model(),
                          test=self.test)
        session.log = log
        session._select_open_batch()
        for event in log.read_events():
            if event["event"] == "annotation":
                session.apply_annotation(event)
            elif event["event"] == "advance":
                session.commit_and_advance()
        return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown-session",
                           f"no session {session_id!r}")
        return session


# ------------------------------------------------------------------------- #
# HTTP surface


def create_app(config: ServiceConfig) -> FastAPI:
    service = AnnotationService(config)
    app = FastAPI(title="altag annotation service")
    app.state.service = service

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={
            "code": exc.code, "message": exc.message, "details": exc.details,
        })

    @app.post("/api/sessions")
    def create_session(body: dict | None = None):
        session = service.create_session(body or {})
        return {"session_id": session.id, **session.batch_payload()}

    @app.get("/api/sessions/{session_id}/batch")
    def get_batch(session_id: str):
        session = service.get(session_id)
        with session.lock:
            return session.batch_payload()

    @app.post("/api/sessions/{session_id}/annotations")
    def submit(session_id: str, body: dict):
        session = service.get(session_id)
        labels = body.get("labels", [])
        warnings = []
        with session.lock:
            for label in labels:
                warnings.extend(session.apply_annotation(label))
                si, ti = session.batch_positions[label["item_id"]]
                session.log.append({
                    "event": "annotation",
                    "timestamp": _monotonic_timestamp(session),
                    "session_id": session.id,
                    "item_id": label["item_id"],
                    "sentence_id": session.state.pool_corpus.sentences[si].id,
                    "token_index": ti,
                    "type_key": session.state.pool_corpus.token(si, ti).type_key,
                    "tag": label["tag"],
                    "annotator_id": label.get("annotator_id", "anon"),
                    "elapsed_ms": float(label.get("elapsed_ms", 0.0)),
                })
            payload = session.batch_payload()
        return {"accepted": len(labels), "warnings": warnings,
                "submitted_count": payload["submitted_count"],
                "pending_count": payload["pending_count"]}

    @app.post("/api/sessions/{session_id}/advance")
    def advance(session_id: str):
        session = service.get(session_id)
        with session.lock:
            row = session.commit_and_advance()
            session.log.append({
                "event": "advance",
                "timestamp": _monotonic_timestamp(session),
                "session_id": session.id,
                "iteration": session.state.iteration,
            })
            return {"status": "ready", "iteration": session.state.iteration,
                    "metrics": row, **session.batch_payload()}

    @app.get("/api/sessions/{session_id}/metrics")
    def metrics(session_id: str):
        session = service.get(session_id)
        with session.lock:
            return {"session_id": session.id, "iterations": session.metrics_rows}

    @app.get("/api/sessions/{session_id}/export")
    def export(session_id: str):
        session = service.get(session_id)
        with session.lock:
            return PlainTextResponse(session.export_conllu())

    return app
