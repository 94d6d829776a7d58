"""HTTP front door: per-path ingestion plus inspection endpoints.

POST /{path}                     dispatch one envelope (canonical wire body)
GET  /paths                      registered paths with their processes
GET  /{path}/agreements          instance summaries
GET  /{path}/agreements/{id}     full instance: data model and history
GET  /_mock/social/outbox        mock social platform outbox
GET  /_mock/mail/outbox          mock mailer outbox
GET  /_mock/escrow               mock escrow balances/holds

Every mutating dispatch is snapshotted to the store before the response is
sent; every dispatch (mutating or not) is appended to the event log when one
is configured.
"""
from __future__ import annotations

import contextlib
import json
import socket
import threading
from dataclasses import dataclass, field as dataclass_field
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .adapters import EscrowLedger, MailAdapter, SocialAdapter
from .engine import (
    CREATED,
    DELIVERED,
    DispatchOutcome,
    Engine,
    IdAllocator,
    InputEnvelope,
    MalformedEnvelope,
    PathDefinition,
    UnknownPath,
    envelope_from_wire,
    system_clock,
)
from .store import EventLog, EventRecord, StorageUnavailable, load, restore_engine, save, snapshot_engine


class BindFailure(Exception):
    pass


@dataclass
class ServerConfig:
    paths: list[PathDefinition]
    bind: str = "127.0.0.1:8080"
    store_path: Path = Path("db.json")
    log_path: Optional[Path] = None
    log_meta: Optional[dict] = None
    escrow_balances: dict[str, int] = dataclass_field(default_factory=dict)
    escrow_default_balance: int = 0
    clock: Callable[[], datetime] = system_clock
    id_start: int = 1

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.bind.rpartition(":")
        if not host or not port.isdigit():
            raise BindFailure(f"bind address {self.bind!r} must look like host:port")
        return host, int(port)


class AppState:
    """Engine, adapters, and persistence wiring behind one app instance."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.social = SocialAdapter()
        self.mail = MailAdapter()
        self.escrow = EscrowLedger(
            config.escrow_balances, default_balance=config.escrow_default_balance
        )
        self.engine = Engine(
            clock=config.clock,
            ids=IdAllocator(start=config.id_start),
            services={"social": self.social, "mail": self.mail, "escrow": self.escrow},
        )
        for path in config.paths:
            self.engine.register_path(path)
        document = load(config.store_path)
        restore_engine(self.engine, document)
        self.event_log = EventLog(config.log_path) if config.log_path else None
        self._event_seq = 0
        self._persist_lock = threading.Lock()
        if self.event_log is not None and not self.event_log.path.exists() and config.log_meta:
            self.event_log.write_meta(config.log_meta)

    def submit(self, path_name: str, env: InputEnvelope) -> DispatchOutcome:
        outcome = self.engine.dispatch(path_name, env)
        with self._persist_lock:
            if self.event_log is not None:
                self._event_seq += 1
                self.event_log.append(
                    EventRecord(
                        seq=self._event_seq,
                        path_name=path_name,
                        envelope=env.to_doc(),
                        disposition=outcome.disposition,
                        agreement_id=outcome.agreement_id,
                    )
                )
            if outcome.disposition in (CREATED, DELIVERED):
                save(snapshot_engine(self.engine), self.config.store_path)
        return outcome

    def save_snapshot(self) -> None:
        with self._persist_lock:
            save(snapshot_engine(self.engine), self.config.store_path)


def build_app(config: ServerConfig) -> FastAPI:
    state = AppState(config)

    @contextlib.asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        state.save_snapshot()  # final flush on graceful shutdown

    app = FastAPI(title="accord", docs_url=None, redoc_url=None, openapi_url=None,
                  lifespan=lifespan)
    app.state.accord = state
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/paths")
    def list_paths():
        return state.engine.paths_doc()

    @app.get("/_mock/social/outbox")
    def social_outbox():
        return state.social.outbox_doc()

    @app.get("/_mock/mail/outbox")
    def mail_outbox():
        return state.mail.outbox_doc()

    @app.get("/_mock/escrow")
    def escrow_snapshot():
        return state.escrow.snapshot_doc()

    @app.get("/{path_name}/agreements")
    def list_agreements(path_name: str):
        try:
            return state.engine.summaries(path_name)
        except UnknownPath:
            return JSONResponse({"error": f"unknown path {path_name!r}"}, status_code=404)

    @app.get("/{path_name}/agreements/{agreement_id}")
    def agreement_detail(path_name: str, agreement_id: str):
        try:
            doc = state.engine.instance_doc(path_name, agreement_id)
        except UnknownPath:
            return JSONResponse({"error": f"unknown path {path_name!r}"}, status_code=404)
        if doc is None:
            return JSONResponse({"error": f"unknown agreement {agreement_id!r}"}, status_code=404)
        doc["status"] = "active" if doc["active_process"] is not None else "terminated"
        return doc

    @app.post("/{path_name}")
    async def ingest(path_name: str, request: Request):
        if path_name not in state.engine.path_names:
            return JSONResponse({"error": f"unknown path {path_name!r}"}, status_code=404)
        raw = await request.body()
        try:
            body = json.loads(raw.decode("utf-8")) if raw else None
        except (ValueError, UnicodeDecodeError):
            return JSONResponse({"error": "request body is not valid JSON"}, status_code=400)
        try:
            env = envelope_from_wire(body, received_at=state.config.clock())
        except MalformedEnvelope as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        try:
            outcome = await run_in_threadpool(state.submit, path_name, env)
        except UnknownPath:
            return JSONResponse({"error": f"unknown path {path_name!r}"}, status_code=404)
        except StorageUnavailable as exc:
            return JSONResponse({"error": str(exc)}, status_code=500)
        if outcome.error == "hook_failure":
            return JSONResponse({"error": outcome.detail or "hook failure"}, status_code=500)
        return outcome.to_wire()

    return app


def run(config: ServerConfig) -> None:
    """Build the app and serve it; blocks until shutdown.

    A final snapshot is flushed on graceful shutdown.
    """
    import uvicorn

    host, port = config.host_port()
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
        if port == 0:
            port = probe.getsockname()[1]
    except OSError as exc:
        raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
    finally:
        probe.close()
    app = build_app(config)
    print(f"serving on http://{host}:{port}", flush=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")
