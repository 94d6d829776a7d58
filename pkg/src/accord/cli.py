"""Operator entry point: serve, seed demo flows, inspect agreements, replay logs.

``seed`` drives its scripted flow through a real HTTP server on an ephemeral
port with a deterministic clock and id allocator, so two seeds of the same
demo produce byte-identical stores. ``replay`` rebuilds a store from an event
log and, when the output file already exists, reports byte-equality instead
of overwriting it.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import threading
import time
from pathlib import Path
from typing import Iterator, Optional

import httpx

from .engine import Engine, IdAllocator, TickClock, parse_ts
from .paths import DEMO_PATH_BUILDERS, SCARCE_PATH_NAME, TSC_PATH_NAME
from .server import ServerConfig, build_app, run as run_server
from .store import EventLog, ReplayDivergence, StoreError, load, replay
from .adapters import EscrowLedger, MailAdapter, SocialAdapter, SocialInjector

DEFAULT_DB = "db.json"
SEED_CLOCK_START = "2024-01-01T00:00:00Z"
SEED_BOT_HANDLE = "agreebot"

SEED_ESCROW = {
    SCARCE_PATH_NAME: {"s1": 200, "s2": 250, "s3": 100},
    TSC_PATH_NAME: {},
}


def default_db() -> str:
    return os.environ.get("AE_DB", DEFAULT_DB)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="accord", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the agreement server")
    serve.add_argument("--bind", default="127.0.0.1:8080", help="host:port (port 0 = ephemeral)")
    serve.add_argument("--db", default=None, help=f"store file (default {DEFAULT_DB}, env AE_DB)")
    serve.add_argument("--log", default=None, help="event log file (optional)")
    serve.add_argument(
        "--paths", default="scarce,tsc", help="comma-separated demo paths to mount"
    )
    serve.add_argument(
        "--escrow-default", type=int, default=1000,
        help="escrow balance materialized for unknown handles (demo convenience)",
    )
    serve.add_argument(
        "--escrow-grant", action="append", default=[], metavar="HANDLE=AMOUNT",
        help="seed an escrow balance (repeatable)",
    )

    seed = sub.add_parser("seed", help="run a scripted demo flow against a fresh server")
    seed.add_argument("--demo", choices=sorted(DEMO_PATH_BUILDERS), required=True)
    seed.add_argument("--db", default=None, help=f"store file (default {DEFAULT_DB}, env AE_DB)")
    seed.add_argument("--log", default=None, help="event log file (default <db>.events.jsonl)")

    inspect = sub.add_parser("inspect", help="print one agreement's status, data, and timeline")
    inspect.add_argument("--path", required=True)
    inspect.add_argument("--id", required=True)
    inspect.add_argument("--db", default=None)

    rep = sub.add_parser("replay", help="rebuild a store from an event log")
    rep.add_argument("--log", required=True)
    rep.add_argument("--db-out", required=True, help="output store; compared, not clobbered, if present")
    rep.add_argument("--id-start", type=int, default=None, help="override the logged id offset")

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "seed":
            return _cmd_seed(args)
        if args.command == "inspect":
            return _cmd_inspect(args)
        if args.command == "replay":
            return _cmd_replay(args)
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


# --------------------------------------------------------------------------
# serve

def _cmd_serve(args: argparse.Namespace) -> int:
    grants: dict[str, int] = {}
    for item in args.escrow_grant:
        handle, _, amount = item.partition("=")
        if not handle or not amount.lstrip("-").isdigit():
            print(f"error: --escrow-grant expects HANDLE=AMOUNT, got {item!r}", file=sys.stderr)
            return 2
        grants[handle] = int(amount)
    wanted = [p.strip() for p in args.paths.split(",") if p.strip()]
    paths = []
    for name in wanted:
        if name not in DEMO_PATH_BUILDERS:
            print(f"error: unknown demo path {name!r}", file=sys.stderr)
            return 2
        paths.append(DEMO_PATH_BUILDERS[name]())
    config = ServerConfig(
        paths=paths,
        bind=args.bind,
        store_path=Path(args.db or default_db()),
        log_path=Path(args.log) if args.log else None,
        log_meta=_log_meta(wanted, id_start=1, escrow=grants) if args.log else None,
        escrow_balances=grants,
        escrow_default_balance=args.escrow_default,
    )
    run_server(config)
    return 0


# --------------------------------------------------------------------------
# seed

@contextlib.contextmanager
def ephemeral_server(config: ServerConfig) -> Iterator[str]:
    """Serve ``config`` on an ephemeral port in a background thread."""
    import uvicorn

    app = build_app(config)
    host, port = config.host_port()
    uv_config = uvicorn.Config(app, host=host, port=port, log_level="error")
    server = uvicorn.Server(uv_config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        deadline = time.monotonic() + 10
        while not server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("server did not start within 10s")
            time.sleep(0.01)
        bound = server.servers[0].sockets[0].getsockname()
        yield f"http://{bound[0]}:{bound[1]}"
    finally:
        server.should_exit = True
        thread.join(timeout=10)


def _log_meta(path_names: list[str], *, id_start: int, escrow: dict[str, int]) -> dict:
    return {
        "paths": list(path_names),
        "id_start": id_start,
        "clock_start": SEED_CLOCK_START,
        "escrow": dict(escrow),
    }


def seed_config(demo: str, db: Path, log: Path) -> ServerConfig:
    escrow = SEED_ESCROW[demo]
    return ServerConfig(
        paths=[DEMO_PATH_BUILDERS[demo]()],
        bind="127.0.0.1:0",
        store_path=db,
        log_path=log,
        log_meta=_log_meta([demo], id_start=1, escrow=escrow),
        escrow_balances=dict(escrow),
        clock=TickClock(parse_ts(SEED_CLOCK_START)),
        id_start=1,
    )


def run_seed(demo: str, db: Path, log: Path) -> dict:
    """Drive the demo's scripted flow over HTTP; returns the final summary."""
    config = seed_config(demo, db, log)
    with ephemeral_server(config) as base_url:
        with httpx.Client(base_url=base_url, timeout=10.0) as client:
            if demo == SCARCE_PATH_NAME:
                result = _seed_scarce(client)
            else:
                result = _seed_tsc(client)
    return result


def _post(client: httpx.Client, path_name: str, body: dict) -> dict:
    response = client.post(f"/{path_name}", json=body)
    response.raise_for_status()
    return response.json()


def _seed_scarce(client: httpx.Client) -> dict:
    author, topic = "prof_ada", "attention economics"

    def pledge(handle: str, amount: int) -> dict:
        return _post(client, SCARCE_PATH_NAME, {
            "source": "web-form",
            "kind": "pledge",
            "actor": {"platform": "web-form", "handle": handle},
            "payload": {"author": author, "topic": topic, "amount": amount},
        })

    first = pledge("s1", 200)
    agreement_id = first["agreement_id"]
    pledge("s2", 250)
    pledge("s3", 100)
    _post(client, SCARCE_PATH_NAME, {
        "source": "social",
        "kind": "dm",
        "actor": {"platform": "social", "handle": author},
        "payload": {"text": "accept"},
    })
    _post(client, SCARCE_PATH_NAME, {
        "source": "web-form",
        "kind": "essay_submission",
        "actor": {"platform": "web-form", "handle": author},
        "payload": {
            "author": author,
            "topic": topic,
            "title": "Attention is Scarce",
            "body": "An essay on why attention behaves like a currency.",
        },
    })
    detail = client.get(f"/{SCARCE_PATH_NAME}/agreements/{agreement_id}").json()
    return {"path": SCARCE_PATH_NAME, "agreement_id": agreement_id, "status": detail["status"],
            "outcome": detail.get("outcome")}


def _seed_tsc(client: httpx.Client) -> dict:
    social = SocialAdapter()  # only mints deterministic inbound thread ids
    injector = SocialInjector(
        send=lambda path_name, body: _post(client, path_name, body),
        path_name=TSC_PATH_NAME,
        bot_handle=SEED_BOT_HANDLE,
        social=social,
    )
    thread = social.mint_thread_id()
    created = injector.inject(
        "status_mention",
        "alice",
        f"@{SEED_BOT_HANDLE} @bob I will review your draft by Friday. agreement",
        thread_id=thread,
    )
    agreement_id = created["agreement_id"]
    injector.inject("reply", "alice", "upheld", thread_id=thread)
    injector.inject("reply", "bob", "Broken, sadly", thread_id=thread)
    injector.inject("reply", "bob", "On reflection: upheld!", thread_id=thread)
    detail = client.get(f"/{TSC_PATH_NAME}/agreements/{agreement_id}").json()
    return {"path": TSC_PATH_NAME, "agreement_id": agreement_id, "status": detail["status"],
            "outcome": detail.get("outcome")}


def _cmd_seed(args: argparse.Namespace) -> int:
    db = Path(args.db or default_db())
    log = Path(args.log) if args.log else db.with_suffix(db.suffix + ".events.jsonl")
    for stale in (db, log):
        if stale.exists():
            print(f"error: {stale} already exists; seed writes fresh files", file=sys.stderr)
            return 1
    result = run_seed(args.demo, db, log)
    print(
        f"seeded {result['path']} agreement {result['agreement_id']}: "
        f"{result['status']}"
        + (f" outcome={result['outcome']}" if result.get("outcome") else "")
    )
    print(f"store: {db}\nevent log: {log}")
    return 0


# --------------------------------------------------------------------------
# inspect

def _cmd_inspect(args: argparse.Namespace) -> int:
    document = load(Path(args.db or default_db()))
    by_id = document.agreements.get(args.path, {})
    doc = by_id.get(args.id)
    if doc is None:
        print(f"error: no agreement {args.id!r} under path {args.path!r}", file=sys.stderr)
        return 1
    status = "active" if doc.get("active_process") else "terminated"
    line = f"{doc['id']} [{args.path}] {status}"
    if doc.get("active_process"):
        line += f" in {doc['active_process']}"
    if doc.get("outcome"):
        line += f" outcome={doc['outcome']}"
    print(line)
    print(f"created: {doc['created_at']}")
    print("data model:")
    print(json.dumps(doc.get("data_model", {}), indent=2, sort_keys=True))
    print("timeline:")
    for rec in doc.get("history", []):
        src = rec.get("from_process") or "(start)"
        dst = rec.get("to_process") or f"(end: {doc.get('outcome')})"
        print(f"  {rec['seq']:>3}  {rec['at']}  {src} -> {dst}  [{rec['cause']}]")
    return 0


# --------------------------------------------------------------------------
# replay

def build_replay_engine(meta: dict, *, id_start: Optional[int] = None) -> Engine:
    names = meta.get("paths") or []
    social = SocialAdapter()
    mail = MailAdapter()
    escrow = EscrowLedger(meta.get("escrow") or {})
    engine = Engine(
        clock=TickClock(parse_ts(meta.get("clock_start", SEED_CLOCK_START))),
        ids=IdAllocator(start=id_start if id_start is not None else meta.get("id_start", 1)),
        services={"social": social, "mail": mail, "escrow": escrow},
    )
    for name in names:
        if name not in DEMO_PATH_BUILDERS:
            raise ValueError(f"event log references unknown path {name!r}")
        engine.register_path(DEMO_PATH_BUILDERS[name]())
    return engine


def _cmd_replay(args: argparse.Namespace) -> int:
    meta, records = EventLog.read(Path(args.log))
    if meta is None:
        print("error: event log has no meta header; cannot reconstruct the engine", file=sys.stderr)
        return 1
    engine = build_replay_engine(meta, id_start=args.id_start)
    try:
        document = replay(records, engine)
    except ReplayDivergence as exc:
        print(f"replay divergence: {exc}", file=sys.stderr)
        return 1
    out = Path(args.db_out)
    if out.exists():
        if out.read_bytes() == document.canonical_bytes():
            print("identical")
            return 0
        print("DIVERGED: rebuilt store does not match existing snapshot", file=sys.stderr)
        return 1
    out.write_bytes(document.canonical_bytes())
    print(f"rebuilt store written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
