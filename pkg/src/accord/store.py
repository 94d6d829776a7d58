"""Durable single-document store plus an append-only event log for replay.

The whole registry is serialized to one canonical JSON document (UTF-8,
sorted keys) and replaced atomically on every save, so a reader never sees a
torn file and identical state always produces identical bytes. The event log
is a newline-delimited sidecar recording every dispatched envelope with its
disposition; replaying it against a fresh engine with the same injected id
and clock sources must rebuild the snapshot byte for byte.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .engine import Engine, InputEnvelope, canonical_json

SCHEMA_VERSION = 1

Location = Union[str, Path]


class StoreError(Exception):
    pass


class StorageUnavailable(StoreError):
    pass


class CorruptDocument(StoreError):
    pass


class UnsupportedVersion(StoreError):
    pass


class ReplayDivergence(StoreError):
    def __init__(self, seq: int, field_name: str, expected, actual):
        super().__init__(
            f"replay diverged at event {seq}: {field_name} expected {expected!r}, got {actual!r}"
        )
        self.seq = seq
        self.field_name = field_name
        self.expected = expected
        self.actual = actual


@dataclass
class StoreDocument:
    version: int = SCHEMA_VERSION
    id_counters: dict[str, int] = field(default_factory=dict)
    agreements: dict[str, dict[str, dict]] = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "version": self.version,
            "id_counters": self.id_counters,
            "agreements": self.agreements,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "StoreDocument":
        if not isinstance(doc, Mapping):
            raise CorruptDocument("store document must be a JSON object")
        version = doc.get("version")
        if not isinstance(version, int):
            raise CorruptDocument("store document lacks an integer version")
        if version != SCHEMA_VERSION:
            raise UnsupportedVersion(f"store schema version {version} is not supported")
        id_counters = doc.get("id_counters")
        agreements = doc.get("agreements")
        if not isinstance(id_counters, dict) or not all(
            isinstance(k, str) and isinstance(v, int) for k, v in id_counters.items()
        ):
            raise CorruptDocument("id_counters must map path names to integers")
        if not isinstance(agreements, dict) or not all(
            isinstance(path, str) and isinstance(by_id, dict) for path, by_id in agreements.items()
        ):
            raise CorruptDocument("agreements must map path names to instance maps")
        return cls(version=version, id_counters=dict(id_counters), agreements=agreements)

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_doc()).encode("utf-8")


def snapshot_engine(engine: Engine) -> StoreDocument:
    return StoreDocument(
        id_counters=engine.ids.counters(),
        agreements=engine.snapshot_agreements(),
    )


def restore_engine(engine: Engine, doc: StoreDocument) -> None:
    engine.ids.load(doc.id_counters)
    engine.load_agreements(doc.agreements)


def save(doc: StoreDocument, location: Location) -> None:
    """Atomically replace the document at ``location`` (write temp, rename)."""
    path = Path(location)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(doc.canonical_bytes())
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as exc:
        raise StorageUnavailable(f"cannot write store at {path}: {exc}") from exc


def load(location: Location) -> StoreDocument:
    """Load the document; a missing file yields a fresh empty one."""
    path = Path(location)
    if not path.exists():
        return StoreDocument()
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise StorageUnavailable(f"cannot read store at {path}: {exc}") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CorruptDocument(f"store at {path} is not valid JSON: {exc}") from exc
    return StoreDocument.from_doc(doc)


# --------------------------------------------------------------------------
# Event log

@dataclass(frozen=True)
class EventRecord:
    """One dispatched envelope and what became of it.

    ``agreement_id`` augments the disposition so replay can detect id-sequence
    divergence, not just disposition mismatches.
    """

    seq: int
    path_name: str
    envelope: dict
    disposition: str
    agreement_id: Optional[str] = None

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "path_name": self.path_name,
            "envelope": self.envelope,
            "disposition": self.disposition,
            "agreement_id": self.agreement_id,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "EventRecord":
        return cls(
            seq=doc["seq"],
            path_name=doc["path_name"],
            envelope=doc["envelope"],
            disposition=doc["disposition"],
            agreement_id=doc.get("agreement_id"),
        )


class EventLog:
    """Append-only newline-delimited event log.

    An optional first line ``{"meta": {...}}`` makes a log self-describing
    for replay (which paths, id offset, adapter seeds).
    """

    def __init__(self, location: Location):
        self.path = Path(location)

    def write_meta(self, meta: Mapping) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(canonical_json({"meta": dict(meta)}) + "\n")
        except OSError as exc:
            raise StorageUnavailable(f"cannot append to event log at {self.path}: {exc}") from exc

    def append(self, record: EventRecord) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(canonical_json(record.to_doc()) + "\n")
                handle.flush()
        except OSError as exc:
            raise StorageUnavailable(f"cannot append to event log at {self.path}: {exc}") from exc

    @staticmethod
    def read(location: Location) -> tuple[Optional[dict], list[EventRecord]]:
        path = Path(location)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise StorageUnavailable(f"cannot read event log at {path}: {exc}") from exc
        meta: Optional[dict] = None
        records: list[EventRecord] = []
        last_seq = 0
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except ValueError as exc:
                raise CorruptDocument(f"event log line {lineno} is not valid JSON: {exc}") from exc
            if "meta" in doc and lineno == 1:
                meta = doc["meta"]
                continue
            try:
                record = EventRecord.from_doc(doc)
            except (KeyError, TypeError) as exc:
                raise CorruptDocument(f"event log line {lineno} is malformed: {exc}") from exc
            if record.seq <= last_seq:
                raise CorruptDocument(
                    f"event log seq must be strictly increasing; saw {record.seq} after {last_seq}"
                )
            last_seq = record.seq
            records.append(record)
        return meta, records


def replay(records: Iterable[EventRecord], engine: Engine) -> StoreDocument:
    """Re-dispatch every logged envelope against a freshly configured engine.

    The engine must carry the same paths, id allocator settings, and adapter
    seeds used for the original run; any disposition or agreement-id mismatch
    raises ReplayDivergence, which signals nondeterminism (or a perturbed
    configuration).
    """
    for record in records:
        env = InputEnvelope.from_doc(record.envelope)
        outcome = engine.dispatch(record.path_name, env)
        if outcome.disposition != record.disposition:
            raise ReplayDivergence(record.seq, "disposition", record.disposition, outcome.disposition)
        if outcome.agreement_id != record.agreement_id:
            raise ReplayDivergence(record.seq, "agreement_id", record.agreement_id, outcome.agreement_id)
    return snapshot_engine(engine)
