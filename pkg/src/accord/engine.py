"""Core agreement engine: paths, processes, interfaces, instances, dispatch.

A path is a named state machine of processes. Inbound envelopes are filtered
and matched by the path's interfaces to an agreement instance (existing or
newly created), then handed to the instance's active process, which answers
with a directive: wait for more input, transition to another process, or
terminate the agreement. Every structural step is appended to the instance's
transition history, so an instance's life is an auditable walk of its path.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Any, Callable, Iterator, Mapping, Optional, TYPE_CHECKING, Union

if TYPE_CHECKING:
    from .stages import StagePayload

NAME_RE = re.compile(r"^[A-Za-z0-9_-]+$")

# Activation hooks may chain transitions; a runaway chain is cut here.
MAX_ACTIVATION_HOPS = 64

CREATED = "created"
DELIVERED = "delivered"
REJECTED = "rejected"
IGNORED_TERMINATED = "ignored_terminated"

CAUSE_ACTIVATION = "activation"
CAUSE_EXIT = "exit"


class EngineError(Exception):
    pass


class DuplicatePathName(EngineError):
    pass


class InvalidDefinition(EngineError):
    pass


class UnknownPath(EngineError):
    pass


class UnknownTargetProcess(EngineError):
    pass


class ActivationLoopExceeded(EngineError):
    pass


class AlreadyTerminated(EngineError):
    pass


class HookFailure(EngineError):
    """A process hook raised unexpectedly; the instance was rolled back."""


class MalformedEnvelope(ValueError):
    pass


class RejectInput(Exception):
    """Raised by a hook to cleanly reject the current envelope.

    The instance is restored to its pre-delivery state and the dispatch
    reports disposition ``rejected``. Unlike an arbitrary exception this is
    not an error: it is the hooks' channel for "this input is not for me".
    """


# --------------------------------------------------------------------------
# Timestamps and canonical serialization

def utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def system_clock() -> datetime:
    return utc_now()


class TickClock:
    """Deterministic clock: a fixed start advanced by a fixed step per call."""

    def __init__(self, start: datetime, step_seconds: int = 1):
        self._next = start.astimezone(timezone.utc).replace(microsecond=0)
        self._step = timedelta(seconds=step_seconds)
        self._lock = threading.Lock()

    def __call__(self) -> datetime:
        with self._lock:
            now = self._next
            self._next = now + self._step
            return now


def format_ts(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_ts(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest_of(doc: Any) -> str:
    """Stable 16-hex-char digest of a JSON value tree."""
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()[:16]


class _Absent:
    def __repr__(self) -> str:
        return "ABSENT"

    def __bool__(self) -> bool:
        return False


#: Marker returned by data-model gets for keys that were never written.
ABSENT = _Absent()


# --------------------------------------------------------------------------
# Domain types

class StageKind(Enum):
    AUTHORING = "authoring"
    REGISTRATION = "registration"
    EXECUTION = "execution"
    APPEAL = "appeal"
    AUTHENTICATION = "authentication"
    ENFORCEMENT = "enforcement"


@dataclass(frozen=True)
class Actor:
    platform: str
    handle: str

    def to_doc(self) -> dict:
        return {"platform": self.platform, "handle": self.handle}

    @classmethod
    def from_doc(cls, doc: Mapping) -> "Actor":
        return cls(platform=doc.get("platform", ""), handle=doc.get("handle", ""))


@dataclass(frozen=True)
class Correlation:
    agreement_id: Optional[str] = None
    thread_id: Optional[str] = None

    def to_doc(self) -> dict:
        doc: dict = {}
        if self.agreement_id is not None:
            doc["agreement_id"] = self.agreement_id
        if self.thread_id is not None:
            doc["thread_id"] = self.thread_id
        return doc

    @classmethod
    def from_doc(cls, doc: Mapping) -> "Correlation":
        return cls(agreement_id=doc.get("agreement_id"), thread_id=doc.get("thread_id"))


@dataclass(frozen=True)
class InputEnvelope:
    """Normalized inbound event, whatever the original source was."""

    source: str
    kind: str
    actor: Actor
    payload: Any = field(default_factory=dict)
    correlation: Correlation = field(default_factory=Correlation)
    received_at: datetime = field(default_factory=utc_now)

    def __post_init__(self) -> None:
        if not self.source or not isinstance(self.source, str):
            raise MalformedEnvelope("envelope source must be a non-empty string")
        if not self.kind or not isinstance(self.kind, str):
            raise MalformedEnvelope("envelope kind must be a non-empty string")
        if not self.actor.handle or not isinstance(self.actor.handle, str):
            raise MalformedEnvelope("envelope actor.handle must be a non-empty string")

    def get(self, key: str, default: Any = None) -> Any:
        """Payload field access that tolerates non-mapping payloads."""
        if isinstance(self.payload, Mapping):
            return self.payload.get(key, default)
        return default

    def to_doc(self) -> dict:
        return {
            "source": self.source,
            "kind": self.kind,
            "actor": self.actor.to_doc(),
            "payload": copy.deepcopy(self.payload),
            "correlation": self.correlation.to_doc(),
            "received_at": format_ts(self.received_at),
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "InputEnvelope":
        return cls(
            source=doc.get("source", ""),
            kind=doc.get("kind", ""),
            actor=Actor.from_doc(doc.get("actor") or {}),
            payload=copy.deepcopy(doc.get("payload")),
            correlation=Correlation.from_doc(doc.get("correlation") or {}),
            received_at=parse_ts(doc["received_at"]),
        )

    def digest(self) -> str:
        return digest_of(self.to_doc())


def envelope_from_wire(body: Any, *, received_at: datetime) -> InputEnvelope:
    """Parse the canonical wire body into an envelope, stamping arrival time."""
    if not isinstance(body, Mapping):
        raise MalformedEnvelope("envelope body must be a JSON object")
    actor_doc = body.get("actor")
    if not isinstance(actor_doc, Mapping):
        raise MalformedEnvelope("envelope actor must be an object")
    correlation_doc = body.get("correlation") or {}
    if not isinstance(correlation_doc, Mapping):
        raise MalformedEnvelope("envelope correlation must be an object")
    return InputEnvelope(
        source=body.get("source") or "",
        kind=body.get("kind") or "",
        actor=Actor.from_doc(actor_doc),
        payload=copy.deepcopy(body.get("payload", {})),
        correlation=Correlation.from_doc(correlation_doc),
        received_at=received_at,
    )


def envelope_cause(env: InputEnvelope) -> str:
    return f"envelope:{env.digest()}"


@dataclass(frozen=True)
class Wait:
    pass


@dataclass(frozen=True)
class Transition:
    target: str
    payload: Optional["StagePayload"] = None


@dataclass(frozen=True)
class Terminate:
    outcome: str
    payload: Optional["StagePayload"] = None


Directive = Union[Wait, Transition, Terminate]


@dataclass(frozen=True)
class Existing:
    agreement_id: str


@dataclass(frozen=True)
class New:
    pass


@dataclass(frozen=True)
class Decline:
    pass


MatchResult = Union[Existing, New, Decline]


@dataclass
class ProcessDefinition:
    """One node of a path.

    ``on_receive`` is mandatory and consumes envelopes while the process is
    active. ``on_activate`` runs the moment the process becomes active and may
    itself return a directive (activation chains). ``on_exit`` runs right
    before the process is left and is side-effects only.

    ``targets``/``outcomes``/``consumes``/``produces`` are declared metadata
    used by path linting and transplant validation, not by dispatch itself.
    """

    name: str
    stage_kind: StageKind
    on_receive: Callable[["HookContext"], Directive]
    on_activate: Optional[Callable[["HookContext"], Optional[Directive]]] = None
    on_exit: Optional[Callable[["HookContext"], None]] = None
    targets: tuple[str, ...] = ()
    outcomes: tuple[str, ...] = ()
    consumes: frozenset[str] = frozenset()
    produces: frozenset[str] = frozenset()
    archetype: Optional[Any] = None

    def validate(self) -> None:
        if not self.name or not NAME_RE.match(self.name):
            raise InvalidDefinition(f"process name {self.name!r} is not URL-safe")
        if self.on_receive is None:
            raise InvalidDefinition(f"process {self.name!r} lacks on_receive")


@dataclass
class InterfaceDefinition:
    """Filter/match pair deciding where an inbound envelope goes.

    ``filter`` must be pure over the envelope alone; ``match`` may read
    instance summaries through the registry view but never mutates them.
    """

    name: str
    filter: Callable[[InputEnvelope], bool]
    match: Callable[[InputEnvelope, "RegistryView"], MatchResult]


@dataclass
class PathDefinition:
    name: str
    processes: dict[str, ProcessDefinition]
    init: str
    interfaces: list[InterfaceDefinition]

    def validate(self) -> None:
        if not self.name or not NAME_RE.match(self.name):
            raise InvalidDefinition(f"path name {self.name!r} is not URL-safe")
        if not self.processes:
            raise InvalidDefinition(f"path {self.name!r} declares no processes")
        for key, proc in self.processes.items():
            proc.validate()
            if key != proc.name:
                raise InvalidDefinition(
                    f"path {self.name!r}: process key {key!r} != process name {proc.name!r}"
                )
        if self.init not in self.processes:
            raise InvalidDefinition(
                f"path {self.name!r}: init {self.init!r} is not a declared process"
            )
        if not self.interfaces:
            raise InvalidDefinition(f"path {self.name!r} declares no interfaces")

    def process(self, name: str) -> ProcessDefinition:
        try:
            return self.processes[name]
        except KeyError:
            raise UnknownTargetProcess(f"path {self.name!r} has no process {name!r}") from None

    def to_summary_doc(self) -> dict:
        return {
            "name": self.name,
            "init": self.init,
            "processes": [
                {"name": p.name, "stage_kind": p.stage_kind.value}
                for p in self.processes.values()
            ],
        }


class DataModel:
    """Per-instance tree of sections -> keys -> JSON values."""

    def __init__(self, sections: Optional[dict] = None):
        self._sections: dict[str, dict[str, Any]] = sections if sections is not None else {}

    def set(self, section: str, key: str, value: Any) -> None:
        self._sections.setdefault(section, {})[key] = value

    def get(self, section: str, key: str, default: Any = ABSENT) -> Any:
        try:
            return self._sections[section][key]
        except KeyError:
            return default

    def section(self, section: str) -> dict[str, Any]:
        return self._sections.get(section, {})

    def to_doc(self) -> dict:
        return copy.deepcopy(self._sections)

    @classmethod
    def from_doc(cls, doc: Mapping) -> "DataModel":
        return cls(sections=copy.deepcopy(dict(doc)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DataModel) and self._sections == other._sections

    def __repr__(self) -> str:
        return f"DataModel({self._sections!r})"


@dataclass(frozen=True)
class TransitionRecord:
    """One audited step of an instance's walk through its path."""

    seq: int
    from_process: Optional[str]
    to_process: Optional[str]
    cause: str
    payload: Optional["StagePayload"]
    at: datetime

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "from_process": self.from_process,
            "to_process": self.to_process,
            "cause": self.cause,
            "payload": self.payload.to_doc() if self.payload is not None else None,
            "at": format_ts(self.at),
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "TransitionRecord":
        from .stages import StagePayload

        payload_doc = doc.get("payload")
        return cls(
            seq=doc["seq"],
            from_process=doc.get("from_process"),
            to_process=doc.get("to_process"),
            cause=doc["cause"],
            payload=StagePayload.from_doc(payload_doc) if payload_doc is not None else None,
            at=parse_ts(doc["at"]),
        )


@dataclass
class AgreementInstance:
    """One live or terminated agreement: state, data model, history."""

    id: str
    path_name: str
    active_process: Optional[str]
    outcome: Optional[str]
    data_model: DataModel
    history: list[TransitionRecord]
    created_at: datetime

    @property
    def is_active(self) -> bool:
        return self.active_process is not None

    @property
    def status(self) -> str:
        return "active" if self.is_active else "terminated"

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "path": self.path_name,
            "active_process": self.active_process,
            "outcome": self.outcome,
            "created_at": format_ts(self.created_at),
            "data_model": self.data_model.to_doc(),
            "history": [rec.to_doc() for rec in self.history],
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "AgreementInstance":
        return cls(
            id=doc["id"],
            path_name=doc["path"],
            active_process=doc.get("active_process"),
            outcome=doc.get("outcome"),
            data_model=DataModel.from_doc(doc.get("data_model") or {}),
            history=[TransitionRecord.from_doc(r) for r in doc.get("history") or []],
            created_at=parse_ts(doc["created_at"]),
        )

    def restore(self, doc: Mapping) -> None:
        """Reset this instance in place to a previously captured snapshot."""
        fresh = AgreementInstance.from_doc(doc)
        self.active_process = fresh.active_process
        self.outcome = fresh.outcome
        self.data_model = fresh.data_model
        self.history = fresh.history

    def summary_doc(self) -> dict:
        doc: dict = {"id": self.id, "status": self.status, "created_at": format_ts(self.created_at)}
        if self.active_process is not None:
            doc["active_process"] = self.active_process
        if self.outcome is not None:
            doc["outcome"] = self.outcome
        return doc

    def assert_consistent(self, path: PathDefinition) -> None:
        """Walk validity: consecutive seqs, chained from/to, rooted at init."""
        if not self.history:
            raise EngineError(f"instance {self.id}: empty history")
        first = self.history[0]
        if first.seq != 0 or first.from_process is not None or first.to_process != path.init:
            raise EngineError(f"instance {self.id}: walk does not originate at init")
        prev = first
        for rec in self.history[1:]:
            if rec.seq != prev.seq + 1:
                raise EngineError(f"instance {self.id}: seq gap at {rec.seq}")
            if rec.from_process != prev.to_process:
                raise EngineError(f"instance {self.id}: broken walk at seq {rec.seq}")
            prev = rec
        last = self.history[-1]
        if self.is_active:
            if self.outcome is not None or last.to_process != self.active_process:
                raise EngineError(f"instance {self.id}: active state disagrees with walk")
        else:
            if last.to_process is not None or self.outcome is None:
                raise EngineError(f"instance {self.id}: terminated state disagrees with walk")


@dataclass(frozen=True)
class DispatchOutcome:
    disposition: str
    agreement_id: Optional[str] = None
    status: Optional[str] = None
    active_process: Optional[str] = None
    outcome: Optional[str] = None
    # Diagnostics, never part of the wire response.
    error: Optional[str] = None
    detail: Optional[str] = None

    def to_wire(self) -> dict:
        doc: dict = {"disposition": self.disposition}
        for key in ("agreement_id", "status", "active_process", "outcome"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        return doc


class InstanceView:
    """Read-only instance summary handed to interface match functions."""

    def __init__(self, instance: AgreementInstance):
        self._instance = instance
        self.id = instance.id
        self.status = instance.status
        self.active_process = instance.active_process
        self.outcome = instance.outcome
        self.created_at = instance.created_at

    def get(self, section: str, key: str, default: Any = None) -> Any:
        value = self._instance.data_model.get(section, key, ABSENT)
        if value is ABSENT:
            return default
        return copy.deepcopy(value)


class RegistryView:
    """Iterable of instance views for one path, in creation order."""

    def __init__(self, instances: Mapping[str, AgreementInstance]):
        self._instances = instances

    def __iter__(self) -> Iterator[InstanceView]:
        for instance in self._instances.values():
            yield InstanceView(instance)

    def active(self) -> Iterator[InstanceView]:
        for view in self:
            if view.status == "active":
                yield view

    def get(self, agreement_id: str) -> Optional[InstanceView]:
        instance = self._instances.get(agreement_id)
        return InstanceView(instance) if instance is not None else None


@dataclass
class HookContext:
    """What a process hook sees: the instance's model, its path, services."""

    agreement_id: str
    path: PathDefinition
    process: ProcessDefinition
    model: DataModel
    services: Mapping[str, Any]
    now: datetime
    envelope: Optional[InputEnvelope] = None
    payload: Optional["StagePayload"] = None
    is_creation: bool = False

    def stage_of(self, process_name: str) -> StageKind:
        return self.path.process(process_name).stage_kind

    def reject(self, reason: str) -> None:
        raise RejectInput(reason)


class IdAllocator:
    """Monotonic per-path agreement ids: ``<path>-<counter>``.

    ``start`` offsets the first issued counter so replay tests can perturb id
    sequences; counters persist in the store document.
    """

    def __init__(self, counters: Optional[dict[str, int]] = None, start: int = 1):
        self._counters: dict[str, int] = dict(counters or {})
        self._start = start
        self._lock = threading.Lock()

    def peek(self, path_name: str) -> str:
        with self._lock:
            nxt = self._counters.get(path_name, self._start - 1) + 1
            return f"{path_name}-{nxt}"

    def commit(self, path_name: str) -> str:
        with self._lock:
            nxt = self._counters.get(path_name, self._start - 1) + 1
            self._counters[path_name] = nxt
            return f"{path_name}-{nxt}"

    def counters(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counters)

    def load(self, counters: Mapping[str, int]) -> None:
        with self._lock:
            self._counters = dict(counters)


class Engine:
    """Multi-path dispatch engine with per-path serialization.

    Dispatches within one path are serialized (interface matching and
    instance creation need an atomic view of that path's registry); paths
    are independent and may be dispatched concurrently.
    """

    def __init__(
        self,
        *,
        clock: Callable[[], datetime] = system_clock,
        ids: Optional[IdAllocator] = None,
        services: Optional[Mapping[str, Any]] = None,
    ):
        self.clock = clock
        self.ids = ids if ids is not None else IdAllocator()
        self.services: dict[str, Any] = dict(services or {})
        self._paths: dict[str, PathDefinition] = {}
        self._instances: dict[str, dict[str, AgreementInstance]] = {}
        self._locks: dict[str, threading.RLock] = {}

    # -- registry ----------------------------------------------------------

    def register_path(self, path: PathDefinition) -> PathDefinition:
        path.validate()
        if path.name in self._paths:
            raise DuplicatePathName(f"path {path.name!r} already registered")
        self._paths[path.name] = path
        self._instances[path.name] = {}
        self._locks[path.name] = threading.RLock()
        return path

    def path(self, path_name: str) -> PathDefinition:
        try:
            return self._paths[path_name]
        except KeyError:
            raise UnknownPath(f"no path named {path_name!r}") from None

    @property
    def path_names(self) -> list[str]:
        return list(self._paths)

    def paths_doc(self) -> list[dict]:
        return [p.to_summary_doc() for p in self._paths.values()]

    def view(self, path_name: str) -> RegistryView:
        self.path(path_name)
        return RegistryView(self._instances[path_name])

    def instance(self, path_name: str, agreement_id: str) -> Optional[AgreementInstance]:
        self.path(path_name)
        return self._instances[path_name].get(agreement_id)

    def summaries(self, path_name: str) -> list[dict]:
        with self._locks[self.path(path_name).name]:
            return [i.summary_doc() for i in self._instances[path_name].values()]

    def instance_doc(self, path_name: str, agreement_id: str) -> Optional[dict]:
        with self._locks[self.path(path_name).name]:
            instance = self._instances[path_name].get(agreement_id)
            return instance.to_doc() if instance is not None else None

    # -- dispatch ----------------------------------------------------------

    def dispatch(self, path_name: str, env: InputEnvelope) -> DispatchOutcome:
        """Route one envelope: filter -> match -> deliver -> directive.

        Always returns exactly one disposition; raises only UnknownPath.
        """
        path = self.path(path_name)
        with self._locks[path.name]:
            try:
                chosen = None
                for iface in path.interfaces:
                    if iface.filter(env):
                        chosen = iface
                        break
            except Exception as exc:  # fail closed on a broken filter
                return DispatchOutcome(
                    REJECTED, error="interface_failure", detail=f"filter raised: {exc!r}"
                )
            if chosen is None:
                return DispatchOutcome(REJECTED, detail="no interface accepted the envelope")
            try:
                match = chosen.match(env, RegistryView(self._instances[path.name]))
            except Exception as exc:
                return DispatchOutcome(
                    REJECTED, error="interface_failure", detail=f"match raised: {exc!r}"
                )
            if isinstance(match, Decline):
                return DispatchOutcome(REJECTED, detail=f"declined by interface {chosen.name!r}")
            if isinstance(match, Existing):
                instance = self._instances[path.name].get(match.agreement_id)
                if instance is None:
                    return DispatchOutcome(
                        REJECTED,
                        error="matched_missing_instance",
                        detail=f"interface {chosen.name!r} matched unknown id {match.agreement_id!r}",
                    )
                if not instance.is_active:
                    return self._outcome(IGNORED_TERMINATED, instance)
                return self._deliver(path, instance, env, disposition=DELIVERED)
            if isinstance(match, New):
                return self._create_and_deliver(path, env)
            return DispatchOutcome(
                REJECTED,
                error="interface_failure",
                detail=f"interface {chosen.name!r} returned invalid match {match!r}",
            )

    def probe(self, path_name: str, env: InputEnvelope) -> tuple[Optional[str], Optional[MatchResult]]:
        """Run filters and match without delivering; never mutates."""
        path = self.path(path_name)
        with self._locks[path.name]:
            for iface in path.interfaces:
                if iface.filter(env):
                    return iface.name, iface.match(env, RegistryView(self._instances[path.name]))
        return None, None

    def _create_and_deliver(self, path: PathDefinition, env: InputEnvelope) -> DispatchOutcome:
        agreement_id = self.ids.peek(path.name)
        instance = AgreementInstance(
            id=agreement_id,
            path_name=path.name,
            active_process=path.init,
            outcome=None,
            data_model=DataModel(),
            history=[
                TransitionRecord(
                    seq=0,
                    from_process=None,
                    to_process=path.init,
                    cause=envelope_cause(env),
                    payload=None,
                    at=env.received_at,
                )
            ],
            created_at=env.received_at,
        )
        try:
            init_proc = path.process(path.init)
            if init_proc.on_activate is not None:
                directive = init_proc.on_activate(
                    self._context(path, instance, init_proc, now=env.received_at)
                )
                if directive is not None and not isinstance(directive, Wait):
                    self._apply(path, instance, directive, cause=CAUSE_ACTIVATION, now=env.received_at, depth=1)
            if instance.is_active:
                proc = path.process(instance.active_process)
                ctx = self._context(
                    path, instance, proc, now=env.received_at, envelope=env, is_creation=True
                )
                directive = proc.on_receive(ctx)
                self._apply(path, instance, directive, cause=envelope_cause(env), now=env.received_at)
        except RejectInput as exc:
            return DispatchOutcome(REJECTED, detail=str(exc))
        except EngineError as exc:
            return DispatchOutcome(REJECTED, error="hook_failure", detail=str(exc))
        except Exception as exc:
            return DispatchOutcome(REJECTED, error="hook_failure", detail=repr(exc))
        instance.assert_consistent(path)
        self.ids.commit(path.name)
        self._instances[path.name][instance.id] = instance
        return self._outcome(CREATED, instance)

    def _deliver(
        self,
        path: PathDefinition,
        instance: AgreementInstance,
        env: InputEnvelope,
        *,
        disposition: str,
    ) -> DispatchOutcome:
        snapshot = instance.to_doc()
        proc = path.process(instance.active_process)
        ctx = self._context(path, instance, proc, now=env.received_at, envelope=env)
        try:
            directive = proc.on_receive(ctx)
            self._apply(path, instance, directive, cause=envelope_cause(env), now=env.received_at)
        except RejectInput as exc:
            instance.restore(snapshot)
            return DispatchOutcome(REJECTED, detail=str(exc))
        except EngineError as exc:
            instance.restore(snapshot)
            return DispatchOutcome(REJECTED, error="hook_failure", detail=str(exc))
        except Exception as exc:
            instance.restore(snapshot)
            return DispatchOutcome(REJECTED, error="hook_failure", detail=repr(exc))
        instance.assert_consistent(path)
        return self._outcome(disposition, instance)

    def _apply(
        self,
        path: PathDefinition,
        instance: AgreementInstance,
        directive: Directive,
        *,
        cause: str,
        now: datetime,
        depth: int = 0,
    ) -> None:
        if directive is None or isinstance(directive, Wait):
            return
        if depth > MAX_ACTIVATION_HOPS:
            raise ActivationLoopExceeded(
                f"instance {instance.id}: activation chain exceeded {MAX_ACTIVATION_HOPS} hops"
            )
        if not instance.is_active:
            raise AlreadyTerminated(f"instance {instance.id} is terminated")
        current = path.process(instance.active_process)
        if isinstance(directive, Transition):
            target = path.process(directive.target)
            self._run_exit(path, instance, current, now)
            instance.history.append(
                TransitionRecord(
                    seq=len(instance.history),
                    from_process=current.name,
                    to_process=target.name,
                    cause=cause,
                    payload=directive.payload,
                    at=now,
                )
            )
            instance.active_process = target.name
            if target.on_activate is not None:
                ctx = self._context(path, instance, target, now=now, payload=directive.payload)
                chained = target.on_activate(ctx)
                if chained is not None and not isinstance(chained, Wait):
                    self._apply(path, instance, chained, cause=CAUSE_ACTIVATION, now=now, depth=depth + 1)
            return
        if isinstance(directive, Terminate):
            self._run_exit(path, instance, current, now)
            instance.history.append(
                TransitionRecord(
                    seq=len(instance.history),
                    from_process=current.name,
                    to_process=None,
                    cause=cause,
                    payload=directive.payload,
                    at=now,
                )
            )
            instance.active_process = None
            instance.outcome = directive.outcome
            return
        raise HookFailure(f"process {current.name!r} returned invalid directive {directive!r}")

    def _run_exit(
        self, path: PathDefinition, instance: AgreementInstance, proc: ProcessDefinition, now: datetime
    ) -> None:
        if proc.on_exit is not None:
            proc.on_exit(self._context(path, instance, proc, now=now))

    def _context(
        self,
        path: PathDefinition,
        instance: AgreementInstance,
        proc: ProcessDefinition,
        *,
        now: datetime,
        envelope: Optional[InputEnvelope] = None,
        payload: Optional["StagePayload"] = None,
        is_creation: bool = False,
    ) -> HookContext:
        return HookContext(
            agreement_id=instance.id,
            path=path,
            process=proc,
            model=instance.data_model,
            services=self.services,
            now=now,
            envelope=envelope,
            payload=payload,
            is_creation=is_creation,
        )

    def _outcome(self, disposition: str, instance: AgreementInstance) -> DispatchOutcome:
        return DispatchOutcome(
            disposition,
            agreement_id=instance.id,
            status=instance.status,
            active_process=instance.active_process,
            outcome=instance.outcome,
        )

    # -- direct operations (administrative; not envelope-driven) ------------

    def apply_transition(
        self, path_name: str, agreement_id: str, target: str, payload: Optional["StagePayload"] = None
    ) -> AgreementInstance:
        path = self.path(path_name)
        with self._locks[path.name]:
            instance = self._require_instance(path, agreement_id)
            if not instance.is_active:
                raise AlreadyTerminated(f"instance {agreement_id} is terminated")
            self._apply(path, instance, Transition(target, payload), cause=CAUSE_EXIT, now=self.clock())
            instance.assert_consistent(path)
            return instance

    def terminate(
        self, path_name: str, agreement_id: str, outcome: str, payload: Optional["StagePayload"] = None
    ) -> AgreementInstance:
        path = self.path(path_name)
        with self._locks[path.name]:
            instance = self._require_instance(path, agreement_id)
            if not instance.is_active:
                raise AlreadyTerminated(f"instance {agreement_id} is terminated")
            self._apply(path, instance, Terminate(outcome, payload), cause=CAUSE_EXIT, now=self.clock())
            instance.assert_consistent(path)
            return instance

    def model_set(self, path_name: str, agreement_id: str, section: str, key: str, value: Any) -> None:
        path = self.path(path_name)
        with self._locks[path.name]:
            self._require_instance(path, agreement_id).data_model.set(section, key, value)

    def model_get(self, path_name: str, agreement_id: str, section: str, key: str) -> Any:
        path = self.path(path_name)
        with self._locks[path.name]:
            return self._require_instance(path, agreement_id).data_model.get(section, key)

    def _require_instance(self, path: PathDefinition, agreement_id: str) -> AgreementInstance:
        instance = self._instances[path.name].get(agreement_id)
        if instance is None:
            raise EngineError(f"path {path.name!r} has no instance {agreement_id!r}")
        return instance

    # -- persistence bridge --------------------------------------------------

    def snapshot_agreements(self) -> dict[str, dict[str, dict]]:
        """Serialized instances per path, taken under all path locks."""
        with self._all_locks():
            return {
                path_name: {aid: inst.to_doc() for aid, inst in instances.items()}
                for path_name, instances in self._instances.items()
            }

    def load_agreements(self, agreements: Mapping[str, Mapping[str, Mapping]]) -> None:
        with self._all_locks():
            for path_name, docs in agreements.items():
                if path_name not in self._paths:
                    raise UnknownPath(f"store references unregistered path {path_name!r}")
                self._instances[path_name] = {
                    aid: AgreementInstance.from_doc(doc) for aid, doc in docs.items()
                }

    def _all_locks(self):
        from contextlib import ExitStack

        stack = ExitStack()
        for name in sorted(self._locks):
            stack.enter_context(self._locks[name])
        return stack
