"""Reusable stage archetypes and the standardized cross-stage payload.

Processes built here keep all their state in the instance data model and hand
a ``StagePayload`` across transitions, which is what makes them transplantable
between paths: ``transplant`` checks that everything a process consumes is
produced somewhere in the destination path before admitting it.
"""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional, Union

from .engine import (
    DataModel,
    Directive,
    HookContext,
    PathDefinition,
    ProcessDefinition,
    StageKind,
    Terminate,
    Transition,
    Wait,
    digest_of,
    format_ts,
)

SUMMARY_FIELDS = frozenset({"identity", "content_digest", "parties", "status"})

REGISTRATION_SECTION = "registration"


class TransplantError(Exception):
    pass


class MissingPayloadField(TransplantError):
    def __init__(self, field_name: str):
        super().__init__(f"destination path produces no StagePayload field {field_name!r}")
        self.field_name = field_name


class UnknownTarget(TransplantError):
    def __init__(self, target: str):
        super().__init__(f"destination path has no process named {target!r}")
        self.target = target


class InvalidStagePayload(ValueError):
    pass


@dataclass(frozen=True)
class PartyRef:
    platform: str
    handle: str

    def to_doc(self) -> dict:
        return {"platform": self.platform, "handle": self.handle}

    @classmethod
    def from_doc(cls, doc: Mapping) -> "PartyRef":
        return cls(platform=doc.get("platform", ""), handle=doc.get("handle", ""))


@dataclass(frozen=True)
class StageSummary:
    identity: str
    content_digest: str
    parties: tuple[PartyRef, ...]
    status: str

    def to_doc(self) -> dict:
        return {
            "identity": self.identity,
            "content_digest": self.content_digest,
            "parties": [p.to_doc() for p in self.parties],
            "status": self.status,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "StageSummary":
        return cls(
            identity=doc.get("identity", ""),
            content_digest=doc.get("content_digest", ""),
            parties=tuple(PartyRef.from_doc(p) for p in doc.get("parties") or []),
            status=doc.get("status", ""),
        )


@dataclass(frozen=True)
class StagePayload:
    """Standardized record handed across process transitions."""

    agreement_ref: str
    from_stage: StageKind
    to_stage: StageKind
    summary: StageSummary
    extras: Mapping[str, Any] = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "agreement_ref": self.agreement_ref,
            "from_stage": self.from_stage.value,
            "to_stage": self.to_stage.value,
            "summary": self.summary.to_doc(),
            "extras": copy.deepcopy(dict(self.extras)),
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "StagePayload":
        return cls(
            agreement_ref=doc["agreement_ref"],
            from_stage=StageKind(doc["from_stage"]),
            to_stage=StageKind(doc["to_stage"]),
            summary=StageSummary.from_doc(doc.get("summary") or {}),
            extras=copy.deepcopy(dict(doc.get("extras") or {})),
        )


@dataclass(frozen=True)
class StageArchetype:
    """Machine-checkable description of a reusable process template."""

    kind: str  # threshold_gate | approval_gate | consensus_gate | registration_recorder | notifier
    parameters: Mapping[str, Any]
    consumes: frozenset[str] = frozenset()
    produces: frozenset[str] = frozenset()


def build_payload(
    ctx: HookContext,
    *,
    target: Optional[str],
    status: str,
    parties: Iterable[PartyRef],
    content: Any,
    extras: Optional[Mapping[str, Any]] = None,
) -> StagePayload:
    """Assemble the payload for a hop out of the current process."""
    to_stage = ctx.stage_of(target) if target is not None else ctx.process.stage_kind
    return StagePayload(
        agreement_ref=ctx.agreement_id,
        from_stage=ctx.process.stage_kind,
        to_stage=to_stage,
        summary=StageSummary(
            identity=ctx.agreement_id,
            content_digest=digest_of(content),
            parties=tuple(parties),
            status=status,
        ),
        extras=dict(extras or {}),
    )


# --------------------------------------------------------------------------
# Registration recorder

def record_registration(model: DataModel, payload: StagePayload) -> None:
    """Write the agreement's identity, content, parties, and status.

    This is the recorder fragment; processes embed it at the point where a
    completed agreement should be put on record.
    """
    if not payload.summary.parties:
        raise InvalidStagePayload("registration requires a non-empty party list")
    model.set(REGISTRATION_SECTION, "identity", payload.summary.identity)
    model.set(REGISTRATION_SECTION, "content_digest", payload.summary.content_digest)
    model.set(REGISTRATION_SECTION, "parties", [p.to_doc() for p in payload.summary.parties])
    model.set(REGISTRATION_SECTION, "status", payload.summary.status)


def update_registration_status(model: DataModel, status: str) -> None:
    model.set(REGISTRATION_SECTION, "status", status)


def make_registration_recorder(
    *, name: str = "Registration", target: Optional[str] = None
) -> ProcessDefinition:
    """Standalone pass-through recorder process.

    On activation it records the incoming payload's summary and, when a
    ``target`` is configured, forwards the payload unchanged; without one it
    waits. A payload with no parties terminates the agreement as invalid.
    """

    def on_activate(ctx: HookContext) -> Optional[Directive]:
        if ctx.payload is None or not ctx.payload.summary.parties:
            return Terminate("invalid", payload=ctx.payload)
        record_registration(ctx.model, ctx.payload)
        if target is not None:
            return Transition(target, payload=ctx.payload)
        return Wait()

    def on_receive(ctx: HookContext) -> Directive:
        ctx.reject("registration recorder does not consume envelopes")
        return Wait()  # unreachable

    archetype = StageArchetype(
        kind="registration_recorder",
        parameters={"target": target},
        consumes=SUMMARY_FIELDS,
    )
    return ProcessDefinition(
        name=name,
        stage_kind=StageKind.REGISTRATION,
        on_receive=on_receive,
        on_activate=on_activate,
        targets=(target,) if target is not None else (),
        outcomes=("invalid",),
        consumes=archetype.consumes,
        produces=frozenset(),
        archetype=archetype,
    )


# --------------------------------------------------------------------------
# Threshold gate

def make_threshold_gate(
    field_name: str,
    threshold: int,
    target: str,
    *,
    name: str = "ThresholdGate",
    stage_kind: StageKind = StageKind.AUTHORING,
    section: str = "pledges",
    kinds: tuple[str, ...] = ("pledge",),
    on_create: Optional[Callable[[HookContext], Optional[Directive]]] = None,
    summary_builder: Optional[Callable[[HookContext, list[dict], int], StagePayload]] = None,
) -> ProcessDefinition:
    """Accumulate numeric contributions and fire once the total surpasses
    the threshold (strictly).

    Contributions are read from envelope payload field ``field_name`` and
    recorded under ``section`` as ``entries`` (list of contributor/amount)
    plus a running ``total``. The transition to ``target`` fires on the first
    envelope that makes the total strictly exceed ``threshold``, and only
    once per instance. A creating envelope that fails validation terminates
    the agreement as invalid; later bad envelopes are rejected untouched.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")

    def default_summary(ctx: HookContext, entries: list[dict], total: int) -> StagePayload:
        parties = []
        seen = set()
        for entry in entries:
            if entry["handle"] not in seen:
                seen.add(entry["handle"])
                parties.append(PartyRef(platform=entry["platform"], handle=entry["handle"]))
        return build_payload(
            ctx,
            target=target,
            status="funded",
            parties=parties,
            content=entries,
            extras={"total": total},
        )

    build_summary = summary_builder or default_summary

    def on_receive(ctx: HookContext) -> Directive:
        env = ctx.envelope
        if ctx.is_creation and on_create is not None:
            directive = on_create(ctx)
            if directive is not None:
                return directive
        if env.kind not in kinds:
            if ctx.is_creation:
                return Terminate("invalid")
            ctx.reject(f"unexpected kind {env.kind!r} for threshold gate")
        amount = env.get(field_name)
        if isinstance(amount, bool) or not isinstance(amount, int) or amount <= 0:
            if ctx.is_creation:
                return Terminate("invalid")
            ctx.reject(f"{field_name} must be a positive integer")
        if ctx.model.get(section, "fired", False):
            ctx.reject("threshold already satisfied")
        entries = ctx.model.get(section, "entries", None) or []
        entries = list(entries)
        entries.append(
            {"handle": env.actor.handle, "platform": env.actor.platform, "amount": amount}
        )
        total = sum(e["amount"] for e in entries)
        ctx.model.set(section, "entries", entries)
        ctx.model.set(section, "total", total)
        if total > threshold:
            ctx.model.set(section, "fired", True)
            return Transition(target, payload=build_summary(ctx, entries, total))
        return Wait()

    archetype = StageArchetype(
        kind="threshold_gate",
        parameters={
            "field": field_name,
            "threshold": threshold,
            "target": target,
            "section": section,
            "kinds": list(kinds),
        },
        produces=SUMMARY_FIELDS,
    )
    return ProcessDefinition(
        name=name,
        stage_kind=stage_kind,
        on_receive=on_receive,
        targets=(target,),
        outcomes=("invalid",),
        consumes=frozenset(),
        produces=archetype.produces,
        archetype=archetype,
    )


# --------------------------------------------------------------------------
# Approval gate

def make_approval_gate(
    *,
    name: str = "ApprovalGate",
    stage_kind: StageKind = StageKind.REGISTRATION,
    approver_ref: tuple[str, str] = ("agreement", "author"),
    kinds: tuple[str, ...] = ("dm",),
    accept_tokens: tuple[str, ...] = ("accept",),
    reject_tokens: tuple[str, ...] = ("reject",),
    accept_target: str,
    decline_outcome: str = "declined",
    on_accept: Optional[Callable[[HookContext], StagePayload]] = None,
    notify: Optional[Callable[[HookContext], None]] = None,
) -> ProcessDefinition:
    """Wait for a single designated approver to accept or reject.

    The approver's handle is read from the data model at ``approver_ref``.
    ``notify`` runs when the gate activates (e.g. message the approver);
    ``on_accept`` performs acceptance side effects and builds the payload
    carried into ``accept_target``. Input from anyone else is rejected.
    """
    section, key = approver_ref

    def on_activate(ctx: HookContext) -> Optional[Directive]:
        if notify is not None:
            notify(ctx)
        return None

    def on_receive(ctx: HookContext) -> Directive:
        env = ctx.envelope
        approver = ctx.model.get(section, key, None)
        if env.kind not in kinds:
            ctx.reject(f"unexpected kind {env.kind!r} while awaiting approval")
        if approver is None or env.actor.handle != approver:
            ctx.reject("only the designated approver may decide")
        text = env.get("text") or env.get("decision") or ""
        tokens = _tokens(str(text))
        token = tokens[0] if tokens else ""
        if token in accept_tokens:
            payload = on_accept(ctx) if on_accept is not None else build_payload(
                ctx,
                target=accept_target,
                status="accepted",
                parties=(PartyRef(platform=env.actor.platform, handle=approver),),
                content={"approved_by": approver},
            )
            return Transition(accept_target, payload=payload)
        if token in reject_tokens:
            return Terminate(decline_outcome)
        ctx.reject(f"expected one of {sorted(accept_tokens + reject_tokens)}, got {token!r}")
        return Wait()  # unreachable

    archetype = StageArchetype(
        kind="approval_gate",
        parameters={
            "approver_ref": list(approver_ref),
            "kinds": list(kinds),
            "accept_tokens": list(accept_tokens),
            "reject_tokens": list(reject_tokens),
            "accept_target": accept_target,
            "decline_outcome": decline_outcome,
        },
        consumes=frozenset({"parties"}),
        produces=SUMMARY_FIELDS,
    )
    return ProcessDefinition(
        name=name,
        stage_kind=stage_kind,
        on_receive=on_receive,
        on_activate=on_activate,
        targets=(accept_target,),
        outcomes=(decline_outcome,),
        consumes=archetype.consumes,
        produces=archetype.produces,
        archetype=archetype,
    )


# --------------------------------------------------------------------------
# Consensus gate

def make_consensus_gate(
    parties_field: str,
    verdicts: Iterable[str],
    agree_target: str,
    disagree_target: Optional[str],
    *,
    name: str = "ConsensusGate",
    stage_kind: StageKind = StageKind.EXECUTION,
    kinds: tuple[str, ...] = ("reply",),
    verdict_field: str = "verdict",
    section: str = "verdicts",
    abandon_kind: Optional[str] = "abandon",
    abandon_outcome: str = "abandoned",
    notify: Optional[Callable[[HookContext], None]] = None,
) -> ProcessDefinition:
    """Collect one verdict per party until all parties' latest verdicts agree.

    ``parties_field`` is a dotted ``section.key`` data-model reference to the
    list of party handles. Verdict matching is case-insensitive with
    surrounding whitespace stripped. Once every party has a latest verdict:
    all equal transitions to ``agree_target`` carrying the consensus value;
    otherwise to ``disagree_target`` (or, when that is None or names this
    process, the gate waits in place for revisions). Input from non-parties
    is rejected without mutation.
    """
    verdict_set = {v.strip().lower() for v in verdicts}
    if len(verdict_set) < 2:
        raise ValueError("a consensus gate needs at least two possible verdicts")
    parties_section, parties_key = parties_field.split(".", 1)

    def on_activate(ctx: HookContext) -> Optional[Directive]:
        if notify is not None:
            notify(ctx)
        return None

    def on_receive(ctx: HookContext) -> Directive:
        env = ctx.envelope
        parties = ctx.model.get(parties_section, parties_key, None) or []
        if abandon_kind is not None and env.kind == abandon_kind:
            if env.actor.handle not in parties:
                ctx.reject("only a party may abandon the agreement")
            return Terminate(abandon_outcome)
        if env.kind not in kinds:
            ctx.reject(f"unexpected kind {env.kind!r} for consensus gate")
        if env.actor.handle not in parties:
            ctx.reject(f"{env.actor.handle!r} is not a party to this agreement")
        raw = env.get(verdict_field)
        if raw is None:
            raw = _extract_verdict_token(env.get("text") or "", verdict_set)
        verdict = str(raw).strip().lower() if raw is not None else ""
        if verdict not in verdict_set:
            ctx.reject(f"expected a verdict in {sorted(verdict_set)}")
        ctx.model.set(section, env.actor.handle, {"value": verdict, "at": format_ts(ctx.now)})
        latest = {p: ctx.model.get(section, p, None) for p in parties}
        if any(v is None for v in latest.values()):
            return Wait()
        values = {v["value"] for v in latest.values()}
        if len(values) == 1:
            consensus = values.pop()
            payload = build_payload(
                ctx,
                target=agree_target,
                status=consensus,
                parties=[PartyRef(platform=env.actor.platform, handle=p) for p in parties],
                content={p: v["value"] for p, v in latest.items()},
                extras={"consensus": consensus},
            )
            return Transition(agree_target, payload=payload)
        if disagree_target is not None and disagree_target != ctx.process.name:
            payload = build_payload(
                ctx,
                target=disagree_target,
                status="disputed",
                parties=[PartyRef(platform=env.actor.platform, handle=p) for p in parties],
                content={p: v["value"] for p, v in latest.items()},
            )
            return Transition(disagree_target, payload=payload)
        return Wait()

    targets = (agree_target,) if disagree_target in (None, name) else (agree_target, disagree_target)
    archetype = StageArchetype(
        kind="consensus_gate",
        parameters={
            "parties_field": parties_field,
            "verdicts": sorted(verdict_set),
            "agree_target": agree_target,
            "disagree_target": disagree_target,
            "kinds": list(kinds),
            "verdict_field": verdict_field,
            "section": section,
        },
        consumes=frozenset({"parties"}),
        produces=SUMMARY_FIELDS,
    )
    return ProcessDefinition(
        name=name,
        stage_kind=stage_kind,
        on_receive=on_receive,
        on_activate=on_activate,
        targets=targets,
        outcomes=(abandon_outcome,) if abandon_kind is not None else (),
        consumes=archetype.consumes,
        produces=archetype.produces,
        archetype=archetype,
    )


def _extract_verdict_token(text: str, verdict_set: set[str]) -> Optional[str]:
    for token in _tokens(text):
        if token in verdict_set:
            return token
    return None


def _tokens(text: str) -> list[str]:
    out, buf = [], []
    for ch in text.lower():
        if ch.isalnum() or ch == "_":
            buf.append(ch)
        elif buf:
            out.append("".join(buf))
            buf = []
    if buf:
        out.append("".join(buf))
    return out


# --------------------------------------------------------------------------
# Notifier

def make_notifier(
    *,
    name: str = "Notifier",
    stage_kind: StageKind = StageKind.ENFORCEMENT,
    notify: Callable[[HookContext], None],
    outcome: Optional[Union[str, Callable[[HookContext], str]]] = None,
    target: Optional[str] = None,
    consumes: Iterable[str] = (),
    declared_outcomes: Optional[tuple[str, ...]] = None,
) -> ProcessDefinition:
    """Fire side effects on activation, then terminate, forward, or wait.

    ``outcome`` may be a fixed token or a callable deriving it from the
    activation context (e.g. from the incoming payload).
    """

    def on_activate(ctx: HookContext) -> Optional[Directive]:
        notify(ctx)
        if outcome is not None:
            resolved = outcome(ctx) if callable(outcome) else outcome
            return Terminate(resolved, payload=ctx.payload)
        if target is not None:
            return Transition(target, payload=ctx.payload)
        return None

    def on_receive(ctx: HookContext) -> Directive:
        ctx.reject("notifier process does not consume envelopes")
        return Wait()  # unreachable

    if declared_outcomes is None:
        declared_outcomes = (outcome,) if isinstance(outcome, str) else ("dynamic",) if outcome else ()
    archetype = StageArchetype(
        kind="notifier",
        parameters={"target": target, "outcome": outcome if isinstance(outcome, str) else "dynamic"},
        consumes=frozenset(consumes),
    )
    return ProcessDefinition(
        name=name,
        stage_kind=stage_kind,
        on_receive=on_receive,
        on_activate=on_activate,
        targets=(target,) if target is not None else (),
        outcomes=declared_outcomes,
        consumes=archetype.consumes,
        produces=frozenset(),
        archetype=archetype,
    )


# --------------------------------------------------------------------------
# Transplant and lint

def transplant(proc: ProcessDefinition, into: PathDefinition) -> ProcessDefinition:
    """Validate a process against a destination path and return a rebound copy.

    Admission requires that every StagePayload field the process consumes is
    produced by some other process of the destination, and that every declared
    transition target exists there. Validation only; no schema adaptation.
    """
    produced: set[str] = set()
    for other in into.processes.values():
        if other.name != proc.name:
            produced |= set(other.produces)
    for field_name in sorted(proc.consumes):
        if field_name not in produced:
            raise MissingPayloadField(field_name)
    for target in proc.targets:
        if target not in into.processes:
            raise UnknownTarget(target)
    return dataclasses.replace(proc)


@dataclass(frozen=True)
class Finding:
    code: str
    subject: str
    message: str


INIT_NOT_AUTHORING = "init-not-authoring"
TERMINATOR_NOT_ENFORCEMENT = "terminator-not-enforcement"
UNREACHABLE = "unreachable"
CYCLE_NO_EXIT = "cycle-no-exit"


def lint_path(path: PathDefinition) -> list[Finding]:
    """Advisory checks against the six-stage shape; never fails."""
    findings: list[Finding] = []
    init = path.processes[path.init]
    if init.stage_kind is not StageKind.AUTHORING:
        findings.append(
            Finding(
                INIT_NOT_AUTHORING,
                init.name,
                f"init process {init.name!r} has stage {init.stage_kind.value!r}, expected authoring",
            )
        )
    for proc in path.processes.values():
        if proc.outcomes and proc.stage_kind is not StageKind.ENFORCEMENT:
            findings.append(
                Finding(
                    TERMINATOR_NOT_ENFORCEMENT,
                    proc.name,
                    f"process {proc.name!r} can terminate but has stage {proc.stage_kind.value!r}",
                )
            )
    edges = {name: [t for t in proc.targets if t in path.processes] for name, proc in path.processes.items()}
    reachable = _reachable_from(path.init, edges)
    for name in path.processes:
        if name not in reachable:
            findings.append(Finding(UNREACHABLE, name, f"process {name!r} is unreachable from init"))
    for component in _cyclic_components(edges):
        scope = _reachable_from_set(component, edges)
        if not any(path.processes[n].outcomes for n in scope):
            subject = ",".join(sorted(component))
            findings.append(
                Finding(
                    CYCLE_NO_EXIT,
                    subject,
                    f"cycle {sorted(component)} cannot reach a terminating process",
                )
            )
    return findings


def _reachable_from(start: str, edges: Mapping[str, list[str]]) -> set[str]:
    return _reachable_from_set({start}, edges)


def _reachable_from_set(starts: Iterable[str], edges: Mapping[str, list[str]]) -> set[str]:
    seen = set(starts)
    stack = list(starts)
    while stack:
        node = stack.pop()
        for nxt in edges.get(node, []):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def _cyclic_components(edges: Mapping[str, list[str]]) -> list[set[str]]:
    """Strongly connected components that actually contain a cycle."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = [0]
    components: list[set[str]] = []

    def strongconnect(node: str) -> None:
        index[node] = low[node] = counter[0]
        counter[0] += 1
        stack.append(node)
        on_stack.add(node)
        for nxt in edges.get(node, []):
            if nxt not in index:
                strongconnect(nxt)
                low[node] = min(low[node], low[nxt])
            elif nxt in on_stack:
                low[node] = min(low[node], index[nxt])
        if low[node] == index[node]:
            component = set()
            while True:
                member = stack.pop()
                on_stack.discard(member)
                component.add(member)
                if member == node:
                    break
            if len(component) > 1 or node in edges.get(node, []):
                components.append(component)

    for node in edges:
        if node not in index:
            strongconnect(node)
    return components
