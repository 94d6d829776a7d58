"""Social-capital agreement path ("tsc").

Two users register an agreement on a social platform by one of them
mentioning the bot, tagging the other, and using the keyword "agreement".
Either party may later reply "upheld" or "broken"; when their latest
verdicts agree the bot posts the result publicly and the agreement
terminates with that verdict. Disagreement loops through a dispute stage
where parties can revise until they reach consensus.

Four processes: MentionAuthoring -> VerdictCollection -> (Recording |
DisputeResolution -> Recording).
"""
from __future__ import annotations

from ..adapters import has_keyword
from ..engine import (
    Decline,
    Directive,
    HookContext,
    InputEnvelope,
    InterfaceDefinition,
    Existing,
    New,
    PathDefinition,
    ProcessDefinition,
    StageKind,
    Terminate,
    Transition,
    RegistryView,
)
from ..stages import (
    PartyRef,
    build_payload,
    make_consensus_gate,
    make_notifier,
    record_registration,
    update_registration_status,
)

TSC_PATH_NAME = "tsc"

MENTION_AUTHORING = "MentionAuthoring"
VERDICT_COLLECTION = "VerdictCollection"
DISPUTE_RESOLUTION = "DisputeResolution"
RECORDING = "Recording"

SOCIAL_SOURCE = "social"
VERDICTS = ("upheld", "broken")


def _author_mention(ctx: HookContext) -> Directive:
    """Register a new agreement from the authoring mention."""
    env = ctx.envelope
    if not ctx.is_creation:
        ctx.reject("authoring only consumes the creating mention")
    text = env.get("text") or ""
    if not has_keyword(text):
        return Terminate("invalid")
    initiator = env.actor.handle
    counterparty = env.get("counterparty")
    if not isinstance(counterparty, str) or not counterparty or counterparty == initiator:
        return Terminate("invalid")
    social = ctx.services["social"]
    root_thread = env.correlation.thread_id
    ack_text = (
        f"Registered agreement {ctx.agreement_id} between @{initiator} and @{counterparty}. "
        f"Reply upheld or broken to settle it."
    )
    ack_id = social.post_status(ack_text, thread_id=root_thread)
    if root_thread is None:
        root_thread = ack_id
    ctx.model.set("agreement", "initiator", initiator)
    ctx.model.set("agreement", "counterparty", counterparty)
    ctx.model.set("agreement", "parties", [initiator, counterparty])
    ctx.model.set("agreement", "terms", text)
    ctx.model.set("agreement", "root_thread", root_thread)
    payload = build_payload(
        ctx,
        target=VERDICT_COLLECTION,
        status="registered",
        parties=(
            PartyRef(platform=SOCIAL_SOURCE, handle=initiator),
            PartyRef(platform=SOCIAL_SOURCE, handle=counterparty),
        ),
        content={"terms": text},
    )
    record_registration(ctx.model, payload)
    return Transition(VERDICT_COLLECTION, payload=payload)


def _prompt_reconsideration(ctx: HookContext) -> None:
    social = ctx.services["social"]
    parties = ctx.model.get("agreement", "parties")
    social.post_status(
        f"Parties disagree on agreement {ctx.agreement_id} "
        f"(@{parties[0]}, @{parties[1]}): please reconsider and reply again.",
        thread_id=ctx.model.get("agreement", "root_thread"),
    )


def _record_result(ctx: HookContext) -> None:
    """Publicly post the settled verdict and update the record."""
    social = ctx.services["social"]
    result = ctx.payload.extras["consensus"]
    parties = ctx.model.get("agreement", "parties")
    social.post_status(
        f"Agreement {ctx.agreement_id} between @{parties[0]} and @{parties[1]} "
        f"settled: {result}.",
        thread_id=ctx.model.get("agreement", "root_thread"),
    )
    update_registration_status(ctx.model, result)
    ctx.model.set("agreement", "result", result)


def _result_outcome(ctx: HookContext) -> str:
    return ctx.payload.extras["consensus"]


def _social_filter(env: InputEnvelope) -> bool:
    if env.source != SOCIAL_SOURCE:
        return False
    if env.kind == "status_mention":
        return has_keyword(env.get("text") or "")
    return env.kind in ("reply", "abandon")


def _social_match(env: InputEnvelope, view: RegistryView):
    if env.kind == "status_mention":
        return New()
    thread_id = env.correlation.thread_id
    if thread_id is not None:
        for candidate in view:
            if candidate.get("agreement", "root_thread") == thread_id:
                return Existing(candidate.id)
    return Decline()


def build_tsc_path() -> PathDefinition:
    mention_authoring = ProcessDefinition(
        name=MENTION_AUTHORING,
        stage_kind=StageKind.AUTHORING,
        on_receive=_author_mention,
        targets=(VERDICT_COLLECTION,),
        outcomes=("invalid",),
        produces=frozenset({"identity", "content_digest", "parties", "status"}),
    )
    verdict_collection = make_consensus_gate(
        "agreement.parties",
        VERDICTS,
        RECORDING,
        DISPUTE_RESOLUTION,
        name=VERDICT_COLLECTION,
        stage_kind=StageKind.EXECUTION,
        kinds=("reply",),
    )
    dispute_resolution = make_consensus_gate(
        "agreement.parties",
        VERDICTS,
        RECORDING,
        None,
        name=DISPUTE_RESOLUTION,
        stage_kind=StageKind.APPEAL,
        kinds=("reply",),
        notify=_prompt_reconsideration,
    )
    recording = make_notifier(
        name=RECORDING,
        stage_kind=StageKind.ENFORCEMENT,
        notify=_record_result,
        outcome=_result_outcome,
        consumes=("parties", "status"),
        declared_outcomes=VERDICTS,
    )
    return PathDefinition(
        name=TSC_PATH_NAME,
        processes={
            MENTION_AUTHORING: mention_authoring,
            VERDICT_COLLECTION: verdict_collection,
            DISPUTE_RESOLUTION: dispute_resolution,
            RECORDING: recording,
        },
        init=MENTION_AUTHORING,
        interfaces=[
            InterfaceDefinition(name="social", filter=_social_filter, match=_social_match)
        ],
    )
