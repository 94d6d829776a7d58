"""Crowdfunded-essay agreement path ("scarce").

Supporters pledge abstract units toward an essay on a topic by a named
author. Once pledges strictly surpass the funding threshold the author is
messaged; on acceptance the pledged funds go into escrow and the agreement
is put on record. The submitted essay is mailed to every distinct supporter
and the escrow is released to the author.

Four processes: PledgeAuthoring -> AuthorApproval -> EssaySubmission ->
Distribution; any of them can end the agreement early on invalid input.
"""
from __future__ import annotations

from typing import Optional

from ..engine import (
    Decline,
    Directive,
    Existing,
    HookContext,
    InputEnvelope,
    InterfaceDefinition,
    New,
    PathDefinition,
    ProcessDefinition,
    RegistryView,
    StageKind,
    Terminate,
    Transition,
)
from ..stages import (
    PartyRef,
    build_payload,
    make_approval_gate,
    make_notifier,
    make_threshold_gate,
    record_registration,
    update_registration_status,
)

SCARCE_PATH_NAME = "scarce"
FUNDING_THRESHOLD = 500

PLEDGE_AUTHORING = "PledgeAuthoring"
AUTHOR_APPROVAL = "AuthorApproval"
ESSAY_SUBMISSION = "EssaySubmission"
DISTRIBUTION = "Distribution"

WEB_SOURCE = "web-form"
SOCIAL_SOURCE = "social"


def _capture_request(ctx: HookContext) -> Optional[Directive]:
    """Creating envelope must name the author and topic being funded."""
    env = ctx.envelope
    author = env.get("author")
    topic = env.get("topic")
    if not isinstance(author, str) or not author or not isinstance(topic, str) or not topic:
        return Terminate("invalid")
    ctx.model.set("agreement", "author", author)
    ctx.model.set("agreement", "topic", topic)
    return None


def _funding_parties(ctx: HookContext, entries: list[dict]) -> list[PartyRef]:
    parties = [PartyRef(platform=WEB_SOURCE, handle=ctx.model.get("agreement", "author"))]
    seen = set()
    for entry in entries:
        if entry["handle"] not in seen:
            seen.add(entry["handle"])
            parties.append(PartyRef(platform=entry["platform"], handle=entry["handle"]))
    return parties


def _funding_summary(ctx: HookContext, entries: list[dict], total: int):
    return build_payload(
        ctx,
        target=AUTHOR_APPROVAL,
        status="funded",
        parties=_funding_parties(ctx, entries),
        content={"topic": ctx.model.get("agreement", "topic"), "entries": entries},
        extras={"total": total, "topic": ctx.model.get("agreement", "topic")},
    )


def _dm_author(ctx: HookContext) -> None:
    social = ctx.services["social"]
    author = ctx.model.get("agreement", "author")
    topic = ctx.model.get("agreement", "topic")
    total = ctx.model.get("pledges", "total")
    social.send_dm(
        author,
        f"You have a {total} unit bounty to write about '{topic}'. Reply accept or reject.",
    )


def _accept_bounty(ctx: HookContext):
    """Escrow the pledged funds and put the agreement on record."""
    escrow = ctx.services["escrow"]
    author = ctx.model.get("agreement", "author")
    entries = ctx.model.get("pledges", "entries")
    escrow.hold(
        ctx.agreement_id,
        [{"handle": e["handle"], "amount": e["amount"]} for e in entries],
        author,
    )
    payload = build_payload(
        ctx,
        target=ESSAY_SUBMISSION,
        status="accepted",
        parties=_funding_parties(ctx, entries),
        content={"topic": ctx.model.get("agreement", "topic"), "entries": entries},
        extras={"total": ctx.model.get("pledges", "total")},
    )
    record_registration(ctx.model, payload)
    return payload


def _receive_essay(ctx: HookContext) -> Directive:
    env = ctx.envelope
    if env.kind != "essay_submission":
        ctx.reject(f"unexpected kind {env.kind!r} while awaiting the essay")
    if env.actor.handle != ctx.model.get("agreement", "author"):
        ctx.reject("only the commissioned author may submit the essay")
    title, body = env.get("title"), env.get("body")
    if not isinstance(title, str) or not title or not isinstance(body, str) or not body:
        ctx.reject("essay submission requires a title and a body")
    ctx.model.set("essay", "title", title)
    ctx.model.set("essay", "body", body)
    entries = ctx.model.get("pledges", "entries")
    payload = build_payload(
        ctx,
        target=DISTRIBUTION,
        status="submitted",
        parties=_funding_parties(ctx, entries),
        content={"title": title, "body": body},
        extras={"title": title},
    )
    return Transition(DISTRIBUTION, payload=payload)


def _distribute(ctx: HookContext) -> None:
    """Mail the essay to every distinct supporter, then pay the author."""
    mail = ctx.services["mail"]
    escrow = ctx.services["escrow"]
    title = ctx.model.get("essay", "title")
    body = ctx.model.get("essay", "body")
    author = ctx.model.get("agreement", "author")
    topic = ctx.model.get("agreement", "topic")
    sent = set()
    for entry in ctx.model.get("pledges", "entries"):
        supporter = entry["handle"]
        if supporter in sent:
            continue
        sent.add(supporter)
        mail.send_email(
            supporter,
            f"Your funded essay is here: {title}",
            f"{body}\n\n-- written by {author}, funded on the topic '{topic}'",
        )
    escrow.release(ctx.agreement_id)
    update_registration_status(ctx.model, "fulfilled")


def _web_filter(env: InputEnvelope) -> bool:
    return env.source == WEB_SOURCE and env.kind in ("pledge", "essay_submission")


def _web_match(env: InputEnvelope, view: RegistryView):
    author, topic = env.get("author"), env.get("topic")
    for candidate in view.active():
        if (
            candidate.get("agreement", "author") == author
            and candidate.get("agreement", "topic") == topic
        ):
            return Existing(candidate.id)
    return New()


def _author_dm_filter(env: InputEnvelope) -> bool:
    return env.source == SOCIAL_SOURCE and env.kind == "dm"


def _author_dm_match(env: InputEnvelope, view: RegistryView):
    for candidate in view.active():
        if (
            candidate.active_process == AUTHOR_APPROVAL
            and candidate.get("agreement", "author") == env.actor.handle
        ):
            return Existing(candidate.id)
    return Decline()


def build_scarce_knowledge_path(*, threshold: int = FUNDING_THRESHOLD) -> PathDefinition:
    pledge_authoring = make_threshold_gate(
        "amount",
        threshold,
        AUTHOR_APPROVAL,
        name=PLEDGE_AUTHORING,
        stage_kind=StageKind.AUTHORING,
        section="pledges",
        kinds=("pledge",),
        on_create=_capture_request,
        summary_builder=_funding_summary,
    )
    author_approval = make_approval_gate(
        name=AUTHOR_APPROVAL,
        stage_kind=StageKind.REGISTRATION,
        approver_ref=("agreement", "author"),
        kinds=("dm",),
        accept_target=ESSAY_SUBMISSION,
        decline_outcome="declined",
        on_accept=_accept_bounty,
        notify=_dm_author,
    )
    essay_submission = ProcessDefinition(
        name=ESSAY_SUBMISSION,
        stage_kind=StageKind.EXECUTION,
        on_receive=_receive_essay,
        targets=(DISTRIBUTION,),
        produces=frozenset({"essay_title", "essay_body"}),
    )
    distribution = make_notifier(
        name=DISTRIBUTION,
        stage_kind=StageKind.ENFORCEMENT,
        notify=_distribute,
        outcome="fulfilled",
        consumes=("essay_body",),
    )
    return PathDefinition(
        name=SCARCE_PATH_NAME,
        processes={
            PLEDGE_AUTHORING: pledge_authoring,
            AUTHOR_APPROVAL: author_approval,
            ESSAY_SUBMISSION: essay_submission,
            DISTRIBUTION: distribution,
        },
        init=PLEDGE_AUTHORING,
        interfaces=[
            InterfaceDefinition(name="web", filter=_web_filter, match=_web_match),
            InterfaceDefinition(name="author-dm", filter=_author_dm_filter, match=_author_dm_match),
        ],
    )
