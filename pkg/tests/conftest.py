from __future__ import annotations

import pytest

from accord.adapters import EscrowLedger, MailAdapter, SocialAdapter
from accord.engine import (
    Actor,
    Correlation,
    Engine,
    IdAllocator,
    InputEnvelope,
    TickClock,
    parse_ts,
)
from accord.paths import build_scarce_knowledge_path, build_tsc_path

CLOCK_START = "2024-01-01T00:00:00Z"

AUTHOR = "prof_ada"
TOPIC = "attention economics"


@pytest.fixture
def clock():
    return TickClock(parse_ts(CLOCK_START))


@pytest.fixture
def adapters():
    return {
        "social": SocialAdapter(),
        "mail": MailAdapter(),
        "escrow": EscrowLedger({"s1": 1000, "s2": 1000, "s3": 1000}),
    }


@pytest.fixture
def engine(clock, adapters):
    return Engine(clock=clock, ids=IdAllocator(), services=adapters)


@pytest.fixture
def demo_engine(engine):
    engine.register_path(build_scarce_knowledge_path())
    engine.register_path(build_tsc_path())
    return engine


def make_demo_engine(*, escrow_balances=None, escrow_default=0):
    """Standalone engine factory for tests that need many fresh engines."""
    adapters = {
        "social": SocialAdapter(),
        "mail": MailAdapter(),
        "escrow": EscrowLedger(escrow_balances or {"s1": 1000, "s2": 1000, "s3": 1000},
                               default_balance=escrow_default),
    }
    engine = Engine(
        clock=TickClock(parse_ts(CLOCK_START)), ids=IdAllocator(), services=adapters
    )
    engine.register_path(build_scarce_knowledge_path())
    engine.register_path(build_tsc_path())
    return engine, adapters


class EnvelopeFactory:
    """Builds envelopes with deterministic, strictly increasing timestamps."""

    def __init__(self, clock):
        self.clock = clock

    def pledge(self, handle: str, amount, author: str = AUTHOR, topic: str = TOPIC):
        return InputEnvelope(
            source="web-form",
            kind="pledge",
            actor=Actor("web-form", handle),
            payload={"author": author, "topic": topic, "amount": amount},
            received_at=self.clock(),
        )

    def author_dm(self, text: str, handle: str = AUTHOR):
        return InputEnvelope(
            source="social",
            kind="dm",
            actor=Actor("social", handle),
            payload={"text": text},
            received_at=self.clock(),
        )

    def essay(self, title: str = "Attention is Scarce", body: str = "Why attention is a currency.",
              handle: str = AUTHOR, author: str = AUTHOR, topic: str = TOPIC):
        return InputEnvelope(
            source="web-form",
            kind="essay_submission",
            actor=Actor("web-form", handle),
            payload={"author": author, "topic": topic, "title": title, "body": body},
            received_at=self.clock(),
        )

    def mention(self, initiator: str = "alice", counterparty: str = "bob",
                text: str | None = None, thread_id: str = "th-1"):
        if text is None:
            text = f"@agreebot @{counterparty} I will deliver the slides by Friday. agreement"
        return InputEnvelope(
            source="social",
            kind="status_mention",
            actor=Actor("social", initiator),
            payload={"text": text, "counterparty": counterparty},
            correlation=Correlation(thread_id=thread_id),
            received_at=self.clock(),
        )

    def reply(self, handle: str, verdict: str | None = None, text: str | None = None,
              thread_id: str = "th-1"):
        payload: dict = {}
        if text is not None:
            payload["text"] = text
        if verdict is not None:
            payload["verdict"] = verdict
        return InputEnvelope(
            source="social",
            kind="reply",
            actor=Actor("social", handle),
            payload=payload,
            correlation=Correlation(thread_id=thread_id),
            received_at=self.clock(),
        )

    def abandon(self, handle: str, thread_id: str = "th-1"):
        return InputEnvelope(
            source="social",
            kind="abandon",
            actor=Actor("social", handle),
            payload={},
            correlation=Correlation(thread_id=thread_id),
            received_at=self.clock(),
        )


@pytest.fixture
def envelopes(clock):
    return EnvelopeFactory(clock)


def run_scarce_to_approval(engine, envelopes):
    """Pledges 200 + 250 + 100: crosses the 500 threshold into AuthorApproval."""
    first = engine.dispatch("scarce", envelopes.pledge("s1", 200))
    engine.dispatch("scarce", envelopes.pledge("s2", 250))
    engine.dispatch("scarce", envelopes.pledge("s3", 100))
    return first.agreement_id


def run_scarce_happy(engine, envelopes):
    agreement_id = run_scarce_to_approval(engine, envelopes)
    engine.dispatch("scarce", envelopes.author_dm("accept"))
    engine.dispatch("scarce", envelopes.essay())
    return agreement_id


def run_tsc_to_verdicts(engine, envelopes, thread_id: str = "th-1"):
    outcome = engine.dispatch("tsc", envelopes.mention(thread_id=thread_id))
    return outcome.agreement_id
