"""Scripted walks of the crowdfunded-essay path against hand-derived oracles."""
from __future__ import annotations

from accord.paths import build_scarce_knowledge_path

from .conftest import (
    AUTHOR,
    EnvelopeFactory,
    make_demo_engine,
    run_scarce_happy,
    run_scarce_to_approval,
)
from .oracles import threshold_fire_index, walk_is_valid

# Hand-executed walk of the four-process graph for the happy flow:
# creation lands in PledgeAuthoring, the threshold crossing moves to
# AuthorApproval, acceptance to EssaySubmission, the essay to Distribution,
# whose activation terminates the agreement.
HAPPY_WALK = [
    (None, "PledgeAuthoring"),
    ("PledgeAuthoring", "AuthorApproval"),
    ("AuthorApproval", "EssaySubmission"),
    ("EssaySubmission", "Distribution"),
    ("Distribution", None),
]


def test_path_has_exactly_four_processes():
    path = build_scarce_knowledge_path()
    assert len(path.processes) == 4


def test_happy_flow_walk_and_outcome():
    engine, adapters = make_demo_engine(escrow_balances={"s1": 200, "s2": 250, "s3": 100})
    factory = EnvelopeFactory(engine.clock)
    aid = run_scarce_happy(engine, factory)
    instance = engine.instance("scarce", aid)

    assert instance.status == "terminated"
    assert instance.outcome == "fulfilled"
    walk = [(r.from_process, r.to_process) for r in instance.history]
    assert walk == HAPPY_WALK
    assert walk_is_valid([r.to_doc() for r in instance.history], "PledgeAuthoring")
    assert instance.history[-1].cause == "activation"


def test_happy_flow_escrow_and_emails():
    engine, adapters = make_demo_engine(escrow_balances={"s1": 200, "s2": 250, "s3": 100})
    factory = EnvelopeFactory(engine.clock)
    conserved = adapters["escrow"].conserved_total()
    aid = run_scarce_happy(engine, factory)

    escrow = adapters["escrow"]
    assert escrow.balance_of(AUTHOR) == 550
    assert escrow.settled[aid] == "released"
    assert escrow.conserved_total() == conserved
    recipients = [email.to for email in adapters["mail"].outbox]
    assert sorted(recipients) == ["s1", "s2", "s3"]  # the distinct supporter set
    assert len(recipients) == len(set(recipients))


def test_exactly_one_author_dm_per_instance():
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    run_scarce_happy(engine, factory)
    dms = adapters["social"].dms
    assert len(dms) == 1
    assert dms[0].to == AUTHOR
    assert "550" in dms[0].text
    assert "attention economics" in dms[0].text


def test_dm_sent_only_after_threshold_crossed():
    # Oracle: 200 + 250 stays at 450 <= 500, so no author contact yet.
    assert threshold_fire_index([200, 250], 500) is None
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    engine.dispatch("scarce", factory.pledge("s1", 200))
    engine.dispatch("scarce", factory.pledge("s2", 250))
    assert adapters["social"].dms == []


def test_author_reject_declines_without_emails_or_hold():
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = run_scarce_to_approval(engine, factory)
    out = engine.dispatch("scarce", factory.author_dm("reject"))
    instance = engine.instance("scarce", aid)
    assert out.disposition == "delivered"
    assert instance.outcome == "declined"
    assert adapters["mail"].outbox == []
    assert adapters["escrow"].holds == {}
    assert adapters["escrow"].settled == {}


def test_negative_creating_pledge_terminates_invalid():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    out = engine.dispatch("scarce", factory.pledge("s1", -5))
    assert out.disposition == "created"
    assert out.status == "terminated"
    assert out.outcome == "invalid"


def test_single_pledge_of_exactly_500_waits():
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    out = engine.dispatch("scarce", factory.pledge("s1", 500))
    assert out.active_process == "PledgeAuthoring"
    assert adapters["social"].dms == []


def test_pledges_during_author_approval_are_rejected_not_accumulated():
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = run_scarce_to_approval(engine, factory)
    out = engine.dispatch("scarce", factory.pledge("s9", 100))
    instance = engine.instance("scarce", aid)
    assert out.disposition == "rejected"
    assert instance.data_model.get("pledges", "total") == 550
    # The later hold matches the amount the author was DMed about.
    engine.dispatch("scarce", factory.author_dm("accept"))
    assert adapters["escrow"].holds[aid]["amount"] == 550


def test_author_decision_tolerates_case_and_punctuation():
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = run_scarce_to_approval(engine, factory)
    out = engine.dispatch("scarce", factory.author_dm("Accept!"))
    assert out.disposition == "delivered"
    assert out.active_process == "EssaySubmission"
    assert adapters["escrow"].holds[aid]["amount"] == 550


def test_non_author_dm_is_rejected():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = run_scarce_to_approval(engine, factory)
    out = engine.dispatch("scarce", factory.author_dm("accept", handle="impostor"))
    assert out.disposition == "rejected"
    assert engine.instance("scarce", aid).active_process == "AuthorApproval"


def test_essay_from_non_author_is_rejected():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = run_scarce_to_approval(engine, factory)
    engine.dispatch("scarce", factory.author_dm("accept"))
    out = engine.dispatch("scarce", factory.essay(handle="s1"))
    assert out.disposition == "rejected"
    assert engine.instance("scarce", aid).active_process == "EssaySubmission"


def test_essay_without_body_is_rejected():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    run_scarce_to_approval(engine, factory)
    engine.dispatch("scarce", factory.author_dm("accept"))
    out = engine.dispatch("scarce", factory.essay(body=""))
    assert out.disposition == "rejected"


def test_duplicate_supporters_receive_one_email_each():
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    engine.dispatch("scarce", factory.pledge("s1", 300))
    engine.dispatch("scarce", factory.pledge("s1", 150))
    engine.dispatch("scarce", factory.pledge("s2", 100))
    engine.dispatch("scarce", factory.author_dm("accept"))
    engine.dispatch("scarce", factory.essay())
    recipients = [email.to for email in adapters["mail"].outbox]
    assert sorted(recipients) == ["s1", "s2"]


def test_registration_record_has_all_fields_after_accept():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = run_scarce_to_approval(engine, factory)
    engine.dispatch("scarce", factory.author_dm("accept"))
    registration = engine.instance("scarce", aid).data_model.section("registration")
    assert registration["identity"] == aid
    assert registration["status"] == "accepted"
    assert {p["handle"] for p in registration["parties"]} == {AUTHOR, "s1", "s2", "s3"}
    assert registration["content_digest"]


def test_registration_status_reaches_fulfilled():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = run_scarce_happy(engine, factory)
    instance = engine.instance("scarce", aid)
    assert instance.data_model.get("registration", "status") == "fulfilled"


def test_distinct_requests_create_distinct_instances():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    a = engine.dispatch("scarce", factory.pledge("s1", 10, author="a1", topic="t1"))
    b = engine.dispatch("scarce", factory.pledge("s1", 10, author="a2", topic="t2"))
    again = engine.dispatch("scarce", factory.pledge("s2", 20, author="a1", topic="t1"))
    assert a.agreement_id != b.agreement_id
    assert again.agreement_id == a.agreement_id


def test_pledge_total_always_equals_entry_sum():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = None
    for handle, amount in (("s1", 120), ("s2", 80), ("s3", 250)):
        out = engine.dispatch("scarce", factory.pledge(handle, amount))
        aid = aid or out.agreement_id
        model = engine.instance("scarce", aid).data_model
        entries = model.get("pledges", "entries")
        assert model.get("pledges", "total") == sum(e["amount"] for e in entries)
