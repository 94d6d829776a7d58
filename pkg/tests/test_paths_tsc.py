"""Scripted walks of the social-capital path, plus the brute-force consensus check."""
from __future__ import annotations

import itertools
import random

from accord.paths import build_tsc_path

from .conftest import EnvelopeFactory, make_demo_engine
from .oracles import consensus_walk, walk_is_valid


def start_agreement(engine, factory, thread_id="th-1", **kwargs):
    out = engine.dispatch("tsc", factory.mention(thread_id=thread_id, **kwargs))
    return out.agreement_id


def test_path_has_exactly_four_processes():
    assert len(build_tsc_path().processes) == 4


def test_mention_with_keyword_creates_instance_rooted_at_authoring():
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    out = engine.dispatch("tsc", factory.mention())
    assert out.disposition == "created"
    instance = engine.instance("tsc", out.agreement_id)
    assert instance.history[0].to_process == "MentionAuthoring"
    assert instance.active_process == "VerdictCollection"
    # Acknowledgment reply was posted into the mention's thread.
    ack = adapters["social"].statuses[0]
    assert ack.thread_id == "th-1"
    assert out.agreement_id in ack.text


def test_mention_without_keyword_is_rejected_by_the_interface():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    out = engine.dispatch("tsc", factory.mention(text="@agreebot @bob no magic word here"))
    assert out.disposition == "rejected"
    assert engine.summaries("tsc") == []


def test_mention_tagging_self_terminates_invalid():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    out = engine.dispatch("tsc", factory.mention(initiator="alice", counterparty="alice"))
    assert out.disposition == "created"
    assert out.outcome == "invalid"


def test_mention_without_counterparty_terminates_invalid():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    env = factory.mention(text="@agreebot I promise myself an agreement")
    env.payload.pop("counterparty")
    out = engine.dispatch("tsc", env)
    assert out.outcome == "invalid"


def test_immediate_consensus_posts_result_and_terminates():
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = start_agreement(engine, factory)
    engine.dispatch("tsc", factory.reply("alice", "upheld"))
    out = engine.dispatch("tsc", factory.reply("bob", "upheld"))
    assert out.status == "terminated"
    assert out.outcome == "upheld"
    result_post = adapters["social"].statuses[-1]
    assert "upheld" in result_post.text
    assert result_post.thread_id == "th-1"
    instance = engine.instance("tsc", aid)
    assert instance.data_model.get("registration", "status") == "upheld"
    assert instance.data_model.get("registration", "parties") == [
        {"platform": "social", "handle": "alice"},
        {"platform": "social", "handle": "bob"},
    ]
    assert walk_is_valid([r.to_doc() for r in instance.history], "MentionAuthoring")
    assert len(instance.history) == 4


def test_disagreement_prompts_and_revision_settles():
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = start_agreement(engine, factory)
    engine.dispatch("tsc", factory.reply("alice", "upheld"))
    disagreement = engine.dispatch("tsc", factory.reply("bob", "broken"))
    assert disagreement.status == "active"
    assert disagreement.active_process == "DisputeResolution"
    prompt = adapters["social"].statuses[-1]
    assert "disagree" in prompt.text.lower()
    # No public result yet: the instance is still active.
    revision = engine.dispatch("tsc", factory.reply("bob", "upheld"))
    assert revision.status == "terminated"
    assert revision.outcome == "upheld"
    assert "upheld" in adapters["social"].statuses[-1].text


def test_result_post_never_precedes_termination():
    engine, adapters = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    start_agreement(engine, factory)
    engine.dispatch("tsc", factory.reply("alice", "broken"))
    engine.dispatch("tsc", factory.reply("bob", "upheld"))
    engine.dispatch("tsc", factory.reply("alice", "upheld"))
    texts = [s.text for s in adapters["social"].statuses]
    settled = [t for t in texts if "settled" in t]
    assert len(settled) == 1
    assert engine.instance("tsc", "tsc-1").status == "terminated"


def test_non_party_reply_rejected_and_verdicts_unchanged():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = start_agreement(engine, factory)
    engine.dispatch("tsc", factory.reply("alice", "upheld"))
    before = engine.instance("tsc", aid).data_model.section("verdicts").copy()
    out = engine.dispatch("tsc", factory.reply("carol", "broken"))
    assert out.disposition == "rejected"
    assert engine.instance("tsc", aid).data_model.section("verdicts") == before


def test_reply_in_unknown_thread_is_rejected():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    start_agreement(engine, factory, thread_id="th-1")
    out = engine.dispatch("tsc", factory.reply("alice", "upheld", thread_id="th-404"))
    assert out.disposition == "rejected"


def test_reply_routed_by_thread_to_the_right_instance():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    first = start_agreement(engine, factory, thread_id="th-1")
    second = start_agreement(
        engine, factory, thread_id="th-2", initiator="carol", counterparty="dan"
    )
    out = engine.dispatch("tsc", factory.reply("dan", "upheld", thread_id="th-2"))
    assert out.agreement_id == second
    assert engine.instance("tsc", first).data_model.section("verdicts") == {}


def test_replies_after_termination_are_ignored():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = start_agreement(engine, factory)
    engine.dispatch("tsc", factory.reply("alice", "upheld"))
    engine.dispatch("tsc", factory.reply("bob", "upheld"))
    before = engine.instance("tsc", aid).to_doc()
    out = engine.dispatch("tsc", factory.reply("alice", "broken"))
    assert out.disposition == "ignored_terminated"
    assert engine.instance("tsc", aid).to_doc() == before


def test_verdict_extracted_from_reply_text():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    start_agreement(engine, factory)
    engine.dispatch("tsc", factory.reply("alice", text="Definitely UPHELD!"))
    out = engine.dispatch("tsc", factory.reply("bob", text="upheld, well done"))
    assert out.outcome == "upheld"


def test_gibberish_reply_is_rejected():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    start_agreement(engine, factory)
    out = engine.dispatch("tsc", factory.reply("alice", text="maybe? who knows"))
    assert out.disposition == "rejected"


def test_either_party_may_abandon():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = start_agreement(engine, factory)
    out = engine.dispatch("tsc", factory.abandon("bob"))
    assert out.status == "terminated"
    assert out.outcome == "abandoned"
    assert engine.instance("tsc", aid).outcome == "abandoned"


def test_non_party_cannot_abandon():
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    start_agreement(engine, factory)
    out = engine.dispatch("tsc", factory.abandon("carol"))
    assert out.disposition == "rejected"


def test_consensus_matches_brute_force_oracle_up_to_length_4():
    """All (party, verdict) revision sequences of length <= 4."""
    options = list(itertools.product(["alice", "bob"], ["upheld", "broken"]))
    for length in range(5):
        for events in itertools.product(options, repeat=length):
            engine, _ = make_demo_engine()
            factory = EnvelopeFactory(engine.clock)
            aid = start_agreement(engine, factory)
            terminated, result, _ = consensus_walk(["alice", "bob"], events)
            for party, verdict in events:
                engine.dispatch("tsc", factory.reply(party, verdict))
            instance = engine.instance("tsc", aid)
            assert (instance.status == "terminated") == terminated, events
            assert instance.outcome == result, events


def test_consensus_matches_oracle_on_random_sequences_up_to_length_8():
    rng = random.Random(88)
    for _ in range(200):
        events = [
            (rng.choice(["alice", "bob"]), rng.choice(["upheld", "broken"]))
            for _ in range(rng.randint(5, 8))
        ]
        engine, _ = make_demo_engine()
        factory = EnvelopeFactory(engine.clock)
        aid = start_agreement(engine, factory)
        terminated, result, _ = consensus_walk(["alice", "bob"], events)
        for party, verdict in events:
            engine.dispatch("tsc", factory.reply(party, verdict))
        instance = engine.instance("tsc", aid)
        assert (instance.status == "terminated") == terminated, events
        assert instance.outcome == result, events


def test_terminal_histories_end_in_enforcement_or_explicit_early_outcome():
    path = build_tsc_path()
    engine, _ = make_demo_engine()
    factory = EnvelopeFactory(engine.clock)
    aid = start_agreement(engine, factory)
    engine.dispatch("tsc", factory.reply("alice", "broken"))
    engine.dispatch("tsc", factory.reply("bob", "broken"))
    instance = engine.instance("tsc", aid)
    final = instance.history[-1]
    assert final.to_process is None
    last_process = final.from_process
    assert (
        path.processes[last_process].stage_kind.value == "enforcement"
        or instance.outcome in ("invalid", "abandoned")
    )
