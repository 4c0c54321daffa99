import random

import pytest

from conftest import DEMO_PATH, DEMO_TURNS, build_orchestrator
from seqsearch.backends import BackendRegistry, ScriptedBackend
from seqsearch.dialogue import (
    IllegalTransition,
    InvalidRewind,
    MissingSignal,
    Orchestrator,
    SessionStopped,
    SignalToken,
    default_runtime_graph,
    parse_signal,
)

GRAPH = default_runtime_graph()


# --- parse_signal ---------------------------------------------------------------


def test_parse_signal_strips_trailing_token():
    state = GRAPH["confirm_examples"]
    visible, token = parse_signal("Looks good! <SIG:proceed:collect_area>", state)
    assert visible == "Looks good!"
    assert token == SignalToken("proceed", "collect_area")


def test_parse_signal_token_must_be_trailing():
    with pytest.raises(MissingSignal):
        parse_signal("Hi <SIG:proceed:stop> there", GRAPH["confirm_examples"])


def test_parse_signal_back_with_empty_text():
    visible, token = parse_signal("<SIG:back:collect_examples>", GRAPH["confirm_examples"])
    assert visible == ""
    assert token == SignalToken("back", "collect_examples")


def test_parse_signal_rejects_illegal_target():
    with pytest.raises(IllegalTransition):
        parse_signal("ok <SIG:proceed:execute_search>", GRAPH["collect_examples"])


def test_parse_signal_rejects_missing():
    with pytest.raises(MissingSignal):
        parse_signal("plain reply with no token", GRAPH["collect_examples"])


# --- advance with the rule backend ------------------------------------------------


def fresh(store, gazetteer, **kwargs):
    orch = build_orchestrator(store, gazetteer, **kwargs)
    return orch, orch.new_session("fixed-id")


def test_advance_extracts_category_examples(desk_store, gazetteer):
    orch, session = fresh(desk_store, gazetteer)
    reply, session = orch.advance(session, "I want to look for places like a gym and a station.")
    assert session.state == "confirm_examples"
    drafted = [(ex.kind, ex.category) for ex in session.draft.examples]
    assert drafted == [("category_only", "gym"), ("category_only", "station")]
    assert "<SIG:" not in reply


def test_advance_add_request_routes_back(desk_store, gazetteer):
    orch, session = fresh(desk_store, gazetteer)
    orch.advance(session, DEMO_TURNS[0])
    assert session.state == "confirm_examples"
    reply, session = orch.advance(session, "I want to add a hotel")
    assert session.state == "collect_examples"
    assert "hotel" in reply
    assert "distance in meters from the first place" in reply
    # the hotel is not in the draft yet; the next turn supplies it once
    assert len(session.draft.examples) == 2
    orch.advance(session, "Any hotel within 200 meters")
    categories = [ex.category for ex in session.draft.examples]
    assert categories == ["mall", "gym", "hotel"]


def test_advance_demo_transcript_end_to_end(desk_store, gazetteer):
    orch, session = fresh(desk_store, gazetteer)
    for turn in DEMO_TURNS:
        orch.advance(session, turn)
    assert session.path == DEMO_PATH
    wire = orch.draft_wire(session)
    kinds = [(ex["kind"], ex["category"]) for ex in wire["examples"]]
    assert kinds == [("named", "mall"), ("named", "gym"), ("category_only", "hotel")]
    assert wire["examples"][1]["anchor_distance_m"] == pytest.approx(461.0, abs=2.0)
    assert wire["examples"][2]["anchor_distance_m"] == 200.0
    assert wire["area"] is not None and "radius_m" in wire["area"]
    assert session.last_results


def test_advance_unknown_name_is_conversational(desk_store, gazetteer):
    orch, session = fresh(desk_store, gazetteer)
    reply, session = orch.advance(session, "I want places like 1. Atlantis Mall and 2. Suntec City")
    assert session.state == "collect_examples"
    assert "Atlantis Mall" in reply
    # the unknown place was dropped, the rest of the draft survives
    assert all(ex.name != "Atlantis Mall" for ex in session.draft.examples)


def test_advance_ambiguous_name_asks_for_detail(desk_store, gazetteer):
    orch, session = fresh(desk_store, gazetteer)
    reply, session = orch.advance(session, "I want places like 1. Starbucks and 2. Suntec City")
    assert session.state == "collect_examples"
    assert "Starbucks" in reply


def test_advance_unknown_area_stays(desk_store, gazetteer):
    orch, session = fresh(desk_store, gazetteer)
    orch.advance(session, DEMO_TURNS[0])
    orch.advance(session, "yes")
    assert session.state == "collect_area"
    reply, session = orch.advance(session, "In Atlantis")
    assert session.state == "collect_area"
    assert "Atlantis" in reply


def test_advance_stop_finishes_session(desk_store, gazetteer):
    orch, session = fresh(desk_store, gazetteer)
    for turn in DEMO_TURNS:
        orch.advance(session, turn)
    orch.advance(session, "thanks, bye")
    assert session.state == "stop"
    with pytest.raises(SessionStopped):
        orch.advance(session, "hello again")


def test_advance_malformed_backend_reply_recovers(desk_store, gazetteer):
    backend = ScriptedBackend(["no token here at all"])
    orch, session = fresh(desk_store, gazetteer, backends=BackendRegistry.single(backend))
    reply, session = orch.advance(session, "hello")
    assert session.state == "error_recovery"
    assert "<SIG:" not in reply


def test_advance_illegal_transition_recovers(desk_store, gazetteer):
    backend = ScriptedBackend(["jump! <SIG:proceed:present_results>"])
    orch, session = fresh(desk_store, gazetteer, backends=BackendRegistry.single(backend))
    reply, session = orch.advance(session, "hello")
    assert session.state == "error_recovery"


def test_advance_hides_mid_text_tokens(desk_store, gazetteer):
    backend = ScriptedBackend(["sneaky <SIG:stay> text <SIG:stay>"])
    orch, session = fresh(desk_store, gazetteer, backends=BackendRegistry.single(backend))
    reply, session = orch.advance(session, "hello")
    assert "<SIG:" not in reply
    assert session.state == "error_recovery"


def test_advance_determinism(desk_store, gazetteer):
    def run():
        orch, session = fresh(desk_store, gazetteer)
        transcript = []
        for turn in DEMO_TURNS:
            reply, session = orch.advance(session, turn)
            transcript.append((reply, session.state))
        return transcript, session.path, orch.draft_wire(session)

    assert run() == run()


def test_error_recovery_accepts_examples(desk_store, gazetteer):
    backend = ScriptedBackend(["garbled"])
    orch, session = fresh(desk_store, gazetteer, backends=BackendRegistry.single(backend))
    orch.advance(session, "hello")
    assert session.state == "error_recovery"
    # swap in the rule backend for the recovery turn
    orch.backends = BackendRegistry.single(__import__("seqsearch.backends", fromlist=["RuleBackend"]).RuleBackend())
    reply, session = orch.advance(session, "I want to look for places like a gym and a station.")
    assert session.state == "confirm_examples"
    assert [ex.category for ex in session.draft.examples] == ["gym", "station"]


# --- fuzz -------------------------------------------------------------------------


class FuzzBackend:
    def __init__(self, seed):
        self.rng = random.Random(seed)
        pieces = [
            "hello", "ok", "<SIG:", "SIG", ">", "<SIG:stay>", "<SIG:stop>",
            "<SIG:proceed:collect_area>", "<SIG:back:collect_examples>",
            "<SIG:proceed:nowhere>", "<SIG:stay:extra>", "\n", " ", "",
        ]
        self.pieces = pieces

    def complete(self, messages, constraints=None, session_id=None):
        n = self.rng.randint(0, 5)
        return " ".join(self.rng.choice(self.pieces) for _ in range(n))


def test_fuzzed_replies_never_crash(desk_store, gazetteer):
    backend = FuzzBackend(1234)
    orch = build_orchestrator(desk_store, gazetteer, backends=BackendRegistry.single(backend))
    session = orch.new_session("fuzz")
    rng = random.Random(99)
    texts = ["hello", "places like a gym and a station", "In downtown Sydney", "yes", "stop"]
    for _ in range(1000):
        if session.state == "stop":
            session = orch.new_session("fuzz")
        reply, session = orch.advance(session, rng.choice(texts))
        assert session.state in orch.graph.states
        assert "<SIG:" not in reply


# --- rewind -----------------------------------------------------------------------


def drive_to_results(desk_store, gazetteer):
    orch, session = fresh(desk_store, gazetteer)
    for turn in DEMO_TURNS:
        orch.advance(session, turn)
    return orch, session


def test_rewind_to_collect_area_keeps_examples(desk_store, gazetteer):
    orch, session = drive_to_results(desk_store, gazetteer)
    orch.rewind(session, "collect_area")
    assert session.state == "collect_area"
    assert len(session.draft.examples) == 3
    assert session.draft.area is None
    assert session.last_results is None
    assert len(session.history) == 9  # greeting + 4 user/assistant pairs, untouched


def test_rewind_to_collect_examples_clears_everything(desk_store, gazetteer):
    orch, session = drive_to_results(desk_store, gazetteer)
    orch.rewind(session, "collect_examples")
    assert session.draft.examples == []
    assert session.draft.area is None


def test_rewind_unvisited_state_rejected(desk_store, gazetteer):
    orch, session = fresh(desk_store, gazetteer)
    orch.advance(session, DEMO_TURNS[0])
    with pytest.raises(InvalidRewind):
        orch.rewind(session, "present_results")
    with pytest.raises(InvalidRewind):
        orch.rewind(session, "not_a_state")


def test_rewind_then_replay_matches_fresh_session(desk_store, gazetteer):
    orch, session = drive_to_results(desk_store, gazetteer)
    orch.rewind(session, "collect_examples")
    for turn in DEMO_TURNS:
        orch.advance(session, turn)
    fresh_orch, fresh_session = fresh(desk_store, gazetteer)
    for turn in DEMO_TURNS:
        fresh_orch.advance(fresh_session, turn)
    assert orch.draft_wire(session) == fresh_orch.draft_wire(fresh_session)
    assert session.state == fresh_session.state
