from __future__ import annotations

import pytest

from conftest import make_session
from gpsr_sim.dialogue import (
    NO_MATCH,
    OperatorScript,
    ScriptedChannel,
    ask,
    confirm_completion,
    extract_slot,
)
from gpsr_sim.errors import PreconditionError
from gpsr_sim.ledger import add_lexicon
from gpsr_sim.world import load_world

WORLD = """
schema_version: 1
rooms:
  - {name: dining room, connected: []}
locations:
  - {name: operator, room: dining room, kind: seat}
persons:
  - {name: Ashley, room: dining room, responsive: false}
  - {name: Carol, room: dining room, responsive: true, script_ref: carol}
robot: {at: operator}
"""


def _session(tablev_ledger, script=None, scripts=None):
    return make_session(
        load_world(WORLD), tablev_ledger, operator_script=script, person_scripts=scripts or {}
    )


def test_ask_unresponsive_person_no_response(tablev_ledger):
    session = _session(tablev_ledger)
    turn = ask(session, "Ashley", "do you know where the apple is?")
    assert turn.text is None


def test_ask_operator_scripted_with_correction(tablev_ledger):
    script = OperatorScript(turns=[("rephrase", "I mean the shelf")])
    session = _session(tablev_ledger, script=script)
    turn = ask(session, "operator", "could you rephrase the location?", purpose="help")
    assert turn.corrected_text == "I mean the shelf"
    assert session.operator_queries == 1


def test_ask_nonexistent_person_rejected(tablev_ledger):
    session = _session(tablev_ledger)
    with pytest.raises(PreconditionError):
        ask(session, "Nobody", "hello?")


def test_script_first_match_wins_and_consumes(tablev_ledger):
    script = OperatorScript(turns=[("task", "first"), ("task", "second")])
    channel = ScriptedChannel(script)
    assert channel.request_turn("about the task") == "first"
    assert channel.request_turn("about the task") == "second"
    assert channel.request_turn("about the task") is None


def test_script_echo_default():
    script = OperatorScript(default="echo")
    assert ScriptedChannel(script).request_turn("repeat after me") == "repeat after me"


def test_inbound_operator_speech_transcribed(tablev_ledger):
    # lexicon corrects a mangled location name in the operator's answer
    ledger = add_lexicon(tablev_ledger, locations=("bedroom",))
    session = make_session(
        load_world(WORLD),
        ledger,
        operator_script=OperatorScript(turns=[("where", "it is in the bathroom")]),
    )
    turn = ask(session, "operator", "where is it?")
    assert "bedroom" in turn.corrected_text
    events = [e for e in session.trace.events if e["type"] == "dialogue_turn"]
    inbound = [e for e in events if e["speaker"] == "operator"]
    assert all("corrected_text" in e for e in inbound)


def test_extract_slot_examples(session):
    assert extract_slot(session, "the stair-like shelf", "location", {"shelf", "side table"}) == "shelf"
    assert extract_slot(session, "no idea", "location", {"shelf", "side table"}) == NO_MATCH
    with pytest.raises(PreconditionError):
        extract_slot(session, "", "location", {"shelf"})


def test_confirm_completion_positive(tablev_ledger):
    session = _session(tablev_ledger, script=OperatorScript(turns=[("complete", "yes, thank you")]))
    verdict = confirm_completion(session)
    assert verdict.completed


def test_confirm_completion_negative_keeps_feedback(tablev_ledger):
    session = _session(
        tablev_ledger,
        script=OperatorScript(turns=[("complete", "no, that's the wrong fruit")]),
    )
    verdict = confirm_completion(session)
    assert not verdict.completed
    assert verdict.feedback == "no, that's the wrong fruit"


def test_confirm_no_response_optimistic_default(tablev_ledger):
    session = _session(tablev_ledger)
    verdict = confirm_completion(session)
    assert verdict.completed
    warnings = [e for e in session.trace.events if e["type"] == "verdict"]
    assert warnings and "warning" in warnings[0]


def test_confirm_no_response_strict_mode(tablev_ledger):
    session = _session(tablev_ledger)
    session.strict_verdict = True
    assert not confirm_completion(session).completed


def test_script_determinism(tablev_ledger):
    def run():
        session = _session(
            tablev_ledger,
            scripts={"carol": OperatorScript(turns=[("one", "a"), ("two", "b")])},
        )
        answers = [
            ask(session, "Carol", "question one").text,
            ask(session, "Carol", "question two").text,
        ]
        return answers

    assert run() == run() == ["a", "b"]
