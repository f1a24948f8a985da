from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpsr_sim.errors import SchemaError
from gpsr_sim.speech import (
    ConfusionTable,
    TranscriptionLexicon,
    consonant_skeleton,
    corrupt_utterance,
    transcribe,
)

# The three transcription fixtures: (true text, heard text, location slot).
HEARD_PAIRS = [
    (
        "Go after the person at the bed please.",
        "Go after the person of the band, please.",
        "bed",
    ),
    (
        "Go after the person at the bed please.",
        "Go after the person at the bat place.",
        "bed",
    ),
    (
        "Offer something to drink to all the people dressed in white in the bedroom.",
        "Offer something to drink to all the people dressed in white in the bathroom.",
        "bedroom",
    ),
]

LEXICON = TranscriptionLexicon.build(locations={"bed", "bedroom"})


def test_corrupt_rate_zero_is_identity():
    table = ConfusionTable.from_dict({"bed": ["band"]})
    assert corrupt_utterance("person at the bed please", table, 3, 0.0) == (
        "person at the bed please"
    )


def test_corrupt_rate_one_forces_substitution():
    table = ConfusionTable.from_dict({"bed": ["band"]})
    assert corrupt_utterance("person at the bed please", table, 3, 1.0) == (
        "person at the band please"
    )


def test_corrupt_is_deterministic_per_seed():
    table = ConfusionTable.from_dict({"bed": ["band", "bat"], "bedroom": ["bathroom"]})
    text = "go to the bed in the bedroom"
    assert corrupt_utterance(text, table, 11, 0.7) == corrupt_utterance(text, table, 11, 0.7)


def test_corrupt_rejects_bad_rate():
    with pytest.raises(ValueError):
        corrupt_utterance("x", ConfusionTable(), 1, 1.5)


def test_confusion_table_rejects_self_mapping():
    with pytest.raises(SchemaError):
        ConfusionTable.from_dict({"bed": ["bed"]})


def test_skeleton():
    assert consonant_skeleton("bedroom") == "bdrm"
    assert consonant_skeleton("Bat") == "bt"


@pytest.mark.parametrize("true_text, heard, slot", HEARD_PAIRS)
def test_table_fixture_slot_recovery(true_text, heard, slot):
    transcript, recovered = transcribe(heard, LEXICON)
    assert slot in recovered
    assert slot in transcript.lower()


def test_empty_lexicon_is_exact_identity():
    for _, heard, _ in HEARD_PAIRS:
        transcript, recovered = transcribe(heard, TranscriptionLexicon())
        assert transcript == heard
        assert recovered == set()


def test_in_lexicon_tokens_never_replaced():
    lexicon = TranscriptionLexicon.build(locations={"bed", "bedroom"})
    transcript, recovered = transcribe("the bed in the bedroom", lexicon)
    assert transcript == "the bed in the bedroom"
    assert recovered == {"bed", "bedroom"}


def test_multiword_phrase_recovery():
    lexicon = TranscriptionLexicon.build(locations={"side table"})
    transcript, recovered = transcribe("put it on the side table", lexicon)
    assert recovered == {"side table"}


def test_ambiguous_nearest_token_not_replaced():
    # "bat" is equidistant from "bed" and "bad" (skeletons bd); no unique
    # nearest, so the token stays.
    lexicon = TranscriptionLexicon.build(locations={"bed", "bad"})
    transcript, _ = transcribe("the bat place", lexicon)
    assert "bat" in transcript


def test_idempotence_on_fixtures():
    for _, heard, _ in HEARD_PAIRS:
        once, _ = transcribe(heard, LEXICON)
        twice, _ = transcribe(once, LEXICON)
        assert twice == once


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=8),
        min_size=1,
        max_size=8,
    )
)
def test_idempotence_property(tokens):
    text = " ".join(tokens)
    once, _ = transcribe(text, LEXICON)
    twice, _ = transcribe(once, LEXICON)
    assert twice == once


@settings(max_examples=100, deadline=None)
@given(st.text(min_size=0, max_size=60))
def test_empty_lexicon_identity_property(text):
    transcript, recovered = transcribe(text, TranscriptionLexicon())
    assert transcript == text and recovered == set()
