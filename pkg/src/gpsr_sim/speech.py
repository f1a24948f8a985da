"""Prompt-biased transcription simulator.

Models two things: a seeded corruption channel that turns the spoken text
into what the robot "heard", and a lexicon-guided correction pass that
pulls mangled tokens back to known object/person/location names.  The
correction contract is slot-level, not verbatim: downstream grounding
consumes recovered name slots only.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field

from .errors import SchemaError

_VOWELS = set("aeiou")

# Function words and everyday vocabulary that must never be "corrected"
# into a lexicon name.
COMMON_WORDS = frozenset(
    """
    a about after all am an and any are as ask at back bad be because been
    before big breakfast bring but by can close cold come could count day
    describe did dinner do does door down dressed drink eat find first floor
    follow food for from get
    give go going good grab guide had hand has have he hello her here hey
    him his hi home house how i if in is it its know large last left like
    little look lost lot lunch made make man may me mean might mine moment
    more most move much my need new next no not now object objects of off
    offer old on one open or other our out
    over people person place please prepare put quick rest right robot room
    say see she should small so some something soon starting stop take tell
    thank thanks that the their them then there these they thing think this
    those time tired to today tonight too two under up us very want wants
    was watch we well went were what when where which white who will with
    would yes you your
    """.split()
)


@dataclass(frozen=True)
class Utterance:
    true_text: str
    heard_text: str
    speaker: str = "operator"


@dataclass(frozen=True)
class TranscriptionLexicon:
    """Known name phrases fed to the transcriber as prior knowledge."""

    object_names: frozenset[str] = frozenset()
    person_names: frozenset[str] = frozenset()
    location_names: frozenset[str] = frozenset()

    @staticmethod
    def build(
        objects: set[str] | frozenset[str] = frozenset(),
        persons: set[str] | frozenset[str] = frozenset(),
        locations: set[str] | frozenset[str] = frozenset(),
    ) -> "TranscriptionLexicon":
        norm = lambda names: frozenset(" ".join(n.lower().split()) for n in names)
        return TranscriptionLexicon(norm(objects), norm(persons), norm(locations))

    def phrases(self) -> list[str]:
        return sorted(self.object_names | self.person_names | self.location_names)

    def tokens(self) -> list[str]:
        toks: set[str] = set()
        for phrase in self.phrases():
            toks.update(phrase.split())
        return sorted(toks)

    def is_empty(self) -> bool:
        return not (self.object_names or self.person_names or self.location_names)


@dataclass(frozen=True)
class ConfusionTable:
    """Token -> plausible mishearings, used by the corruption channel."""

    entries: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self):
        for token, heard in self.entries:
            if token in heard:
                raise SchemaError(f"confusion table: '{token}' maps to itself")

    @staticmethod
    def from_dict(mapping: dict[str, list[str]]) -> "ConfusionTable":
        return ConfusionTable(
            entries=tuple((k.lower(), tuple(v)) for k, v in sorted(mapping.items()))
        )

    def get(self, token: str) -> tuple[str, ...]:
        for key, heard in self.entries:
            if key == token:
                return heard
        return ()


def _split_token(raw: str) -> tuple[str, str, str]:
    """(leading punctuation, core, trailing punctuation)."""
    match = re.match(r"^(\W*)([\w'-]*)(\W*)$", raw, flags=re.UNICODE)
    if not match:
        return "", raw, ""
    return match.group(1), match.group(2), match.group(3)


def corrupt_utterance(true_text: str, table: ConfusionTable, seed: int, rate: float) -> str:
    """Replace confusable tokens with probability `rate`, deterministically."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be within [0, 1], got {rate}")
    rng = random.Random(seed)
    out: list[str] = []
    for raw in true_text.split():
        lead, core, trail = _split_token(raw)
        options = table.get(core.lower())
        if options and rng.random() < rate:
            out.append(lead + rng.choice(options) + trail)
        else:
            out.append(raw)
    return " ".join(out)


def consonant_skeleton(token: str) -> str:
    return "".join(ch for ch in token.lower() if ch.isalpha() and ch not in _VOWELS)


def _edit_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        current = [i]
        for j, cb in enumerate(b, 1):
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb))
            )
        previous = current
    return previous[-1]


def default_threshold(skeleton_length: int) -> int:
    return max(1, math.ceil(skeleton_length / 3))


@dataclass(frozen=True)
class TranscriberConfig:
    """Tunables for the correction pass; defaults reproduce the bundled fixtures."""

    common_words: frozenset[str] = COMMON_WORDS
    threshold: object = field(default=default_threshold)  # skeleton length -> max distance


def transcribe(
    heard_text: str,
    lexicon: TranscriptionLexicon,
    config: TranscriberConfig = TranscriberConfig(),
) -> tuple[str, set[str]]:
    """Correct a heard utterance against the lexicon.

    Returns the corrected transcript and the set of lexicon phrases present
    in it.  With an empty lexicon the input is returned byte-for-byte.
    """
    if lexicon.is_empty():
        return heard_text, set()

    lexicon_tokens = lexicon.tokens()
    out: list[str] = []
    for raw in heard_text.split():
        lead, core, trail = _split_token(raw)
        lowered = core.lower()
        if not core or lowered in config.common_words or lowered in lexicon_tokens:
            out.append(raw)
            continue
        skeleton = consonant_skeleton(lowered)
        if not skeleton:
            out.append(raw)
            continue
        best: list[str] = []
        best_distance = None
        for candidate in lexicon_tokens:
            cand_skeleton = consonant_skeleton(candidate)
            if not cand_skeleton or cand_skeleton[0] != skeleton[0]:
                continue
            distance = _edit_distance(skeleton, cand_skeleton)
            if distance > config.threshold(len(cand_skeleton)):
                continue
            if best_distance is None or distance < best_distance:
                best, best_distance = [candidate], distance
            elif distance == best_distance:
                best.append(candidate)
        if len(best) == 1:
            out.append(lead + best[0] + trail)
        else:
            out.append(raw)

    transcript = " ".join(out)
    normalized = " " + re.sub(r"[^\w'-]+", " ", transcript.lower()).strip() + " "
    recovered = {
        phrase for phrase in lexicon.phrases() if f" {phrase} " in normalized
    }
    return transcript, recovered
