"""Deterministic command grammar shared by the mock planner backend and the
command generator.

The grammar covers fetch/place/find/prepare/person-query/describe/count/
follow/guide/door commands in the style service-robot benchmarks generate.
The generator emits only surface forms this parser accepts, which is what
keeps the generator/parser closure property true by construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional

WILDCARD_CATEGORY = "objects"

_COURTESY_RE = re.compile(
    r"^(?:hi\b[^,]*,\s*|hello\b[^,]*,\s*|hey\b[^,]*,\s*|thank you\b[^,.]*[,.]?\s*|robot[,]?\s+|please\s+|ok[,]?\s+)",
    re.IGNORECASE,
)
_REQUEST_SPLIT_RE = re.compile(r"\b(?:could|can|would|will) you\s+", re.IGNORECASE)
_CONJ_SPLIT_RE = re.compile(
    r"\s*(?:,\s+and\s+|\s+and\s+|,\s+)"
    r"(?=(?:then\s+)?(?:put|place|bring|fetch|grab|grasp|take|retrieve|go|move|find"
    r"|guide|follow|open|close|count|describe|speak|get|prepare)\b)"
)
REQUEST_SPLIT_RE = _REQUEST_SPLIT_RE
_HINT_RE = re.compile(r"\b([A-Za-z]+) might know\b", re.IGNORECASE)
_DELIVER_RE = re.compile(r"\bbring (?:it|them|one) (?:back )?to me\b|\bfind it for me\b", re.IGNORECASE)
_PRONOUNS = frozenset({"it", "them", "me", "one", "her", "him", "this", "that"})


@dataclass(frozen=True)
class Intent:
    kind: str  # fetch | prepare | ask_person | describe | count | follow | guide | goto | door | speak
    object: Optional[str] = None
    category: Optional[str] = None
    source: Optional[str] = None
    target: Optional[str] = None
    person: Optional[str] = None
    room: Optional[str] = None
    question: Optional[str] = None
    operation: Optional[str] = None
    deliver: bool = False


@dataclass(frozen=True)
class IntentFrame:
    intents: tuple[Intent, ...]
    person_hint: Optional[str] = None

    @property
    def slots(self) -> dict:
        merged: dict = {}
        for intent in self.intents:
            for key in ("object", "category", "source", "target", "person", "question"):
                value = getattr(intent, key)
                if value is not None and key not in merged:
                    merged[key] = value
        if self.person_hint:
            merged.setdefault("person_hint", self.person_hint)
        return merged


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower()).strip()


def _strip_article(value: str) -> str:
    return re.sub(r"^(?:a|an|the|some|my) ", "", value).strip()


def _clean_slot(value: str) -> str:
    value = _normalize(value)
    value = re.sub(r"[.,!?]+$", "", value).strip()
    value = _strip_article(value)
    # drop trailing relative clauses: "apple that i bought the other day"
    value = re.sub(r" (?:that|which|who) .*$", "", value)
    value = re.sub(r" (?:for me|to me|please)$", "", value)
    return value


_CLAUSE_RULES: list[tuple[str, re.Pattern]] = [
    ("lost", re.compile(r"^i lost my ([\w' -]+?)(?: so\b.*| somewhere.*)?$")),
    ("ask_person", re.compile(r"^(?:look for|find) ([\w]+) in the ([\w ]+?) and ask (?:her|him|them) (.+)$")),
    ("fetch_from", re.compile(r"^(?:bring|fetch|get|grab|grasp|take|retrieve)(?: me)?(?: back)? ((?:a|an|the|some|my) )?([\w' -]+?) from (?:the |my )?([\w' -]+?)[.,!?]?$")),
    ("put_pending", re.compile(r"^(?:then )?put (?:it|them) on (?:the |my )?([\w' -]+?)[.,!?]?$")),
    ("place_new", re.compile(r"^(?:put|place) ((?:a|an|the|some|my) )?([\w' -]+?) on (?:the |my )?([\w' -]+?)[.,!?]?$")),
    ("prepare", re.compile(r"^prepare ((?:a|an|the|some) )?([\w' -]+?) (?:for me )?on the ([\w' -]+?)[.,!?]?$")),
    ("describe", re.compile(r"^describe the objects on the ([\w' -]+?)(?: to me)?(?: please)?[.,!?]?$")),
    ("count", re.compile(r"^(?:count|how many) (?:the )?([\w' -]+?) objects(?: are)?(?: there)? on the ([\w' -]+?)[.,!?]?$")),
    ("follow", re.compile(r"^(?:follow|go after) ([\w]+)(?: to the ([\w' -]+?))?[.,!?]?$")),
    ("guide", re.compile(r"^(?:guide|escort|lead) ([\w]+) to the ([\w' -]+?)[.,!?]?$")),
    ("door", re.compile(r"^(open|close) the door at the ([\w' -]+?)[.,!?]?$")),
    ("goto", re.compile(r"^(?:go|move) to the ([\w' -]+?)[.,!?]?$")),
    ("find", re.compile(r"^(?:help me )?find ((?:a|an|the|some|my) )?([\w' -]+?)[.,!?]?$")),
    ("bring_simple", re.compile(r"^(?:bring|fetch|get|grab) me ((?:a|an|the|some) )?([\w' -]+?)[.,!?]?$")),
    ("speak", re.compile(r"^speak(?: to me)?[.,!?]?$")),
]


def _parse_clause(clause: str) -> Optional[Intent]:
    clause = clause.strip()
    while True:
        stripped = _COURTESY_RE.sub("", clause)
        if stripped == clause:
            break
        clause = stripped
    for kind, pattern in _CLAUSE_RULES:
        match = pattern.match(clause)
        if not match:
            continue
        if kind == "lost":
            obj = _clean_slot(match.group(1))
            if obj in _PRONOUNS:
                return None
            return Intent(kind="fetch", object=obj, deliver=True)
        if kind == "ask_person":
            return Intent(
                kind="ask_person",
                person=_clean_slot(match.group(1)),
                room=_clean_slot(match.group(2)),
                question=_clean_slot(match.group(3)),
            )
        if kind == "fetch_from":
            obj = _clean_slot(match.group(2))
            if obj in _PRONOUNS:
                return None
            return Intent(
                kind="fetch",
                object=obj,
                source=_clean_slot(match.group(3)),
                deliver=True,
            )
        if kind == "put_pending":
            return Intent(kind="put_pending", target=_clean_slot(match.group(1)))
        if kind == "place_new":
            obj = _clean_slot(match.group(2))
            if obj in _PRONOUNS:
                return None
            return Intent(
                kind="fetch",
                object=obj,
                target=_clean_slot(match.group(3)),
            )
        if kind == "prepare":
            return Intent(
                kind="prepare",
                category=_clean_slot(match.group(2)),
                target=_clean_slot(match.group(3)),
            )
        if kind == "describe":
            return Intent(kind="describe", source=_clean_slot(match.group(1)))
        if kind == "count":
            return Intent(
                kind="count",
                category=_clean_slot(match.group(1)),
                source=_clean_slot(match.group(2)),
            )
        if kind == "follow":
            return Intent(
                kind="follow",
                person=_clean_slot(match.group(1)),
                target=_clean_slot(match.group(2)) if match.group(2) else None,
            )
        if kind == "guide":
            return Intent(
                kind="guide",
                person=_clean_slot(match.group(1)),
                target=_clean_slot(match.group(2)),
            )
        if kind == "door":
            return Intent(
                kind="door",
                operation=match.group(1),
                source=_clean_slot(match.group(2)),
            )
        if kind == "goto":
            return Intent(kind="goto", target=_clean_slot(match.group(1)))
        if kind == "find":
            obj = _clean_slot(match.group(2))
            if obj in _PRONOUNS:
                return None
            return Intent(kind="fetch", object=obj, deliver=False)
        if kind == "bring_simple":
            obj = _clean_slot(match.group(2))
            if obj in _PRONOUNS:
                return None
            return Intent(kind="fetch", object=obj, deliver=True)
        if kind == "speak":
            return Intent(kind="speak")
    return None


def parse_command(text: str) -> Optional[IntentFrame]:
    """Parse a command into an intent frame, or None when unsupported."""
    normalized = _normalize(text)
    if not normalized:
        return None
    sentences = [s.strip() for s in re.split(r"[.?!]+", normalized) if s.strip()]

    intents: list[Intent] = []
    person_hint: Optional[str] = None
    deliver_marker = False

    for sentence in sentences:
        hint = _HINT_RE.search(sentence)
        if hint:
            person_hint = hint.group(1)
        if _DELIVER_RE.search(sentence):
            deliver_marker = True
        # Try the sentence as-is first (handles "I lost my X so could you ..."),
        # then the clause after a "could you"-style request marker.
        candidates = [sentence]
        request = _REQUEST_SPLIT_RE.split(sentence, maxsplit=1)
        if len(request) == 2:
            candidates.append(request[1])
        parsed_per_candidate: list[list[Intent]] = []
        for body in candidates:
            found: list[Intent] = []
            for part in _CONJ_SPLIT_RE.split(body):
                intent = _parse_clause(part)
                if intent is not None:
                    found.append(intent)
            parsed_per_candidate.append(found)
        # Prefer the first candidate that parses to a standalone intent; a
        # bare "put it on X" fragment only counts if it can merge.
        chosen: list[Intent] = []
        for found in parsed_per_candidate:
            if any(i.kind != "put_pending" for i in found):
                chosen = found
                break
        if not chosen:
            for found in parsed_per_candidate:
                if found and intents:
                    chosen = found
                    break
        for intent in chosen:
            if intent.kind == "put_pending":
                for i in range(len(intents) - 1, -1, -1):
                    if intents[i].kind == "fetch" and intents[i].target is None:
                        intents[i] = replace(intents[i], target=intent.target, deliver=False)
                        break
            else:
                intents.append(intent)

    if deliver_marker:
        for i in range(len(intents) - 1, -1, -1):
            if intents[i].kind == "fetch" and intents[i].target is None:
                intents[i] = replace(intents[i], deliver=True)
                break

    if not intents:
        return None
    return IntentFrame(intents=tuple(intents), person_hint=person_hint)


# ---------------------------------------------------------------------------
# Step generation (the first planning stage of the mock backend)
# ---------------------------------------------------------------------------


def render_question(raw: str) -> str:
    """Turn reported speech into a direct question ("if she wants X" -> "do you want X?")."""
    raw = raw.strip().rstrip("?")
    irregular = {"wants": "want", "needs": "need", "likes": "like", "has": "have", "is": "are"}
    match = re.match(r"^(?:if|whether) (?:she|he|they) (\w+)(.*)$", raw)
    if match:
        verb, rest = match.group(1), match.group(2)
        verb = irregular.get(verb, verb[:-1] if verb.endswith("s") else verb)
        return f"do you {verb}{rest}?"
    if raw.startswith(("what", "where", "when", "who", "how", "do ", "does ")):
        return raw + "?"
    return raw + "?"


def steps_for_intents(frame: IntentFrame) -> list[str]:
    """Minimal imperative step sentences, in execution order."""
    steps: list[str] = []
    for intent in frame.intents:
        if intent.kind == "fetch":
            obj = intent.object or ""
            if intent.source:
                steps.append(f"Move to the {intent.source}")
            steps.append(f"Find {obj}")
            steps.append(f"Pick {obj}")
            if intent.target:
                steps.append(f"Move to the {intent.target}")
                steps.append(f"Place {obj} on the {intent.target}")
            elif intent.deliver:
                steps.append("Move to the operator")
                steps.append(f"Hand over {obj} to the operator")
        elif intent.kind == "prepare":
            cat = intent.category or ""
            if intent.source:
                steps.append(f"Move to the {intent.source}")
            steps.append(f"Find {cat}")
            steps.append(f"Pick {cat}")
            steps.append(f"Move to the {intent.target}")
            steps.append(f"Place {cat} on the {intent.target}")
        elif intent.kind == "ask_person":
            question = render_question(intent.question or "")
            steps.append(f"Move to the {intent.room}")
            steps.append(f"Find {intent.person}")
            steps.append(f'Ask {intent.person} "{question}"')
            steps.append("Move to the operator")
            steps.append("Tell the answer to the operator")
        elif intent.kind == "describe":
            steps.append(f"Move to the {intent.source}")
            steps.append(f"Find {WILDCARD_CATEGORY}")
            steps.append("Move to the operator")
            steps.append("Tell the operator what you found")
        elif intent.kind == "count":
            steps.append(f"Move to the {intent.source}")
            steps.append(f"Count the {intent.category} objects")
            steps.append("Move to the operator")
            steps.append("Tell the operator the count")
        elif intent.kind == "follow":
            if intent.target:
                steps.append(f"Follow {intent.person} to the {intent.target}")
            else:
                steps.append(f"Follow {intent.person}")
        elif intent.kind == "guide":
            steps.append(f"Guide {intent.person} to the {intent.target}")
        elif intent.kind == "goto":
            steps.append(f"Move to the {intent.target}")
        elif intent.kind == "door":
            op = (intent.operation or "open").capitalize()
            steps.append(f"{op} the door at the {intent.source}")
        elif intent.kind == "speak":
            steps.append("Move to the operator")
            steps.append("Answer the operator's question")
    return steps


# ---------------------------------------------------------------------------
# Generator templates (surface forms the parser accepts by construction)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CommandTemplate:
    name: str
    surface: str
    placeholders: tuple[str, ...]


TEMPLATES: tuple[CommandTemplate, ...] = (
    CommandTemplate("fetch_from", "Could you bring me the {object} from the {placement}?", ("object", "placement")),
    CommandTemplate("fetch_place", "Could you grab the {object} from the {placement} and put it on the {placement2}?", ("object", "placement", "placement2")),
    CommandTemplate("lost_find", "I lost my {object} so could you find it for me?", ("object",)),
    CommandTemplate("prepare", "Could you prepare a {category} for me on the {placement}?", ("category", "placement")),
    CommandTemplate("ask_person", "Could you look for {person} in the {room} and ask her if she wants dinner at home tonight?", ("person", "room")),
    CommandTemplate("describe", "Describe the objects on the {placement} to me please.", ("placement",)),
    CommandTemplate("count", "Count the {category} objects on the {placement}.", ("category", "placement")),
    CommandTemplate("follow", "Follow {person} to the {placement}.", ("person", "placement")),
    CommandTemplate("guide", "Guide {person} to the {placement}.", ("person", "placement")),
    CommandTemplate("goto", "Go to the {placement}.", ("placement",)),
    CommandTemplate("put_on", "Could you put the {object} on the {placement}?", ("object", "placement")),
    CommandTemplate("door", "Open the door at the {door}.", ("door",)),
)
