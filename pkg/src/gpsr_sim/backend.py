"""Pluggable language-model backend.

Everything that would hit an LLM in a live robot goes through one
`respond(request)` call: command decomposition, step grounding, commonsense
location suggestion, slot extraction from operator answers, alternative-step
generation after a skill failure, and question answering.  The mock backend
is a deterministic grammar/rule engine so episodes replay byte-for-byte;
the remote backend speaks a chat-completion wire format and schema-validates
what comes back.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, replace as _dc_replace
from importlib import resources
from typing import Optional

import httpx
import yaml

from . import grammar
from .errors import (
    BackendMalformedError,
    BackendTimeoutError,
    BackendTransportError,
)
from .ledger import PromptLedger

KINDS = (
    "DECOMPOSE",
    "GROUND",
    "SUGGEST_LOCATIONS",
    "EXTRACT_SLOT",
    "RECOVERY_STEPS",
    "ANSWER_QUESTION",
)

CANNOT_PARSE = "CANNOT_PARSE"
NO_MATCH = "NO_MATCH"

SLOT_SIMILARITY_THRESHOLD = 0.6


@dataclass(frozen=True)
class BackendRequest:
    kind: str
    prompt: str
    payload: dict

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown request kind '{self.kind}'")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass(frozen=True)
class BackendResponse:
    kind: str
    result: dict
    raw: str
    confidence: Optional[float] = None

    @property
    def error(self) -> Optional[str]:
        return self.result.get("error")


def render_prompt(ledger: PromptLedger, kind: str, payload: dict) -> str:
    """Deterministic prompt assembly: preamble, environment facts, worked
    examples, feedback lines, then the kind-specific payload."""
    parts: list[str] = []
    if ledger.planner_preamble:
        parts.append(ledger.planner_preamble)
    for fact in ledger.environment_facts:
        parts.append(f"Environment: {fact}")
    for example in ledger.worked_examples:
        steps = "; ".join(example.steps)
        line = f"Example command: {example.command}\nExample steps: {steps}"
        if example.plan:
            line += f"\nExample plan: {example.plan}"
        parts.append(line)
    for line in ledger.feedback_lines:
        parts.append(f"Feedback: {line}")
    parts.append(f"[{kind}] " + json.dumps(payload, sort_keys=True))
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# Fuzzy slot similarity
# ---------------------------------------------------------------------------


def _lcs_length(a: str, b: str) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for ca in a:
        current = [0]
        for j, cb in enumerate(b, 1):
            if ca == cb:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def slot_similarity(answer: str, name: str) -> float:
    """Windowed normalized LCS: the best Dice-normalized character-LCS score
    between the candidate name and any word window of the answer of roughly
    the name's width.  Windowing keeps long chatty answers from matching
    short names by accident."""
    answer_tokens = [t for t in answer.lower().replace("-", " ").split() if t]
    name_norm = " ".join(name.lower().replace("-", " ").split())
    if not answer_tokens or not name_norm:
        return 0.0
    name_words = len(name_norm.split())
    best = 0.0
    for width in {max(1, name_words - 1), name_words, name_words + 1}:
        for start in range(0, max(1, len(answer_tokens) - width + 1)):
            window = " ".join(answer_tokens[start : start + width])
            if not window:
                continue
            lcs = _lcs_length(window, name_norm)
            score = 2.0 * lcs / (len(window) + len(name_norm))
            best = max(best, score)
    return best


def extract_slot_value(answer: str, known: list[str]) -> Optional[str]:
    best_name, best_score = None, 0.0
    for name in sorted(known):
        score = slot_similarity(answer, name)
        if score > best_score:
            best_name, best_score = name, score
    if best_name is not None and best_score > SLOT_SIMILARITY_THRESHOLD:
        return best_name
    return None


# ---------------------------------------------------------------------------
# Commonsense location table
# ---------------------------------------------------------------------------


def load_commonsense_table() -> tuple[tuple[str, tuple[str, ...]], ...]:
    text = resources.files("gpsr_sim").joinpath("data/commonsense.yaml").read_text()
    data = yaml.safe_load(text)
    return tuple((row["name"], tuple(row["places"])) for row in data["rows"])


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------


class MockBackend:
    """Deterministic stand-in for the planner/assistant model."""

    name = "mock"

    def __init__(self, commonsense: Optional[tuple[tuple[str, tuple[str, ...]], ...]] = None):
        self._commonsense = commonsense if commonsense is not None else load_commonsense_table()

    # -- dispatch ---------------------------------------------------------

    def respond(self, request: BackendRequest) -> BackendResponse:
        handler = {
            "DECOMPOSE": self._decompose,
            "GROUND": self._ground,
            "SUGGEST_LOCATIONS": self._suggest_locations,
            "EXTRACT_SLOT": self._extract_slot,
            "RECOVERY_STEPS": self._recovery_steps,
            "ANSWER_QUESTION": self._answer_question,
        }[request.kind]
        result = handler(request.payload)
        return BackendResponse(
            kind=request.kind, result=result, raw=json.dumps(result, sort_keys=True)
        )

    # -- DECOMPOSE ---------------------------------------------------------

    def _decompose(self, payload: dict) -> dict:
        command = payload["command"]
        assumptions = payload.get("assumptions") or {}
        frame = grammar.parse_command(command)
        if frame is None:
            return {"error": CANNOT_PARSE}
        # Learned placements supersede whatever the command text claimed: the
        # engine only records an assumption after the stated place failed.
        intents = []
        for intent in frame.intents:
            if intent.kind == "fetch" and intent.object in assumptions:
                intent = _dc_replace(intent, source=assumptions[intent.object])
            elif intent.kind == "prepare" and intent.category in assumptions:
                intent = _dc_replace(intent, source=assumptions[intent.category])
            intents.append(intent)
        frame = grammar.IntentFrame(intents=tuple(intents), person_hint=frame.person_hint)
        return {"steps": grammar.steps_for_intents(frame), "slots": frame.slots}

    # -- GROUND -------------------------------------------------------------

    def _ground(self, payload: dict) -> dict:
        steps = payload["steps"]
        known = payload["known"]
        position = payload.get("position_hint")
        calls: list[dict] = []
        locations = {n.lower(): n for n in known.get("locations", [])}
        rooms = {n.lower(): n for n in known.get("rooms", [])}
        persons = {n.lower(): n for n in known.get("persons", [])}
        categories = {n.lower(): n for n in known.get("categories", [])}

        def resolve_place(term: str) -> Optional[str]:
            key = term.lower().strip()
            if key == "operator":
                return "operator"
            return locations.get(key) or rooms.get(key)

        for index, step in enumerate(steps):
            text = " ".join(step.strip().split())
            lowered = text.lower().rstrip(".")

            m = re.match(r"^move to the (.+)$", lowered)
            if m:
                place = resolve_place(m.group(1))
                if place is None:
                    return {
                        "error": "UNKNOWN_LOCATION",
                        "step_index": index,
                        "term": m.group(1),
                    }
                position = place
                calls.append({"function": "go_to_location", "args": {"location": place}})
                continue

            m = re.match(r"^find (.+)$", lowered)
            if m:
                name = m.group(1)
                if name in persons:
                    calls.append({"function": "find_person", "args": {"person": persons[name]}})
                    continue
                if position is None:
                    return {
                        "error": "UNKNOWN_LOCATION",
                        "step_index": index,
                        "term": None,
                        "subject": name,
                    }
                if name == grammar.WILDCARD_CATEGORY or name in categories:
                    category = categories.get(name, grammar.WILDCARD_CATEGORY)
                    calls.append(
                        {"function": "find_category_name_objects", "args": {"category": category}}
                    )
                else:
                    calls.append(
                        {"function": "find_concrete_name_objects", "args": {"object": name}}
                    )
                continue

            m = re.match(r"^pick (.+)$", lowered)
            if m:
                if position is None:
                    return {"error": "AMBIGUOUS_STEP", "step_index": index, "term": text}
                calls.append(
                    {"function": "pick", "args": {"object": m.group(1), "location": position}}
                )
                continue

            m = re.match(r"^place (.+?) on the (.+)$", lowered)
            if m:
                place = resolve_place(m.group(2))
                if place is None:
                    return {"error": "UNKNOWN_LOCATION", "step_index": index, "term": m.group(2)}
                calls.append(
                    {"function": "place", "args": {"object": m.group(1), "location": place}}
                )
                continue

            m = re.match(r"^hand over (.+?) to the operator$", lowered)
            if m:
                calls.append(
                    {"function": "hand_over", "args": {"object": m.group(1), "person": "operator"}}
                )
                continue

            m = re.match(r'^ask (\w+) "(.+)"$', lowered)
            if m:
                person = persons.get(m.group(1))
                if person is None:
                    return {"error": "UNKNOWN_PERSON", "step_index": index, "term": m.group(1)}
                calls.append(
                    {"function": "ask_question", "args": {"person": person, "question": m.group(2)}}
                )
                continue

            m = re.match(r"^ask the location of (?:the )?(.+)$", lowered)
            if m:
                calls.append({"function": "ask_location", "args": {"object": m.group(1)}})
                continue

            m = re.match(r"^ask (\w+) to hand over (?:the )?(.+)$", lowered)
            if m:
                person = persons.get(m.group(1))
                if person is None:
                    return {"error": "UNKNOWN_PERSON", "step_index": index, "term": m.group(1)}
                calls.append(
                    {
                        "function": "ask_person_to_hand_over",
                        "args": {
                            "object": m.group(2),
                            "person": person,
                            "query": f"could you hand me the {m.group(2)}?",
                        },
                    }
                )
                continue

            if lowered == "tell the answer to the operator":
                calls.append(
                    {
                        "function": "tell_information",
                        "args": {"information": "the answer", "person": "operator"},
                    }
                )
                continue
            if lowered == "tell the operator what you found":
                calls.append(
                    {
                        "function": "tell_information",
                        "args": {"information": "the findings", "person": "operator"},
                    }
                )
                continue
            if lowered == "tell the operator the count":
                calls.append(
                    {
                        "function": "tell_information",
                        "args": {"information": "the count", "person": "operator"},
                    }
                )
                continue
            if lowered == "answer the operator's question":
                calls.append({"function": "answer_question", "args": {"person": "operator"}})
                continue

            m = re.match(r"^count the (.+?) objects$", lowered)
            if m:
                name = m.group(1)
                if name == grammar.WILDCARD_CATEGORY or name in categories:
                    calls.append(
                        {
                            "function": "count_category_name_objects",
                            "args": {"category": categories.get(name, grammar.WILDCARD_CATEGORY)},
                        }
                    )
                else:
                    calls.append(
                        {"function": "count_concrete_name_objects", "args": {"objects": name}}
                    )
                continue

            m = re.match(r"^(open|close) the door at the (.+)$", lowered)
            if m:
                place = resolve_place(m.group(2))
                if place is None:
                    return {"error": "UNKNOWN_LOCATION", "step_index": index, "term": m.group(2)}
                calls.append(
                    {
                        "function": "operate_door",
                        "args": {"location": place, "operation": m.group(1)},
                    }
                )
                continue

            m = re.match(r"^follow (\w+)(?: to the (.+))?$", lowered)
            if m:
                person = persons.get(m.group(1))
                if person is None:
                    return {"error": "UNKNOWN_PERSON", "step_index": index, "term": m.group(1)}
                args = {"person": person}
                if m.group(2):
                    place = resolve_place(m.group(2))
                    if place is None:
                        return {
                            "error": "UNKNOWN_LOCATION",
                            "step_index": index,
                            "term": m.group(2),
                        }
                    args["location"] = place
                    position = place
                calls.append({"function": "follow_person", "args": args})
                continue

            m = re.match(r"^guide (\w+) to the (.+)$", lowered)
            if m:
                person = persons.get(m.group(1))
                if person is None:
                    return {"error": "UNKNOWN_PERSON", "step_index": index, "term": m.group(1)}
                place = resolve_place(m.group(2))
                if place is None:
                    return {"error": "UNKNOWN_LOCATION", "step_index": index, "term": m.group(2)}
                position = place
                calls.append(
                    {"function": "guide", "args": {"person": person, "location": place}}
                )
                continue

            return {"error": "AMBIGUOUS_STEP", "step_index": index, "term": text}

        return {"calls": calls}

    # -- SUGGEST_LOCATIONS ----------------------------------------------------

    def _suggest_locations(self, payload: dict) -> dict:
        name = (payload.get("name") or "").lower()
        category = (payload.get("category") or "").lower()
        known = payload.get("known_places") or []
        exclude = {e.lower() for e in (payload.get("exclude") or [])}
        known_map = {k.lower(): k for k in known}
        suggestions: list[str] = []
        for row_name, places in self._commonsense:
            if row_name not in (name, category):
                continue
            for place in places:
                key = place.lower()
                if key in known_map and key not in exclude and known_map[key] not in suggestions:
                    suggestions.append(known_map[key])
        return {"locations": suggestions}

    # -- EXTRACT_SLOT -----------------------------------------------------------

    def _extract_slot(self, payload: dict) -> dict:
        answer = payload["answer"]
        known = payload.get("known") or []
        value = extract_slot_value(answer, list(known))
        if value is None:
            return {"error": NO_MATCH}
        return {"value": value}

    # -- RECOVERY_STEPS -----------------------------------------------------------

    def _recovery_steps(self, payload: dict) -> dict:
        failed = payload.get("failed") or {}
        function = failed.get("function", "")
        args = failed.get("args") or {}
        robot_room = payload.get("robot_room")
        adjacent = list(payload.get("adjacent_rooms") or [])
        persons_nearby = list(payload.get("persons_nearby") or [])
        steps: list[str] = []
        if function == "find_person" and adjacent and robot_room:
            steps = [
                f"Move to the {adjacent[0]}",
                f"Move to the {robot_room}",
                f"Find {args.get('person', '')}",
            ]
        elif function == "go_to_location" and adjacent:
            steps = [
                f"Move to the {adjacent[0]}",
                f"Move to the {args.get('location', '')}",
            ]
        elif function == "pick" and persons_nearby:
            steps = [f"Ask {persons_nearby[0]} to hand over the {args.get('object', '')}"]
        return {"steps": steps}

    # -- ANSWER_QUESTION ----------------------------------------------------------

    def _answer_question(self, payload: dict) -> dict:
        question = (payload.get("question") or "").lower()
        facts = payload.get("facts") or []
        words = {w.strip("?.,!") for w in question.split()}
        for fact in facts:
            fact_words = {w.strip("?.,!").lower() for w in fact.split()}
            overlap = words & fact_words - {"the", "a", "an", "is", "at", "on", "in", "where"}
            if overlap:
                return {"answer": fact}
        return {"answer": "I don't know."}


# ---------------------------------------------------------------------------
# Remote backend
# ---------------------------------------------------------------------------

_RESULT_SHAPES = {
    "DECOMPOSE": ("steps",),
    "GROUND": ("calls",),
    "SUGGEST_LOCATIONS": ("locations",),
    "EXTRACT_SLOT": ("value",),
    "RECOVERY_STEPS": ("steps",),
    "ANSWER_QUESTION": ("answer",),
}


def validate_result(kind: str, result: dict) -> None:
    """Reject responses outside the requested structured shape."""
    if not isinstance(result, dict):
        raise BackendMalformedError(f"{kind}: result is not an object")
    if "error" in result:
        if not isinstance(result["error"], str):
            raise BackendMalformedError(f"{kind}: error must be a string")
        return
    for key in _RESULT_SHAPES[kind]:
        if key not in result:
            raise BackendMalformedError(f"{kind}: missing '{key}' in result")
    if kind in ("DECOMPOSE", "RECOVERY_STEPS"):
        if not all(isinstance(s, str) for s in result["steps"]):
            raise BackendMalformedError(f"{kind}: steps must be strings")
    if kind == "GROUND":
        for call in result["calls"]:
            if not isinstance(call, dict) or "function" not in call or "args" not in call:
                raise BackendMalformedError("GROUND: calls must have function and args")
    if kind == "SUGGEST_LOCATIONS" and not all(
        isinstance(s, str) for s in result["locations"]
    ):
        raise BackendMalformedError("SUGGEST_LOCATIONS: locations must be strings")


@dataclass(frozen=True)
class RemoteBackendConfig:
    base_url: str
    model: str = "gpt-4"
    path: str = "/v1/chat/completions"
    timeout_s: float = 30.0
    max_retries: int = 1
    api_key_env: str = "GPSR_SIM_API_KEY"


class RemoteBackend:
    """Chat-completion client; requests structured output and validates it."""

    name = "remote"

    def __init__(self, config: RemoteBackendConfig):
        self.config = config

    def respond(self, request: BackendRequest) -> BackendResponse:
        api_key = os.environ.get(self.config.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.config.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": request.prompt},
                {
                    "role": "user",
                    "content": json.dumps(
                        {"kind": request.kind, "payload": request.payload}, sort_keys=True
                    ),
                },
            ],
        }
        url = self.config.base_url.rstrip("/") + self.config.path
        last_error: Exception | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                response = httpx.post(
                    url, json=body, headers=headers, timeout=self.config.timeout_s
                )
                response.raise_for_status()
                data = response.json()
                content = data["choices"][0]["message"]["content"]
                result = json.loads(content)
                validate_result(request.kind, result)
                return BackendResponse(kind=request.kind, result=result, raw=content)
            except httpx.TimeoutException as exc:
                last_error = BackendTimeoutError(str(exc))
            except httpx.HTTPError as exc:
                last_error = BackendTransportError(str(exc))
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                raise BackendMalformedError(f"bad completion payload: {exc}") from exc
        assert last_error is not None
        raise last_error
