"""Two-step planning: decompose a command into minimal step sentences, then
ground the sentences into a validated skill plan.

Grounding failure (cannot build a plan at all) and validation failure
(built a plan that breaks an abstract-state rule) are distinct outcomes:
the first feeds information-gathering recovery, the second replanning.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

from . import ledger as ledger_mod
from .backend import CANNOT_PARSE, BackendRequest, render_prompt
from .errors import SchemaError
from .ledger import PromptLedger
from .perception import PromptEntry
from .registry import SKILL_SIGNATURES, check_signature, ordered_args
from .world import WorldState

PLAN_SCHEMA_VERSION = 1

# Defect and grounding-failure codes share one namespace.
FIND_BEFORE_NAV = "FIND_BEFORE_NAV"
GRASP_BEFORE_FIND = "GRASP_BEFORE_FIND"
GRASP_WHILE_HOLDING = "GRASP_WHILE_HOLDING"
PLACE_WITHOUT_HOLDING = "PLACE_WITHOUT_HOLDING"
UNKNOWN_LOCATION = "UNKNOWN_LOCATION"
UNKNOWN_SKILL = "UNKNOWN_SKILL"
AMBIGUOUS_STEP = "AMBIGUOUS_STEP"
UNKNOWN_PERSON = "UNKNOWN_PERSON"

VALIDATION_CODES = (
    FIND_BEFORE_NAV,
    GRASP_BEFORE_FIND,
    GRASP_WHILE_HOLDING,
    PLACE_WITHOUT_HOLDING,
    UNKNOWN_LOCATION,
    UNKNOWN_SKILL,
    AMBIGUOUS_STEP,
)


@dataclass(frozen=True)
class PlanStep:
    text: str
    index: int

    def __post_init__(self):
        if not self.text:
            raise ValueError("plan step text must be non-empty")


@dataclass(frozen=True)
class SkillCall:
    function: str
    args: dict
    origin: int = -1  # producing step index; -1 for recovery-issued calls


@dataclass(frozen=True)
class Plan:
    calls: tuple[SkillCall, ...]
    source_command: str
    ledger_version: int


@dataclass(frozen=True)
class Defect:
    code: str
    call_index: int
    message: str


@dataclass(frozen=True)
class ValidationReport:
    verdict: str  # "pass" | "fail"
    defects: tuple[Defect, ...]

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def codes(self) -> set[str]:
        return {d.code for d in self.defects}


@dataclass(frozen=True)
class ParseFailure:
    command: str
    code: str = CANNOT_PARSE


@dataclass(frozen=True)
class GroundingFailure:
    step_index: int
    reason: str  # AMBIGUOUS_STEP | UNKNOWN_LOCATION | UNKNOWN_PERSON
    term: Optional[str] = None  # offending name, None when simply absent
    subject: Optional[str] = None  # the object/category whose place is unknown


@dataclass(frozen=True)
class Decomposition:
    steps: tuple[PlanStep, ...]
    slots: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Knowledge:
    """Name sets the planner may ground against."""

    locations: frozenset[str] = frozenset()
    rooms: frozenset[str] = frozenset()
    persons: frozenset[str] = frozenset()
    objects: frozenset[str] = frozenset()
    categories: frozenset[str] = frozenset()
    location_rooms: tuple[tuple[str, str], ...] = ()

    @staticmethod
    def from_world(world: WorldState) -> "Knowledge":
        names = world.known_names()
        return Knowledge(
            locations=frozenset(names["locations"]),
            rooms=frozenset(names["rooms"]),
            persons=frozenset(names["persons"]),
            objects=frozenset(names["objects"]),
            categories=frozenset(names["categories"]),
            location_rooms=tuple(sorted((l.name, l.room) for l in world.locations)),
        )

    def room_of(self, place: str) -> Optional[str]:
        if place in self.rooms:
            return place
        for name, room in self.location_rooms:
            if name == place:
                return room
        return None

    def payload(self) -> dict:
        return {
            "locations": sorted(self.locations),
            "rooms": sorted(self.rooms),
            "persons": sorted(self.persons),
            "objects": sorted(self.objects),
            "categories": sorted(self.categories),
        }


# ---------------------------------------------------------------------------
# Decompose and ground
# ---------------------------------------------------------------------------


def decompose(
    command: str,
    ledger: PromptLedger,
    backend,
    assumptions: Optional[dict[str, str]] = None,
) -> Union[Decomposition, ParseFailure]:
    if not command:
        raise ValueError("command must be non-empty")
    payload = {"command": command, "assumptions": dict(sorted((assumptions or {}).items()))}
    request = BackendRequest(
        kind="DECOMPOSE", prompt=render_prompt(ledger, "DECOMPOSE", payload), payload=payload
    )
    response = backend.respond(request)
    if response.error == CANNOT_PARSE:
        return ParseFailure(command=command)
    steps = tuple(
        PlanStep(text=text, index=i) for i, text in enumerate(response.result["steps"])
    )
    return Decomposition(steps=steps, slots=response.result.get("slots", {}))


def ground(
    steps: list[PlanStep] | tuple[PlanStep, ...],
    ledger: PromptLedger,
    backend,
    known: Knowledge,
    *,
    source_command: str = "",
    position_hint: Optional[str] = None,
) -> Union[Plan, GroundingFailure]:
    if not steps:
        raise ValueError("steps must be non-empty")
    payload = {
        "steps": [s.text for s in steps],
        "known": known.payload(),
        "position_hint": position_hint,
    }
    request = BackendRequest(
        kind="GROUND", prompt=render_prompt(ledger, "GROUND", payload), payload=payload
    )
    response = backend.respond(request)
    if response.error is not None:
        return GroundingFailure(
            step_index=int(response.result.get("step_index", 0)),
            reason=response.error,
            term=response.result.get("term"),
            subject=response.result.get("subject"),
        )
    calls = tuple(
        SkillCall(
            function=c["function"],
            args=ordered_args(c["function"], c["args"]) if c["function"] in SKILL_SIGNATURES else dict(c["args"]),
            origin=i,
        )
        for i, c in enumerate(response.result["calls"])
    )
    return Plan(calls=calls, source_command=source_command, ledger_version=ledger.version)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_plan(plan: Plan, known: Knowledge) -> ValidationReport:
    """Simulate abstract robot state over the calls and collect rule defects."""
    defects: list[Defect] = []
    position: Optional[str] = None
    visited: set[str] = set()
    holding: Optional[str] = None
    found: set[str] = set()

    def known_place(name: str) -> bool:
        return name == "operator" or name in known.locations or name in known.rooms

    def place_reached(target: str) -> bool:
        if target == position or target in visited:
            return True
        if position is not None and known.room_of(position) == target:
            return True
        room = known.room_of(target)
        if room is not None and (room in visited or room == position):
            return True
        return False

    for i, call in enumerate(plan.calls):
        fn, args = call.function, call.args
        if fn not in SKILL_SIGNATURES:
            defects.append(Defect(UNKNOWN_SKILL, i, f"unknown skill '{fn}'"))
            continue
        problems = check_signature(fn, args)
        if problems:
            defects.append(Defect(UNKNOWN_SKILL, i, "; ".join(problems)))
            continue

        for arg_name in ("location", "room"):
            value = args.get(arg_name)
            if value is not None and not known_place(value):
                defects.append(Defect(UNKNOWN_LOCATION, i, f"unknown place '{value}'"))

        if fn == "go_to_location":
            target = args["location"]
            if known_place(target):
                position = target
                visited.add(target)
        elif fn in ("find_concrete_name_objects", "find_category_name_objects"):
            room = args.get("room")
            if room is not None:
                if not place_reached(room):
                    defects.append(
                        Defect(FIND_BEFORE_NAV, i, f"find in '{room}' before going there")
                    )
            elif not visited:
                defects.append(Defect(FIND_BEFORE_NAV, i, "find before navigating anywhere"))
            found.add(args.get("object") or args.get("category"))
        elif fn == "find_person":
            if not visited:
                defects.append(Defect(FIND_BEFORE_NAV, i, "find person before navigating"))
            found.add(args["person"])
        elif fn == "find_specific_pose_person":
            found.add(args["person"])
        elif fn == "pick":
            obj, loc = args["object"], args["location"]
            if holding is not None:
                defects.append(
                    Defect(GRASP_WHILE_HOLDING, i, f"pick '{obj}' while holding '{holding}'")
                )
            elif obj not in found:
                defects.append(Defect(GRASP_BEFORE_FIND, i, f"pick '{obj}' before finding it"))
            elif not place_reached(loc):
                defects.append(
                    Defect(GRASP_BEFORE_FIND, i, f"pick at '{loc}' before going there")
                )
            else:
                holding = obj
        elif fn in ("place", "hand_over"):
            obj = args["object"]
            if holding is None or holding != obj:
                defects.append(
                    Defect(PLACE_WITHOUT_HOLDING, i, f"release '{obj}' while holding {holding!r}")
                )
            else:
                holding = None
        elif fn == "ask_person_to_hand_over":
            if holding is None:
                holding = args["object"]
                found.add(args["object"])
        elif fn == "follow_person":
            target = args.get("location")
            if target is not None and known_place(target):
                position = target
                visited.add(target)
            else:
                position = None
        elif fn == "guide":
            target = args["location"]
            if known_place(target):
                position = target
                visited.add(target)

    verdict = "pass" if not defects else "fail"
    return ValidationReport(verdict=verdict, defects=tuple(defects))


# ---------------------------------------------------------------------------
# Ledger updates (spec surface; the ledger module holds the implementations)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LedgerUpdate:
    kind: str  # add_lexicon | add_feedback | add_perception_entry | add_environment_fact
    phrases: tuple[str, ...] = ()
    phrase_kind: str = "locations"  # for add_lexicon: objects | persons | locations
    line: str = ""
    entry: Optional[PromptEntry] = None


def update_ledger(ledger: PromptLedger, update: LedgerUpdate) -> PromptLedger:
    if update.kind == "add_lexicon":
        if not update.phrases:
            raise ValueError("add_lexicon requires phrases")
        return ledger_mod.add_lexicon(ledger, **{update.phrase_kind: update.phrases})
    if update.kind == "add_feedback":
        return ledger_mod.add_feedback(ledger, update.line)
    if update.kind == "add_environment_fact":
        return ledger_mod.add_environment_fact(ledger, update.line)
    if update.kind == "add_perception_entry":
        if update.entry is None:
            raise ValueError("add_perception_entry requires an entry")
        return ledger_mod.add_perception_entry(ledger, update.entry)
    raise ValueError(f"unknown ledger update kind '{update.kind}'")


# ---------------------------------------------------------------------------
# Plan document io (byte-stable field order)
# ---------------------------------------------------------------------------


def plan_to_document(plan: Plan) -> str:
    data = {
        "schema_version": PLAN_SCHEMA_VERSION,
        "source_command": plan.source_command,
        "ledger_version": plan.ledger_version,
        "calls": [{"function": c.function, "args": c.args} for c in plan.calls],
    }
    return json.dumps(data, indent=2) + "\n"


def plan_from_document(text: str) -> Plan:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"plan document: invalid JSON ({exc})") from exc
    if data.get("schema_version") != PLAN_SCHEMA_VERSION:
        raise SchemaError("plan document: bad or missing schema_version")
    for key in ("source_command", "ledger_version", "calls"):
        if key not in data:
            raise SchemaError(f"plan document: missing field '{key}'")
    calls = tuple(
        SkillCall(function=c["function"], args=dict(c["args"]), origin=i)
        for i, c in enumerate(data["calls"])
    )
    return Plan(
        calls=calls,
        source_command=data["source_command"],
        ledger_version=int(data["ledger_version"]),
    )
