"""The 21-skill executor.

Each skill validates its preconditions against the current world snapshot,
consults the episode's failure-injection rules, and applies its documented
effects all-or-nothing: a failed skill leaves the serialized world
byte-identical.  Perception-backed skills go through the perception
simulator so prompt-entry quality actually changes what gets found.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from . import dialogue
from .backend import BackendRequest, render_prompt
from .errors import PreconditionError, IllegalEffect
from .perception import (
    VocabularyMode,
    classify_detection,
    detect_objects,
    perceive_persons,
    pose_filter,
)
from .planner import SkillCall
from .registry import SKILL_SIGNATURES, check_signature
from .session import EpisodeSession
from .world import Effect, apply_effect
from .grammar import WILDCARD_CATEGORY

FAILURE_REASONS = (
    "NOT_FOUND",
    "NO_RESPONSE",
    "GRASP_FAILED",
    "NAV_FAILED",
    "DOOR_STUCK",
    "PRECONDITION",
    "INJECTED",
)

NO_RESPONSE_AND_NO_SUGGESTION = "NO_RESPONSE_AND_NO_SUGGESTION"


@dataclass(frozen=True)
class SkillResult:
    status: str  # "success" | "failure"
    failure_reason: Optional[str] = None
    observations: dict = field(default_factory=dict)
    effects_applied: tuple[str, ...] = ()

    @property
    def success(self) -> bool:
        return self.status == "success"

    @staticmethod
    def ok(observations: Optional[dict] = None, effects: tuple[str, ...] = ()) -> "SkillResult":
        return SkillResult(status="success", observations=observations or {}, effects_applied=effects)

    @staticmethod
    def fail(reason: str, observations: Optional[dict] = None) -> "SkillResult":
        return SkillResult(status="failure", failure_reason=reason, observations=observations or {})


@dataclass
class InjectionRule:
    skill: str
    args_match: dict = field(default_factory=dict)  # value "*" matches anything
    behavior: str = "fail_once"  # fail_once | fail_n | fail_always
    n: int = 1
    reason: str = "INJECTED"
    fired: int = 0

    def matches(self, call: SkillCall) -> bool:
        if call.function != self.skill:
            return False
        for key, expected in self.args_match.items():
            if expected == "*":
                continue
            if call.args.get(key) != expected:
                return False
        return True

    def should_fail(self) -> bool:
        if self.behavior == "fail_always":
            return True
        limit = 1 if self.behavior == "fail_once" else self.n
        return self.fired < limit


@dataclass
class FailureInjection:
    rules: list[InjectionRule] = field(default_factory=list)

    def consult(self, call: SkillCall) -> Optional[str]:
        for rule in self.rules:
            if rule.matches(call) and rule.should_fail():
                rule.fired += 1
                return rule.reason
        return None

    @staticmethod
    def from_config(raw: Optional[list]) -> "FailureInjection":
        rules = []
        for entry in raw or ():
            skill = entry["skill"]
            if skill not in SKILL_SIGNATURES:
                raise ValueError(f"injection rule names unknown skill '{skill}'")
            behavior = entry.get("behavior", "fail_once")
            if behavior not in ("fail_once", "fail_n", "fail_always"):
                raise ValueError(f"injection rule: unknown behavior '{behavior}'")
            rules.append(
                InjectionRule(
                    skill=skill,
                    args_match=dict(entry.get("args") or {}),
                    behavior=behavior,
                    n=int(entry.get("n", 1)),
                    reason=entry.get("reason", "INJECTED"),
                )
            )
        return FailureInjection(rules=rules)


def inject(session: EpisodeSession, injection: FailureInjection) -> None:
    """Install (replace) the session's failure-injection rules."""
    session.injection = injection


# ---------------------------------------------------------------------------
# Execution entry point
# ---------------------------------------------------------------------------


def execute_skill(session: EpisodeSession, call: SkillCall) -> SkillResult:
    problems = check_signature(call.function, call.args)
    if problems:
        raise PreconditionError("; ".join(problems))

    session.tick += 1
    injected = session.injection.consult(call) if session.injection else None
    if injected is not None:
        result = SkillResult.fail(injected if injected in FAILURE_REASONS else "INJECTED")
    else:
        handler = _HANDLERS[call.function]
        before = session.world
        try:
            result = handler(session, call.args)
        except PreconditionError as exc:
            session.world = before
            result = SkillResult.fail("PRECONDITION", {"message": str(exc)})
        except IllegalEffect as exc:
            session.world = before
            result = SkillResult.fail("PRECONDITION", {"message": str(exc)})
        if not result.success:
            session.world = before

    session.emit(
        "skill_result",
        function=call.function,
        args=call.args,
        origin=call.origin,
        status=result.status,
        **({"reason": result.failure_reason} if result.failure_reason else {}),
        observations=result.observations,
        effects=list(result.effects_applied),
    )
    return result


def _commit(session: EpisodeSession, effects: list[Effect]) -> tuple[str, ...]:
    """Apply effects atomically; any rejection aborts with no world change."""
    world = session.world
    for effect in effects:
        world = apply_effect(world, effect)
    session.world = world
    return tuple(f"{e.kind}({', '.join(e.args)})" for e in effects)


# ---------------------------------------------------------------------------
# Perception-backed search helpers
# ---------------------------------------------------------------------------


def _require_room(session: EpisodeSession, room: Optional[str]) -> str:
    current = session.world.robot_room()
    if room is None:
        return current
    if session.world.room(room) is None:
        raise PreconditionError(f"unknown room '{room}'")
    if room != current:
        raise PreconditionError(f"robot is in '{current}', not '{room}'")
    return room


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------


def _go_to_location(session: EpisodeSession, args: dict) -> SkillResult:
    target = args["location"]
    if session.world.room_of(target) is None:
        raise PreconditionError(f"unknown place '{target}'")
    effects = _commit(session, [Effect.move_robot(target)])
    return SkillResult.ok({"at": target}, effects)


def _find_concrete(session: EpisodeSession, args: dict) -> SkillResult:
    requested = args["object"]
    actual = session.resolve_entity(requested)
    room = _require_room(session, args.get("room"))
    entries = session.ledger.effective_perception_entries()
    prompted_labels = {e.label for e in entries}

    candidates: list[tuple[float, str, str]] = []  # (-score, entity, location)
    if requested in prompted_labels:
        # open-vocabulary path: trust the prompt-driven classification
        for location in session.world.locations_in(room):
            for det in detect_objects(
                session.world, location.name, VocabularyMode.open(tuple(entries)), session.noise
            ):
                label, score = classify_detection(det, entries)
                if label == requested:
                    candidates.append((-score, det.entity_ref, location.name))
    else:
        categories = {o.category for o in session.world.objects} or {"household"}
        for location in session.world.locations_in(room):
            for det in detect_objects(
                session.world, location.name, VocabularyMode.closed(categories), session.noise
            ):
                if det.entity_ref == actual:
                    candidates.append((-1.0, det.entity_ref, location.name))

    if not candidates:
        return SkillResult.fail("NOT_FOUND", {"object": requested, "room": room})
    candidates.sort()
    _, entity, location = candidates[0]
    session.bindings[requested] = entity
    session.last_found = [entity]
    return SkillResult.ok({"object": requested, "entity": entity, "location": location})


def _find_category(session: EpisodeSession, args: dict) -> SkillResult:
    category = args["category"]
    room = _require_room(session, args.get("room"))
    wildcard = category in (WILDCARD_CATEGORY, "object")
    found: list[tuple[str, str]] = []
    categories = {o.category for o in session.world.objects} or {"household"}
    class_list = categories if wildcard else {category}
    for location in session.world.locations_in(room):
        for det in detect_objects(
            session.world, location.name, VocabularyMode.closed(class_list), session.noise
        ):
            found.append((det.entity_ref, location.name))
    if not found:
        return SkillResult.fail("NOT_FOUND", {"category": category, "room": room})
    found.sort()
    session.bindings[category] = found[0][0]
    session.last_found = [name for name, _ in found]
    return SkillResult.ok(
        {"category": category, "found": [{"entity": n, "location": l} for n, l in found]}
    )


def _count_concrete(session: EpisodeSession, args: dict) -> SkillResult:
    name = session.resolve_entity(args["objects"])
    room = session.world.robot_room()
    count = 0
    categories = {o.category for o in session.world.objects} or {"household"}
    for location in session.world.locations_in(room):
        for det in detect_objects(
            session.world, location.name, VocabularyMode.closed(categories), session.noise
        ):
            if det.entity_ref == name:
                count += 1
    session.last_count = str(count)
    return SkillResult.ok({"objects": args["objects"], "count": count})


def _count_category(session: EpisodeSession, args: dict) -> SkillResult:
    category = args["category"]
    room = session.world.robot_room()
    wildcard = category in (WILDCARD_CATEGORY, "object")
    categories = {o.category for o in session.world.objects} or {"household"}
    class_list = categories if wildcard else {category}
    count = 0
    for location in session.world.locations_in(room):
        count += len(
            detect_objects(
                session.world, location.name, VocabularyMode.closed(class_list), session.noise
            )
        )
    session.last_count = str(count)
    return SkillResult.ok({"category": category, "count": count})


def _find_person(session: EpisodeSession, args: dict) -> SkillResult:
    person = args["person"]
    room = session.world.robot_room()
    seen = perceive_persons(session.world, room, noise=session.noise)
    for name, pose in seen:
        if name == person:
            return SkillResult.ok({"person": name, "pose": pose})
    return SkillResult.fail("NOT_FOUND", {"person": person, "room": room})


def _detect_person_pose(session: EpisodeSession, args: dict) -> SkillResult:
    person = args["person"]
    room = session.world.robot_room()
    for name, pose in perceive_persons(session.world, room, noise=session.noise):
        if name == person:
            return SkillResult.ok({"person": name, "pose": pose})
    return SkillResult.fail("NOT_FOUND", {"person": person, "room": room})


def _find_specific_pose_person(session: EpisodeSession, args: dict) -> SkillResult:
    person, pose = args["person"], args["pose"]
    room = session.world.robot_room()
    matches = perceive_persons(session.world, room, pose_filter(pose), session.noise)
    if person not in ("person", "anyone"):
        matches = [(n, p) for n, p in matches if n == person]
    if not matches:
        return SkillResult.fail("NOT_FOUND", {"person": person, "pose": pose})
    return SkillResult.ok({"person": matches[0][0], "pose": pose})


def _count_specific_pose_person(session: EpisodeSession, args: dict) -> SkillResult:
    pose = args["pose"]
    room = session.world.robot_room()
    matches = perceive_persons(session.world, room, pose_filter(pose), session.noise)
    session.last_count = str(len(matches))
    return SkillResult.ok({"pose": pose, "count": len(matches)})


def _count_person(session: EpisodeSession, args: dict) -> SkillResult:
    room = session.world.robot_room()
    matches = perceive_persons(session.world, room, noise=session.noise)
    session.last_count = str(len(matches))
    return SkillResult.ok({"count": len(matches)})


def _follow_person(session: EpisodeSession, args: dict) -> SkillResult:
    person = session.world.person(args["person"])
    if person is None:
        raise PreconditionError(f"unknown person '{args['person']}'")
    target = args.get("location")
    effects: list[Effect] = []
    if target is not None:
        room = session.world.room_of(target)
        if room is None:
            raise PreconditionError(f"unknown place '{target}'")
        effects.append(Effect.move_person(person.name, room))
        effects.append(Effect.move_robot(target))
        destination = target
    else:
        effects.append(Effect.move_robot(person.room))
        destination = person.room
    applied = _commit(session, effects)
    return SkillResult.ok({"person": person.name, "at": destination}, applied)


def _guide(session: EpisodeSession, args: dict) -> SkillResult:
    person = session.world.person(args["person"])
    if person is None:
        raise PreconditionError(f"unknown person '{args['person']}'")
    target = args["location"]
    room = session.world.room_of(target)
    if room is None:
        raise PreconditionError(f"unknown place '{target}'")
    applied = _commit(
        session, [Effect.move_person(person.name, room), Effect.move_robot(target)]
    )
    return SkillResult.ok({"person": person.name, "at": target}, applied)


def _pick(session: EpisodeSession, args: dict) -> SkillResult:
    requested, place = args["object"], args["location"]
    entity_name = session.resolve_entity(requested)
    if session.world.robot.holding is not None:
        raise PreconditionError(f"gripper already holding '{session.world.robot.holding}'")
    obj = session.world.object(entity_name)
    if obj is None:
        raise PreconditionError(f"unknown object '{entity_name}'")
    place_room = session.world.room_of(place)
    if place_room is None:
        raise PreconditionError(f"unknown place '{place}'")
    obj_room = session.world.room_of(obj.place) if not obj.place.startswith("person:") else None
    if obj.place != place and obj_room != place and obj_room != place_room:
        raise PreconditionError(f"'{entity_name}' is not at '{place}'")
    if session.world.robot_room() != (obj_room or place_room):
        raise PreconditionError("robot is not where the object is")
    applied = _commit(session, [Effect.grasp(entity_name)])
    return SkillResult.ok({"object": requested, "entity": entity_name, "from": obj.place}, applied)


def _hand_over(session: EpisodeSession, args: dict) -> SkillResult:
    requested, person = args["object"], args["person"]
    entity_name = session.resolve_entity(requested)
    if session.world.robot.holding != entity_name:
        raise PreconditionError(f"robot is not holding '{entity_name}'")
    if person == "operator":
        if session.world.location("operator") is None:
            raise PreconditionError("no operator position in this world")
        applied = _commit(session, [Effect.release_to(entity_name, "operator")])
        return SkillResult.ok({"object": requested, "entity": entity_name, "to": "operator"}, applied)
    target = session.world.person(person)
    if target is None:
        raise PreconditionError(f"unknown person '{person}'")
    if target.room != session.world.robot_room():
        raise PreconditionError(f"'{person}' is not in the robot's room")
    applied = _commit(session, [Effect.transfer_to_person(entity_name, person)])
    return SkillResult.ok({"object": requested, "entity": entity_name, "to": person}, applied)


def _ask_person_to_hand_over(session: EpisodeSession, args: dict) -> SkillResult:
    requested, person_name, query = args["object"], args["person"], args["query"]
    entity_name = session.resolve_entity(requested)
    person = session.world.person(person_name)
    if person is None:
        raise PreconditionError(f"unknown person '{person_name}'")
    if person.room != session.world.robot_room():
        raise PreconditionError(f"'{person_name}' is not in the robot's room")
    if session.world.robot.holding is not None:
        raise PreconditionError("gripper occupied")
    turn = dialogue.ask(session, person_name, query, purpose="skill")
    if turn.text is None:
        return SkillResult.fail("NO_RESPONSE", {"person": person_name})
    obj = session.world.object(entity_name)
    if obj is None or session.world.room_of(obj.place) != person.room:
        return SkillResult.fail("NOT_FOUND", {"object": requested})
    applied = _commit(session, [Effect.grasp(entity_name)])
    return SkillResult.ok({"object": requested, "entity": entity_name}, applied)


def _place(session: EpisodeSession, args: dict) -> SkillResult:
    requested, place = args["object"], args["location"]
    entity_name = session.resolve_entity(requested)
    if session.world.robot.holding != entity_name:
        raise PreconditionError(f"robot is not holding '{entity_name}'")
    location = session.world.location(place)
    if location is None:
        raise PreconditionError(f"'{place}' is not a placeable location")
    if session.world.robot_room() != location.room:
        raise PreconditionError("robot is not in the target room")
    applied = _commit(session, [Effect.release_to(entity_name, place)])
    return SkillResult.ok({"object": requested, "entity": entity_name, "on": place}, applied)


def _ask_question(session: EpisodeSession, args: dict) -> SkillResult:
    person, question = args["person"], args["question"]
    if person != "operator":
        target = session.world.person(person)
        if target is None:
            raise PreconditionError(f"unknown person '{person}'")
        if target.room != session.world.robot_room():
            raise PreconditionError(f"'{person}' is not in the robot's room")
    turn = dialogue.ask(session, person, question, purpose="skill")
    if turn.text is None:
        return SkillResult.fail("NO_RESPONSE", {"person": person})
    session.note_answer(turn.corrected_text)
    return SkillResult.ok({"person": person, "question": question, "answer": turn.corrected_text})


def _answer_question(session: EpisodeSession, args: dict) -> SkillResult:
    person = args.get("person", "operator")
    turn = dialogue.ask(session, person, "What would you like to know?", purpose="skill")
    if turn.text is None:
        return SkillResult.fail("NO_RESPONSE", {"person": person})
    facts = list(session.ledger.environment_facts) + [
        f"the {o.name} is at the {o.place}" for o in session.world.objects
        if not o.place.startswith("person:") and o.place != "__gripper__"
    ]
    payload = {"question": turn.corrected_text, "facts": facts}
    request = BackendRequest(
        kind="ANSWER_QUESTION",
        prompt=render_prompt(session.ledger, "ANSWER_QUESTION", payload),
        payload=payload,
    )
    response = session.backend.respond(request)
    answer = response.result.get("answer", "I don't know.")
    session.emit(
        "dialogue_turn", speaker="robot", addressee=person, text=answer, purpose="skill"
    )
    return SkillResult.ok({"person": person, "question": turn.corrected_text, "answer": answer})


def _tell_information(session: EpisodeSession, args: dict) -> SkillResult:
    information, person = args["information"], args["person"]
    if person != "operator":
        target = session.world.person(person)
        if target is None:
            raise PreconditionError(f"unknown person '{person}'")
        if target.room != session.world.robot_room():
            raise PreconditionError(f"'{person}' is not in the robot's room")
    spoken = session.resolve_information(information)
    session.emit(
        "dialogue_turn", speaker="robot", addressee=person, text=spoken, purpose="skill"
    )
    return SkillResult.ok({"person": person, "information": spoken})


def _operate_door(session: EpisodeSession, args: dict) -> SkillResult:
    place, operation = args["location"], args["operation"]
    location = session.world.location(place)
    if location is None or location.kind != "door":
        raise PreconditionError(f"'{place}' is not a door")
    if operation not in ("open", "close"):
        raise PreconditionError(f"unknown door operation '{operation}'")
    if session.world.robot_room() != location.room:
        raise PreconditionError("robot is not at the door")
    state = "open" if operation == "open" else "closed"
    applied = _commit(session, [Effect.set_door(place, state)])
    return SkillResult.ok({"location": place, "state": state}, applied)


def _ask_location(session: EpisodeSession, args: dict) -> SkillResult:
    """Ask a person (or the operator) where an object is; fall back to the
    language model's commonsense suggestion when dialogue yields nothing."""
    obj = args["object"]
    world = session.world

    addressee = None
    if (
        session.person_hint
        and world.person(session.person_hint) is not None
        and session.person_hint not in session.asked_persons
    ):
        addressee = session.person_hint
    else:
        for person in world.persons_in(world.robot_room()):
            if person.name not in session.asked_persons:
                addressee = person.name
                break
    if addressee is None:
        addressee = "operator"

    purpose = "help" if addressee == "operator" else "skill"
    turn = dialogue.ask(session, addressee, f"Do you know where the {obj} is?", purpose=purpose)
    if addressee != "operator":
        session.asked_persons.append(addressee)

    if turn.text is not None:
        known_places = set(session.world.known_names()["locations"]) | set(
            session.world.known_names()["rooms"]
        )
        value = dialogue.extract_slot(session, turn.corrected_text, "location", known_places)
        if value != dialogue.NO_MATCH:
            return SkillResult.ok({"object": obj, "location": value, "source": "dialogue"})

    # no response or no extractable location: ask the language model
    obj_entity = world.object(obj)
    payload = {
        "name": obj,
        "category": obj_entity.category if obj_entity else obj,
        "known_places": sorted(
            set(world.known_names()["rooms"]) | set(world.known_names()["locations"])
        ),
        "exclude": list(session.exhausted.get(obj, [])),
    }
    request = BackendRequest(
        kind="SUGGEST_LOCATIONS",
        prompt=render_prompt(session.ledger, "SUGGEST_LOCATIONS", payload),
        payload=payload,
    )
    response = session.backend.respond(request)
    suggestions = response.result.get("locations", [])
    if suggestions:
        return SkillResult.ok({"object": obj, "location": suggestions[0], "source": "llm"})
    return SkillResult.fail("NO_RESPONSE", {"object": obj, "miss": NO_RESPONSE_AND_NO_SUGGESTION})


_HANDLERS: dict[str, Callable[[EpisodeSession, dict], SkillResult]] = {
    "go_to_location": _go_to_location,
    "ask_location": _ask_location,
    "find_concrete_name_objects": _find_concrete,
    "find_category_name_objects": _find_category,
    "count_concrete_name_objects": _count_concrete,
    "count_category_name_objects": _count_category,
    "find_person": _find_person,
    "detect_person_pose": _detect_person_pose,
    "find_specific_pose_person": _find_specific_pose_person,
    "count_specific_pose_person": _count_specific_pose_person,
    "count_person": _count_person,
    "follow_person": _follow_person,
    "guide": _guide,
    "pick": _pick,
    "hand_over": _hand_over,
    "ask_person_to_hand_over": _ask_person_to_hand_over,
    "place": _place,
    "ask_question": _ask_question,
    "answer_question": _answer_question,
    "tell_information": _tell_information,
    "operate_door": _operate_door,
}

assert set(_HANDLERS) == set(SKILL_SIGNATURES)
