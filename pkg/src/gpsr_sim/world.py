"""Ground-truth simulated household and the robot's queryable semantic map.

The world is discrete and symbolic: rooms, named furniture locations,
objects with attribute tags, persons, and one robot.  All mutation goes
through :func:`apply_effect`, which returns a fresh snapshot; `WorldState`
values are immutable and safe to share.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from typing import Optional

import yaml

from .errors import IllegalEffect, ReferentialError, SchemaError

SCHEMA_VERSION = 1

LOCATION_KINDS = ("surface", "container", "door", "seat")
DOOR_STATES = ("open", "closed", "none")
POSES = ("standing", "sitting", "lying", "raising_arm")

# Reserved name for the command giver's position; synthesized as a location
# when the document declares `operator_room`.
OPERATOR = "operator"

GRIPPER = "__gripper__"


@dataclass(frozen=True)
class Room:
    name: str
    connected: tuple[str, ...] = ()


@dataclass(frozen=True)
class Location:
    name: str
    room: str
    kind: str = "surface"
    door_state: str = "none"


@dataclass(frozen=True)
class ObjectEntity:
    name: str
    category: str
    tags: frozenset[str]
    place: str  # location name, "person:<name>", or GRIPPER


@dataclass(frozen=True)
class PersonEntity:
    name: str
    room: str
    pose: str = "standing"
    clothing_tags: frozenset[str] = frozenset()
    responsive: bool = True
    script_ref: Optional[str] = None


@dataclass(frozen=True)
class RobotState:
    at: str
    holding: Optional[str] = None


@dataclass(frozen=True)
class SemanticMap:
    """Flattened name/category -> likely-location memory."""

    entries: tuple[tuple[str, tuple[tuple[str, float], ...]], ...] = ()

    def lookup(self, query: str) -> list[tuple[str, float]]:
        for name, places in self.entries:
            if name == query:
                return list(places)
        return []


@dataclass(frozen=True)
class WorldState:
    rooms: tuple[Room, ...]
    locations: tuple[Location, ...]
    objects: tuple[ObjectEntity, ...]
    persons: tuple[PersonEntity, ...]
    robot: RobotState
    semantic_map: SemanticMap = SemanticMap()
    clock: int = 0

    # -- indexed lookups ------------------------------------------------

    def room(self, name: str) -> Optional[Room]:
        for r in self.rooms:
            if r.name == name:
                return r
        return None

    def location(self, name: str) -> Optional[Location]:
        for loc in self.locations:
            if loc.name == name:
                return loc
        return None

    def object(self, name: str) -> Optional[ObjectEntity]:
        for obj in self.objects:
            if obj.name == name:
                return obj
        return None

    def person(self, name: str) -> Optional[PersonEntity]:
        for p in self.persons:
            if p.name == name:
                return p
        return None

    def room_of(self, place: str) -> Optional[str]:
        """Room containing a room/location/person name, if any."""
        if self.room(place) is not None:
            return place
        loc = self.location(place)
        if loc is not None:
            return loc.room
        person = self.person(place)
        if person is not None:
            return person.room
        return None

    def robot_room(self) -> str:
        room = self.room_of(self.robot.at)
        assert room is not None
        return room

    def locations_in(self, room: str) -> list[Location]:
        return sorted((l for l in self.locations if l.room == room), key=lambda l: l.name)

    def objects_at(self, place: str) -> list[ObjectEntity]:
        return sorted((o for o in self.objects if o.place == place), key=lambda o: o.name)

    def objects_in_room(self, room: str) -> list[ObjectEntity]:
        here = {l.name for l in self.locations if l.room == room}
        return sorted((o for o in self.objects if o.place in here), key=lambda o: o.name)

    def persons_in(self, room: str) -> list[PersonEntity]:
        return sorted((p for p in self.persons if p.room == room), key=lambda p: p.name)

    def known_names(self) -> dict[str, set[str]]:
        """Name sets the robot is assumed to know (the labelled map)."""
        return {
            "rooms": {r.name for r in self.rooms},
            "locations": {l.name for l in self.locations},
            "objects": {o.name for o in self.objects},
            "categories": {o.category for o in self.objects},
            "persons": {p.name for p in self.persons},
        }


# ---------------------------------------------------------------------------
# Loading and validation
# ---------------------------------------------------------------------------

_WORLD_KEYS = {
    "schema_version",
    "rooms",
    "locations",
    "objects",
    "persons",
    "robot",
    "semantic_map",
    "operator_room",
}


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise SchemaError(f"{context}: missing field '{key}'")
    return mapping[key]


def load_world(doc: str | dict) -> WorldState:
    """Parse and validate a world-description document (YAML text or dict)."""
    if isinstance(doc, str):
        data = yaml.safe_load(io.StringIO(doc))
    else:
        data = doc
    if not isinstance(data, dict):
        raise SchemaError("world document: expected a mapping at top level")
    unknown = set(data) - _WORLD_KEYS
    if unknown:
        raise SchemaError(f"world document: unknown field '{sorted(unknown)[0]}'")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    rooms: list[Room] = []
    for i, raw in enumerate(data.get("rooms") or []):
        name = _require(raw, "name", f"rooms[{i}]")
        rooms.append(Room(name=name, connected=tuple(raw.get("connected") or ())))

    locations: list[Location] = []
    for i, raw in enumerate(data.get("locations") or []):
        name = _require(raw, "name", f"locations[{i}]")
        kind = raw.get("kind", "surface")
        if kind not in LOCATION_KINDS:
            raise SchemaError(f"locations[{i}].kind: unknown kind '{kind}'")
        door_state = raw.get("door_state", "closed" if kind == "door" else "none")
        if door_state not in DOOR_STATES:
            raise SchemaError(f"locations[{i}].door_state: unknown state '{door_state}'")
        locations.append(
            Location(
                name=name,
                room=_require(raw, "room", f"locations[{i}]"),
                kind=kind,
                door_state=door_state,
            )
        )

    operator_room = data.get("operator_room")
    if operator_room is not None and all(l.name != OPERATOR for l in locations):
        locations.append(Location(name=OPERATOR, room=operator_room, kind="seat"))

    objects: list[ObjectEntity] = []
    for i, raw in enumerate(data.get("objects") or []):
        name = _require(raw, "name", f"objects[{i}]")
        tags = frozenset(raw.get("tags") or ())
        if not tags:
            raise SchemaError(f"objects[{i}].tags: must be non-empty")
        category = _require(raw, "category", f"objects[{i}]")
        if name == category:
            raise SchemaError(f"objects[{i}]: name equals category '{name}'")
        objects.append(
            ObjectEntity(
                name=name,
                category=category,
                tags=tags,
                place=_require(raw, "place", f"objects[{i}]"),
            )
        )

    persons: list[PersonEntity] = []
    for i, raw in enumerate(data.get("persons") or []):
        pose = raw.get("pose", "standing")
        if pose not in POSES:
            raise SchemaError(f"persons[{i}].pose: unknown pose '{pose}'")
        persons.append(
            PersonEntity(
                name=_require(raw, "name", f"persons[{i}]"),
                room=_require(raw, "room", f"persons[{i}]"),
                pose=pose,
                clothing_tags=frozenset(raw.get("clothing_tags") or ()),
                responsive=bool(raw.get("responsive", True)),
                script_ref=raw.get("script_ref"),
            )
        )

    robot_raw = data.get("robot") or {}
    robot = RobotState(at=_require(robot_raw, "at", "robot"), holding=robot_raw.get("holding"))

    entries: list[tuple[str, tuple[tuple[str, float], ...]]] = []
    for name, places in sorted((data.get("semantic_map") or {}).items()):
        parsed = tuple((p["location"], float(p["confidence"])) for p in places)
        entries.append((name, parsed))

    world = WorldState(
        rooms=tuple(rooms),
        locations=tuple(locations),
        objects=tuple(objects),
        persons=tuple(persons),
        robot=robot,
        semantic_map=SemanticMap(entries=tuple(entries)),
    )
    check_invariants(world)
    return world


def check_invariants(world: WorldState) -> None:
    """Raise on any violated world invariant."""
    room_names = [r.name for r in world.rooms]
    if len(set(room_names)) != len(room_names):
        raise SchemaError("rooms: duplicate room name")
    loc_names = [l.name for l in world.locations]
    if len(set(loc_names)) != len(loc_names):
        raise SchemaError("locations: duplicate location name")
    obj_names = [o.name for o in world.objects]
    if len(set(obj_names)) != len(obj_names):
        raise SchemaError("objects: duplicate object name")
    person_names = [p.name for p in world.persons]
    if len(set(person_names)) != len(person_names):
        raise SchemaError("persons: duplicate person name")

    rooms = set(room_names)
    for room in world.rooms:
        for other in room.connected:
            if other not in rooms:
                raise ReferentialError(f"room '{room.name}': connected to unknown room '{other}'")
            peer = world.room(other)
            if peer is not None and room.name not in peer.connected:
                raise ReferentialError(
                    f"room connectivity not symmetric between '{room.name}' and '{other}'"
                )
    for loc in world.locations:
        if loc.room not in rooms:
            raise ReferentialError(f"location '{loc.name}': unknown room '{loc.room}'")
        if loc.kind != "door" and loc.door_state != "none":
            raise SchemaError(f"location '{loc.name}': door_state on non-door location")
        if loc.kind == "door" and loc.door_state == "none":
            raise SchemaError(f"location '{loc.name}': door requires a door_state")
    for person in world.persons:
        if person.room not in rooms:
            raise ReferentialError(f"person '{person.name}': unknown room '{person.room}'")

    locations = set(loc_names)
    persons = set(person_names)
    for obj in world.objects:
        place = obj.place
        if place == GRIPPER:
            if world.robot.holding != obj.name:
                raise ReferentialError(f"object '{obj.name}': in gripper but robot.holding differs")
        elif place.startswith("person:"):
            if place.split(":", 1)[1] not in persons:
                raise ReferentialError(f"object '{obj.name}': held by unknown person '{place}'")
        elif place not in locations:
            raise ReferentialError(f"object '{obj.name}': placed on unknown location '{place}'")

    if world.robot.holding is not None:
        held = world.object(world.robot.holding)
        if held is None:
            raise ReferentialError(f"robot.holding: unknown object '{world.robot.holding}'")
        if held.place != GRIPPER:
            raise ReferentialError("robot.holding object is not marked as in the gripper")
    if world.room_of(world.robot.at) is None:
        raise ReferentialError(f"robot.at: unknown place '{world.robot.at}'")

    for name, places in world.semantic_map.entries:
        for loc, conf in places:
            if loc not in locations and loc not in rooms:
                raise ReferentialError(f"semantic_map['{name}']: unknown place '{loc}'")
            if not 0.0 <= conf <= 1.0:
                raise SchemaError(f"semantic_map['{name}']: confidence {conf} outside [0,1]")


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def locate_entity(
    world: WorldState, query: str, scope: Optional[str] = None
) -> list[tuple[str, str]]:
    """Ground-truth lookup of objects/persons by name or category.

    Returns (entity name, place) pairs: exact name matches first, then
    category matches, each group sorted by entity name.
    """

    def in_scope(place_room: Optional[str]) -> bool:
        return scope is None or place_room == scope

    name_hits: list[tuple[str, str]] = []
    category_hits: list[tuple[str, str]] = []
    for obj in sorted(world.objects, key=lambda o: o.name):
        place_room = world.room_of(obj.place) if not obj.place.startswith("person:") else (
            world.room_of(obj.place.split(":", 1)[1])
        )
        if obj.place == GRIPPER:
            place_room = world.robot_room()
        if not in_scope(place_room):
            continue
        if obj.name == query:
            name_hits.append((obj.name, obj.place))
        elif obj.category == query:
            category_hits.append((obj.name, obj.place))
    for person in sorted(world.persons, key=lambda p: p.name):
        if not in_scope(person.room):
            continue
        if person.name == query:
            name_hits.append((person.name, person.room))
    return name_hits + category_hits


def semantic_lookup(semantic_map: SemanticMap, query: str) -> list[tuple[str, float]]:
    """Ranked likely locations for a name/category, best confidence first."""
    hits = semantic_map.lookup(query)
    return sorted(hits, key=lambda pair: (-pair[1], pair[0]))


# ---------------------------------------------------------------------------
# Effects
# ---------------------------------------------------------------------------

EFFECT_KINDS = (
    "move_robot",
    "grasp",
    "release_to",
    "transfer_to_person",
    "move_person",
    "set_door",
    "move_object",
)


@dataclass(frozen=True)
class Effect:
    kind: str
    args: tuple[str, ...]

    @staticmethod
    def move_robot(target: str) -> "Effect":
        return Effect("move_robot", (target,))

    @staticmethod
    def grasp(obj: str) -> "Effect":
        return Effect("grasp", (obj,))

    @staticmethod
    def release_to(obj: str, location: str) -> "Effect":
        return Effect("release_to", (obj, location))

    @staticmethod
    def transfer_to_person(obj: str, person: str) -> "Effect":
        return Effect("transfer_to_person", (obj, person))

    @staticmethod
    def move_person(person: str, room: str) -> "Effect":
        return Effect("move_person", (person, room))

    @staticmethod
    def set_door(location: str, state: str) -> "Effect":
        return Effect("set_door", (location, state))

    @staticmethod
    def move_object(obj: str, place: str) -> "Effect":
        return Effect("move_object", (obj, place))


def _replace_object(world: WorldState, name: str, **changes) -> tuple[ObjectEntity, ...]:
    return tuple(replace(o, **changes) if o.name == name else o for o in world.objects)


def apply_effect(world: WorldState, effect: Effect) -> WorldState:
    """Apply one world mutation, returning a new snapshot; rejects illegal effects."""
    if effect.kind not in EFFECT_KINDS:
        raise IllegalEffect(f"unknown effect kind '{effect.kind}'")
    new = _apply(world, effect)
    new = replace(new, clock=world.clock + 1)
    check_invariants(new)
    return new


def _apply(world: WorldState, effect: Effect) -> WorldState:
    kind, args = effect.kind, effect.args
    if kind == "move_robot":
        (target,) = args
        if world.room_of(target) is None:
            raise IllegalEffect(f"move_robot: unknown place '{target}'")
        return replace(world, robot=replace(world.robot, at=target))

    if kind == "grasp":
        (obj_name,) = args
        if world.robot.holding is not None:
            raise IllegalEffect("grasp: gripper already holding " + world.robot.holding)
        obj = world.object(obj_name)
        if obj is None:
            raise IllegalEffect(f"grasp: unknown object '{obj_name}'")
        return replace(
            world,
            objects=_replace_object(world, obj_name, place=GRIPPER),
            robot=replace(world.robot, holding=obj_name),
        )

    if kind == "release_to":
        obj_name, location = args
        if world.robot.holding != obj_name:
            raise IllegalEffect(f"release_to: robot is not holding '{obj_name}'")
        if world.location(location) is None:
            raise IllegalEffect(f"release_to: unknown location '{location}'")
        return replace(
            world,
            objects=_replace_object(world, obj_name, place=location),
            robot=replace(world.robot, holding=None),
        )

    if kind == "transfer_to_person":
        obj_name, person = args
        if world.robot.holding != obj_name:
            raise IllegalEffect(f"transfer_to_person: robot is not holding '{obj_name}'")
        if world.person(person) is None:
            raise IllegalEffect(f"transfer_to_person: unknown person '{person}'")
        return replace(
            world,
            objects=_replace_object(world, obj_name, place=f"person:{person}"),
            robot=replace(world.robot, holding=None),
        )

    if kind == "move_person":
        person, room = args
        if world.person(person) is None:
            raise IllegalEffect(f"move_person: unknown person '{person}'")
        if world.room(room) is None:
            raise IllegalEffect(f"move_person: unknown room '{room}'")
        persons = tuple(replace(p, room=room) if p.name == person else p for p in world.persons)
        return replace(world, persons=persons)

    if kind == "set_door":
        location, state = args
        loc = world.location(location)
        if loc is None:
            raise IllegalEffect(f"set_door: unknown location '{location}'")
        if loc.kind != "door":
            raise IllegalEffect(f"set_door: '{location}' is not a door")
        if state not in ("open", "closed"):
            raise IllegalEffect(f"set_door: invalid state '{state}'")
        locations = tuple(
            replace(l, door_state=state) if l.name == location else l for l in world.locations
        )
        return replace(world, locations=locations)

    if kind == "move_object":
        obj_name, place = args
        obj = world.object(obj_name)
        if obj is None:
            raise IllegalEffect(f"move_object: unknown object '{obj_name}'")
        if obj.place == GRIPPER:
            raise IllegalEffect(f"move_object: '{obj_name}' is in the gripper")
        if world.location(place) is None:
            raise IllegalEffect(f"move_object: unknown location '{place}'")
        return replace(world, objects=_replace_object(world, obj_name, place=place))

    raise IllegalEffect(f"unknown effect kind '{kind}'")


# ---------------------------------------------------------------------------
# Serialization (lossless round-trip)
# ---------------------------------------------------------------------------


def dump_world(world: WorldState) -> str:
    """Canonical YAML form; sets are emitted sorted so output is stable."""
    data = {
        "schema_version": SCHEMA_VERSION,
        "rooms": [
            {"name": r.name, "connected": sorted(r.connected)} for r in world.rooms
        ],
        "locations": [
            {
                "name": l.name,
                "room": l.room,
                "kind": l.kind,
                **({"door_state": l.door_state} if l.kind == "door" else {}),
            }
            for l in world.locations
        ],
        "objects": [
            {
                "name": o.name,
                "category": o.category,
                "tags": sorted(o.tags),
                "place": o.place,
            }
            for o in world.objects
        ],
        "persons": [
            {
                "name": p.name,
                "room": p.room,
                "pose": p.pose,
                "clothing_tags": sorted(p.clothing_tags),
                "responsive": p.responsive,
                **({"script_ref": p.script_ref} if p.script_ref else {}),
            }
            for p in world.persons
        ],
        "robot": {
            "at": world.robot.at,
            **({"holding": world.robot.holding} if world.robot.holding else {}),
        },
        "semantic_map": {
            name: [{"location": loc, "confidence": conf} for loc, conf in places]
            for name, places in world.semantic_map.entries
        },
    }
    return yaml.safe_dump(data, sort_keys=False)
