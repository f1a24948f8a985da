"""Simulated open/closed-vocabulary object detection and person perception.

Embedding similarity is modeled as Jaccard overlap between attribute-tag
sets: the coarsest stand-in that still shows richer prompt text fixing a
misclassification.  Closed-vocabulary mode only sees objects whose category
is in a fixed class list; open-vocabulary mode sees whatever some prompt
entry overlaps with.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .errors import PreconditionError
from .world import WorldState

DETECTION_THRESHOLD = 0.25

# Words stripped when deriving tags from prompt-entry text.
PROMPT_STOPWORDS = frozenset({"a", "an", "the", "of", "photo", "picture", "image"})


@dataclass(frozen=True)
class PromptEntry:
    """One open-vocabulary prompt: a label plus its text description."""

    label: str
    text: str

    @property
    def tags(self) -> frozenset[str]:
        words = [w.strip(".,") for w in self.text.lower().split()]
        tags = frozenset(w for w in words if w and w not in PROMPT_STOPWORDS)
        if not tags:
            raise ValueError(f"prompt entry '{self.label}': no tags derivable from text")
        return tags


@dataclass(frozen=True)
class VocabularyMode:
    mode: str  # "closed" | "open"
    class_list: frozenset[str] = frozenset()
    entries: tuple[PromptEntry, ...] = ()

    @staticmethod
    def closed(class_list: set[str] | frozenset[str]) -> "VocabularyMode":
        if not class_list:
            raise ValueError("closed-vocabulary mode requires a non-empty class list")
        return VocabularyMode(mode="closed", class_list=frozenset(class_list))

    @staticmethod
    def open(entries: list[PromptEntry] | tuple[PromptEntry, ...]) -> "VocabularyMode":
        return VocabularyMode(mode="open", entries=tuple(entries))


@dataclass(frozen=True)
class Detection:
    entity_ref: str  # ground-truth object name; callers must not branch on it
    observed_tags: frozenset[str]
    proposed_label: str


@dataclass(frozen=True)
class PerceptionNoise:
    """Deterministic failure injection for the perception stack."""

    drop_objects: frozenset[str] = frozenset()
    hide_persons: frozenset[str] = frozenset()
    distractor_tags: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def extra_tags(self, entity: str) -> frozenset[str]:
        for name, tags in self.distractor_tags:
            if name == entity:
                return frozenset(tags)
        return frozenset()


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def detect_objects(
    world: WorldState,
    at: str,
    mode: VocabularyMode,
    noise: PerceptionNoise = PerceptionNoise(),
) -> list[Detection]:
    """Detect objects at a location the robot can currently see."""
    robot_room = world.robot_room()
    place_room = world.room_of(at)
    if place_room is None or place_room != robot_room:
        raise PreconditionError(f"robot at '{world.robot.at}' cannot view '{at}'")

    detections: list[Detection] = []
    for obj in world.objects_at(at):
        if obj.name in noise.drop_objects:
            continue
        observed = obj.tags | noise.extra_tags(obj.name)
        if mode.mode == "closed":
            if obj.category in mode.class_list:
                detections.append(
                    Detection(entity_ref=obj.name, observed_tags=observed, proposed_label=obj.name)
                )
        else:
            overlaps = [jaccard(observed, entry.tags) for entry in mode.entries]
            if overlaps and max(overlaps) >= DETECTION_THRESHOLD:
                label, _ = classify_detection(
                    Detection(entity_ref=obj.name, observed_tags=observed, proposed_label=""),
                    list(mode.entries),
                )
                detections.append(
                    Detection(entity_ref=obj.name, observed_tags=observed, proposed_label=label)
                )
    return detections


def classify_detection(
    detection: Detection, entries: list[PromptEntry]
) -> tuple[str, float]:
    """Label a detection by best tag overlap; ties break to the smaller label."""
    if not entries:
        raise PreconditionError("classify_detection requires at least one prompt entry")
    best_label: Optional[str] = None
    best_score = -1.0
    for entry in entries:
        score = jaccard(detection.observed_tags, entry.tags)
        if score > best_score or (score == best_score and entry.label < (best_label or "")):
            best_label, best_score = entry.label, score
    assert best_label is not None
    return best_label, best_score


def perceive_persons(
    world: WorldState,
    room: str,
    predicate: Optional[Callable] = None,
    noise: PerceptionNoise = PerceptionNoise(),
) -> list[tuple[str, str]]:
    """(person name, pose) pairs visible in a room, in name order."""
    found: list[tuple[str, str]] = []
    for person in world.persons_in(room):
        if person.name in noise.hide_persons:
            continue
        if predicate is not None and not predicate(person):
            continue
        found.append((person.name, person.pose))
    return found


def pose_filter(pose: str) -> Callable:
    return lambda person: person.pose == pose


def clothing_filter(word: str) -> Callable:
    return lambda person: word in person.clothing_tags
