"""The 21-skill registry: names and argument lists.

This table is the single source of truth for plan validation and the
executor; a conformance test pins it.
"""

from __future__ import annotations

# name -> (required args, optional args), in declaration order
SKILL_SIGNATURES: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "go_to_location": (("location",), ()),
    "ask_location": (("object",), ()),
    "find_concrete_name_objects": (("object",), ("room",)),
    "find_category_name_objects": (("category",), ("room",)),
    "count_concrete_name_objects": (("objects",), ()),
    "count_category_name_objects": (("category",), ()),
    "find_person": (("person",), ()),
    "detect_person_pose": (("person",), ()),
    "find_specific_pose_person": (("person", "pose"), ()),
    "count_specific_pose_person": (("person", "pose"), ()),
    "count_person": ((), ()),
    "follow_person": (("person",), ("location",)),
    "guide": (("person", "location"), ()),
    "pick": (("object", "location"), ()),
    "hand_over": (("object", "person"), ()),
    "ask_person_to_hand_over": (("object", "person", "query"), ()),
    "place": (("object", "location"), ()),
    "ask_question": (("person", "question"), ()),
    "answer_question": ((), ("person",)),
    "tell_information": (("information", "person"), ()),
    "operate_door": (("location", "operation"), ()),
}


def check_signature(function: str, args: dict) -> list[str]:
    """Problems with a call's argument structure; empty list when clean."""
    if function not in SKILL_SIGNATURES:
        return [f"unknown skill '{function}'"]
    required, optional = SKILL_SIGNATURES[function]
    problems = []
    for name in required:
        if name not in args:
            problems.append(f"{function}: missing required argument '{name}'")
    allowed = set(required) | set(optional)
    for name in args:
        if name not in allowed:
            problems.append(f"{function}: unexpected argument '{name}'")
    return problems


def ordered_args(function: str, args: dict) -> dict:
    """Args in registry declaration order (canonical for documents)."""
    required, optional = SKILL_SIGNATURES[function]
    out = {}
    for name in required + optional:
        if name in args:
            out[name] = args[name]
    return out
