from __future__ import annotations

import pytest

from conftest import make_session
from gpsr_sim.dialogue import OperatorScript
from gpsr_sim.errors import PreconditionError
from gpsr_sim.planner import SkillCall
from gpsr_sim.registry import SKILL_SIGNATURES
from gpsr_sim.skills import FailureInjection, execute_skill, inject
from gpsr_sim.world import dump_world, load_world

# Table-driven registry conformance: exactly these names with exactly these
# argument lists.
EXPECTED_REGISTRY = {
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


def test_registry_matches_skill_table_exactly():
    assert len(SKILL_SIGNATURES) == 21
    assert SKILL_SIGNATURES == EXPECTED_REGISTRY


def call(function, **args):
    return SkillCall(function=function, args=args)


PERSON_WORLD = """
schema_version: 1
rooms:
  - {name: living room, connected: [dining room]}
  - {name: dining room, connected: [living room]}
locations:
  - {name: operator, room: living room, kind: seat}
  - {name: dining table, room: dining room, kind: surface}
objects:
  - {name: apple, category: fruit, tags: [red], place: dining table}
persons:
  - {name: Ashley, room: dining room, pose: sitting, responsive: true, script_ref: ashley}
  - {name: Bob, room: dining room, pose: raising_arm, responsive: false}
robot: {at: operator}
"""


@pytest.fixture
def person_session(tablev_ledger):
    return make_session(
        load_world(PERSON_WORLD),
        tablev_ledger,
        person_scripts={
            "ashley": OperatorScript(
                turns=[("dinner", "Yes please."), ("hand me", "Here you go.")]
            )
        },
    )


def test_go_to_location(session):
    result = execute_skill(session, call("go_to_location", location="side table"))
    assert result.success
    assert session.world.robot.at == "side table"
    assert session.tick == 1


def test_find_then_pick_conserves_objects(session):
    execute_skill(session, call("go_to_location", location="kitchen counter"))
    found = execute_skill(session, call("find_concrete_name_objects", object="apple"))
    assert found.success
    assert found.observations["location"] == "kitchen counter"
    before = sorted(o.name for o in session.world.objects)
    picked = execute_skill(session, call("pick", object="apple", location="kitchen counter"))
    assert picked.success
    assert session.world.robot.holding == "apple"
    assert sorted(o.name for o in session.world.objects) == before


def test_failed_skill_leaves_world_identical(session):
    before = dump_world(session.world)
    result = execute_skill(session, call("find_concrete_name_objects", object="apple"))
    assert not result.success  # apple is in the kitchen, robot in living room
    assert result.failure_reason == "NOT_FOUND"
    assert dump_world(session.world) == before


def test_pick_while_holding_fails_precondition(session):
    execute_skill(session, call("go_to_location", location="kitchen counter"))
    execute_skill(session, call("find_concrete_name_objects", object="apple"))
    execute_skill(session, call("pick", object="apple", location="kitchen counter"))
    before = dump_world(session.world)
    result = execute_skill(session, call("pick", object="orange", location="kitchen counter"))
    assert result.failure_reason == "PRECONDITION"
    assert dump_world(session.world) == before


def test_find_with_room_argument(session):
    execute_skill(session, call("go_to_location", location="kitchen"))
    result = execute_skill(session, call("find_concrete_name_objects", object="apple", room="kitchen"))
    assert result.success
    mismatch = execute_skill(session, call("find_concrete_name_objects", object="apple", room="study"))
    assert mismatch.failure_reason == "PRECONDITION"


def test_counts_match_ground_truth(session):
    execute_skill(session, call("go_to_location", location="kitchen counter"))
    result = execute_skill(session, call("count_category_name_objects", category="fruit"))
    truth = len([o for o in session.world.objects_in_room("kitchen") if o.category == "fruit"])
    assert result.observations["count"] == truth == 2
    one = execute_skill(session, call("count_concrete_name_objects", objects="mug"))
    assert one.observations["count"] == 1


def test_find_succeeds_iff_present(session):
    execute_skill(session, call("go_to_location", location="side table"))
    assert execute_skill(session, call("find_concrete_name_objects", object="tropical juice")).success
    assert not execute_skill(session, call("find_concrete_name_objects", object="mug")).success


def test_place_and_hand_over(session):
    execute_skill(session, call("go_to_location", location="kitchen counter"))
    execute_skill(session, call("find_concrete_name_objects", object="apple"))
    execute_skill(session, call("pick", object="apple", location="kitchen counter"))
    execute_skill(session, call("go_to_location", location="desk"))
    result = execute_skill(session, call("place", object="apple", location="desk"))
    assert result.success
    assert session.world.object("apple").place == "desk"


def test_hand_over_to_operator_releases_at_operator(session):
    execute_skill(session, call("go_to_location", location="kitchen counter"))
    execute_skill(session, call("find_concrete_name_objects", object="apple"))
    execute_skill(session, call("pick", object="apple", location="kitchen counter"))
    execute_skill(session, call("go_to_location", location="operator"))
    result = execute_skill(session, call("hand_over", object="apple", person="operator"))
    assert result.success
    assert session.world.object("apple").place == "operator"
    assert session.world.robot.holding is None


def test_person_skills(person_session):
    session = person_session
    execute_skill(session, call("go_to_location", location="dining room"))
    assert execute_skill(session, call("find_person", person="Ashley")).success
    pose = execute_skill(session, call("detect_person_pose", person="Bob"))
    assert pose.observations["pose"] == "raising_arm"
    raised = execute_skill(
        session, call("find_specific_pose_person", person="person", pose="raising_arm")
    )
    assert raised.observations["person"] == "Bob"
    none_lying = execute_skill(
        session, call("find_specific_pose_person", person="person", pose="lying")
    )
    assert none_lying.failure_reason == "NOT_FOUND"
    count = execute_skill(session, call("count_person"))
    assert count.observations["count"] == 2


def test_ask_question_scripted_and_unresponsive(person_session):
    session = person_session
    execute_skill(session, call("go_to_location", location="dining room"))
    answered = execute_skill(
        session, call("ask_question", person="Ashley", question="do you want dinner?")
    )
    assert answered.success
    assert answered.observations["answer"] == "Yes please."
    silent = execute_skill(
        session, call("ask_question", person="Bob", question="do you want dinner?")
    )
    assert silent.failure_reason == "NO_RESPONSE"


def test_ask_person_to_hand_over(person_session):
    session = person_session
    execute_skill(session, call("go_to_location", location="dining room"))
    result = execute_skill(
        session,
        call(
            "ask_person_to_hand_over",
            object="apple",
            person="Ashley",
            query="could you hand me the apple?",
        ),
    )
    assert result.success
    assert session.world.robot.holding == "apple"


def test_follow_and_guide(person_session):
    session = person_session
    result = execute_skill(session, call("follow_person", person="Ashley"))
    assert result.success
    assert session.world.robot_room() == "dining room"
    result = execute_skill(session, call("guide", person="Ashley", location="operator"))
    assert result.success
    assert session.world.robot.at == "operator"
    assert session.world.person("Ashley").room == "living room"


def test_operate_door(session):
    execute_skill(session, call("go_to_location", location="entrance"))
    result = execute_skill(session, call("operate_door", location="entrance", operation="open"))
    assert result.success
    assert session.world.location("entrance").door_state == "open"
    bad = execute_skill(session, call("operate_door", location="side table", operation="open"))
    assert bad.failure_reason == "PRECONDITION"


def test_tell_information_resolves_references(session):
    execute_skill(session, call("go_to_location", location="kitchen counter"))
    execute_skill(session, call("count_category_name_objects", category="fruit"))
    result = execute_skill(
        session, call("tell_information", information="the count", person="operator")
    )
    assert result.success
    assert result.observations["information"] == "2"


def test_bad_signature_raises(session):
    with pytest.raises(PreconditionError):
        execute_skill(session, call("pick", object="apple"))
    with pytest.raises(PreconditionError, match="unknown skill"):
        execute_skill(session, call("warp", target="moon"))


# -- ask_location -------------------------------------------------------------------


def test_ask_location_scripted_person_answer(tablev_ledger):
    world = load_world(PERSON_WORLD)
    session = make_session(
        world,
        tablev_ledger,
        person_scripts={"ashley": OperatorScript(turns=[("where", "It is on the dining table.")])},
    )
    execute_skill(session, call("go_to_location", location="dining room"))
    result = execute_skill(session, call("ask_location", object="apple"))
    assert result.success
    assert result.observations == {"object": "apple", "location": "dining table", "source": "dialogue"}


def test_ask_location_falls_back_to_suggestion(tablev_world, tablev_ledger):
    # nobody around, operator silent: the model's commonsense answers
    session = make_session(tablev_world, tablev_ledger)
    result = execute_skill(session, call("ask_location", object="apple"))
    assert result.success
    assert result.observations["source"] == "llm"
    assert result.observations["location"] == "kitchen"


def test_ask_location_typed_miss(tablev_ledger):
    world = load_world(
        """
schema_version: 1
rooms:
  - {name: void, connected: []}
locations:
  - {name: operator, room: void, kind: seat}
objects:
  - {name: thingamajig, category: whatsit, tags: [odd], place: operator}
robot: {at: operator}
"""
    )
    session = make_session(world, tablev_ledger)
    result = execute_skill(session, call("ask_location", object="thingamajig"))
    assert result.failure_reason == "NO_RESPONSE"
    assert result.observations["miss"] == "NO_RESPONSE_AND_NO_SUGGESTION"


# -- failure injection ------------------------------------------------------------------


def test_inject_fail_once(person_session):
    session = person_session
    inject(
        session,
        FailureInjection.from_config(
            [{"skill": "find_person", "args": {"person": "Ashley"}, "behavior": "fail_once", "reason": "NOT_FOUND"}]
        ),
    )
    execute_skill(session, call("go_to_location", location="dining room"))
    first = execute_skill(session, call("find_person", person="Ashley"))
    second = execute_skill(session, call("find_person", person="Ashley"))
    assert first.failure_reason == "NOT_FOUND"
    assert second.success


def test_inject_fail_always(session):
    inject(
        session,
        FailureInjection.from_config(
            [{"skill": "pick", "args": {"object": "apple"}, "behavior": "fail_always", "reason": "GRASP_FAILED"}]
        ),
    )
    execute_skill(session, call("go_to_location", location="kitchen counter"))
    execute_skill(session, call("find_concrete_name_objects", object="apple"))
    for _ in range(3):
        result = execute_skill(session, call("pick", object="apple", location="kitchen counter"))
        assert result.failure_reason == "GRASP_FAILED"


def test_inject_wildcard_args(session):
    inject(
        session,
        FailureInjection.from_config(
            [{"skill": "go_to_location", "args": {"location": "*"}, "behavior": "fail_once", "reason": "NAV_FAILED"}]
        ),
    )
    assert execute_skill(session, call("go_to_location", location="desk")).failure_reason == "NAV_FAILED"
    assert execute_skill(session, call("go_to_location", location="desk")).success


def test_inject_unknown_skill_rejected():
    with pytest.raises(ValueError, match="teleport"):
        FailureInjection.from_config([{"skill": "teleport"}])
