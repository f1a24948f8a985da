from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from gpsr_sim.backend import (
    BackendRequest,
    MockBackend,
    RemoteBackend,
    RemoteBackendConfig,
    extract_slot_value,
    render_prompt,
    slot_similarity,
)
from gpsr_sim.errors import (
    BackendMalformedError,
    BackendTimeoutError,
    BackendTransportError,
)
from gpsr_sim.ledger import PromptLedger, WorkedExample, add_feedback, load_ledger
from gpsr_sim.harness import data_text


@pytest.fixture(scope="module")
def backend():
    return MockBackend()


def _req(kind, payload):
    return BackendRequest(kind=kind, prompt="test prompt", payload=payload)


# -- DECOMPOSE ------------------------------------------------------------------


def test_decompose_fetch_fixture(backend):
    response = backend.respond(
        _req("DECOMPOSE", {"command": "bring me an apple from the dining table"})
    )
    assert response.result["steps"] == [
        "Move to the dining table",
        "Find apple",
        "Pick apple",
        "Move to the operator",
        "Hand over apple to the operator",
    ]


def test_decompose_cannot_parse(backend):
    response = backend.respond(_req("DECOMPOSE", {"command": "zibber zabber zoom"}))
    assert response.error == "CANNOT_PARSE"


def test_decompose_ignores_ledger_examples(backend, tablev_ledger):
    # the mock is deterministic in the payload alone; prompt content does not
    # change its answer (documented divergence from a remote model)
    payload = {"command": "bring me an apple from the dining table"}
    minimal = BackendRequest("DECOMPOSE", render_prompt(PromptLedger(planner_preamble="x"), "DECOMPOSE", payload), payload)
    tuned = BackendRequest("DECOMPOSE", render_prompt(tablev_ledger, "DECOMPOSE", payload), payload)
    assert backend.respond(minimal).result == backend.respond(tuned).result


def test_mock_determinism(backend):
    request = _req("DECOMPOSE", {"command": "Could you prepare a fruit for me on the side table?"})
    assert backend.respond(request).result == backend.respond(request).result


# -- GROUND ----------------------------------------------------------------------


KNOWN = {
    "locations": ["side table", "dining table", "shelf", "desk", "kitchen counter"],
    "rooms": ["living room", "dining room", "kitchen", "study"],
    "persons": ["Ashley"],
    "objects": ["apple", "mug", "tropical juice"],
    "categories": ["fruit", "drink"],
}


def test_ground_fetch_fixture(backend):
    steps = [
        "Move to the dining table",
        "Find apple",
        "Pick apple",
        "Move to the operator",
        "Hand over apple to the operator",
    ]
    response = backend.respond(_req("GROUND", {"steps": steps, "known": KNOWN}))
    assert response.result["calls"] == [
        {"function": "go_to_location", "args": {"location": "dining table"}},
        {"function": "find_concrete_name_objects", "args": {"object": "apple"}},
        {"function": "pick", "args": {"object": "apple", "location": "dining table"}},
        {"function": "go_to_location", "args": {"location": "operator"}},
        {"function": "hand_over", "args": {"object": "apple", "person": "operator"}},
    ]


def test_ground_ambiguous_step(backend):
    response = backend.respond(
        _req("GROUND", {"steps": ["Activate speech function."], "known": KNOWN})
    )
    assert response.error == "AMBIGUOUS_STEP"


def test_ground_unknown_location_term(backend):
    response = backend.respond(
        _req("GROUND", {"steps": ["Move to the stair lake shelf"], "known": KNOWN})
    )
    assert response.error == "UNKNOWN_LOCATION"
    assert response.result["term"] == "stair lake shelf"


def test_ground_sourceless_find_reports_missing_place(backend):
    response = backend.respond(_req("GROUND", {"steps": ["Find mug"], "known": KNOWN}))
    assert response.error == "UNKNOWN_LOCATION"
    assert response.result["term"] is None
    assert response.result["subject"] == "mug"


def test_ground_person_canonicalization(backend):
    steps = ["Move to the dining room", "Find ashley"]
    response = backend.respond(_req("GROUND", {"steps": steps, "known": KNOWN}))
    assert response.result["calls"][1] == {
        "function": "find_person",
        "args": {"person": "Ashley"},
    }


# -- SUGGEST_LOCATIONS --------------------------------------------------------------


def test_suggest_locations_fruit(backend):
    response = backend.respond(
        _req(
            "SUGGEST_LOCATIONS",
            {
                "name": "apple",
                "category": "fruit",
                "known_places": ["kitchen", "dining room", "study"],
                "exclude": [],
            },
        )
    )
    assert response.result["locations"] == ["kitchen", "dining room"]


def test_suggest_locations_respects_exclusions(backend):
    response = backend.respond(
        _req(
            "SUGGEST_LOCATIONS",
            {
                "name": "apple",
                "category": "fruit",
                "known_places": ["kitchen", "dining room"],
                "exclude": ["kitchen"],
            },
        )
    )
    assert response.result["locations"] == ["dining room"]


def test_suggest_locations_unknown_category_empty(backend):
    response = backend.respond(
        _req(
            "SUGGEST_LOCATIONS",
            {"name": "xyzzy", "category": "xyzzy", "known_places": ["kitchen"], "exclude": []},
        )
    )
    assert response.result["locations"] == []


# -- EXTRACT_SLOT -----------------------------------------------------------------


def _lcs_oracle(a: str, b: str) -> int:
    # independent recursive LCS used only to pin the implementation
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + rec(i + 1, j + 1)
        return max(rec(i + 1, j), rec(i, j + 1))

    return rec(0, 0)


def test_lcs_matches_oracle():
    from gpsr_sim.backend import _lcs_length

    cases = [("shelf", "the stair-like shelf"), ("side table", "no idea"), ("", "x"), ("abc", "abc")]
    for a, b in cases:
        assert _lcs_length(a, b) == _lcs_oracle(a, b)


def test_extract_slot_stairlike_shelf(backend):
    response = backend.respond(
        _req(
            "EXTRACT_SLOT",
            {
                "answer": "the stair-like shelf",
                "kind": "location",
                "known": ["shelf", "side table", "dining table"],
            },
        )
    )
    assert response.result["value"] == "shelf"


def test_extract_slot_no_match(backend):
    response = backend.respond(
        _req(
            "EXTRACT_SLOT",
            {"answer": "no idea", "kind": "location", "known": ["shelf", "side table"]},
        )
    )
    assert response.error == "NO_MATCH"


def test_slot_similarity_windowing_blocks_long_answer_false_positives():
    # chatty answers must not accidentally match short names
    assert slot_similarity("no idea, i lost it somewhere", "desk") <= 0.6
    assert slot_similarity("it should be on the shelf", "shelf") == 1.0


def test_extract_slot_value_threshold():
    assert extract_slot_value("the stair-like shelf", ["shelf", "side table"]) == "shelf"
    assert extract_slot_value("hmm", ["shelf"]) is None


# -- RECOVERY_STEPS -------------------------------------------------------------------


def test_recovery_steps_find_person(backend):
    response = backend.respond(
        _req(
            "RECOVERY_STEPS",
            {
                "failed": {"function": "find_person", "args": {"person": "Ashley"}},
                "robot_room": "dining room",
                "adjacent_rooms": ["kitchen", "living room"],
                "persons_nearby": [],
            },
        )
    )
    assert response.result["steps"] == [
        "Move to the kitchen",
        "Move to the dining room",
        "Find Ashley",
    ]


def test_recovery_steps_pick_asks_person(backend):
    response = backend.respond(
        _req(
            "RECOVERY_STEPS",
            {
                "failed": {"function": "pick", "args": {"object": "apple", "location": "desk"}},
                "robot_room": "study",
                "adjacent_rooms": ["living room"],
                "persons_nearby": ["Ashley"],
            },
        )
    )
    assert response.result["steps"] == ["Ask Ashley to hand over the apple"]


def test_recovery_steps_unknown_skill_empty(backend):
    response = backend.respond(
        _req(
            "RECOVERY_STEPS",
            {
                "failed": {"function": "tell_information", "args": {}},
                "robot_room": "study",
                "adjacent_rooms": ["living room"],
                "persons_nearby": [],
            },
        )
    )
    assert response.result["steps"] == []


# -- render_prompt -----------------------------------------------------------------


def test_render_prompt_minimal_golden():
    ledger = load_ledger(data_text("ledgers/minimal.yaml"))
    prompt = render_prompt(ledger, "DECOMPOSE", {"command": "hi"})
    assert prompt.startswith("You are a helpful assistant for a robot.")


def test_render_prompt_feedback_lines_in_order():
    ledger = PromptLedger(planner_preamble="preamble")
    ledger = add_feedback(ledger, "first line")
    ledger = add_feedback(ledger, "second line")
    prompt = render_prompt(ledger, "DECOMPOSE", {})
    assert prompt.index("first line") < prompt.index("second line")


def test_render_prompt_deterministic(tablev_ledger):
    payload = {"command": "x"}
    assert render_prompt(tablev_ledger, "GROUND", payload) == render_prompt(
        tablev_ledger, "GROUND", payload
    )


def test_render_prompt_section_order():
    ledger = PromptLedger(
        planner_preamble="PRE",
        environment_facts=("FACT",),
        worked_examples=(WorkedExample(command="CMD", steps=("S1",)),),
        feedback_lines=("FB",),
    )
    prompt = render_prompt(ledger, "DECOMPOSE", {"k": "PAYLOAD"})
    positions = [prompt.index(token) for token in ("PRE", "FACT", "CMD", "FB", "PAYLOAD")]
    assert positions == sorted(positions)


# -- remote client -------------------------------------------------------------------


class _StubHandler(BaseHTTPRequestHandler):
    mode = "ok"

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        if self.mode == "ok":
            content = json.dumps({"steps": ["Move to the shelf"]})
            body = json.dumps(
                {"choices": [{"message": {"content": content}}]}
            ).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        elif self.mode == "malformed":
            body = json.dumps({"choices": [{"message": {"content": "not json"}}]}).encode()
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        elif self.mode == "wrong_shape":
            content = json.dumps({"unexpected": True})
            body = json.dumps({"choices": [{"message": {"content": content}}]}).encode()
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        elif self.mode == "error":
            self.send_response(500)
            self.send_header("Content-Length", "0")
            self.end_headers()

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()


def _remote(server, **kwargs):
    host, port = server.server_address
    return RemoteBackend(RemoteBackendConfig(base_url=f"http://{host}:{port}", path="", **kwargs))


def test_remote_backend_ok(stub_server):
    _StubHandler.mode = "ok"
    remote = _remote(stub_server, timeout_s=5.0)
    response = remote.respond(_req("DECOMPOSE", {"command": "x"}))
    assert response.result == {"steps": ["Move to the shelf"]}


def test_remote_backend_malformed(stub_server):
    _StubHandler.mode = "malformed"
    remote = _remote(stub_server, timeout_s=5.0)
    with pytest.raises(BackendMalformedError):
        remote.respond(_req("DECOMPOSE", {"command": "x"}))


def test_remote_backend_wrong_shape(stub_server):
    _StubHandler.mode = "wrong_shape"
    remote = _remote(stub_server, timeout_s=5.0)
    with pytest.raises(BackendMalformedError):
        remote.respond(_req("DECOMPOSE", {"command": "x"}))


def test_remote_backend_transport_error(stub_server):
    _StubHandler.mode = "error"
    remote = _remote(stub_server, timeout_s=5.0, max_retries=0)
    with pytest.raises(BackendTransportError):
        remote.respond(_req("DECOMPOSE", {"command": "x"}))


def test_remote_backend_unreachable():
    remote = RemoteBackend(
        RemoteBackendConfig(base_url="http://127.0.0.1:9", path="", timeout_s=0.2, max_retries=0)
    )
    with pytest.raises((BackendTransportError, BackendTimeoutError)):
        remote.respond(_req("DECOMPOSE", {"command": "x"}))
