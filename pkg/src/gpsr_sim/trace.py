"""Episode traces: append-only, canonically serialized, structurally matchable.

Records are line-delimited JSON with fixed field order and tick counters
instead of timestamps, so a replayed episode is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

TRACE_SCHEMA_VERSION = 1

TERMINAL_SUCCESS = "success"
TERMINAL_GIVE_UP = "give_up"
TERMINAL_EXHAUSTED = "exhausted"


@dataclass
class EpisodeTrace:
    scenario: str = ""
    seed: int = 0
    backend: str = "mock"
    events: list[dict] = field(default_factory=list)

    def append(self, tick: int, type_: str, **fields) -> dict:
        event = {"tick": tick, "type": type_}
        event.update(fields)
        self.events.append(event)
        return event

    # -- queries -----------------------------------------------------------

    def of_type(self, type_: str) -> list[dict]:
        return [e for e in self.events if e["type"] == type_]

    def modes_exercised(self) -> set[str]:
        return {e["mode"] for e in self.of_type("failure_event")}

    def terminal_status(self) -> Optional[str]:
        for event in reversed(self.events):
            if event["type"] == "terminal":
                return event["status"]
        return None

    def recovery_actions(self) -> list[dict]:
        return self.of_type("recovery_action")

    def help_events(self) -> int:
        return sum(
            1
            for e in self.of_type("dialogue_turn")
            if e.get("addressee") == "operator" and e.get("purpose") == "help"
        )

    # -- serialization -------------------------------------------------------

    def header(self) -> dict:
        return {
            "type": "header",
            "schema_version": TRACE_SCHEMA_VERSION,
            "scenario": self.scenario,
            "seed": self.seed,
            "backend": self.backend,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), separators=(",", ":"))]
        for event in self.events:
            lines.append(json.dumps(event, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "EpisodeTrace":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise ValueError("empty trace")
        header = json.loads(lines[0])
        if header.get("type") != "header":
            raise ValueError("trace missing header line")
        trace = EpisodeTrace(
            scenario=header.get("scenario", ""),
            seed=int(header.get("seed", 0)),
            backend=header.get("backend", "mock"),
        )
        for line in lines[1:]:
            trace.events.append(json.loads(line))
        return trace


# ---------------------------------------------------------------------------
# Structural matching
# ---------------------------------------------------------------------------


def _matches(event: dict, pattern: dict) -> bool:
    for key, expected in pattern.items():
        actual = event.get(key)
        if isinstance(expected, dict) and isinstance(actual, dict):
            if not _matches(actual, expected):
                return False
        elif actual != expected:
            return False
    return True


def match_sequence(events: Iterable[dict], patterns: list[dict]) -> tuple[bool, int]:
    """Check that `patterns` appear as an ordered subsequence of `events`.

    Returns (ok, index of first unmatched pattern).
    """
    it = iter(events)
    for i, pattern in enumerate(patterns):
        for event in it:
            if _matches(event, pattern):
                break
        else:
            return False, i
    return True, len(patterns)
