"""Mutable per-episode state shared by skills, dialogue, and recovery.

One session = one command episode.  All world mutation, prompt-ledger
updates, and trace appends flow through this object on a single thread of
control; the world and ledger values themselves stay immutable snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .backend import BackendRequest, BackendResponse
from .ledger import PromptLedger
from .perception import PerceptionNoise
from .trace import EpisodeTrace
from .world import WorldState


@dataclass(frozen=True)
class RecoveryBudget:
    max_skill_retries: int = 2
    max_replans: int = 2
    max_operator_queries: int = 3

    def __post_init__(self):
        if min(self.max_skill_retries, self.max_replans, self.max_operator_queries) < 0:
            raise ValueError("budgets must be non-negative")


class RecordingBackend:
    """Wraps a backend so every request/response lands in the trace verbatim
    (credentials never appear in requests; they live in headers only)."""

    def __init__(self, inner, session: "EpisodeSession"):
        self._inner = inner
        self._session = session
        self.name = getattr(inner, "name", "backend")

    def respond(self, request: BackendRequest) -> BackendResponse:
        response = self._inner.respond(request)
        self._session.emit(
            "backend_call",
            kind=request.kind,
            prompt=request.prompt,
            payload=request.payload,
            response=response.result,
        )
        return response


@dataclass
class EpisodeSession:
    world: WorldState
    ledger: PromptLedger
    trace: EpisodeTrace
    backend: object = None  # RecordingBackend once bound
    noise: PerceptionNoise = PerceptionNoise()
    injection: object = None  # skills.FailureInjection
    operator: object = None  # dialogue channel (scripted or live)
    person_scripts: dict = field(default_factory=dict)
    budget: RecoveryBudget = RecoveryBudget()
    seed: int = 0
    tick: int = 0
    # execution-time knowledge
    bindings: dict = field(default_factory=dict)  # requested name -> actual entity
    assumed: dict = field(default_factory=dict)  # object/category -> assumed place
    exhausted: dict = field(default_factory=dict)  # object -> [places already searched]
    asked_persons: list = field(default_factory=list)
    person_hint: Optional[str] = None
    last_answer: Optional[str] = None
    last_count: Optional[str] = None
    last_found: list = field(default_factory=list)
    # budget counters
    operator_queries: int = 0
    replans_used: int = 0
    strict_verdict: bool = False

    def emit(self, type_: str, **fields) -> dict:
        return self.trace.append(self.tick, type_, **fields)

    def bump_ledger(self, new_ledger: PromptLedger, update_kind: str, detail: str) -> None:
        self.ledger = new_ledger
        self.emit("ledger_update", update=update_kind, detail=detail, version=new_ledger.version)

    def mark_exhausted(self, subject: str, place: str) -> None:
        places = self.exhausted.setdefault(subject, [])
        if place not in places:
            places.append(place)

    def note_answer(self, text: Optional[str]) -> None:
        if text:
            self.last_answer = text

    def resolve_entity(self, name: str) -> str:
        return self.bindings.get(name, name)

    def resolve_information(self, information: str) -> str:
        if information == "the answer":
            return self.last_answer or "I did not get an answer."
        if information == "the findings":
            if not self.last_found:
                return "I found nothing."
            return "I found: " + ", ".join(self.last_found) + "."
        if information == "the count":
            return self.last_count if self.last_count is not None else "I did not count anything."
        return information
