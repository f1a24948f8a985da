"""Operator and in-world person interaction.

Test and batch runs use first-match-wins scripts (a matched turn is
consumed, so the same question can get different answers over an episode);
live sessions substitute a channel that blocks on the service API.  Every
inbound operator utterance passes through the transcriber with the current
lexicon before anything downstream sees it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .backend import BackendRequest, render_prompt
from .errors import PreconditionError
from .session import EpisodeSession
from .speech import transcribe

NO_MATCH = "NO_MATCH"

_YES_RE = re.compile(r"^\s*(yes|yep|sure|indeed|correct|completed|you did)\b", re.IGNORECASE)


@dataclass
class OperatorScript:
    """Ordered (matcher substring, answer) turns; None answers mean silence."""

    turns: list[tuple[str, Optional[str]]] = field(default_factory=list)
    default: str = "no_response"  # "no_response" | "echo"
    _used: set = field(default_factory=set)

    def answer(self, question: str) -> Optional[str]:
        lowered = question.lower()
        for i, (matcher, response) in enumerate(self.turns):
            if i in self._used:
                continue
            if matcher.lower() in lowered:
                self._used.add(i)
                return response
        if self.default == "echo":
            return question
        return None

    def reset(self) -> None:
        self._used.clear()

    @staticmethod
    def from_config(raw: Optional[list]) -> "OperatorScript":
        turns: list[tuple[str, Optional[str]]] = []
        for entry in raw or ():
            answer = entry.get("answer")
            turns.append((entry["match"], None if answer in (None, "NO_RESPONSE") else answer))
        return OperatorScript(turns=turns)


class OperatorChannel(Protocol):
    def request_turn(self, question: str) -> Optional[str]: ...

    def request_verdict(self, question: str) -> tuple[Optional[bool], Optional[str]]: ...


class ScriptedChannel:
    """Operator stand-in driven by an OperatorScript."""

    def __init__(self, script: OperatorScript):
        self.script = script

    def request_turn(self, question: str) -> Optional[str]:
        return self.script.answer(question)

    def request_verdict(self, question: str) -> tuple[Optional[bool], Optional[str]]:
        answer = self.script.answer(question)
        if answer is None:
            return None, None
        return bool(_YES_RE.match(answer)), answer


@dataclass(frozen=True)
class DialogueTurn:
    tick: int
    speaker: str
    addressee: str
    text: Optional[str]
    corrected_text: Optional[str] = None


def ask(
    session: EpisodeSession, addressee: str, question: str, purpose: str = "skill"
) -> DialogueTurn:
    """One robot question and the (possibly absent) reply.

    Operator help questions are tallied against the operator-query budget and
    tagged in the trace so scoring can count them.
    """
    if addressee != "operator" and session.world.person(addressee) is None:
        raise PreconditionError(f"ask: no such person '{addressee}'")

    if addressee == "operator" and purpose == "help":
        session.operator_queries += 1

    session.emit(
        "dialogue_turn",
        speaker="robot",
        addressee=addressee,
        text=question,
        purpose=purpose,
    )

    if addressee == "operator":
        answer = session.operator.request_turn(question)
    else:
        person = session.world.person(addressee)
        if not person.responsive:
            answer = None
        else:
            script = session.person_scripts.get(person.script_ref or person.name)
            answer = script.answer(question) if script is not None else None

    if answer is None:
        session.emit(
            "dialogue_turn",
            speaker=addressee,
            addressee="robot",
            text=None,
            no_response=True,
            purpose=purpose,
        )
        return DialogueTurn(tick=session.tick, speaker=addressee, addressee="robot", text=None)

    corrected, _slots = transcribe(answer, session.ledger.transcriber_lexicon)
    session.emit(
        "dialogue_turn",
        speaker=addressee,
        addressee="robot",
        text=answer,
        corrected_text=corrected,
        lexicon_version=session.ledger.version,
        purpose=purpose,
    )
    return DialogueTurn(
        tick=session.tick,
        speaker=addressee,
        addressee="robot",
        text=answer,
        corrected_text=corrected,
    )


def extract_slot(
    session: EpisodeSession, answer: str, kind: str, known: set[str] | frozenset[str]
) -> str:
    """Pull a known name out of a free-text answer via the backend; NO_MATCH otherwise."""
    if not answer:
        raise PreconditionError("extract_slot: answer must be non-empty")
    payload = {"answer": answer, "kind": kind, "known": sorted(known)}
    request = BackendRequest(
        kind="EXTRACT_SLOT",
        prompt=render_prompt(session.ledger, "EXTRACT_SLOT", payload),
        payload=payload,
    )
    response = session.backend.respond(request)
    if response.error is not None:
        return NO_MATCH
    return response.result["value"]


@dataclass(frozen=True)
class Verdict:
    completed: bool
    feedback: Optional[str] = None


def confirm_completion(session: EpisodeSession) -> Verdict:
    """Ask the operator whether the task is complete.

    Silence maps to completed (optimistic default, logged as a warning) so
    unattended runs cannot deadlock; strict mode flips that.
    """
    question = "Did I complete the task?"
    session.emit(
        "dialogue_turn", speaker="robot", addressee="operator", text=question, purpose="confirm"
    )
    completed, feedback = session.operator.request_verdict(question)
    if completed is None:
        session.emit(
            "dialogue_turn",
            speaker="operator",
            addressee="robot",
            text=None,
            no_response=True,
            purpose="confirm",
        )
        verdict = Verdict(completed=not session.strict_verdict, feedback=None)
        session.emit(
            "verdict",
            completed=verdict.completed,
            feedback=None,
            warning="no response; optimistic default" if not session.strict_verdict else "no response; strict default",
        )
        return verdict

    corrected, _slots = transcribe(feedback or "", session.ledger.transcriber_lexicon)
    session.emit(
        "dialogue_turn",
        speaker="operator",
        addressee="robot",
        text=feedback,
        corrected_text=corrected,
        lexicon_version=session.ledger.version,
        purpose="confirm",
    )
    verdict = Verdict(completed=bool(completed), feedback=corrected or None)
    session.emit("verdict", completed=verdict.completed, feedback=verdict.feedback)
    return verdict
