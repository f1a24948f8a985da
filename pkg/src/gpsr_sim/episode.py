"""The episode engine: one command from transcription to verdict.

Drives the loop transcribe -> decompose -> ground -> validate -> execute ->
confirm, with the recovery policy hooked in at every failure point:

* grounding failure with a missing source place -> ask/suggest (M1)
* unparseable command or unknown name term -> operator rephrase (M2)
* skill failure -> retry, then alternative steps or information-seeking (M3)
* negative completion verdict -> prompt updates and a full replan (M2)

All outcomes, including budget exhaustion, are in-trace events; the engine
never raises for in-episode failures.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from . import dialogue, ledger as ledger_mod, recovery, skills
from .backend import BackendRequest, render_prompt
from .grammar import REQUEST_SPLIT_RE
from .perception import PromptEntry
from .planner import (
    AMBIGUOUS_STEP,
    GroundingFailure,
    Knowledge,
    ParseFailure,
    Plan,
    PlanStep,
    SkillCall,
    decompose,
    ground,
    validate_plan,
)
from .recovery import (
    ALTERNATIVE_STEPS,
    ASK_LOCATION,
    ASK_OPERATOR_REPHRASE,
    GIVE_UP,
    M1,
    M2,
    M3,
    RETRY_SKILL,
    SUGGEST_AND_VISIT,
    UPDATE_LEDGER_AND_REPLAN,
    GroundingFailureEvidence,
    OperatorVerdictEvidence,
    ParseFailureEvidence,
    RecoveryContext,
    RecoveryPromptContext,
    SkillFailureEvidence,
    SpliceError,
    classify_failure,
    recover,
    render_recovery_prompt,
    splice_plan,
)
from .session import EpisodeSession
from .speech import ConfusionTable, corrupt_utterance, transcribe
from .trace import TERMINAL_EXHAUSTED, TERMINAL_GIVE_UP, TERMINAL_SUCCESS
from .world import semantic_lookup

_FAILED_ACTION_TEMPLATES = {
    "find_person": "find {person}",
    "find_concrete_name_objects": "find the {object}",
    "find_category_name_objects": "find a {category}",
    "go_to_location": "move to the {location}",
    "pick": "pick the {object}",
    "place": "place the {object}",
    "hand_over": "hand over the {object}",
    "operate_door": "{operation} the door",
    "ask_question": "ask {person} a question",
    "ask_person_to_hand_over": "ask {person} for the {object}",
}


def describe_failed_action(call: SkillCall) -> str:
    template = _FAILED_ACTION_TEMPLATES.get(call.function)
    if template is None:
        return call.function.replace("_", " ")
    try:
        return template.format(**call.args)
    except KeyError:
        return call.function.replace("_", " ")


def task_content_of(command: str) -> str:
    parts = REQUEST_SPLIT_RE.split(command, maxsplit=1)
    content = parts[1] if len(parts) == 2 else command
    return content.strip().rstrip("?.!").strip()


@dataclass
class EpisodeEngine:
    session: EpisodeSession
    tick_budget: int = 200
    expected_slots: tuple[str, ...] = ()
    confusion: Optional[ConfusionTable] = None
    corruption_seed: int = 0
    corruption_rate: float = 0.0

    _retries: dict = field(default_factory=dict)
    _suggest_done: dict = field(default_factory=dict)
    _last_rephrased: Optional[str] = None

    # -- helpers -------------------------------------------------------------

    @property
    def s(self) -> EpisodeSession:
        return self.session

    def knowledge(self) -> Knowledge:
        return Knowledge.from_world(self.s.world)

    def _terminal(self, status: str, reason: str = "") -> None:
        self.s.emit("terminal", status=status, **({"reason": reason} if reason else {}))

    def _emit_recovery(self, mode: str, action: recovery.RecoveryAction) -> None:
        self.s.emit(
            "recovery_action",
            mode=mode,
            action=action.kind,
            params=action.params,
            ledger_version_after=self.s.ledger.version,
        )

    def _replan_budget_left(self) -> bool:
        return self.s.replans_used < self.s.budget.max_replans

    def _count_replan(self) -> None:
        self.s.replans_used += 1

    # -- transcription ---------------------------------------------------------

    def transcribe_command(self, true_text: str, heard_text: Optional[str]) -> str:
        heard = heard_text
        if heard is None:
            if self.confusion is not None and self.corruption_rate > 0:
                heard = corrupt_utterance(
                    true_text, self.confusion, self.corruption_seed, self.corruption_rate
                )
            else:
                heard = true_text
        transcript, recovered = transcribe(heard, self.s.ledger.transcriber_lexicon)
        self.s.emit(
            "transcript",
            heard=heard,
            transcript=transcript,
            recovered_slots=sorted(recovered),
            expected_slots=sorted(self.expected_slots),
            lexicon_version=self.s.ledger.version,
        )
        return transcript

    # -- planning with M1/M2 recovery -------------------------------------------

    def _planning_assumptions(self) -> dict[str, str]:
        """Known placements for planning: semantic-map memory first, then
        anything learned during this episode (dialogue beats the map)."""
        merged: dict[str, str] = {}
        for name, _places in self.s.world.semantic_map.entries:
            ranked = semantic_lookup(self.s.world.semantic_map, name)
            exhausted = self.s.exhausted.get(name, [])
            for place, _confidence in ranked:
                if place not in exhausted:
                    merged[name] = place
                    break
        merged.update(self.s.assumed)
        return merged

    def plan_command(self, command: str) -> Optional[tuple[Plan, str]]:
        """Produce a validated plan, asking for help as needed.

        Returns (plan, possibly-rewritten command), or None after GIVE_UP.
        """
        working = command
        while True:
            outcome = decompose(working, self.s.ledger, self.s.backend, self._planning_assumptions())
            if isinstance(outcome, ParseFailure):
                if not self._handle_parse_failure(outcome):
                    return None
                working = self._last_rephrased or working
                continue

            hint = outcome.slots.get("person_hint")
            if hint is not None:
                canonical = {p.name.lower(): p.name for p in self.s.world.persons}
                hint = canonical.get(hint.lower(), hint)
            self.s.person_hint = hint
            grounded = ground(
                list(outcome.steps),
                self.s.ledger,
                self.s.backend,
                self.knowledge(),
                source_command=working,
            )
            if isinstance(grounded, GroundingFailure):
                resolution = self._handle_grounding_failure(grounded, working)
                if resolution is None:
                    return None
                working = resolution
                continue

            report = validate_plan(grounded, self.knowledge())
            self.s.emit(
                "plan",
                reason="replan" if self.s.replans_used else "initial",
                source_command=grounded.source_command,
                ledger_version=grounded.ledger_version,
                calls=[{"function": c.function, "args": c.args} for c in grounded.calls],
            )
            self.s.emit(
                "validation",
                verdict=report.verdict,
                defects=[
                    {"code": d.code, "call_index": d.call_index, "message": d.message}
                    for d in report.defects
                ],
            )
            if report.passed:
                return grounded, working

            # a generated-but-wrong plan counts as incorrect plan generation
            evidence = OperatorVerdictEvidence(
                feedback="; ".join(d.message for d in report.defects)
            )
            self.s.emit(
                "failure_event",
                mode=M2,
                evidence_kind="validation_failure",
                detail={"defects": sorted(report.codes())},
            )
            action = recover(
                M2,
                RecoveryContext(evidence=evidence, replans_used=self.s.replans_used),
                self.s.budget,
            )
            self._emit_recovery(M2, action)
            if action.kind == GIVE_UP:
                self._terminal(TERMINAL_GIVE_UP, "plan failed validation")
                return None
            new_ledger = ledger_mod.add_feedback(
                self.s.ledger, f"the previous plan was invalid: {evidence.feedback}"
            )
            self.s.bump_ledger(new_ledger, "add_feedback", "validation defects")
            self._count_replan()

    def _handle_parse_failure(self, failure: ParseFailure) -> bool:
        """M2: the command did not parse; ask the operator to rephrase."""
        evidence = ParseFailureEvidence(command=failure.command)
        mode = classify_failure(evidence)
        self.s.emit(
            "failure_event",
            mode=mode,
            evidence_kind=evidence.kind,
            detail={"command": failure.command, "code": failure.code},
        )
        action = recover(
            mode,
            RecoveryContext(
                evidence=evidence,
                replans_used=self.s.replans_used,
                operator_queries_used=self.s.operator_queries,
            ),
            self.s.budget,
        )
        self._emit_recovery(mode, action)
        if action.kind == GIVE_UP:
            self._terminal(TERMINAL_GIVE_UP, "could not understand the command")
            return False
        turn = dialogue.ask(
            self.s, "operator", "Could you rephrase the command?", purpose="help"
        )
        if turn.text is None:
            self._last_rephrased = None
            return True  # loop again; query budget will bottom out
        self._last_rephrased = turn.corrected_text
        new_ledger = ledger_mod.add_feedback(
            self.s.ledger, f"operator rephrased the command as: {turn.corrected_text}"
        )
        self.s.bump_ledger(new_ledger, "add_feedback", "command rephrase")
        self._emit_recovery(mode, recovery.RecoveryAction(UPDATE_LEDGER_AND_REPLAN, {}))
        self._count_replan()
        return True

    def _handle_grounding_failure(
        self, failure: GroundingFailure, command: str
    ) -> Optional[str]:
        """Returns the (possibly rewritten) command to retry with, or None."""
        evidence = GroundingFailureEvidence(
            step_index=failure.step_index,
            reason=failure.reason,
            term=failure.term,
            subject=failure.subject,
        )
        if failure.reason == AMBIGUOUS_STEP or failure.term is not None:
            # A named term we cannot ground: treat as mis-recognition (M2)
            # when the operator's rephrase resolves it.
            self.s.emit(
                "failure_event",
                mode=M2,
                evidence_kind=evidence.kind,
                detail={
                    "reason": failure.reason,
                    "term": failure.term,
                    "step_index": failure.step_index,
                    "evidence_class": classify_failure(evidence),
                },
            )
            return self._rephrase_unknown_term(failure, command)

        # No term at all: the information is genuinely missing (M1).
        self.s.emit(
            "failure_event",
            mode=M1,
            evidence_kind=evidence.kind,
            detail={
                "reason": failure.reason,
                "subject": failure.subject,
                "step_index": failure.step_index,
            },
        )
        if self._seek_location(evidence, failure.subject):
            return command
        return None

    def _rephrase_unknown_term(self, failure: GroundingFailure, command: str) -> Optional[str]:
        evidence = GroundingFailureEvidence(
            step_index=failure.step_index,
            reason=failure.reason,
            term=failure.term,
            subject=failure.subject,
        )
        while True:
            action = recover(
                M2,
                RecoveryContext(
                    evidence=evidence,
                    replans_used=self.s.replans_used,
                    operator_queries_used=self.s.operator_queries,
                ),
                self.s.budget,
            )
            self._emit_recovery(M2, action)
            if action.kind == GIVE_UP:
                self._terminal(TERMINAL_GIVE_UP, "could not resolve an unknown name")
                return None
            question = (
                f"Could you rephrase the location? I do not know '{failure.term}'."
                if failure.term
                else "Could you rephrase the command?"
            )
            turn = dialogue.ask(self.s, "operator", question, purpose="help")
            if turn.text is None:
                continue
            if failure.reason == "UNKNOWN_PERSON":
                kind, candidates = "person", self.knowledge().persons
            else:
                kind, candidates = "location", self.knowledge().locations | self.knowledge().rooms
            value = dialogue.extract_slot(self.s, turn.corrected_text, kind, candidates)
            if value == dialogue.NO_MATCH:
                continue
            rewritten = (
                re.sub(re.escape(failure.term), value, command, flags=re.IGNORECASE)
                if failure.term
                else command
            )
            new_ledger = ledger_mod.add_feedback(
                self.s.ledger, f"'{failure.term}' refers to the {value}"
            )
            new_ledger = ledger_mod.add_lexicon(new_ledger, locations=(value,))
            self.s.ledger = new_ledger
            self.s.emit(
                "ledger_update",
                update="add_feedback+add_lexicon",
                detail=f"resolved '{failure.term}' to '{value}'",
                version=new_ledger.version,
            )
            self._emit_recovery(
                M2, recovery.RecoveryAction(UPDATE_LEDGER_AND_REPLAN, {"resolved": value})
            )
            self._count_replan()
            return rewritten

    def _seek_location(self, evidence, subject: Optional[str]) -> bool:
        """M1 ladder: ask someone, then the model, then the operator."""
        while True:
            ctx = RecoveryContext(
                evidence=evidence,
                replans_used=self.s.replans_used,
                operator_queries_used=self.s.operator_queries,
                ask_location_attempts=self.s.asked_persons.count("__asked__" + (subject or "")),
                suggest_and_visit_done=self._suggest_done.get(subject, False),
                person_available=self._person_available(),
            )
            action = recover(M1, ctx, self.s.budget)
            self._emit_recovery(M1, action)
            if action.kind == GIVE_UP:
                self._terminal(TERMINAL_GIVE_UP, f"could not locate '{subject}'")
                return False

            if action.kind == ASK_LOCATION:
                self.s.asked_persons.append("__asked__" + (subject or ""))
                call = SkillCall(function="ask_location", args={"object": subject}, origin=-1)
                result = skills.execute_skill(self.s, call)
                if result.success:
                    place = result.observations["location"]
                    return self._assume(subject, place, source=result.observations["source"])
                continue

            if action.kind == SUGGEST_AND_VISIT:
                self._suggest_done[subject] = True
                place = self._suggest_place(subject)
                if place is not None:
                    return self._assume(subject, place, source="llm")
                continue

            if action.kind == ASK_OPERATOR_REPHRASE:
                turn = dialogue.ask(
                    self.s,
                    "operator",
                    f"Where should I look for the {subject}?",
                    purpose="help",
                )
                if turn.text is not None:
                    known_places = self.knowledge().locations | self.knowledge().rooms
                    value = dialogue.extract_slot(
                        self.s, turn.corrected_text, "location", known_places
                    )
                    if value != dialogue.NO_MATCH:
                        return self._assume(subject, value, source="operator")
                continue

    def _person_available(self) -> bool:
        if self.s.person_hint and self.s.world.person(self.s.person_hint) is not None:
            if "__hint_used__" not in self.s.asked_persons:
                return True
        return bool(self.s.world.persons_in(self.s.world.robot_room()))

    def _suggest_place(self, subject: Optional[str]) -> Optional[str]:
        world = self.s.world
        entity = world.object(subject) if subject else None
        names = world.known_names()
        payload = {
            "name": subject,
            "category": entity.category if entity else subject,
            "known_places": sorted(set(names["rooms"]) | set(names["locations"])),
            "exclude": list(self.s.exhausted.get(subject, [])),
        }
        request = BackendRequest(
            kind="SUGGEST_LOCATIONS",
            prompt=render_prompt(self.s.ledger, "SUGGEST_LOCATIONS", payload),
            payload=payload,
        )
        response = self.s.backend.respond(request)
        for place in response.result.get("locations", []):
            if place not in self.s.exhausted.get(subject, []):
                return place
        return None

    def _assume(self, subject: Optional[str], place: str, source: str) -> bool:
        if subject is None:
            return False
        self.s.assumed[subject] = place
        new_ledger = ledger_mod.add_environment_fact(
            self.s.ledger, f"the {subject} is likely at the {place} (per {source})"
        )
        self.s.bump_ledger(new_ledger, "add_environment_fact", f"{subject} -> {place}")
        if not self._replan_budget_left():
            self._terminal(TERMINAL_GIVE_UP, "replan budget exhausted")
            return False
        self._count_replan()
        return True

    # -- execution with M3 recovery ------------------------------------------------

    def execute_plan(self, plan: Plan, command: str) -> str:
        """Returns "done", "replan", "give_up", or "exhausted"."""
        self._retries = {}
        self.s.bindings.clear()
        i = 0
        while i < len(plan.calls):
            if self.s.tick >= self.tick_budget:
                self._terminal(TERMINAL_EXHAUSTED, "tick budget exhausted")
                return "exhausted"
            call = plan.calls[i]
            result = skills.execute_skill(self.s, call)
            if result.success:
                i += 1
                continue

            evidence = SkillFailureEvidence(
                function=call.function, reason=result.failure_reason or "", args=call.args
            )
            mode = classify_failure(evidence)
            self.s.emit(
                "failure_event",
                mode=mode,
                evidence_kind=evidence.kind,
                detail={
                    "function": call.function,
                    "reason": result.failure_reason,
                    "call_index": i,
                },
            )
            subject = call.args.get("object") or call.args.get("category")
            ctx = RecoveryContext(
                evidence=evidence,
                retries_done=self._retries.get(i, 0),
                replans_used=self.s.replans_used,
                operator_queries_used=self.s.operator_queries,
                alternative_available=self._alternative_available(call),
                person_available=self._person_available(),
            )
            action = recover(M3, ctx, self.s.budget)

            if action.kind == RETRY_SKILL:
                self._emit_recovery(M3, action)
                self._retries[i] = self._retries.get(i, 0) + 1
                continue

            if action.kind == ASK_LOCATION:
                # Exhausted retries searching for an object: now a missing-
                # information problem; record the escalation and seek help.
                searched = call.args.get("room") or self.s.world.robot_room()
                if subject:
                    self.s.mark_exhausted(subject, searched)
                m1_evidence = GroundingFailureEvidence(
                    step_index=-1, reason="UNKNOWN_LOCATION", term=None, subject=subject
                )
                self.s.emit(
                    "failure_event",
                    mode=M1,
                    evidence_kind=m1_evidence.kind,
                    detail={"reason": "OBJECT_LOCATION_UNKNOWN", "subject": subject,
                            "searched": searched, "escalated_from": M3},
                )
                if self._seek_location(m1_evidence, subject):
                    return "replan"
                return "give_up"

            if action.kind == ALTERNATIVE_STEPS:
                self._emit_recovery(M3, action)
                spliced = self._try_alternative_steps(plan, i, call, command)
                if spliced is None:
                    self._terminal(TERMINAL_GIVE_UP, "alternative steps failed")
                    return "give_up"
                plan = spliced
                self._retries = {}
                continue

            self._emit_recovery(M3, action)
            self._terminal(TERMINAL_GIVE_UP, action.params.get("reason", "skill failed"))
            return "give_up"

        return "done"

    def _alternative_available(self, call: SkillCall) -> bool:
        world = self.s.world
        room = world.room(world.robot_room())
        adjacent = sorted(room.connected) if room else []
        if call.function in ("find_person", "go_to_location"):
            return bool(adjacent)
        if call.function == "pick":
            return bool(world.persons_in(world.robot_room()))
        return False

    def _try_alternative_steps(
        self, plan: Plan, at: int, call: SkillCall, command: str
    ) -> Optional[Plan]:
        if not self._replan_budget_left():
            return None
        world = self.s.world
        room_name = world.robot_room()
        room = world.room(room_name)
        prompt_ctx = RecoveryPromptContext(
            task_content=task_content_of(command),
            failed_action=describe_failed_action(call),
            robot_at=f"in the {room_name}",
        )
        prompt = render_recovery_prompt(prompt_ctx)
        payload = {
            "failed": {"function": call.function, "args": call.args},
            "robot_room": room_name,
            "adjacent_rooms": sorted(room.connected) if room else [],
            "persons_nearby": [p.name for p in world.persons_in(room_name)],
            "task_content": prompt_ctx.task_content,
        }
        request = BackendRequest(kind="RECOVERY_STEPS", prompt=prompt, payload=payload)
        response = self.s.backend.respond(request)
        steps = response.result.get("steps", [])
        if not steps:
            return None
        plan_steps = [PlanStep(text=s, index=k) for k, s in enumerate(steps)]
        grounded = ground(
            plan_steps,
            self.s.ledger,
            self.s.backend,
            self.knowledge(),
            source_command=plan.source_command,
            position_hint=world.robot.at,
        )
        if isinstance(grounded, GroundingFailure):
            return None
        try:
            spliced = splice_plan(plan, at, list(grounded.calls), self.knowledge())
        except SpliceError:
            return None
        self._count_replan()
        self.s.emit(
            "plan",
            reason="splice",
            source_command=spliced.source_command,
            ledger_version=spliced.ledger_version,
            calls=[{"function": c.function, "args": c.args} for c in spliced.calls],
        )
        return spliced

    # -- verdict with per-plan M2 recovery ---------------------------------------------

    def verdict_phase(self, command: str) -> str:
        """Returns "success", "replan", or "give_up"."""
        verdict = dialogue.confirm_completion(self.s)
        if verdict.completed:
            return "success"
        evidence = OperatorVerdictEvidence(feedback=verdict.feedback)
        mode = classify_failure(evidence)
        self.s.emit(
            "failure_event",
            mode=mode,
            evidence_kind=evidence.kind,
            detail={"feedback": verdict.feedback},
        )
        action = recover(
            mode,
            RecoveryContext(evidence=evidence, replans_used=self.s.replans_used),
            self.s.budget,
        )
        self._emit_recovery(mode, action)
        if action.kind == GIVE_UP:
            self._terminal(TERMINAL_GIVE_UP, "operator rejected the result")
            return "give_up"
        self._apply_verdict_feedback(verdict.feedback or "")
        self._count_replan()
        return "replan"

    def _apply_verdict_feedback(self, feedback: str) -> None:
        """Turn appearance feedback into perception prompt entries; keep the
        verbatim line as planner feedback either way."""
        lowered = feedback.lower()
        new_ledger = ledger_mod.add_feedback(self.s.ledger, feedback)
        updates = ["add_feedback"]
        for obj in sorted(self.s.world.objects, key=lambda o: -len(o.name)):
            if obj.name not in lowered:
                continue
            best_adjectives = ""
            for match in re.finditer(
                r"(?:a|an|the|my) ((?:[\w-]+ )*?)" + re.escape(obj.name), lowered
            ):
                if len(match.group(1)) > len(best_adjectives):
                    best_adjectives = match.group(1)
            text = f"a photo of a {best_adjectives}{obj.name}"
            new_ledger = ledger_mod.add_perception_entry(
                new_ledger, PromptEntry(label=obj.name, text=text)
            )
            updates.append(f"add_perception_entry({obj.name})")
        self.s.ledger = new_ledger
        self.s.emit(
            "ledger_update",
            update="+".join(updates),
            detail="operator feedback",
            version=new_ledger.version,
        )

    # -- whole episode --------------------------------------------------------------

    def run(self, true_text: str, heard_text: Optional[str] = None) -> None:
        command = self.transcribe_command(true_text, heard_text)
        working = command
        while True:
            if self.s.tick >= self.tick_budget:
                self._terminal(TERMINAL_EXHAUSTED, "tick budget exhausted")
                return
            planned = self.plan_command(working)
            if planned is None:
                return
            plan, working = planned
            outcome = self.execute_plan(plan, working)
            if outcome in ("give_up", "exhausted"):
                return
            if outcome == "replan":
                continue
            result = self.verdict_phase(working)
            if result == "success":
                self._terminal(TERMINAL_SUCCESS)
                return
            if result == "give_up":
                return
