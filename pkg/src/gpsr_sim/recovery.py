"""Self-recovery policy: classify failures into the three modes and pick the
next recovery action.

Mode M1 is missing environment information, M2 is a wrong or unparseable
plan, M3 is skill-execution failure.  The policy ladder per mode follows a
fixed order, every rung is budget-gated, and exhaustion always ends in
GIVE_UP, so episodes provably terminate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .planner import Knowledge, Plan, SkillCall, validate_plan
from .session import RecoveryBudget

M1 = "M1"
M2 = "M2"
M3 = "M3"

ASK_OPERATOR_REPHRASE = "ASK_OPERATOR_REPHRASE"
ASK_LOCATION = "ASK_LOCATION"
SUGGEST_AND_VISIT = "SUGGEST_AND_VISIT"
RETRY_SKILL = "RETRY_SKILL"
ALTERNATIVE_STEPS = "ALTERNATIVE_STEPS"
UPDATE_LEDGER_AND_REPLAN = "UPDATE_LEDGER_AND_REPLAN"
GIVE_UP = "GIVE_UP"

_FIND_OBJECT_SKILLS = ("find_concrete_name_objects", "find_category_name_objects")


# -- evidence ----------------------------------------------------------------


@dataclass(frozen=True)
class GroundingFailureEvidence:
    step_index: int
    reason: str
    term: Optional[str] = None
    subject: Optional[str] = None
    kind: str = "grounding_failure"


@dataclass(frozen=True)
class ParseFailureEvidence:
    command: str
    kind: str = "parse_failure"


@dataclass(frozen=True)
class OperatorVerdictEvidence:
    feedback: Optional[str]
    kind: str = "operator_verdict"


@dataclass(frozen=True)
class SkillFailureEvidence:
    function: str
    reason: str
    args: dict = field(default_factory=dict)
    kind: str = "skill_failure"


Evidence = Union[
    GroundingFailureEvidence, ParseFailureEvidence, OperatorVerdictEvidence, SkillFailureEvidence
]


def classify_failure(evidence: Evidence) -> str:
    """Raw evidence-class mode.

    Note the episode engine attributes unknown-NAME grounding failures to M2
    when an operator rephrase resolves the term (a recognition error rather
    than genuinely missing information); this function reports the evidence
    class alone.
    """
    if evidence.kind == "grounding_failure":
        return M1
    if evidence.kind in ("parse_failure", "operator_verdict"):
        return M2
    if evidence.kind == "skill_failure":
        return M3
    raise ValueError(f"unknown evidence kind '{evidence.kind}'")


# -- policy -------------------------------------------------------------------


@dataclass(frozen=True)
class RecoveryAction:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RecoveryContext:
    evidence: Evidence
    retries_done: int = 0
    replans_used: int = 0
    operator_queries_used: int = 0
    ask_location_attempts: int = 0
    suggest_and_visit_done: bool = False
    alternative_available: bool = False
    person_available: bool = False


def recover(mode: str, ctx: RecoveryContext, budget: RecoveryBudget) -> RecoveryAction:
    """Next action under the per-mode policy ladder; budgets force GIVE_UP."""
    queries_left = ctx.operator_queries_used < budget.max_operator_queries
    replans_left = ctx.replans_used < budget.max_replans

    if mode == M1:
        if ctx.ask_location_attempts == 0 and (ctx.person_available or queries_left):
            return RecoveryAction(ASK_LOCATION, {"subject": _subject(ctx)})
        if not ctx.suggest_and_visit_done and replans_left:
            return RecoveryAction(SUGGEST_AND_VISIT, {"subject": _subject(ctx)})
        if queries_left:
            return RecoveryAction(ASK_OPERATOR_REPHRASE, {"about": _subject(ctx)})
        return RecoveryAction(GIVE_UP, {"reason": "information budget exhausted"})

    if mode == M2:
        if ctx.evidence.kind == "operator_verdict":
            if replans_left:
                return RecoveryAction(
                    UPDATE_LEDGER_AND_REPLAN, {"feedback": ctx.evidence.feedback}
                )
            return RecoveryAction(GIVE_UP, {"reason": "replan budget exhausted"})
        if queries_left:
            return RecoveryAction(ASK_OPERATOR_REPHRASE, {"about": _term(ctx)})
        return RecoveryAction(GIVE_UP, {"reason": "operator query budget exhausted"})

    if mode == M3:
        if ctx.retries_done < budget.max_skill_retries:
            return RecoveryAction(RETRY_SKILL, {"attempt": ctx.retries_done + 1})
        evidence = ctx.evidence
        if (
            evidence.kind == "skill_failure"
            and evidence.function in _FIND_OBJECT_SKILLS
            and evidence.reason == "NOT_FOUND"
        ):
            # the searched place is exhausted: this is now missing information
            return RecoveryAction(ASK_LOCATION, {"subject": _subject(ctx), "escalated_from": M3})
        if ctx.alternative_available and replans_left:
            return RecoveryAction(ALTERNATIVE_STEPS, {})
        return RecoveryAction(GIVE_UP, {"reason": "no recovery left for failed skill"})

    raise ValueError(f"unknown mode '{mode}'")


def _subject(ctx: RecoveryContext) -> Optional[str]:
    evidence = ctx.evidence
    if evidence.kind == "grounding_failure":
        return evidence.subject
    if evidence.kind == "skill_failure":
        return evidence.args.get("object") or evidence.args.get("category")
    return None


def _term(ctx: RecoveryContext) -> Optional[str]:
    evidence = ctx.evidence
    if evidence.kind == "grounding_failure":
        return evidence.term
    if evidence.kind == "parse_failure":
        return evidence.command
    return None


# -- recovery prompt -----------------------------------------------------------


@dataclass(frozen=True)
class RecoveryPromptContext:
    task_content: str
    failed_action: str
    robot_at: str

    def __post_init__(self):
        if not (self.task_content and self.failed_action and self.robot_at):
            raise ValueError("recovery prompt context fields must be non-empty")


def render_recovery_prompt(ctx: RecoveryPromptContext) -> str:
    return (
        f"The robot is supposed to {ctx.task_content}. "
        f"The robot tried to {ctx.failed_action} {ctx.robot_at}, but failed. "
        f"What should the robot do next?"
    )


# -- plan splicing ---------------------------------------------------------------


class SpliceError(ValueError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


def splice_plan(
    plan: Plan, at: int, replacement: list[SkillCall], known: Knowledge
) -> Plan:
    """Replace calls[at] with `replacement` and revalidate the result."""
    if not 0 <= at < len(plan.calls):
        raise SpliceError(f"splice index {at} out of range")
    calls = plan.calls[:at] + tuple(replacement) + plan.calls[at + 1 :]
    spliced = Plan(
        calls=calls, source_command=plan.source_command, ledger_version=plan.ledger_version
    )
    report = validate_plan(spliced, known)
    if not report.passed:
        raise SpliceError(
            "spliced plan fails validation: "
            + "; ".join(f"{d.code}@{d.call_index}" for d in report.defects),
            report=report,
        )
    return spliced
