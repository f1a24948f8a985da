"""The system's mutable prompt state.

One object collects everything self-recovery is allowed to update: the
transcriber lexicon, the planner preamble/examples/feedback, and the
perception prompt entries.  Updates are copy-on-write and version-bumping;
nothing is ever removed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import yaml

from .errors import SchemaError
from .perception import PromptEntry
from .speech import TranscriptionLexicon

LEDGER_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class WorkedExample:
    command: str
    steps: tuple[str, ...]
    plan: str = ""  # serialized plan document, optional


@dataclass(frozen=True)
class PromptLedger:
    transcriber_lexicon: TranscriptionLexicon = TranscriptionLexicon()
    planner_preamble: str = ""
    environment_facts: tuple[str, ...] = ()
    worked_examples: tuple[WorkedExample, ...] = ()
    feedback_lines: tuple[str, ...] = ()
    perception_entries: tuple[PromptEntry, ...] = ()
    version: int = 0

    def effective_perception_entries(self) -> list[PromptEntry]:
        """Latest entry per label: a newer prompt for a label supersedes the
        older text, while the ledger itself keeps the full history."""
        latest: dict[str, PromptEntry] = {}
        order: list[str] = []
        for entry in self.perception_entries:
            if entry.label not in latest:
                order.append(entry.label)
            latest[entry.label] = entry
        return [latest[label] for label in order]


# -- updates ----------------------------------------------------------------


def add_lexicon(ledger: PromptLedger, *, objects=(), persons=(), locations=()) -> PromptLedger:
    lex = ledger.transcriber_lexicon
    merged = TranscriptionLexicon.build(
        objects=set(lex.object_names) | set(objects),
        persons=set(lex.person_names) | set(persons),
        locations=set(lex.location_names) | set(locations),
    )
    return replace(ledger, transcriber_lexicon=merged, version=ledger.version + 1)


def add_feedback(ledger: PromptLedger, line: str) -> PromptLedger:
    if not line:
        raise ValueError("feedback line must be non-empty")
    return replace(ledger, feedback_lines=ledger.feedback_lines + (line,), version=ledger.version + 1)


def add_environment_fact(ledger: PromptLedger, line: str) -> PromptLedger:
    if not line:
        raise ValueError("environment fact must be non-empty")
    return replace(
        ledger, environment_facts=ledger.environment_facts + (line,), version=ledger.version + 1
    )


def add_perception_entry(ledger: PromptLedger, entry: PromptEntry) -> PromptLedger:
    return replace(
        ledger, perception_entries=ledger.perception_entries + (entry,), version=ledger.version + 1
    )


# -- document io --------------------------------------------------------------

_LEDGER_KEYS = {
    "schema_version",
    "lexicon",
    "planner_preamble",
    "environment_facts",
    "worked_examples",
    "feedback_lines",
    "perception_entries",
    "version",
}


def load_ledger(doc: str | dict) -> PromptLedger:
    data = yaml.safe_load(io.StringIO(doc)) if isinstance(doc, str) else doc
    if not isinstance(data, dict):
        raise SchemaError("ledger document: expected a mapping at top level")
    unknown = set(data) - _LEDGER_KEYS
    if unknown:
        raise SchemaError(f"ledger document: unknown field '{sorted(unknown)[0]}'")
    if data.get("schema_version") != LEDGER_SCHEMA_VERSION:
        raise SchemaError("ledger document: bad or missing schema_version")
    lex_raw = data.get("lexicon") or {}
    lexicon = TranscriptionLexicon.build(
        objects=set(lex_raw.get("objects") or ()),
        persons=set(lex_raw.get("persons") or ()),
        locations=set(lex_raw.get("locations") or ()),
    )
    examples = tuple(
        WorkedExample(command=e["command"], steps=tuple(e["steps"]), plan=e.get("plan", ""))
        for e in (data.get("worked_examples") or ())
    )
    entries = tuple(
        PromptEntry(label=e["label"], text=e["text"])
        for e in (data.get("perception_entries") or ())
    )
    return PromptLedger(
        transcriber_lexicon=lexicon,
        planner_preamble=data.get("planner_preamble", ""),
        environment_facts=tuple(data.get("environment_facts") or ()),
        worked_examples=examples,
        feedback_lines=tuple(data.get("feedback_lines") or ()),
        perception_entries=entries,
        version=int(data.get("version", 0)),
    )


def dump_ledger(ledger: PromptLedger) -> str:
    data = {
        "schema_version": LEDGER_SCHEMA_VERSION,
        "lexicon": {
            "objects": sorted(ledger.transcriber_lexicon.object_names),
            "persons": sorted(ledger.transcriber_lexicon.person_names),
            "locations": sorted(ledger.transcriber_lexicon.location_names),
        },
        "planner_preamble": ledger.planner_preamble,
        "environment_facts": list(ledger.environment_facts),
        "worked_examples": [
            {
                "command": e.command,
                "steps": list(e.steps),
                **({"plan": e.plan} if e.plan else {}),
            }
            for e in ledger.worked_examples
        ],
        "feedback_lines": list(ledger.feedback_lines),
        "perception_entries": [
            {"label": e.label, "text": e.text} for e in ledger.perception_entries
        ],
        "version": ledger.version,
    }
    return yaml.safe_dump(data, sort_keys=False)
