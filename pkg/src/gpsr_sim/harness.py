"""Scenario definition and execution, seeded command generation, scoring.

Scenario files are YAML documents in the same family as world documents.
Each bundles a world (by reference plus overrides), a prompt-ledger fixture,
the spoken command, operator/person scripts, failure injection, and the
expected outcome used by the CLI exit code.
"""

from __future__ import annotations

import io
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import yaml

from .backend import MockBackend
from .dialogue import OperatorScript, ScriptedChannel
from .episode import EpisodeEngine
from .errors import SchemaError
from .grammar import CommandTemplate, parse_command
from .ledger import PromptLedger, load_ledger
from .perception import PerceptionNoise
from .session import EpisodeSession, RecordingBackend, RecoveryBudget
from .skills import FailureInjection
from .speech import ConfusionTable
from .trace import EpisodeTrace, TERMINAL_SUCCESS, match_sequence
from .world import WorldState, load_world

SCENARIO_SCHEMA_VERSION = 1

_DATA = resources.files("gpsr_sim").joinpath("data")


def data_text(relative: str) -> str:
    return _DATA.joinpath(relative).read_text()


# ---------------------------------------------------------------------------
# Score rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreRules:
    transcription_points: int = 10
    completion_points: int = 100
    help_penalty: float = 0.5
    tick_budget: int = 200

    def __post_init__(self):
        if not 0 < self.help_penalty <= 1:
            raise ValueError("help_penalty must be in (0, 1]")


@dataclass(frozen=True)
class ScoreSheet:
    transcription: float
    completion: float
    help_events: int
    total: float
    items: tuple[str, ...]


def score_episode(trace: EpisodeTrace, rules: ScoreRules) -> ScoreSheet:
    if trace.terminal_status() is None:
        raise ValueError("cannot score a non-terminal trace")
    items: list[str] = []

    transcription = 0.0
    transcripts = trace.of_type("transcript")
    if transcripts:
        event = transcripts[0]
        text = " ".join(event["transcript"].lower().split())
        expected = event.get("expected_slots", [])
        if expected and all(slot.lower() in text for slot in expected):
            transcription = float(rules.transcription_points)
            items.append(f"transcription: all {len(expected)} slots recovered (+{transcription:g})")
        elif expected:
            missing = [s for s in expected if s.lower() not in text]
            items.append(f"transcription: missing slots {missing} (+0)")
        else:
            items.append("transcription: no expected slots configured (+0)")

    helps = trace.help_events()
    completion = 0.0
    if trace.terminal_status() == TERMINAL_SUCCESS:
        completion = rules.completion_points * (rules.help_penalty**helps)
        items.append(
            f"completion: success with {helps} operator-help request(s) (+{completion:g})"
        )
    else:
        items.append(f"completion: terminal {trace.terminal_status()} (+0)")

    return ScoreSheet(
        transcription=transcription,
        completion=completion,
        help_events=helps,
        total=transcription + completion,
        items=tuple(items),
    )


# ---------------------------------------------------------------------------
# Scenario documents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expectation:
    completion: bool = True
    modes_exercised: frozenset[str] = frozenset()
    min_recoveries: int = 0
    trace_contains: tuple[dict, ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    world: WorldState
    ledger: PromptLedger
    true_text: str
    heard_text: Optional[str] = None
    corruption_rate: float = 0.0
    corruption_seed: int = 0
    seed: int = 0
    expected_slots: tuple[str, ...] = ()
    operator_script: OperatorScript = field(default_factory=OperatorScript)
    person_scripts: dict = field(default_factory=dict)
    injection_config: tuple = ()
    noise: PerceptionNoise = PerceptionNoise()
    budget: RecoveryBudget = RecoveryBudget()
    expected: Expectation = Expectation()


_SCENARIO_KEYS = {
    "schema_version",
    "name",
    "world",
    "ledger",
    "seed",
    "command",
    "expected_slots",
    "operator_script",
    "person_scripts",
    "injection",
    "budgets",
    "expected",
}


def _load_world_section(raw: dict) -> WorldState:
    if "ref" in raw:
        text = data_text(raw["ref"])
        base = yaml.safe_load(io.StringIO(text))
    elif "inline" in raw:
        base = raw["inline"]
    else:
        raise SchemaError("scenario world: needs 'ref' or 'inline'")
    for obj in base.get("objects") or ():
        override = (raw.get("place_objects") or {}).get(obj["name"])
        if override is not None:
            obj["place"] = override
    if raw.get("persons") is not None:
        base["persons"] = raw["persons"]
    if raw.get("semantic_map") is not None:
        base["semantic_map"] = raw["semantic_map"]
    return load_world(base)


def load_scenario(doc: str | dict) -> Scenario:
    data = yaml.safe_load(io.StringIO(doc)) if isinstance(doc, str) else doc
    if not isinstance(data, dict):
        raise SchemaError("scenario document: expected a mapping")
    unknown = set(data) - _SCENARIO_KEYS
    if unknown:
        raise SchemaError(f"scenario document: unknown field '{sorted(unknown)[0]}'")
    if data.get("schema_version") != SCENARIO_SCHEMA_VERSION:
        raise SchemaError("scenario document: bad or missing schema_version")

    world = _load_world_section(data.get("world") or {})
    ledger_raw = data.get("ledger") or {}
    if isinstance(ledger_raw, str):
        ledger = load_ledger(data_text(ledger_raw))
    elif "ref" in ledger_raw:
        ledger = load_ledger(data_text(ledger_raw["ref"]))
    else:
        ledger = load_ledger(ledger_raw)

    command = data.get("command") or {}
    if "true_text" not in command:
        raise SchemaError("scenario command: missing true_text")

    scripts = {
        name: OperatorScript.from_config(turns)
        for name, turns in sorted((data.get("person_scripts") or {}).items())
    }

    budgets_raw = data.get("budgets") or {}
    budget = RecoveryBudget(
        max_skill_retries=int(budgets_raw.get("max_skill_retries", 2)),
        max_replans=int(budgets_raw.get("max_replans", 2)),
        max_operator_queries=int(budgets_raw.get("max_operator_queries", 3)),
    )

    injection_raw = data.get("injection") or {}
    perception_raw = injection_raw.get("perception") or {}
    noise = PerceptionNoise(
        drop_objects=frozenset(perception_raw.get("drop_objects") or ()),
        hide_persons=frozenset(perception_raw.get("hide_persons") or ()),
        distractor_tags=tuple(
            sorted(
                (name, tuple(tags))
                for name, tags in (perception_raw.get("distractor_tags") or {}).items()
            )
        ),
    )

    expected_raw = data.get("expected") or {}
    expected = Expectation(
        completion=bool(expected_raw.get("completion", True)),
        modes_exercised=frozenset(expected_raw.get("modes_exercised") or ()),
        min_recoveries=int(expected_raw.get("min_recoveries", 0)),
        trace_contains=tuple(expected_raw.get("trace_contains") or ()),
    )

    corruption = command.get("corruption") or {}
    return Scenario(
        name=data.get("name", "unnamed"),
        world=world,
        ledger=ledger,
        true_text=command["true_text"],
        heard_text=command.get("heard_text"),
        corruption_rate=float(corruption.get("rate", 0.0)),
        corruption_seed=int(corruption.get("seed", 0)),
        seed=int(data.get("seed", 0)),
        expected_slots=tuple(data.get("expected_slots") or ()),
        operator_script=OperatorScript.from_config(data.get("operator_script")),
        person_scripts=scripts,
        injection_config=tuple(injection_raw.get("skills") or ()),
        noise=noise,
        budget=budget,
        expected=expected,
    )


def load_bundled_scenario(name: str) -> Scenario:
    return load_scenario(data_text(f"scenarios/{name}.yaml"))


def bundled_scenario_names() -> list[str]:
    root = _DATA.joinpath("scenarios")
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_confusion_table() -> ConfusionTable:
    data = yaml.safe_load(data_text("confusion.yaml"))
    return ConfusionTable.from_dict(data["entries"])


# ---------------------------------------------------------------------------
# Command generation
# ---------------------------------------------------------------------------


def generate_command(
    templates: tuple[CommandTemplate, ...],
    world: WorldState,
    seed: int,
) -> tuple[str, dict]:
    """Seeded command from the template set plus its ground-truth intent."""
    if not templates:
        raise ValueError("template set must be non-empty")
    rng = random.Random(seed)

    objects = sorted(o.name for o in world.objects)
    categories = sorted({o.category for o in world.objects})
    placements = sorted(
        l.name for l in world.locations if l.kind in ("surface", "seat") and l.name != "operator"
    )
    rooms = sorted(r.name for r in world.rooms)
    persons = sorted(p.name for p in world.persons)
    doors = sorted(l.name for l in world.locations if l.kind == "door")
    pools = {
        "object": objects,
        "category": categories,
        "placement": placements,
        "placement2": placements,
        "room": rooms,
        "person": persons,
        "door": doors,
    }

    usable = [t for t in templates if all(pools.get(p) for p in t.placeholders)]
    if not usable:
        missing = sorted({p for t in templates for p in t.placeholders if not pools.get(p)})
        raise ValueError(f"no template is resolvable; missing entity kinds: {missing}")
    template = rng.choice(usable)

    slots: dict = {}
    for placeholder in template.placeholders:
        pool = pools[placeholder]
        if placeholder == "placement2" and slots.get("placement") in pool and len(pool) > 1:
            pool = [p for p in pool if p != slots.get("placement")]
        slots[placeholder] = rng.choice(pool)
    command = template.surface.format(**slots)
    intent = {"template": template.name, "slots": dict(sorted(slots.items()))}
    if parse_command(command) is None:
        raise AssertionError(f"generated command is not parseable: {command!r}")
    return command, intent


# ---------------------------------------------------------------------------
# Episode runner
# ---------------------------------------------------------------------------


def run_episode(
    scenario: Scenario,
    backend=None,
    rules: ScoreRules = ScoreRules(),
    operator_channel=None,
    command_override: Optional[tuple[str, Optional[str]]] = None,
    trace_sink: Optional[EpisodeTrace] = None,
) -> EpisodeTrace:
    backend = backend if backend is not None else MockBackend()
    trace = trace_sink if trace_sink is not None else EpisodeTrace()
    trace.scenario = scenario.name
    trace.seed = scenario.seed
    trace.backend = getattr(backend, "name", "backend")
    session = EpisodeSession(
        world=scenario.world,
        ledger=scenario.ledger,
        trace=trace,
        noise=scenario.noise,
        injection=FailureInjection.from_config(list(scenario.injection_config)),
        operator=operator_channel or ScriptedChannel(scenario.operator_script),
        person_scripts=dict(scenario.person_scripts),
        budget=scenario.budget,
        seed=scenario.seed,
    )
    session.backend = RecordingBackend(backend, session)
    scenario.operator_script.reset()
    for script in scenario.person_scripts.values():
        script.reset()

    engine = EpisodeEngine(
        session=session,
        tick_budget=rules.tick_budget,
        expected_slots=scenario.expected_slots,
        confusion=load_confusion_table() if scenario.corruption_rate > 0 else None,
        corruption_seed=scenario.corruption_seed,
        corruption_rate=scenario.corruption_rate,
    )
    true_text, heard_text = (
        command_override if command_override is not None else (scenario.true_text, scenario.heard_text)
    )
    engine.run(true_text, heard_text)

    sheet = score_episode(trace, rules)
    session.emit(
        "score",
        transcription=sheet.transcription,
        completion=sheet.completion,
        help_events=sheet.help_events,
        total=sheet.total,
        items=list(sheet.items),
    )
    return trace


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    status: str
    modes: tuple[str, ...]
    score: float
    recoveries: int
    expected_ok: bool
    problems: tuple[str, ...]


def check_expectations(scenario: Scenario, trace: EpisodeTrace) -> list[str]:
    problems: list[str] = []
    status = trace.terminal_status()
    if scenario.expected.completion and status != TERMINAL_SUCCESS:
        problems.append(f"expected success, got {status}")
    if not scenario.expected.completion and status == TERMINAL_SUCCESS:
        problems.append("expected non-completion, got success")
    if scenario.expected.modes_exercised:
        actual = trace.modes_exercised()
        if actual != set(scenario.expected.modes_exercised):
            problems.append(
                f"modes {sorted(actual)} != expected {sorted(scenario.expected.modes_exercised)}"
            )
    if len(trace.recovery_actions()) < scenario.expected.min_recoveries:
        problems.append("fewer recovery actions than expected")
    if scenario.expected.trace_contains:
        ok, idx = match_sequence(trace.events, list(scenario.expected.trace_contains))
        if not ok:
            problems.append(f"trace matcher {idx} not satisfied")
    return problems


def run_scenario(scenario: Scenario, backend=None, rules: ScoreRules = ScoreRules()) -> tuple[EpisodeTrace, ScenarioResult]:
    trace = run_episode(scenario, backend=backend, rules=rules)
    problems = check_expectations(scenario, trace)
    score_events = trace.of_type("score")
    result = ScenarioResult(
        name=scenario.name,
        status=trace.terminal_status() or "unknown",
        modes=tuple(sorted(trace.modes_exercised())),
        score=score_events[-1]["total"] if score_events else 0.0,
        recoveries=len(trace.recovery_actions()),
        expected_ok=not problems,
        problems=tuple(problems),
    )
    return trace, result


def replay_episode(trace_text: str) -> tuple[EpisodeTrace, EpisodeTrace, bool]:
    """Re-run the scenario recorded in a trace and compare byte-for-byte."""
    original = EpisodeTrace.from_jsonl(trace_text)
    scenario = load_bundled_scenario(original.scenario)
    fresh = run_episode(scenario)
    return original, fresh, original.to_jsonl() == fresh.to_jsonl()
