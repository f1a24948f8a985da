"""Deterministic simulated-household service-robot engine.

A promptable planning pipeline (speech -> steps -> skills) over a symbolic
household world, with self-recovery from missing information, bad plans,
and failed skills.  Everything is seeded and replayable.
"""

__version__ = "0.1.0"

from .backend import BackendRequest, BackendResponse, MockBackend, RemoteBackend, render_prompt
from .harness import (
    Scenario,
    ScoreRules,
    generate_command,
    load_bundled_scenario,
    load_scenario,
    run_episode,
    score_episode,
)
from .ledger import PromptLedger
from .planner import Plan, SkillCall, decompose, ground, validate_plan
from .trace import EpisodeTrace
from .world import WorldState, load_world

__all__ = [
    "BackendRequest",
    "BackendResponse",
    "EpisodeTrace",
    "MockBackend",
    "Plan",
    "PromptLedger",
    "RemoteBackend",
    "Scenario",
    "ScoreRules",
    "SkillCall",
    "WorldState",
    "decompose",
    "generate_command",
    "ground",
    "load_bundled_scenario",
    "load_scenario",
    "load_world",
    "render_prompt",
    "run_episode",
    "score_episode",
    "validate_plan",
    "__version__",
]
