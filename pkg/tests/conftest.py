from __future__ import annotations

import pytest

from gpsr_sim.backend import MockBackend
from gpsr_sim.dialogue import OperatorScript, ScriptedChannel
from gpsr_sim.harness import data_text
from gpsr_sim.ledger import load_ledger
from gpsr_sim.perception import PerceptionNoise
from gpsr_sim.session import EpisodeSession, RecordingBackend
from gpsr_sim.skills import FailureInjection
from gpsr_sim.trace import EpisodeTrace
from gpsr_sim.world import load_world


@pytest.fixture
def tablev_world():
    return load_world(data_text("worlds/tablev.yaml"))


@pytest.fixture
def tablev_ledger():
    return load_ledger(data_text("ledgers/tablev.yaml"))


def make_session(
    world,
    ledger,
    operator_script=None,
    person_scripts=None,
    injection=None,
    noise=None,
):
    """Assembled episode session around the mock backend, for direct skill tests."""
    trace = EpisodeTrace(scenario="test", seed=0)
    session = EpisodeSession(
        world=world,
        ledger=ledger,
        trace=trace,
        noise=noise or PerceptionNoise(),
        injection=injection or FailureInjection(),
        operator=ScriptedChannel(operator_script or OperatorScript()),
        person_scripts=person_scripts or {},
    )
    session.backend = RecordingBackend(MockBackend(), session)
    return session


@pytest.fixture
def session(tablev_world, tablev_ledger):
    return make_session(tablev_world, tablev_ledger)
