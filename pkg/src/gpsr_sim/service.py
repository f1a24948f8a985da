"""Session API: live episodes driven by an operator over HTTP.

A live session runs the exact same episode loop as a scripted run; only the
operator channel differs.  Events are delivered by long-poll with a cursor,
so a client always sees a prefix of the final trace in trace order.
"""

from __future__ import annotations

import queue
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import replace
from pathlib import Path
from typing import Optional

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import HTMLResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .backend import MockBackend
from .harness import Scenario, ScoreRules, data_text, load_bundled_scenario, run_episode
from .ledger import load_ledger
from .speech import TranscriptionLexicon
from .trace import EpisodeTrace
from .world import load_world

TURN_DEADLINE_S = 60.0

_CANCEL = object()


class LiveChannel:
    """Blocks the episode thread on operator input with a turn deadline."""

    def __init__(self, deadline_s: float = TURN_DEADLINE_S):
        self.deadline_s = deadline_s
        self._turns: queue.Queue = queue.Queue()
        self._verdicts: queue.Queue = queue.Queue()
        self.waiting_for: Optional[str] = None  # "turn" | "verdict"
        self.question: Optional[str] = None
        self._lock = threading.Lock()

    def request_turn(self, question: str) -> Optional[str]:
        with self._lock:
            self.waiting_for, self.question = "turn", question
        try:
            item = self._turns.get(timeout=self.deadline_s)
        except queue.Empty:
            item = None
        finally:
            with self._lock:
                self.waiting_for, self.question = None, None
        return None if item is _CANCEL else item

    def request_verdict(self, question: str):
        with self._lock:
            self.waiting_for, self.question = "verdict", question
        try:
            item = self._verdicts.get(timeout=self.deadline_s)
        except queue.Empty:
            item = (None, None)
        finally:
            with self._lock:
                self.waiting_for, self.question = None, None
        return (None, None) if item is _CANCEL else item

    def post_turn(self, text: str) -> None:
        self._turns.put(text)

    def post_verdict(self, completed: bool, feedback: Optional[str]) -> None:
        self._verdicts.put((completed, feedback))

    def cancel(self) -> None:
        self._turns.put(_CANCEL)
        self._verdicts.put(_CANCEL)


class LiveSession:
    def __init__(self, session_id: str, scenario, trace_dir: Optional[Path], deadline_s: float):
        self.id = session_id
        self.scenario = scenario
        self.trace = EpisodeTrace(scenario=scenario.name, seed=scenario.seed)
        self.channel = LiveChannel(deadline_s)
        self.thread: Optional[threading.Thread] = None
        self.trace_dir = trace_dir
        self.finished = threading.Event()
        self.command_received = False

    @property
    def state(self) -> str:
        if self.finished.is_set():
            return "finished"
        if not self.command_received:
            return "awaiting_command"
        if self.channel.waiting_for is not None:
            return "awaiting_operator"
        if any(e["type"] == "skill_result" for e in self.trace.events):
            return "executing"
        return "planning"

    def start(self, command_text: str) -> None:
        self.command_received = True

        def work():
            try:
                run_episode(
                    self.scenario,
                    backend=MockBackend(),
                    rules=ScoreRules(),
                    operator_channel=self.channel,
                    command_override=(command_text, command_text),
                    trace_sink=self.trace,
                )
            finally:
                self.finished.set()
                if self.trace_dir is not None:
                    self.trace_dir.mkdir(parents=True, exist_ok=True)
                    path = self.trace_dir / f"{self.id}.trace.jsonl"
                    path.write_text(self.trace.to_jsonl())

        self.thread = threading.Thread(target=work, name=f"episode-{self.id}", daemon=True)
        self.thread.start()

    def shutdown(self) -> None:
        if self.thread is not None and self.thread.is_alive():
            self.channel.cancel()
            self.thread.join(timeout=5.0)


class CreateSessionBody(BaseModel):
    scenario: Optional[str] = None
    world: Optional[dict] = None


class UtteranceBody(BaseModel):
    text: str


class VerdictBody(BaseModel):
    completed: bool
    feedback: Optional[str] = None


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "detail": detail})


_PLACEHOLDER = """<!doctype html>
<html><head><title>operator console</title></head>
<body><p>The operator console bundle is not built. Build the frontend and
restart with <code>--console-dir frontend/dist</code>.</p></body></html>
"""


def build_app(trace_dir: str = "", console_dir: str = "", turn_deadline_s: float = TURN_DEADLINE_S) -> FastAPI:
    sessions: dict[str, LiveSession] = {}
    lock = threading.Lock()
    traces = Path(trace_dir) if trace_dir else None

    @asynccontextmanager
    async def lifespan(_app):
        yield
        with lock:
            for session in sessions.values():
                session.shutdown()

    app = FastAPI(title="gpsr-sim session service", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        if body.scenario:
            try:
                scenario = load_bundled_scenario(body.scenario)
            except FileNotFoundError:
                return _error(404, "not_found", f"no bundled scenario '{body.scenario}'")
        elif body.world:
            try:
                world = load_world(body.world)
            except Exception as exc:
                return _error(422, "bad_request", str(exc))
            names = world.known_names()
            ledger = load_ledger(data_text("ledgers/minimal.yaml"))
            lexicon = TranscriptionLexicon.build(
                objects=names["objects"], persons=names["persons"], locations=names["locations"] | names["rooms"]
            )
            ledger = replace(ledger, transcriber_lexicon=lexicon)
            scenario = Scenario(name="adhoc", world=world, ledger=ledger, true_text="")
        else:
            return _error(422, "bad_request", "provide 'scenario' or 'world'")
        session = LiveSession(uuid.uuid4().hex[:12], scenario, traces, turn_deadline_s)
        with lock:
            sessions[session.id] = session
        return {"id": session.id, "state": session.state}

    def _get(session_id: str) -> Optional[LiveSession]:
        with lock:
            return sessions.get(session_id)

    @app.post("/sessions/{session_id}/utterance")
    def post_utterance(session_id: str, body: UtteranceBody):
        session = _get(session_id)
        if session is None:
            return _error(404, "not_found", "no such session")
        state = session.state
        if state == "awaiting_command":
            session.start(body.text)
            return {"accepted": True, "state": session.state}
        if state == "awaiting_operator" and session.channel.waiting_for == "turn":
            session.channel.post_turn(body.text)
            return {"accepted": True, "state": "executing"}
        if state == "finished":
            return _error(409, "session_finished", "session already finished")
        return _error(409, "bad_state", f"cannot accept an utterance in state '{state}'")

    @app.post("/sessions/{session_id}/verdict")
    def post_verdict(session_id: str, body: VerdictBody):
        session = _get(session_id)
        if session is None:
            return _error(404, "not_found", "no such session")
        if session.state == "awaiting_operator" and session.channel.waiting_for == "verdict":
            session.channel.post_verdict(body.completed, body.feedback)
            return {"accepted": True}
        if session.state == "finished":
            return _error(409, "session_finished", "session already finished")
        return _error(409, "bad_state", "no verdict is being awaited")

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str, cursor: int = 0, wait_ms: int = 10000):
        session = _get(session_id)
        if session is None:
            return _error(404, "not_found", "no such session")
        deadline = time.monotonic() + wait_ms / 1000.0
        while True:
            events = session.trace.events[cursor:]
            if events or session.finished.is_set() or time.monotonic() >= deadline:
                question = session.channel.question
                return {
                    "events": events,
                    "next_cursor": cursor + len(events),
                    "state": session.state,
                    "question": question,
                    "question_kind": session.channel.waiting_for,
                }
            time.sleep(0.02)

    @app.get("/sessions/{session_id}/trace")
    def get_trace(session_id: str):
        session = _get(session_id)
        if session is None:
            return _error(404, "not_found", "no such session")
        return PlainTextResponse(session.trace.to_jsonl())

    @app.get("/sessions")
    def list_sessions():
        with lock:
            return {
                "sessions": [
                    {"id": s.id, "scenario": s.scenario.name, "state": s.state}
                    for s in sessions.values()
                ]
            }

    console = Path(console_dir) if console_dir else Path("frontend/dist")
    if console.is_dir():
        app.mount("/console", StaticFiles(directory=str(console), html=True), name="console")
    else:

        @app.get("/console")
        def console_placeholder():
            return HTMLResponse(_PLACEHOLDER)

    return app
