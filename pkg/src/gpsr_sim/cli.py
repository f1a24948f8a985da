"""Command-line interface.

Subcommands: run one scenario, run the bundled suite, generate commands,
plan a single command, replay a trace, or serve the live session API.
Exit code 0 means every expectation was met.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .backend import MockBackend, RemoteBackend, RemoteBackendConfig
from .harness import (
    ScoreRules,
    bundled_scenario_names,
    data_text,
    generate_command,
    load_bundled_scenario,
    load_scenario,
    replay_episode,
    run_scenario,
)
from .grammar import TEMPLATES
from .ledger import load_ledger
from .planner import (
    GroundingFailure,
    Knowledge,
    ParseFailure,
    Plan,
    SkillCall,
    decompose,
    ground,
    plan_to_document,
)
from .world import load_world


def _write_plan_documents(trace, directory: Path, stem: str) -> None:
    """Persist each plan the episode produced as a standalone plan document."""
    for i, event in enumerate(e for e in trace.events if e["type"] == "plan"):
        plan = Plan(
            calls=tuple(SkillCall(c["function"], dict(c["args"]), k) for k, c in enumerate(event["calls"])),
            source_command=event["source_command"],
            ledger_version=event["ledger_version"],
        )
        (directory / f"{stem}.plan{i}.json").write_text(plan_to_document(plan))


def _make_backend(args) -> object:
    if args.backend == "remote":
        if not args.remote_url:
            raise SystemExit("--remote-url is required with --backend remote")
        return RemoteBackend(
            RemoteBackendConfig(
                base_url=args.remote_url,
                model=args.remote_model,
                timeout_s=args.remote_timeout,
            )
        )
    return MockBackend()


def _load_scenario_arg(name_or_path: str):
    path = Path(name_or_path)
    if path.exists():
        return load_scenario(path.read_text())
    return load_bundled_scenario(name_or_path)


def _apply_asr_rate(scenario, rate):
    if rate is None:
        return scenario
    return replace(scenario, corruption_rate=rate, heard_text=None)


def cmd_run(args) -> int:
    scenario = _apply_asr_rate(_load_scenario_arg(args.scenario), args.asr_rate)
    rules = ScoreRules(tick_budget=args.tick_budget)
    trace, result = run_scenario(scenario, backend=_make_backend(args), rules=rules)
    if args.trace_out:
        out = Path(args.trace_out)
        out.write_text(trace.to_jsonl())
        _write_plan_documents(trace, out.parent, out.name.split(".")[0])
    print(
        f"{result.name}: status={result.status} modes={','.join(result.modes)} "
        f"score={result.score:g} recoveries={result.recoveries}"
    )
    for problem in result.problems:
        print(f"  expectation not met: {problem}")
    if args.verbose:
        for event in trace.events:
            print(json.dumps(event))
    return 0 if result.expected_ok else 1


def cmd_suite(args) -> int:
    rules = ScoreRules(tick_budget=args.tick_budget)
    backend = _make_backend(args)
    rows = []
    all_ok = True
    report = []
    for name in bundled_scenario_names():
        scenario = load_bundled_scenario(name)
        trace, result = run_scenario(scenario, backend=backend, rules=rules)
        if args.trace_dir:
            out = Path(args.trace_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{name}.trace.jsonl").write_text(trace.to_jsonl())
            _write_plan_documents(trace, out, name)
        rows.append(result)
        report.append(
            {
                "scenario": result.name,
                "status": result.status,
                "modes": list(result.modes),
                "score": result.score,
                "recoveries": result.recoveries,
                "expected_ok": result.expected_ok,
                "problems": list(result.problems),
            }
        )
        all_ok = all_ok and result.expected_ok

    width = max(len(r.name) for r in rows)
    print(f"{'scenario':<{width}}  {'status':<9} {'modes':<9} {'score':>6}  recoveries  ok")
    for r in rows:
        print(
            f"{r.name:<{width}}  {r.status:<9} {','.join(r.modes):<9} {r.score:>6.1f}  "
            f"{r.recoveries:>10}  {'yes' if r.expected_ok else 'NO'}"
        )
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n")
    return 0 if all_ok else 1


def cmd_generate(args) -> int:
    world = load_world(data_text("worlds/tablev.yaml"))
    for i in range(args.count):
        command, intent = generate_command(TEMPLATES, world, args.seed + i)
        if args.intents:
            print(json.dumps({"seed": args.seed + i, "command": command, "intent": intent}))
        else:
            print(command)
    return 0


def cmd_plan(args) -> int:
    world = load_world(Path(args.world).read_text() if args.world else data_text("worlds/tablev.yaml"))
    ledger = load_ledger(Path(args.ledger).read_text() if args.ledger else data_text("ledgers/tablev.yaml"))
    backend = _make_backend(args)
    outcome = decompose(args.command, ledger, backend)
    if isinstance(outcome, ParseFailure):
        print("CANNOT_PARSE", file=sys.stderr)
        return 1
    grounded = ground(
        list(outcome.steps),
        ledger,
        backend,
        Knowledge.from_world(world),
        source_command=args.command,
    )
    if isinstance(grounded, GroundingFailure):
        print(
            f"grounding failure at step {grounded.step_index}: {grounded.reason}"
            + (f" ({grounded.term})" if grounded.term else ""),
            file=sys.stderr,
        )
        return 1
    sys.stdout.write(plan_to_document(grounded))
    return 0


def cmd_replay(args) -> int:
    text = Path(args.trace).read_text()
    original, fresh, identical = replay_episode(text)
    if identical:
        print(f"replay of '{original.scenario}': identical ({len(fresh.events)} events)")
        return 0
    print(f"replay of '{original.scenario}': DIVERGED", file=sys.stderr)
    return 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    app = build_app(trace_dir=args.trace_dir, console_dir=args.console_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpsr-sim")
    parser.add_argument("--backend", choices=["mock", "remote"], default="mock")
    parser.add_argument("--remote-url", default="")
    parser.add_argument("--remote-model", default="gpt-4")
    parser.add_argument("--remote-timeout", type=float, default=30.0)
    sub = parser.add_subparsers(dest="command_name", required=True)

    p = sub.add_parser("run", help="run one scenario (bundled name or file path)")
    p.add_argument("scenario")
    p.add_argument("--asr-rate", type=float, default=None, help="corruption probability")
    p.add_argument("--tick-budget", type=int, default=200)
    p.add_argument("--trace-out", default="")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="run all bundled scenarios")
    p.add_argument("--tick-budget", type=int, default=200)
    p.add_argument("--trace-dir", default="")
    p.add_argument("--report", default="", help="write a JSON results report")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("generate", help="generate benchmark commands")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--intents", action="store_true", help="emit JSON with ground-truth intents")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("plan", help="plan a single command and print the plan document")
    p.add_argument("--command", required=True)
    p.add_argument("--world", default="")
    p.add_argument("--ledger", default="")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("replay", help="re-run a trace's scenario and compare byte-for-byte")
    p.add_argument("trace")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="start the live session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--trace-dir", default="traces")
    p.add_argument("--console-dir", default="")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
