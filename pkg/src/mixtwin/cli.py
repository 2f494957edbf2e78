"""Operator command line: run experiments, serve the coordinator, spawn agents.

Every flag can also come from an MCCT_-prefixed environment variable
(MCCT_SEED, MCCT_MODE, MCCT_OUT, MCCT_LISTEN, MCCT_CONNECT, MCCT_ID,
MCCT_KIND, MCCT_TIME_SCALE). Exit codes: 0 success, 1 runtime failure,
2 validation or input error.
"""

from __future__ import annotations

import argparse
import asyncio
import os
import sys
import time
from pathlib import Path


def _env(name: str, default=None):
    return os.environ.get(f"MCCT_{name}", default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixtwin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario to completion and write telemetry")
    run.add_argument("scenario", help="scenario JSON path or preset name")
    run.add_argument("--seed", type=int, default=_env("SEED"))
    run.add_argument("--mode", choices=["lockstep", "realtime"], default=_env("MODE"))
    run.add_argument("--out", default=_env("OUT", "out"))

    serve = sub.add_parser("serve", help="start the coordinator service")
    serve.add_argument("scenario", help="scenario JSON path or preset name")
    serve.add_argument("--listen", default=_env("LISTEN", "127.0.0.1:8700"))
    serve.add_argument("--seed", type=int, default=_env("SEED"))
    serve.add_argument("--time-scale", type=float, default=float(_env("TIME_SCALE", 1.0)))
    serve.add_argument("--out", default=_env("OUT", "out"))

    agent = sub.add_parser("agent", help="run one vehicle agent against a coordinator")
    agent.add_argument("--connect", default=_env("CONNECT", "http://127.0.0.1:8700"))
    agent.add_argument("--id", dest="vehicle_id", default=_env("ID"), required=_env("ID") is None)
    agent.add_argument(
        "--kind", choices=["virtual", "physical", "hdv-script"], default=_env("KIND")
    )

    plot = sub.add_parser("plot", help="render velocity/gap figures from telemetry")
    plot.add_argument("telemetry", help="telemetry .jsonl path")
    plot.add_argument("--out", default=_env("OUT", "out"))

    metrics = sub.add_parser("metrics", help="print the metrics table of a telemetry file")
    metrics.add_argument("telemetry", help="telemetry .jsonl path")
    return parser


def _load(scenario_arg: str, seed):
    from .scenario import PRESET_NAMES, load_preset, load_scenario, parse_scenario

    if scenario_arg in PRESET_NAMES:
        doc = load_preset(scenario_arg)
        if seed is not None:
            doc["seed"] = int(seed)
        return parse_scenario(doc)
    path = Path(scenario_arg)
    if not path.exists():
        print(f"scenario file not found: {path}", file=sys.stderr)
        raise SystemExit(2)
    if seed is None:
        return load_scenario(path)
    import json

    doc = json.loads(path.read_text())
    doc["seed"] = int(seed)
    return parse_scenario(doc)


def cmd_run(args) -> int:
    from .engine import LockstepEngine
    from .metrics import compute_metrics
    from .scenario import ValidationError
    from .telemetry import WindowNotFound

    try:
        scenario = _load(args.scenario, args.seed)
    except ValidationError as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return 2
    mode = args.mode or scenario.mode
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        engine = LockstepEngine(scenario)
        if mode == "realtime":
            record = _run_wall_paced(engine, scenario)
        else:
            record = engine.run()
    except Exception as e:
        print(f"run failed: {e}", file=sys.stderr)
        return 1
    base = out / f"{scenario.name}_seed{scenario.seed}"
    record.to_jsonl(base.with_suffix(".jsonl"))
    record.to_csv(base.with_suffix(".csv"))
    print(f"telemetry: {base.with_suffix('.jsonl')}")
    try:
        print(compute_metrics(record).format_table())
    except WindowNotFound as e:
        print(f"(no metrics: {e})")
    return 0


def _run_wall_paced(engine, scenario):
    """Wall-clock paced single-process run: lockstep semantics, real pacing."""
    dt = scenario.physics_dt
    scale = float(_env("TIME_SCALE", 1.0) or 1.0)
    start = time.monotonic()
    for k in range(1, engine.n_steps + 1):
        target = start + k * dt / scale
        delay = target - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        engine.step_once(k)
    return engine.record


def cmd_serve(args) -> int:
    import uvicorn

    from .scenario import ValidationError
    from .service import create_app

    try:
        scenario = _load(args.scenario, args.seed)
    except ValidationError as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return 2
    host, _, port = args.listen.rpartition(":")
    try:
        app = create_app(scenario, time_scale=args.time_scale, out_dir=args.out)
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    except (OSError, ValueError) as e:
        print(f"serve failed: {e}", file=sys.stderr)
        return 1
    return 0


def cmd_agent(args) -> int:
    from .client import run_agent

    if not args.vehicle_id:
        print("an agent needs --id", file=sys.stderr)
        return 2
    try:
        asyncio.run(run_agent(args.connect, args.vehicle_id, args.kind))
    except (KeyError, ValueError) as e:
        print(f"agent misconfigured: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"agent failed: {e}", file=sys.stderr)
        return 1
    return 0


def cmd_plot(args) -> int:
    from .plotting import plot_profiles
    from .telemetry import MalformedRecord, TelemetryRecord

    path = Path(args.telemetry)
    if not path.exists():
        print(f"telemetry file not found: {path}", file=sys.stderr)
        return 2
    try:
        record = TelemetryRecord.from_jsonl(path)
    except MalformedRecord as e:
        print(f"unreadable telemetry: {e}", file=sys.stderr)
        return 2
    for written in plot_profiles(record, args.out):
        print(f"wrote {written}")
    return 0


def cmd_metrics(args) -> int:
    from .metrics import compute_metrics
    from .telemetry import MalformedRecord, TelemetryRecord, WindowNotFound

    path = Path(args.telemetry)
    if not path.exists():
        print(f"telemetry file not found: {path}", file=sys.stderr)
        return 2
    try:
        record = TelemetryRecord.from_jsonl(path)
        print(compute_metrics(record).format_table())
    except (MalformedRecord, WindowNotFound) as e:
        print(f"cannot compute metrics: {e}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "run": cmd_run,
        "serve": cmd_serve,
        "agent": cmd_agent,
        "plot": cmd_plot,
        "metrics": cmd_metrics,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
