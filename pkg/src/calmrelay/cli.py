"""Command-line entry points: serve, simulate, replay."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys

from . import recorder as recorder_mod
from .config import load_server_config, parse_listen
from .scenario import ScenarioConfig
from .server import serve_forever
from .simulator import SimulatorError, run_scenario


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="calmrelay")
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("serve", help="run the relay server")
    sp.add_argument("--listen", help="host:port (port 0 picks a free port)")
    sp.add_argument("--config", help="TOML config file")
    sp.add_argument("--log-level", help="debug|info|warning|error")
    sp.add_argument("--static-dir", help="serve this directory at /")
    sp.add_argument("--record-dir", help="write one session log per room here")

    sim = sub.add_parser("simulate", help="run a synthetic-audience scenario")
    sim.add_argument("--scenario", required=True, help="scenario file (json/toml)")
    sim.add_argument("--server", required=True, help="ws://host:port")
    sim.add_argument("--json-report", help="write the full report here")

    rp = sub.add_parser("replay", help="re-drive a session log and diff frames")
    rp.add_argument("log", help="session log (jsonl)")
    rp.add_argument(
        "--param", action="append", default=[], metavar="KEY=VALUE",
        help="override a room-config value before replaying",
    )
    return p


def _cmd_serve(args) -> int:
    config = load_server_config(args.config)
    if args.listen:
        config.host, config.port = parse_listen(args.listen)
    if args.log_level:
        config.log_level = args.log_level
    if args.static_dir:
        config.static_dir = args.static_dir
    if args.record_dir:
        config.record_dir = args.record_dir
    logging.basicConfig(
        level=config.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        asyncio.run(serve_forever(config))
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_simulate(args) -> int:
    logging.basicConfig(level=logging.WARNING)
    cfg = ScenarioConfig.from_file(args.scenario)
    try:
        report = asyncio.run(run_scenario(cfg, args.server))
    except SimulatorError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 2
    if args.json_report:
        with open(args.json_report, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=2)
    rate = report.frame_rate_observed
    lat = report.latency_median_ms
    print(
        f"room={report.room} mode={report.mode} audiences={report.n_audiences} "
        f"frames={report.frames_received} "
        f"rate={'n/a' if rate is None else f'{rate:.2f}Hz'} "
        f"latency_median={'n/a' if lat is None else f'{lat:.1f}ms'} "
        f"errors={report.protocol_errors}"
    )
    for a in report.assertions:
        print(a.line())
    return 0 if report.passed else 1


def _cmd_replay(args) -> int:
    overrides = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"--param wants KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        try:
            overrides[key] = json.loads(value)
        except ValueError:
            overrides[key] = value
    try:
        result = recorder_mod.replay(args.log, overrides or None)
    except recorder_mod.ReplayError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 2
    if result.ok:
        print(
            f"ok: {result.frames_checked} frames bit-exact "
            f"({result.samples_replayed} samples replayed, "
            f"{result.skipped_lines} unreadable lines skipped)"
        )
        return 0
    print(
        f"{recorder_mod.ERR_DIVERGENCE} at seq {result.divergence.seq}: "
        f"{result.divergence.reason}"
    )
    return 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.cmd == "serve":
        return _cmd_serve(args)
    if args.cmd == "simulate":
        return _cmd_simulate(args)
    return _cmd_replay(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
