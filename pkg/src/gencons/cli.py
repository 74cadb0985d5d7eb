"""Command-line entry point: ``gencons {validate,run,replay,explore,render}``.

Exit codes: 0 pass, 1 safety violation or failed check, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from gencons.config import check_classic_paxos, check_fast, check_weakened
from gencons.configfile import load_config, load_scenario
from gencons.core import ConsensusError
from gencons.explore import Bounds, explore
from gencons.figures import FIXTURES, check_fixture, render_fixture
from gencons.oracle import assert_agreement, assert_nontriviality
from gencons.protocol import FIGURE6, GENERALISED, MUTATIONS
from gencons.sim import ReplayDivergence, SafetyViolation, Trace, replay, run_scenario

OK, FAIL, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _out(text: str = "") -> None:
    sys.stdout.write(text + "\n")


def _err(text: str) -> None:
    sys.stderr.write(text + "\n")


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _config(path: str):
    _read(path)
    return load_config(path)


def cmd_validate(args) -> int:
    cfg = _config(args.config)
    mode = args.mode or ("fast" if cfg.fast_sets(cfg.periodic_bound) else "weakened")
    match mode:
        case "classic":
            report = check_classic_paxos(cfg)
        case "weakened":
            report = check_weakened(cfg, args.max_r)
        case _:
            report = check_fast(cfg, args.max_r)
    _out(f"config {cfg.name} ({cfg.servers} servers, {cfg.clients} clients)")
    for line in report.lines():
        _out(line)
    return OK if report.passed else FAIL


def cmd_run(args) -> int:
    _read(args.scenario)
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, plan=replace(sc.plan, seed=args.seed))
    if args.horizon is not None:
        sc = replace(sc, horizon=args.horizon)
    try:
        trace = run_scenario(sc)
    except SafetyViolation as exc:
        if args.trace_out:
            Path(args.trace_out).write_text(exc.prefix)
        else:
            _out(exc.prefix.rstrip("\n"))
        _out(f"SAFETY VIOLATION {exc}")
        return FAIL
    if args.trace_out:
        Path(args.trace_out).write_text(trace.text())
        for line in trace.footer():
            _out(line)
    else:
        _out(trace.text().rstrip("\n"))
    verdicts = [assert_agreement(trace, sc.cfg), assert_nontriviality(trace)]
    bad = [v for v in verdicts if not v]
    for v in bad:
        _out(f"SAFETY VIOLATION {v.detail}")
    if args.require_decision and trace.verdict != "ok":
        _out("no decision within the horizon")
        return FAIL
    return FAIL if bad else OK


def cmd_replay(args) -> int:
    text = _read(args.trace)
    cfg = _config(args.config)
    try:
        trace = Trace.parse(text)
    except (ValueError, KeyError, IndexError) as exc:
        raise UsageError(f"{args.trace}: not a trace ({exc})") from None
    try:
        out = replay(trace, cfg)
    except ReplayDivergence as exc:
        _out(f"DIVERGED {exc}")
        return FAIL
    except SafetyViolation as exc:
        _out(f"replay reproduced the recorded violation: {exc}")
        return FAIL
    _out(f"replay identical ({len(out.entries)} entries)")
    for line in out.footer():
        _out(line)
    return OK


def _mutations(text: str | None) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        ms = tuple(sorted({int(x) for x in text.split(",")}))
    except ValueError:
        raise UsageError(f"bad mutation list {text!r}") from None
    if not set(ms) <= set(MUTATIONS):
        raise UsageError(f"mutations must be among {MUTATIONS}")
    return ms


def cmd_explore(args) -> int:
    cfg = _config(args.config)
    values = [v for v in args.inputs.split(",") if v]
    if not values or len(values) > cfg.clients:
        raise UsageError(f"need between 1 and {cfg.clients} input values")
    bounds = Bounds(
        max_register_sets=args.max_register_sets,
        max_steps=args.max_steps,
        max_attempts=args.max_attempts,
        max_states=args.max_states,
        drops=args.drops,
    )
    report = explore(
        cfg,
        dict(enumerate(values)),
        bounds,
        strategy=args.strategy,
        mutations=_mutations(args.mutations),
        reduce=not args.no_reduce,
    )
    for line in report.lines():
        _out(line)
    if not report.passed:
        return FAIL
    return OK if report.complete else FAIL


def cmd_render(args) -> int:
    if args.fixture == "list":
        for name, f in FIXTURES.items():
            _out(f"{name}  {f.caption}")
        return OK
    names = list(FIXTURES) if args.fixture == "all" else [args.fixture]
    status = OK
    for i, name in enumerate(names):
        f = FIXTURES.get(name)
        if f is None:
            raise UsageError(f"unknown fixture {name!r}; try 'render list'")
        if i:
            _out()
        _out(render_fixture(f))
        res = check_fixture(f)
        _out("golden " + ("match" if res.passed else "MISMATCH"))
        for p in res.problems:
            _out("  " + p)
        if not res.passed:
            status = FAIL
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gencons", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check quorum intersection requirements")
    v.add_argument("config")
    v.add_argument("--mode", choices=["classic", "weakened", "fast"])
    v.add_argument("--max-r", type=int, default=None,
                   help="check register sets 0..MAX_R (default: one full period)")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="simulate a scenario file")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--horizon", type=int)
    r.add_argument("--trace-out")
    r.add_argument("--require-decision", action="store_true",
                   help="fail when some client has not output by the horizon")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("replay", help="re-execute a recorded trace")
    rp.add_argument("trace")
    rp.add_argument("config")
    rp.set_defaults(func=cmd_replay)

    e = sub.add_parser("explore", help="exhaustively explore small instances")
    e.add_argument("config")
    e.add_argument("--inputs", default="A,B", help="comma-separated client inputs")
    e.add_argument("--max-register-sets", type=int, default=2)
    e.add_argument("--max-steps", type=int, default=10_000)
    e.add_argument("--max-attempts", type=int, default=2)
    e.add_argument("--max-states", type=int, default=1_000_000)
    e.add_argument("--drops", action="store_true", help="also branch on message loss")
    e.add_argument("--strategy", choices=[GENERALISED, FIGURE6], default=GENERALISED)
    e.add_argument("--mutations", help="disable rules, e.g. 1,3")
    e.add_argument("--no-reduce", action="store_true",
                   help="expand every interleaving (no partial-order reduction)")
    e.set_defaults(func=cmd_explore)

    d = sub.add_parser("render", help="print a worked example's tables")
    d.add_argument("fixture", help="fixture name, 'all' or 'list'")
    d.set_defaults(func=cmd_render)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConsensusError, ValueError, KeyError, TypeError) as exc:
        _err(f"gencons: error: {exc}")
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
