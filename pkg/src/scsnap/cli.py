"""Command-line front end: run scenarios, campaigns, and history checks.

Exit codes: 0 all checks pass, 1 usage or config error, 2 consistency
violation, 3 liveness failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from scsnap import campaign as camp
from scsnap import checker, invariants, metrics
from scsnap.history import History, HistoryError, SnapshotSpec, spec_for
from scsnap.netsim import ConfigError, LivenessFailure, SimConfig, Trace, run
from scsnap.scenarios import SCENARIOS, builtin_history

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2
EXIT_LIVENESS = 3


class UsageError(Exception):
    pass


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


# -- run ----------------------------------------------------------------------


def _config_from_args(args) -> SimConfig:
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        return SimConfig.from_dict(doc)
    if args.scenario:
        if args.scenario not in SCENARIOS:
            raise UsageError(f"unknown scenario {args.scenario!r}; have {sorted(SCENARIOS)}")
        return SCENARIOS[args.scenario](seed=args.seed)
    if args.n is None:
        raise UsageError("give --config, --scenario, or --n")
    return camp.flag_config(
        n=args.n, faults=args.faults, seed=args.seed, n_ops=args.ops,
        delay_range=(args.delay_min, args.delay_max), liveness=not args.no_liveness,
    )


def _check_history(history: History, trace: Trace, n: int, mode: str) -> dict:
    """Run the selected checkers per object and on the whole history."""
    out: dict = {}
    objs = history.objects()
    if mode in ("witness", "both"):
        for obj in objs:
            v = checker.check_sc_witness(history, trace, obj)
            out[f"witness:{obj}"] = v
    if mode in ("brute", "both"):
        spec = spec_for(history, "snapshot", n)
        out["brute"] = checker.check_sc(history, spec, max_ops=max(checker.DEFAULT_MAX_OPS, len(history)))
    return out


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", cfg.to_dict())
    try:
        trace, history = run(cfg)
    except LivenessFailure as exc:
        print(f"LIVENESS FAILURE: {exc}")
        if out and exc.trace is not None:
            exc.trace.write(out / "trace.jsonl")
        return EXIT_LIVENESS
    if out:
        trace.write(out / "trace.jsonl")
        history.write(out / "history.jsonl")

    code = EXIT_OK
    verdicts = _check_history(history, trace, cfg.n, args.check) if args.check != "none" else {}
    for name, v in verdicts.items():
        print(f"{name}: {v.status}")
        if not v.ok:
            code = EXIT_VIOLATION
            print(f"  certificate: {json.dumps(v.certificate, default=str)}")
            if out:
                _write_json(out / f"certificate-{name.replace(':', '-')}.json", v.certificate)
        elif out and v.witness is not None:
            (out / f"witness-{name.replace(':', '-')}.txt").write_text(v.witness.dumps())

    monitors = {k: v for k, v in invariants.check_all(trace).items() if v}
    for name, problems in monitors.items():
        code = EXIT_VIOLATION
        print(f"monitor {name}: {len(problems)} violation(s), first: {problems[0]}")

    complete = [o for o in history if o.complete]
    depths = metrics.depth_profile(trace, history)
    msgs = metrics.messages_by_operation(trace, history)
    summary = {
        "n": cfg.n,
        "operations": len(history),
        "completed": len(complete),
        "crashes": [r["process"] for r in trace.of_kind("CRASH")],
        "messages_total": metrics.total_messages(trace),
        "max_messages_per_update": max(metrics.message_counts(trace).values(), default=0),
        "operations_detail": [
            {"op": o.op_id, "process": o.process, "obj": o.obj, "kind": o.kind,
             "value": o.value, "returned": o.returned,
             "depth": depths.get(o.op_id), "messages": msgs.get(o.op_id)}
            for o in sorted(history, key=lambda o: o.invoke_index)
        ],
        "validation": {
            obj: {p: metrics.validation_log(trace, p, obj) for p in range(cfg.n)}
            for obj in history.objects()
        } if cfg.protocol == "sc" else {},
        "verdicts": {k: v.status for k, v in verdicts.items()},
        "monitor_violations": monitors,
    }
    for d in summary["operations_detail"]:
        print(
            f"  op {d['op']:>3} p{d['process']} {d['obj']}.{d['kind']}"
            f"({'' if d['value'] is None else d['value']}) -> {d['returned']}"
            f"  depth={d['depth']} msgs={d['messages']}"
        )
    print(f"messages: total={summary['messages_total']} "
          f"max/update={summary['max_messages_per_update']} (budget {cfg.n * cfg.n})")
    if out:
        _write_json(out / "metrics.json", summary)
    return code


# -- campaign -----------------------------------------------------------------


def cmd_campaign(args) -> int:
    params = camp.Campaign(
        runs=args.runs, n_choices=tuple(args.n), max_ops=args.max_ops,
        crash_prob=args.crash_prob, seed_base=args.seed, check=args.check,
        rounds=args.rounds, jobs=args.jobs,
        delay_range=(args.delay_min, args.delay_max),
    )
    results = camp.run_campaign(params)
    summary = camp.summarize(results)
    table = camp.comparison_table(tuple(args.n))
    rows = [
        ("runs", summary["runs"]), ("passed", summary["passed"]),
        ("SC (search) SAT", summary["sc_sat"]), ("SC (witness) SAT", summary["witness_sat"]),
        ("round composition SAT", summary["round_sat"]),
        ("checker disagreements", summary["disagreements"]),
        ("liveness failures", summary["liveness_failures"]),
        ("monitor violations", summary["monitor_violations"]),
        ("max write depth", summary["max_write_depth"]),
        ("max snapshot depth", summary["max_snapshot_depth"]),
        ("max messages per update", summary["max_messages_per_update"]),
        ("snapshot messages", summary["snapshot_messages"]),
    ]
    w = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k.ljust(w)}  {v}")
    print()
    print(camp.format_table(table))
    if summary["failed_seeds"]:
        print(f"failing seeds: {summary['failed_seeds'][:20]}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "summary.json", {"summary": summary, "comparison": table})
        with open(out / "runs.jsonl", "w", encoding="utf-8") as fh:
            for r in results:
                fh.write(json.dumps(camp.result_dict(r), default=str) + "\n")
    if args.json:
        print(json.dumps({"summary": summary, "comparison": table}, default=str))
    failed = [r for r in results if not r.ok]
    if not failed:
        return EXIT_OK
    if all(not r.liveness for r in failed):
        return EXIT_LIVENESS
    return EXIT_VIOLATION


def cmd_table(args) -> int:
    rows = camp.comparison_table(tuple(args.n))
    print(camp.format_table(rows))
    if args.json:
        print(json.dumps(rows))
    return EXIT_OK


# -- check --------------------------------------------------------------------


def _load_history(src: str) -> History:
    if src.startswith("builtin:"):
        try:
            return builtin_history(src.split(":", 1)[1])
        except FileNotFoundError as exc:
            raise UsageError(f"no built-in history {src!r}") from exc
    try:
        return History.load(src)
    except OSError as exc:
        raise UsageError(f"cannot read history {src}: {exc}") from exc


def cmd_check(args) -> int:
    history = _load_history(args.history)
    if args.mode == "witness":
        if not args.trace:
            raise UsageError("--mode witness needs --trace")
        cfg = None
        if args.config:
            cfg = SimConfig.from_dict(json.loads(Path(args.config).read_text()))
        trace = Trace.load(args.trace, cfg)
        verdicts = {f"witness:{o}": checker.check_sc_witness(history, trace, o)
                    for o in history.objects()} or {"witness": checker.Verdict(checker.SAT, checker.Witness([]))}
    else:
        fn = checker.check_sc if args.mode == "sc" else checker.check_linearizability
        verdicts = {}
        if args.per_object:
            for obj in history.objects():
                h = history.restrict(obj)
                verdicts[obj] = fn(h, spec_for(h, args.spec, args.n), max_ops=args.max_ops)
        verdicts["all"] = fn(history, spec_for(history, args.spec, args.n), max_ops=args.max_ops)
    code = EXIT_OK
    for name, v in verdicts.items():
        print(f"{name}: {v.status}")
        if v.ok and v.witness is not None and args.show_witness:
            print(f"  order: {v.witness.order}")
        if not v.ok:
            code = EXIT_VIOLATION
            print(f"  certificate: {json.dumps(v.certificate, default=str)}")
    return code


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scsnap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate one configuration and check it")
    r.add_argument("--config", help="JSON config document")
    r.add_argument("--scenario", help=f"built-in scenario: {', '.join(sorted(SCENARIOS))}")
    r.add_argument("--n", type=int)
    r.add_argument("--faults", type=int, default=0, help="crashes to inject (also the bound t)")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--ops", type=int, default=6, help="random operations to generate")
    r.add_argument("--delay-min", type=int, default=1)
    r.add_argument("--delay-max", type=int, default=10)
    r.add_argument("--no-liveness", action="store_true", help="allow t >= n/2 and skip quiescence checks")
    r.add_argument("--check", choices=["brute", "witness", "both", "none"], default="both")
    r.add_argument("--out", help="directory for trace, history, witness and metrics")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("campaign", help="many seeded random runs")
    c.add_argument("--runs", type=int, default=100)
    c.add_argument("--n", type=int, nargs="+", default=[3, 5, 7])
    c.add_argument("--max-ops", type=int, default=14)
    c.add_argument("--crash-prob", type=float, default=0.2)
    c.add_argument("--seed", type=int, default=0, help="seed of the first run")
    c.add_argument("--check", choices=["brute", "witness", "both"], default="both")
    c.add_argument("--rounds", type=int, default=0)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--delay-min", type=int, default=1)
    c.add_argument("--delay-max", type=int, default=10)
    c.add_argument("--out")
    c.add_argument("--json", action="store_true", help="also print a JSON summary")
    c.set_defaults(fn=cmd_campaign)

    t = sub.add_parser("table", help="message/latency comparison with ABD")
    t.add_argument("--n", type=int, nargs="+", default=[3, 5, 7])
    t.add_argument("--json", action="store_true")
    t.set_defaults(fn=cmd_table)

    k = sub.add_parser("check", help="check a recorded history")
    k.add_argument("history", help="history file or builtin:NAME")
    k.add_argument("--spec", choices=["snapshot", "register"], default="register")
    k.add_argument("--mode", choices=["sc", "lin", "witness"], default="sc")
    k.add_argument("--n", type=int, help="process count for the snapshot spec")
    k.add_argument("--trace", help="trace file (witness mode)")
    k.add_argument("--config", help="config of the trace (witness mode)")
    k.add_argument("--max-ops", type=int, default=checker.DEFAULT_MAX_OPS)
    k.add_argument("--per-object", action="store_true", help="also check each object alone")
    k.add_argument("--show-witness", action="store_true")
    k.set_defaults(fn=cmd_check)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, ConfigError, HistoryError, checker.CheckerLimit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
