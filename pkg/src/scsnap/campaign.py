"""Randomized campaigns: generate configs, run, check, aggregate."""

from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from scsnap import checker, invariants, metrics
from scsnap.history import History, RegisterSpec, SnapshotSpec, spec_for
from scsnap.netsim import (
    READ, SNAPSHOT, WRITE, CrashSpec, LivenessFailure, OpSpec, SimConfig, run,
)

BRUTE = "brute"
WITNESS = "witness"
BOTH = "both"


@dataclass
class Campaign:
    runs: int = 100
    n_choices: Sequence[int] = (3, 5, 7)
    max_ops: int = 14
    write_ratio: float = 0.5
    crash_prob: float = 0.2
    cut_prob: float = 0.5
    seed_base: int = 0
    delay_range: tuple[int, int] = (1, 10)
    horizon: int = 40
    check: str = BOTH
    rounds: int = 0  # >0: round-structured runs with one fresh object per round
    jobs: int = 1


def random_config(seed: int, params: Campaign) -> SimConfig:
    rng = random.Random(seed)
    n = rng.choice(list(params.n_choices))
    t = (n - 1) // 2
    crashed = [p for p in range(n) if rng.random() < params.crash_prob][:t]
    return _fill_config(rng, seed, n, t, crashed, None, params)


def flag_config(
    n: int, faults: int = 0, seed: int = 0, n_ops: int = 6,
    delay_range: tuple[int, int] = (1, 10), horizon: int = 40,
    liveness: bool = True,
) -> SimConfig:
    """Random workload for ``n`` processes with exactly ``faults`` crashes."""
    rng = random.Random(seed)
    params = Campaign(delay_range=delay_range, horizon=horizon, cut_prob=0.5)
    crashed = sorted(rng.sample(range(n), min(faults, n)))
    cfg = _fill_config(rng, seed, n, faults, crashed, n_ops, params)
    cfg.liveness = liveness
    return cfg


def _fill_config(rng, seed, n, t, crashed, n_ops, params: Campaign) -> SimConfig:
    crashes = [
        CrashSpec(
            rng.randint(0, params.horizon),
            p,
            rng.randint(0, n) if rng.random() < params.cut_prob else None,
        )
        for p in crashed
    ]
    if n_ops is None:
        n_ops = rng.randint(1, params.max_ops)
    ops = []
    value = 0
    if params.rounds:
        span = max(1, params.horizon // params.rounds)
        per_round = max(1, n_ops // params.rounds)
        for r in range(params.rounds):
            obj = f"X{r + 1}"
            for _ in range(per_round):
                p = rng.randrange(n)
                when = r * span + rng.randint(0, span - 1)
                if rng.random() < params.write_ratio:
                    value += 1
                    ops.append(OpSpec(when, p, WRITE, value, obj))
                else:
                    ops.append(OpSpec(when, p, SNAPSHOT, None, obj))
    else:
        for _ in range(n_ops):
            p = rng.randrange(n)
            when = rng.randint(0, params.horizon)
            if rng.random() < params.write_ratio:
                value += 1
                ops.append(OpSpec(when, p, WRITE, value))
            else:
                ops.append(OpSpec(when, p, SNAPSHOT))
    return SimConfig(
        n=n, max_crashes=t, seed=seed, delay_range=tuple(params.delay_range),
        ops=ops, crashes=crashes,
    )


@dataclass
class RunResult:
    seed: int
    n: int
    ops: int
    crashes: int
    liveness: bool = True
    brute: Optional[str] = None
    witness: Optional[str] = None
    rounds: Optional[str] = None
    agree: Optional[bool] = None
    monitors: dict = field(default_factory=dict)
    write_depth: int = 0
    snapshot_depth: int = 0
    snapshot_depths: list = field(default_factory=list)
    write_messages: list = field(default_factory=list)
    update_messages: list = field(default_factory=list)
    snapshot_messages: int = 0
    note: str = ""

    @property
    def ok(self) -> bool:
        return (
            self.liveness
            and self.brute in (None, checker.SAT)
            and self.witness in (None, checker.SAT)
            and self.rounds in (None, checker.SAT)
            and self.agree in (None, True)
            and not any(self.monitors.values())
        )


def check_run(config: SimConfig, check: str = BOTH, rounds: int = 0) -> RunResult:
    res = RunResult(config.seed, config.n, len(config.ops), len(config.crashes))
    try:
        trace, history = run(config)
    except LivenessFailure as exc:
        res.liveness = False
        res.note = str(exc)
        return res
    res.monitors = {k: v for k, v in invariants.check_all(trace).items() if v}

    objs = history.objects() or ["REG"]
    if rounds:
        per_hist, per_wit, per_spec = [], [], []
        for obj in objs:
            h = history.restrict(obj)
            spec = SnapshotSpec(config.n)
            v = checker.check_sc_witness(h, trace, obj)
            if v.ok and check in (BRUTE, BOTH):
                vb = checker.check_sc(h, spec, max_ops=max(14, len(h)))
                if not vb.ok:
                    res.brute = vb.status
            if not v.ok:
                res.witness = v.status
                return res
            per_hist.append(h)
            per_wit.append(v.witness)
            per_spec.append(spec)
        res.rounds = checker.check_round_composition(per_hist, per_wit, per_spec).status
        res.brute = res.brute or (checker.SAT if check in (BRUTE, BOTH) else None)
    else:
        spec = SnapshotSpec(config.n)
        if check in (BRUTE, BOTH):
            res.brute = checker.check_sc(history, spec, max_ops=max(14, len(history))).status
        if check in (WITNESS, BOTH):
            res.witness = checker.check_sc_witness(history, trace).status
        if check == BOTH:
            res.agree = res.brute == res.witness

    depths = metrics.depth_profile(trace, history)
    msgs = metrics.messages_by_operation(trace, history)
    for op in history:
        if not op.complete:
            continue
        d = depths[op.op_id]
        if op.kind == WRITE:
            res.write_depth = max(res.write_depth, d)
            res.write_messages.append(msgs[op.op_id])
        else:
            res.snapshot_depth = max(res.snapshot_depth, d)
            res.snapshot_depths.append(d)
            res.snapshot_messages += msgs[op.op_id]
    res.update_messages = sorted(metrics.message_counts(trace).values())
    return res


def _job(args):
    seed, params = args
    return check_run(random_config(seed, params), params.check, params.rounds)


def run_campaign(params: Campaign, progress=None) -> list[RunResult]:
    seeds = [params.seed_base + i for i in range(params.runs)]
    work = [(s, params) for s in seeds]
    if params.jobs > 1:
        with ProcessPoolExecutor(max_workers=params.jobs) as pool:
            results = list(pool.map(_job, work, chunksize=8))
    else:
        results = []
        for w in work:
            results.append(_job(w))
            if progress:
                progress(len(results), params.runs)
    return results


def summarize(results: Sequence[RunResult]) -> dict:
    ok = [r for r in results if r.ok]
    fail = [r for r in results if not r.ok]
    upd = [m for r in results for m in r.update_messages]
    writes = [m for r in results for m in r.write_messages]
    snaps = [d for r in results for d in r.snapshot_depths]
    return {
        "runs": len(results),
        "passed": len(ok),
        "failed_seeds": [r.seed for r in fail],
        "sc_sat": sum(1 for r in results if r.brute == checker.SAT),
        "witness_sat": sum(1 for r in results if r.witness == checker.SAT),
        "round_sat": sum(1 for r in results if r.rounds == checker.SAT),
        "disagreements": sum(1 for r in results if r.agree is False),
        "liveness_failures": sum(1 for r in results if not r.liveness),
        "monitor_violations": sum(1 for r in results if r.monitors),
        "max_write_depth": max((r.write_depth for r in results), default=0),
        "max_snapshot_depth": max((r.snapshot_depth for r in results), default=0),
        "snapshot_depth_histogram": {
            d: snaps.count(d) for d in sorted(set(snaps))
        },
        "max_messages_per_update": max(upd, default=0),
        "mean_messages_per_write": (sum(writes) / len(writes)) if writes else 0.0,
        "snapshot_messages": sum(r.snapshot_messages for r in results),
    }


# -- ABD comparison ---------------------------------------------------------------


def abd_profile(n: int, seed: int = 0) -> dict:
    """Uncontended ABD write then read on register R0, crash-free."""
    cfg = SimConfig(
        n=n, seed=seed, protocol="abd",
        ops=[OpSpec(0, 0, WRITE, 1, "R0"), OpSpec(1000, min(1, n - 1), READ, None, "R0")],
    )
    trace, history = run(cfg)
    w, r = sorted(history, key=lambda o: o.invoke_index)
    msgs = metrics.messages_by_operation(trace, history)
    return {
        "n": n,
        "write_depth": metrics.causal_depth(trace, w.op_id),
        "read_depth": metrics.causal_depth(trace, r.op_id),
        "write_messages": msgs[w.op_id],
        "read_messages": msgs[r.op_id],
        "read_value": r.returned,
    }


def sc_profile(n: int, seed: int = 0) -> dict:
    """Uncontended write; snapshot right after two writes; snapshot at rest."""
    cfg = SimConfig(
        n=n, seed=seed, delay_range=(5, 5),
        ops=[
            OpSpec(0, 0, WRITE, 1), OpSpec(0, 0, WRITE, 2), OpSpec(0, 0, SNAPSHOT),
            OpSpec(1000, 0, SNAPSHOT),
        ],
    )
    trace, history = run(cfg)
    ops = sorted(history, key=lambda o: o.invoke_index)
    msgs = metrics.messages_by_operation(trace, history)
    return {
        "n": n,
        "write_depth": metrics.causal_depth(trace, ops[0].op_id),
        "write_messages": msgs[ops[0].op_id],
        "snapshot_depth_after_writes": metrics.causal_depth(trace, ops[2].op_id),
        "snapshot_depth_at_rest": metrics.causal_depth(trace, ops[3].op_id),
        "snapshot_messages": msgs[ops[2].op_id] + msgs[ops[3].op_id],
    }


def comparison_table(ns: Sequence[int] = (3, 5, 7)) -> list[dict]:
    rows = []
    for n in ns:
        a = abd_profile(n)
        s = sc_profile(n)
        rows.append({
            "n": n,
            "abd_read_msgs": a["read_messages"], "abd_read_lat": a["read_depth"],
            "abd_write_msgs": a["write_messages"], "abd_write_lat": a["write_depth"],
            "sc_snapshot_msgs": s["snapshot_messages"],
            "sc_snapshot_lat": f"{s['snapshot_depth_at_rest']}-{s['snapshot_depth_after_writes']}",
            "sc_update_msgs": s["write_messages"], "sc_update_lat": s["write_depth"],
        })
    return rows


def format_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in cols}
    lines = ["  ".join(c.rjust(widths[c]) for c in cols)]
    lines += ["  ".join(str(r[c]).rjust(widths[c]) for c in cols) for r in rows]
    return "\n".join(lines)


def result_dict(r: RunResult) -> dict:
    d = asdict(r)
    d["ok"] = r.ok
    return d
