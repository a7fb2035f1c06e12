"""Trace-level monitors for the safety and liveness properties of a run.

Each monitor takes a :class:`~scsnap.netsim.Trace` and returns a list of
human-readable violations; an empty list means the property held.
"""

from __future__ import annotations

from collections import Counter, defaultdict

from scsnap.checker import comparability_violation
from scsnap.metrics import message_counts


def _crash_steps(trace) -> dict[int, int]:
    return {r["process"]: r["step"] for r in trace.records if r["kind"] == "CRASH"}


def _sc_objects(trace) -> list[str]:
    return sorted({r["obj"] for r in trace.records if r["vc"] is not None})


def vc_monotone(trace) -> list[str]:
    last: dict = {}
    out = []
    for r in trace.records:
        if r["kind"] != "STATE":
            continue
        key = (r["process"], r["obj"])
        prev = last.get(key)
        if prev is not None and any(a > b for a, b in zip(prev, r["vc"])):
            out.append(f"p{key[0]}/{key[1]}: vc went from {prev} to {r['vc']} at step {r['step']}")
        last[key] = r["vc"]
    return out


def vc_comparable(trace) -> list[str]:
    out = []
    for obj in _sc_objects(trace):
        bad = comparability_violation(trace.vc_samples(obj))
        if bad is not None:
            out.append(f"{obj}: incomparable vc samples {list(bad[0])} and {list(bad[1])}")
    return out


def unique_forwarding(trace) -> list[str]:
    """Each process broadcasts at most one message per update; correct
    processes broadcast exactly one for every update a correct process proposed."""
    out = []
    n = trace.config.n
    crashed = set(_crash_steps(trace))
    sends: Counter = Counter()
    for r in trace.records:
        if r["kind"] == "DELIVER" and r["mtype"] == "M":
            sends[(r["obj"], r["sender"], r["receiver"], r["writer"], r["writer_stamp"])] += 1
    for key, c in sends.items():
        if c > 1:
            out.append(f"p{key[1]} sent {c} messages for update {key[3:]} to p{key[2]}")
    self_sent = {(k[0], k[1], k[3], k[4]) for k in sends if k[1] == k[2]}
    for r in trace.records:
        if r["kind"] == "PROPOSE" and r["process"] not in crashed:
            for j in range(n):
                if j in crashed:
                    continue
                if (r["obj"], j, r["writer"], r["writer_stamp"]) not in self_sent:
                    out.append(
                        f"correct p{j} never broadcast update ({r['writer']}, {r['writer_stamp']})"
                    )
    return out


def eventual_validation(trace) -> list[str]:
    """At quiescence every correct process covers every correct proposal."""
    out = []
    crashed = set(_crash_steps(trace))
    final: dict = {}
    for r in trace.records:
        if r["kind"] == "STATE":
            final[(r["process"], r["obj"])] = r["vc"]
    for r in trace.records:
        if r["kind"] != "PROPOSE" or r["process"] in crashed:
            continue
        for j in range(trace.config.n):
            if j in crashed:
                continue
            vc = final.get((j, r["obj"]))
            if vc is None or vc[r["writer"]] < r["writer_stamp"]:
                out.append(
                    f"p{j} never validated update ({r['writer']}, {r['writer_stamp']}) on {r['obj']}"
                )
    return out


def message_budget(trace) -> list[str]:
    n = trace.config.n
    return [
        f"update {key} used {c} > {n * n} messages"
        for key, c in message_counts(trace).items()
        if c > n * n
    ]


def fifo_channels(trace) -> list[str]:
    last: dict = {}
    out = []
    for r in trace.records:
        if r["kind"] == "DELIVER":
            chan = (r["sender"], r["receiver"])
            if r["msg"] < last.get(chan, -1):
                out.append(f"channel {chan}: message {r['msg']} overtook {last[chan]}")
            last[chan] = max(r["msg"], last.get(chan, -1))
    return out


def crash_containment(trace) -> list[str]:
    crash = _crash_steps(trace)
    out = []
    for r in trace.records:
        if r["kind"] == "CRASH":
            continue
        p = r["process"]
        if p in crash and r["step"] > crash[p]:
            out.append(f"p{p} active at step {r['step']} after crashing at {crash[p]}")
        if r["kind"] == "DELIVER" and r["sender"] in crash and r["sent_step"] > crash[r["sender"]]:
            out.append(f"p{r['sender']} sent message {r['msg']} after crashing")
    return out


def write_wait_free(trace) -> list[str]:
    inv = {}
    out = []
    for r in trace.records:
        if r["op_kind"] == "write":
            if r["kind"] == "INVOKE":
                inv[r["op"]] = r["step"]
            elif r["kind"] == "RESPOND" and r["step"] != inv.get(r["op"]):
                out.append(f"write {r['op']} responded at step {r['step']}, invoked at {inv.get(r['op'])}")
    return out


def snapshot_gating(trace) -> list[str]:
    """A snapshot returns only once its process's own updates are validated.

    Every write the process invoked before the snapshot must have been
    followed by a proposal before the response, and the returned vc must
    cover the latest such proposal.
    """
    out = []
    last_write: dict = {}
    last_prop: dict = {}
    for i, r in enumerate(trace.records):
        key = (r["process"], r["obj"])
        if r["kind"] == "INVOKE" and r["op_kind"] == "write":
            last_write[key] = i
        elif r["kind"] == "PROPOSE":
            last_prop[key] = (i, r["writer_stamp"])
        elif r["kind"] == "RESPOND" and r["op_kind"] == "snapshot" and r["vc"] is not None:
            w = last_write.get(key)
            pr = last_prop.get(key)
            if w is not None and (pr is None or pr[0] < w):
                out.append(f"snapshot {r['op']} returned with write at record {w} unproposed")
            if pr is not None and r["vc"][r["process"]] < pr[1]:
                out.append(f"snapshot {r['op']} returned before own update {pr[1]} was validated")
    return out


MONITORS = {
    "vc-monotone": vc_monotone,
    "vc-comparable": vc_comparable,
    "unique-forwarding": unique_forwarding,
    "eventual-validation": eventual_validation,
    "message-budget": message_budget,
    "fifo": fifo_channels,
    "crash-containment": crash_containment,
    "write-wait-free": write_wait_free,
    "snapshot-gating": snapshot_gating,
}


def check_all(trace, names=None) -> dict[str, list[str]]:
    names = MONITORS if names is None else names
    return {name: MONITORS[name](trace) for name in names}
