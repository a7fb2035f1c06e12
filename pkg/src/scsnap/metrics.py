"""Latency and message accounting over simulator traces.

Latency is measured in causal hops: the length of the longest chain of
network messages ``m1, m2, ...`` such that each ``m(i+1)`` is sent by the
receiver of ``m(i)`` after delivering it, every message of the chain is
delivered after the operation was invoked, and the last one is delivered to
the invoking process no later than the response.  Self-deliveries are local
steps and never count as hops.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import Counter, defaultdict
from typing import Optional

from scsnap.history import History


class IncompleteOperation(ValueError):
    pass


def _op_bounds(records, op_id: int) -> tuple[int, int, dict]:
    inv = resp = None
    for i, r in enumerate(records):
        if r["op"] == op_id:
            if r["kind"] == "INVOKE":
                inv = i
            elif r["kind"] == "RESPOND":
                resp = i
    if inv is None:
        raise KeyError(f"op {op_id} not in trace")
    if resp is None:
        raise IncompleteOperation(f"op {op_id} has no response in the trace")
    return inv, resp, records[inv]


def causal_depth(trace, op_id: int) -> int:
    records = trace.records if hasattr(trace, "records") else trace
    inv, resp, inv_rec = _op_bounds(records, op_id)
    proc, obj = inv_rec["process"], inv_rec["obj"]
    # per process: steps at which its best chain length increased, and the value
    steps: dict[int, list[int]] = defaultdict(list)
    best: dict[int, list[int]] = defaultdict(list)
    depth = 0
    for i in range(inv + 1, resp + 1):
        r = records[i]
        if r["kind"] != "DELIVER" or r["sender"] == r["receiver"] or r["obj"] != obj:
            continue
        s = r["sender"]
        j = bisect_right(steps[s], r["sent_step"])
        length = 1 + (best[s][j - 1] if j else 0)
        recv = r["receiver"]
        cur = best[recv][-1] if best[recv] else 0
        if length > cur:
            steps[recv].append(r["step"])
            best[recv].append(length)
        if recv == proc:
            depth = max(depth, length)
    return depth


def message_counts(trace, obj: Optional[str] = None) -> Counter:
    """Delivered protocol messages per update id ``(obj, writer, writer_stamp)``.

    For ABD traces the key is ``(obj, origin, op_seq)``, i.e. one operation.
    """
    counts: Counter = Counter()
    records = trace.records if hasattr(trace, "records") else trace
    for r in records:
        if r["kind"] == "DELIVER" and (obj is None or r["obj"] == obj):
            if r["mtype"] == "M":
                counts[(r["obj"], r["writer"], r["writer_stamp"])] += 1
            else:
                counts[(r["obj"], r["writer"], r["sender_stamp"])] += 1
    return counts


def total_messages(trace) -> int:
    return sum(message_counts(trace).values())


def messages_by_operation(trace, history: History) -> dict[int, int]:
    """Messages attributed to each operation.

    Snapshots cost nothing.  A write owns the messages of the proposal it
    triggered, i.e. the first proposal its process made at or after its
    invocation that carries its own value; a write dropped in favour of a
    later buffered value owns none.  ABD operations own their tagged messages.
    """
    records = trace.records
    counts = message_counts(trace)
    out: dict[int, int] = {}
    proposals = defaultdict(list)
    abd_seq: dict[tuple, int] = {}
    for i, r in enumerate(records):
        if r["kind"] == "PROPOSE":
            proposals[(r["process"], r["obj"])].append(
                (i, r["writer_stamp"], r["value"])
            )
    for op in history:
        if trace.config is not None and trace.config.protocol == "abd":
            key = (op.process, op.obj)
            abd_seq[key] = abd_seq.get(key, 0) + 1
            out[op.op_id] = counts.get((op.obj, op.process, abd_seq[key]), 0)
            continue
        if op.kind != "write":
            out[op.op_id] = 0
            continue
        out[op.op_id] = 0
        for i, stamp, value in proposals[(op.process, op.obj)]:
            if i > op.invoke_index:
                if value == op.value and not _overwritten(history, op, i):
                    out[op.op_id] = counts.get((op.obj, op.process, stamp), 0)
                break
    return out


def _overwritten(history: History, op, proposal_index: int) -> bool:
    """True if a later write of the same process was invoked before the proposal."""
    for o in history:
        if (
            o.process == op.process
            and o.obj == op.obj
            and o.kind == "write"
            and op.invoke_index < o.invoke_index < proposal_index
        ):
            return True
    return False


def depth_profile(trace, history: History) -> dict[int, int]:
    """Causal depth of every completed operation."""
    return {
        op.op_id: causal_depth(trace, op.op_id) for op in history if op.complete
    }


def validation_log(trace, process: int, obj: str = "REG") -> list[tuple[int, list]]:
    """When ``process`` validated which updates, from its successive vc states.

    Returns ``(time, [(writer, stamp), ...])`` groups in trace order; updates
    validated in the same step share a group.
    """
    prev = None
    out = []
    for r in trace.records:
        if r["kind"] != "STATE" or r["process"] != process or r["obj"] != obj:
            continue
        vc = r["vc"]
        if prev is None:
            prev = [0] * len(vc)
        new = [(w, s) for w in range(len(vc)) for s in range(prev[w] + 1, vc[w] + 1)]
        if new:
            out.append((r["time"], new))
        prev = vc
    return out
