"""Consistency checkers for recorded histories.

Two independent routes decide sequential consistency:

* :func:`check_sc` searches linear extensions of process order, memoising on
  (operations consumed per process, abstract object state).  Exponential in
  the worst case, meant for small histories.
* :func:`check_sc_witness` builds a serialization directly from the vc
  samples of a simulator trace: each snapshot is stamped with the vc it
  returned with, each update with the first sampled vc that covers its
  proposal, and operations are sorted by those clocks.  Linear-ish, scales
  to large runs.

:func:`check_linearizability` is the search route with real-time order added.
:func:`check_round_composition` merges per-round serializations of
round-structured histories into one for the whole composition.
"""

from __future__ import annotations

import heapq
import sys
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from scsnap.history import (
    History,
    HistoryError,
    OperationRecord,
    ProductSpec,
    SnapshotSpec,
)

SAT = "SAT"
UNSAT = "UNSAT"
VIOLATION = "VIOLATION"
PRECONDITION_FAIL = "PRECONDITION-FAIL"

DEFAULT_MAX_OPS = 14


class CheckerLimit(ValueError):
    """History too large for the exhaustive search."""


@dataclass
class Witness:
    order: list[int]
    clocks: Optional[dict] = None

    def dumps(self) -> str:
        return "".join(f"{op}\n" for op in self.order)


@dataclass
class Verdict:
    status: str
    witness: Optional[Witness] = None
    certificate: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == SAT

    def __bool__(self):
        return self.ok


# -- search route ---------------------------------------------------------------


def _plan(history: History):
    """Per-process op sequences used by the search.

    Response-less snapshots/reads are dropped.  A response-less write is kept
    as an optional last element: the search may serialize it or leave it out.
    """
    seqs, required = [], []
    for _, ops in sorted(history.by_process().items()):
        keep = [o for o in ops if o.complete or o.is_update]
        seqs.append(keep)
        required.append(sum(1 for o in keep if o.complete))
    return seqs, required


def _search(history: History, spec, realtime: bool, max_ops: int) -> Verdict:
    seqs, required = _plan(history)
    total = sum(len(s) for s in seqs)
    if total > max_ops:
        raise CheckerLimit(
            f"{total} operations exceed the exhaustive-search limit of {max_ops}; "
            "use the trace-based witness checker for large histories"
        )
    k = len(seqs)
    failed: set = set()
    best_prefix: list[int] = []
    explored = 0
    path: list[int] = []

    def enabled(counts, p):
        op = seqs[p][counts[p]]
        if not realtime:
            return True
        for q in range(k):
            if q != p and counts[q] < len(seqs[q]):
                other = seqs[q][counts[q]]
                if other.respond_index is not None and other.respond_index < op.invoke_index:
                    return False
        return True

    def dfs(counts: tuple, state) -> bool:
        nonlocal explored, best_prefix
        explored += 1
        if len(path) > len(best_prefix):
            best_prefix = list(path)
        if all(c >= r for c, r in zip(counts, required)):
            return True
        for p in range(k):
            if counts[p] >= len(seqs[p]) or not enabled(counts, p):
                continue
            op = seqs[p][counts[p]]
            nxt = spec.step(state, op)
            if nxt is None:
                continue
            nc = counts[:p] + (counts[p] + 1,) + counts[p + 1:]
            key = (nc, nxt)
            if key in failed:
                continue
            path.append(op.op_id)
            if dfs(nc, nxt):
                return True
            path.pop()
            failed.add(key)
        return False

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * total + 100))
    try:
        found = dfs((0,) * k, spec.initial())
    finally:
        sys.setrecursionlimit(limit)
    if found:
        return Verdict(SAT, Witness(list(path)), {"explored": explored})
    return Verdict(
        UNSAT,
        None,
        {
            "explored": explored,
            "dead_states": len(failed),
            "longest_legal_prefix": best_prefix,
        },
    )


def check_sc(history: History, spec, max_ops: int = DEFAULT_MAX_OPS) -> Verdict:
    """Decide sequential consistency of ``history`` against ``spec``."""
    return _search(history, spec, realtime=False, max_ops=max_ops)


def check_linearizability(
    history: History, spec, max_ops: int = DEFAULT_MAX_OPS
) -> Verdict:
    return _search(history, spec, realtime=True, max_ops=max_ops)


def verify_witness(history: History, spec, order: Sequence[int]) -> Optional[str]:
    """Independent replay of a serialization; returns an error string or None."""
    pos = {op: i for i, op in enumerate(order)}
    if len(pos) != len(order):
        return "witness lists an operation twice"
    for op in history:
        if op.complete and op.op_id not in pos:
            return f"completed op {op.op_id} missing from witness"
        if not op.complete and op.kind != "write" and op.op_id in pos:
            return f"pending non-update op {op.op_id} in witness"
    for a, b in history.process_order_pairs():
        if a in pos and b in pos and pos[a] > pos[b]:
            return f"witness orders op {b} before its process predecessor {a}"
        if a not in pos and b in pos:
            return f"op {b} serialized but its process predecessor {a} is not"
    state = spec.initial()
    for op_id in order:
        try:
            op = history.op(op_id)
        except KeyError:
            return f"unknown op {op_id} in witness"
        nxt = spec.step(state, op)
        if nxt is None:
            return f"op {op_id} ({op.kind}) illegal at its witness position"
        state = nxt
    return None


def check_snapshot_axioms(history: History, order: Sequence[int], n: int) -> Optional[str]:
    """Check snapshot-memory properties of a serialization, value by value.

    Every snapshot must return, per register, the last value written there
    before it (so in particular its own process's latest write), and any two
    snapshots must be ordered pointwise by recency.
    """
    writes_seen = [0] * n
    last = [0] * n
    recency = []
    for op_id in order:
        op = history.op(op_id)
        if op.kind == "write":
            writes_seen[op.process] += 1
            last[op.process] = op.value
        elif op.kind == "snapshot":
            if op.returned is None or list(op.returned) != last:
                return f"snapshot {op_id} returned {op.returned}, expected {last}"
            recency.append((op_id, tuple(writes_seen)))
    for (a, ra), (b, rb) in zip(recency, recency[1:]):
        if not all(x <= y for x, y in zip(ra, rb)):
            return f"snapshots {a} and {b} are not ordered by recency"
    return None


# -- trace route ------------------------------------------------------------------


class _Top:
    """Clock of an update never validated anywhere; after every sample."""

    def __repr__(self):
        return "TOP"


TOP = _Top()


def leq(a: Sequence[int], b: Sequence[int]) -> bool:
    return all(x <= y for x, y in zip(a, b))


def comparability_violation(samples: Iterable[Sequence[int]]) -> Optional[tuple]:
    """First incomparable pair among ``samples`` or None.

    Sorting by sum and checking neighbours is exact: a chain sorted by sum has
    every neighbour pair pointwise ordered, and pointwise order is transitive.
    """
    uniq = sorted({tuple(s) for s in samples}, key=lambda s: (sum(s), s))
    for a, b in zip(uniq, uniq[1:]):
        if not leq(a, b):
            return (a, b)
    return None


def check_sc_witness(history: History, trace, obj: Optional[str] = None) -> Verdict:
    """Sequential consistency of a simulator run, from its vc samples."""
    objs = history.objects()
    if obj is None:
        if len(objs) > 1:
            raise HistoryError("history spans several objects; pass obj=")
        obj = objs[0] if objs else "REG"
    hist = history.restrict(obj)
    samples = trace.vc_samples(obj)
    bad = comparability_violation(samples)
    if bad is not None:
        return Verdict(
            VIOLATION,
            None,
            {"reason": "incomparable vc samples", "pair": [list(bad[0]), list(bad[1])]},
        )
    chain = sorted({tuple(s) for s in samples}, key=sum)
    rank = {s: i for i, s in enumerate(chain)}
    n = trace.config.n if trace.config is not None else len(chain[0]) if chain else 1

    proposals: dict[int, list[tuple[int, int]]] = {}
    for i, r in enumerate(trace.records):
        if r["kind"] == "PROPOSE" and r["obj"] == obj:
            proposals.setdefault(r["process"], []).append((i, r["writer_stamp"]))

    clocks: dict[int, Any] = {}
    keys = []
    for op in hist:
        if op.kind == "snapshot":
            if not op.complete:
                continue
            vc = trace.records[op.respond_index]["vc"]
            if vc is None:
                return Verdict(VIOLATION, None, {"reason": f"no vc at response of op {op.op_id}"})
            clock = tuple(vc)
            r = rank[clock]
        elif op.kind == "write":
            stamp = next(
                (st for i, st in proposals.get(op.process, []) if i > op.invoke_index),
                None,
            )
            clock = TOP
            if stamp is not None:
                # chain is sorted ascending; first covering sample is the smallest
                clock = next((s for s in chain if s[op.process] >= stamp), TOP)
            if clock is TOP and not op.complete:
                continue
            r = len(chain) if clock is TOP else rank[clock]
        else:
            return Verdict(VIOLATION, None, {"reason": f"unsupported op kind {op.kind}"})
        clocks[op.op_id] = clock
        keys.append((r, 0 if op.kind == "write" else 1, op.op_id))
    keys.sort()
    order = [k[2] for k in keys]
    spec = SnapshotSpec(n)
    err = verify_witness(_without_dropped(hist, order), spec, order)
    if err is not None:
        return Verdict(VIOLATION, Witness(order, clocks), {"reason": err})
    return Verdict(SAT, Witness(order, clocks), {"samples": len(chain)})


def _without_dropped(hist: History, order: Sequence[int]) -> History:
    keep = set(order)
    return History([o for o in hist if o.complete or o.op_id in keep])


# -- composition ------------------------------------------------------------------


def compose_histories(*histories: History) -> History:
    """Union of histories over disjoint objects, merging process orders."""
    seen_objs: set = set()
    ops: list[OperationRecord] = []
    ids: set = set()
    for h in histories:
        objs = set(h.objects())
        if objs & seen_objs:
            raise HistoryError(f"histories share objects {sorted(objs & seen_objs)}")
        seen_objs |= objs
        for o in h:
            if o.op_id in ids:
                raise HistoryError(f"operation id {o.op_id} appears twice")
            ids.add(o.op_id)
            ops.append(o)
    return History(ops)


def check_round_composition(
    round_histories: Sequence[History],
    round_witnesses: Sequence[Witness],
    round_specs: Sequence[Any],
) -> Verdict:
    """Compose per-round serializations into one for all rounds.

    Round ``r`` is the r-th history; each must be confined to its own object.
    The precondition is that no process runs an operation of a later round
    before one of an earlier round.  The composed order is a topological
    sort of process order plus every per-round serialization order, which
    is acyclic under the precondition; ties go to the earliest invocation.
    """
    if not (len(round_histories) == len(round_witnesses) == len(round_specs)):
        raise ValueError("need one witness and one spec per round")
    round_of: dict[str, int] = {}
    for r, h in enumerate(round_histories):
        for obj in h.objects():
            if obj in round_of:
                raise HistoryError(f"object {obj} used in rounds {round_of[obj]} and {r}")
            round_of[obj] = r
    whole = compose_histories(*round_histories)

    for p, seq in sorted(whole.by_process().items()):
        for i, a in enumerate(seq):
            for b in seq[i + 1:]:
                if round_of[a.obj] > round_of[b.obj]:
                    return Verdict(
                        PRECONDITION_FAIL,
                        None,
                        {
                            "process": p,
                            "pair": [a.op_id, b.op_id],
                            "reason": (
                                f"op {a.op_id} of round {round_of[a.obj]} precedes "
                                f"op {b.op_id} of round {round_of[b.obj]}"
                            ),
                        },
                    )

    for r, (h, w, spec) in enumerate(zip(round_histories, round_witnesses, round_specs)):
        err = verify_witness(h, spec, w.order)
        if err is not None:
            return Verdict(UNSAT, None, {"round": r, "reason": f"bad round witness: {err}"})

    included = {op for w in round_witnesses for op in w.order}
    edges: dict[int, set] = {op: set() for op in included}
    for seq in whole.by_process().values():
        chain = [o.op_id for o in seq if o.op_id in included]
        for a, b in zip(chain, chain[1:]):
            edges[a].add(b)
    for w in round_witnesses:
        for a, b in zip(w.order, w.order[1:]):
            edges[a].add(b)
    indeg = {op: 0 for op in included}
    for a in edges:
        for b in edges[a]:
            indeg[b] += 1
    inv = {o.op_id: o.invoke_index for o in whole}
    ready = [(inv[op], op) for op in included if indeg[op] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, op = heapq.heappop(ready)
        order.append(op)
        for b in edges[op]:
            indeg[b] -= 1
            if indeg[b] == 0:
                heapq.heappush(ready, (inv[b], b))
    if len(order) != len(included):
        return Verdict(UNSAT, None, {"reason": "per-round orders and process order form a cycle"})

    spec = ProductSpec(
        {obj: round_specs[r] for obj, r in round_of.items()}
    )
    composed = History([o for o in whole if o.complete or o.op_id in included])
    err = verify_witness(composed, spec, order)
    if err is not None:
        return Verdict(UNSAT, Witness(order), {"reason": err})
    return Verdict(SAT, Witness(order), {"rounds": len(round_histories)})
