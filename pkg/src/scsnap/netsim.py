"""Seeded discrete-event simulator for crash-prone asynchronous FIFO networks.

Each simulated process hosts one protocol node per shared object.  Broadcasts
are expanded into ``n`` unicasts in ascending receiver order; the unicast to
the emitter itself is consumed by the node inside the emitting step and is
only recorded here.  Every other unicast gets a delay drawn uniformly from
``delay_range``, clamped so that deliveries on one ordered channel never
overtake each other.

A run produces a :class:`Trace`, a list of flat records that can be written
as JSON lines and replayed bit-for-bit from the same :class:`SimConfig`.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

from scsnap.history import History, OperationRecord
from scsnap.protocol import Process, ProtocolMessage

WRITE = "write"
SNAPSHOT = "snapshot"
READ = "read"

DEFAULT_OBJECT = "REG"
DEFAULT_MAX_EVENTS = 1_000_000

TRACE_FIELDS = (
    "time", "seq", "step", "kind", "process", "obj", "sender", "receiver",
    "msg", "sent_step", "mtype", "writer", "writer_stamp", "sender_stamp",
    "value", "op", "op_kind", "arg", "returned", "vc",
)


class ConfigError(ValueError):
    """Invalid simulation configuration."""


class LivenessFailure(RuntimeError):
    """The run did not reach quiescence, or left operations blocked."""

    def __init__(self, message: str, trace: Optional["Trace"] = None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class OpSpec:
    time: int
    process: int
    kind: str
    value: Any = None
    obj: str = DEFAULT_OBJECT


@dataclass(frozen=True)
class CrashSpec:
    time: int
    process: int
    # crash during the next broadcast, after this many unicasts
    cut: Optional[int] = None


@dataclass
class SimConfig:
    n: int
    max_crashes: int = 0
    seed: int = 0
    delay_range: tuple[int, int] = (1, 10)
    ops: list[OpSpec] = field(default_factory=list)
    crashes: list[CrashSpec] = field(default_factory=list)
    protocol: str = "sc"
    # (sender, receiver, k) -> delay of the k-th (1-based) message on that channel
    scripted_delays: dict = field(default_factory=dict)
    liveness: bool = True
    max_events: int = DEFAULT_MAX_EVENTS

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        lo, hi = self.delay_range
        if not 0 < lo <= hi:
            raise ConfigError(f"delay range must satisfy 0 < min <= max, got {lo}, {hi}")
        if self.max_crashes < 0:
            raise ConfigError("max_crashes must be >= 0")
        if self.liveness and 2 * self.max_crashes >= self.n:
            raise ConfigError(
                f"liveness requires t < n/2, got t={self.max_crashes}, n={self.n}"
            )
        crashed = {c.process for c in self.crashes}
        if len(crashed) != len(self.crashes):
            raise ConfigError("a process may be scheduled to crash only once")
        if len(crashed) > self.max_crashes:
            raise ConfigError(
                f"{len(crashed)} crashes scheduled but max_crashes={self.max_crashes}"
            )
        for c in self.crashes:
            if not 0 <= c.process < self.n:
                raise ConfigError(f"crash of unknown process {c.process}")
            if c.cut is not None and c.cut < 0:
                raise ConfigError("crash cut index must be >= 0")
        for op in self.ops:
            if not 0 <= op.process < self.n:
                raise ConfigError(f"operation on unknown process {op.process}")
            if op.kind not in (WRITE, SNAPSHOT, READ):
                raise ConfigError(f"unknown operation kind {op.kind!r}")
        if self.protocol not in NODE_FACTORIES:
            raise ConfigError(f"unknown protocol {self.protocol!r}")

    # -- declarative document -------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "max_crashes": self.max_crashes,
            "seed": self.seed,
            "delay_min": self.delay_range[0],
            "delay_max": self.delay_range[1],
            "protocol": self.protocol,
            "liveness": self.liveness,
            "max_events": self.max_events,
            "ops": [
                {"time": o.time, "process": o.process, "kind": o.kind,
                 "value": o.value, "obj": o.obj}
                for o in self.ops
            ],
            "crashes": [
                {"time": c.time, "process": c.process, "cut": c.cut}
                for c in self.crashes
            ],
            "scripted_delays": [
                {"sender": s, "receiver": r, "index": k, "delay": d}
                for (s, r, k), d in sorted(self.scripted_delays.items())
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        known = {
            "n", "max_crashes", "seed", "delay_min", "delay_max", "protocol",
            "liveness", "max_events", "ops", "crashes", "scripted_delays",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "n" not in doc:
            raise ConfigError("config requires 'n'")
        try:
            cfg = cls(
                n=int(doc["n"]),
                max_crashes=int(doc.get("max_crashes", 0)),
                seed=int(doc.get("seed", 0)),
                delay_range=(int(doc.get("delay_min", 1)), int(doc.get("delay_max", 10))),
                protocol=doc.get("protocol", "sc"),
                liveness=bool(doc.get("liveness", True)),
                max_events=int(doc.get("max_events", DEFAULT_MAX_EVENTS)),
                ops=[
                    OpSpec(int(o["time"]), int(o["process"]), o["kind"],
                           o.get("value"), o.get("obj", DEFAULT_OBJECT))
                    for o in doc.get("ops", [])
                ],
                crashes=[
                    CrashSpec(int(c["time"]), int(c["process"]), c.get("cut"))
                    for c in doc.get("crashes", [])
                ],
                scripted_delays={
                    (int(d["sender"]), int(d["receiver"]), int(d["index"])): int(d["delay"])
                    for d in doc.get("scripted_delays", [])
                },
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cfg


# -- nodes --------------------------------------------------------------


@dataclass
class Step:
    """What a node did in one transition."""

    # (message, destinations) in emission order; None destinations = everyone
    sends: list = field(default_factory=list)
    completions: list = field(default_factory=list)  # (op_id, returned)
    validated: list = field(default_factory=list)


class SnapshotNode:
    """Adapter exposing a :class:`Process` to the simulator."""

    def __init__(self, pid: int, n: int, obj: str = DEFAULT_OBJECT):
        self.proc = Process(pid, n)

    def invoke(self, op_id: int, kind: str, value: Any) -> Step:
        if kind == WRITE:
            fx = self.proc.write(value)
            step = self._wrap(fx)
            step.completions.append((op_id, None))
            return step
        if kind == SNAPSHOT:
            return self._wrap(self.proc.request_snapshot(op_id))
        raise ConfigError(f"snapshot memory does not support {kind!r}")

    def deliver(self, sender: int, msg: ProtocolMessage) -> Step:
        return self._wrap(self.proc.on_message(sender, msg))

    def vc(self) -> Optional[tuple]:
        return tuple(self.proc.vc)

    @staticmethod
    def _wrap(fx) -> Step:
        return Step(
            sends=[(e.message, None) for e in fx.emissions],
            completions=[(tok, list(view)) for tok, view in fx.completions],
            validated=list(fx.validated),
        )

    @staticmethod
    def is_proposal(msg, pid: int) -> bool:
        return (
            isinstance(msg, ProtocolMessage)
            and msg.writer == pid
            and msg.writer_stamp == msg.sender_stamp
        )


def _abd_factory(pid: int, n: int, obj: str):
    from scsnap.abd import AbdNode

    return AbdNode(pid, n, obj)


NODE_FACTORIES: dict[str, Callable[[int, int, str], Any]] = {
    "sc": SnapshotNode,
    "abd": _abd_factory,
}


# -- trace ----------------------------------------------------------------


def message_fields(msg) -> dict:
    if isinstance(msg, ProtocolMessage):
        return {
            "mtype": "M",
            "writer": msg.writer,
            "writer_stamp": msg.writer_stamp,
            "sender_stamp": msg.sender_stamp,
            "value": msg.value,
        }
    return msg.trace_fields()


class Trace:
    """Ordered simulator records plus the config that produced them."""

    def __init__(self, config: SimConfig, records: Optional[list] = None):
        self.config = config
        self.records: list[dict] = records if records is not None else []

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def of_kind(self, *kinds: str) -> list[dict]:
        return [r for r in self.records if r["kind"] in kinds]

    def vc_samples(self, obj: Optional[str] = None) -> list[tuple]:
        """Every recorded post-step vc of protocol nodes (optionally one object)."""
        out = []
        for r in self.records:
            if r["vc"] is not None and (obj is None or r["obj"] == obj):
                out.append(tuple(r["vc"]))
        return out

    def dumps(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self.records)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path, config: Optional[SimConfig] = None) -> "Trace":
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rec = json.loads(line)
                    records.append({k: rec.get(k) for k in TRACE_FIELDS})
        return cls(config, records)

    def history(self) -> History:
        return history_from_records(self.records)


def history_from_records(records: Iterable[dict]) -> History:
    ops: dict[int, OperationRecord] = {}
    for i, r in enumerate(records):
        if r["kind"] == "INVOKE":
            ops[r["op"]] = OperationRecord(
                op_id=r["op"], process=r["process"], obj=r["obj"], kind=r["op_kind"],
                value=r["arg"], returned=None, invoke_index=i, respond_index=None,
            )
        elif r["kind"] == "RESPOND":
            rec = ops[r["op"]]
            rec.respond_index = i
            ret = r["returned"]
            rec.returned = tuple(ret) if isinstance(ret, list) else ret
    return History(list(ops.values()))


# -- simulator --------------------------------------------------------------


class Simulator:
    def __init__(self, config: SimConfig):
        config.validate()
        self.cfg = config
        self.n = config.n
        self.rng = random.Random(config.seed)
        self.factory = NODE_FACTORIES[config.protocol]
        self.nodes: dict[tuple[int, str], Any] = {}
        self.alive = [True] * self.n
        self.armed: dict[int, int] = {}  # process -> cut index
        self.busy: list[Optional[int]] = [None] * self.n
        self.queue: list[list[OpSpec]] = [[] for _ in range(self.n)]
        self.op_of: dict[int, tuple[int, str, str]] = {}  # op -> (process, obj, kind)
        self.events: list = []
        self.seq = 0
        self.step_no = 0
        self.time = 0
        self.next_op = 0
        self.next_msg = 0
        self.last_delivery: dict[tuple[int, int], int] = {}
        self.channel_count: dict[tuple[int, int], int] = {}
        self.records: list[dict] = []

    def node(self, pid: int, obj: str):
        key = (pid, obj)
        if key not in self.nodes:
            self.nodes[key] = self.factory(pid, self.n, obj)
        return self.nodes[key]

    def _push(self, time: int, kind: str, payload) -> None:
        heapq.heappush(self.events, (time, self.seq, kind, payload))
        self.seq += 1

    def _record(self, cur_seq: int, kind: str, **fields) -> dict:
        rec = dict.fromkeys(TRACE_FIELDS)
        rec.update(time=self.time, seq=cur_seq, step=self.step_no, kind=kind)
        rec.update(fields)
        self.records.append(rec)
        return rec

    def run(self) -> Trace:
        for c in sorted(self.cfg.crashes, key=lambda c: (c.time, c.process)):
            self._push(c.time, "crash", c)
        for op in sorted(self.cfg.ops, key=lambda o: o.time):
            self._push(op.time, "op", op)

        processed = 0
        while self.events:
            if processed >= self.cfg.max_events:
                raise LivenessFailure(
                    f"event cap {self.cfg.max_events} reached with "
                    f"{len(self.events)} events pending",
                    Trace(self.cfg, self.records),
                )
            time, seq, kind, payload = heapq.heappop(self.events)
            self.time = time
            processed += 1
            if kind == "crash":
                self._on_crash(seq, payload)
            elif kind == "op":
                self._on_op(seq, payload)
            else:
                self._on_deliver(seq, payload)
            self.step_no += 1

        for pid in sorted(self.armed):
            if self.alive[pid]:
                self._crash_now(self.seq, pid)
                self.step_no += 1
        self.armed.clear()
        trace = Trace(self.cfg, self.records)
        self._check_quiescence(trace)
        return trace

    def _check_quiescence(self, trace: Trace) -> None:
        stuck = []
        for pid in range(self.n):
            if not self.alive[pid]:
                continue
            if self.busy[pid] is not None:
                stuck.append(f"p{pid} blocked in op {self.busy[pid]}")
            if self.queue[pid]:
                stuck.append(f"p{pid} has {len(self.queue[pid])} unstarted ops")
        if stuck and self.cfg.liveness:
            raise LivenessFailure("; ".join(stuck), trace)

    # -- handlers -----------------------------------------------------------

    def _on_crash(self, seq: int, c: CrashSpec) -> None:
        if not self.alive[c.process]:
            return
        if c.cut is None:
            self._crash_now(seq, c.process)
        else:
            self.armed[c.process] = c.cut

    def _crash_now(self, seq: int, pid: int) -> None:
        self.alive[pid] = False
        self.armed.pop(pid, None)
        self._record(seq, "CRASH", process=pid)

    def _on_op(self, seq: int, op: OpSpec) -> None:
        if not self.alive[op.process]:
            return
        self.queue[op.process].append(op)
        self._start_ops(seq, op.process)

    def _start_ops(self, seq: int, pid: int) -> None:
        while self.alive[pid] and self.busy[pid] is None and self.queue[pid]:
            op = self.queue[pid].pop(0)
            op_id = self.next_op
            self.next_op += 1
            self.op_of[op_id] = (pid, op.obj, op.kind)
            self.busy[pid] = op_id
            self._record(seq, "INVOKE", process=pid, obj=op.obj, op=op_id,
                         op_kind=op.kind, arg=op.value)
            node = self.node(pid, op.obj)
            step = node.invoke(op_id, op.kind, op.value)
            self._apply(seq, pid, op.obj, node, step)

    def _on_deliver(self, seq: int, payload) -> None:
        sender, receiver, obj, msg, msg_id, sent_step = payload
        if not self.alive[receiver]:
            return
        self._record(seq, "DELIVER", process=receiver, obj=obj, sender=sender,
                     receiver=receiver, msg=msg_id, sent_step=sent_step,
                     **message_fields(msg))
        node = self.node(receiver, obj)
        step = node.deliver(sender, msg)
        self._apply(seq, receiver, obj, node, step)

    def _apply(self, seq: int, pid: int, obj: str, node, step: Step) -> None:
        """Expand a node step into unicasts, honouring an armed crash cut."""
        cut = self.armed.get(pid)
        sent = 0
        crashed = False
        for msg, dests in step.sends:
            targets = range(self.n) if dests is None else sorted(dests)
            proposal = SnapshotNode.is_proposal(msg, pid)
            for dest in targets:
                if cut is not None and sent >= cut:
                    crashed = True
                    break
                if proposal:
                    self._record(seq, "PROPOSE", process=pid, obj=obj, **message_fields(msg))
                    proposal = False
                self._unicast(seq, pid, dest, obj, msg)
                sent += 1
            if crashed:
                break
        if cut is not None and sent > 0:
            crashed = True
        if crashed:
            self._crash_now(seq, pid)
            return
        vc = node.vc()
        for op_id, returned in step.completions:
            self._record(seq, "RESPOND", process=pid, obj=obj, op=op_id,
                         op_kind=self.op_of[op_id][2], returned=returned,
                         vc=list(vc) if vc is not None else None)
            if self.busy[pid] == op_id:
                self.busy[pid] = None
        if vc is not None:
            self._record(seq, "STATE", process=pid, obj=obj, vc=list(vc))
        if self.busy[pid] is None and self.queue[pid]:
            self._start_ops(seq, pid)

    def _unicast(self, seq: int, sender: int, receiver: int, obj: str, msg) -> None:
        msg_id = self.next_msg
        self.next_msg += 1
        if receiver == sender:
            # already consumed by the node inside this step
            self._record(seq, "DELIVER", process=sender, obj=obj, sender=sender,
                         receiver=receiver, msg=msg_id, sent_step=self.step_no,
                         **message_fields(msg))
            return
        chan = (sender, receiver)
        k = self.channel_count.get(chan, 0) + 1
        self.channel_count[chan] = k
        lo, hi = self.cfg.delay_range
        delay = self.rng.randint(lo, hi)
        delay = self.cfg.scripted_delays.get((sender, receiver, k), delay)
        at = max(self.time + delay, self.last_delivery.get(chan, 0))
        self.last_delivery[chan] = at
        self._push(at, "deliver", (sender, receiver, obj, msg, msg_id, self.step_no))


def run(config: SimConfig) -> tuple[Trace, History]:
    """Execute ``config`` to quiescence and return its trace and history."""
    trace = Simulator(config).run()
    return trace, trace.history()
