"""ABD single-writer register emulation, used as the linearizable baseline.

Each node replicates one register, named ``R<k>`` where ``k`` is the only
process allowed to write it.  A write sends ``(ts, value)`` to everyone and
returns after a strict majority of acknowledgements.  A read queries a
majority, then writes the freshest pair back to a majority before returning.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from typing import Any, Optional

from scsnap.netsim import READ, WRITE, ConfigError, Step

_REG = re.compile(r"^R(\d+)$")


@dataclass(frozen=True)
class AbdMessage:
    mtype: str  # WRITE | WACK | QUERY | QREPLY | WB | WBACK
    origin: int
    seq: int
    ts: int = 0
    value: Any = None

    def trace_fields(self) -> dict:
        return {
            "mtype": self.mtype,
            "writer": self.origin,
            "writer_stamp": self.ts,
            "sender_stamp": self.seq,
            "value": self.value,
        }


def register_owner(obj: str) -> int:
    m = _REG.match(obj or "")
    return int(m.group(1)) if m else 0


class AbdNode:
    def __init__(self, pid: int, n: int, obj: str = "R0"):
        self.pid = pid
        self.n = n
        self.owner = register_owner(obj)
        self.ts = 0
        self.value: Any = 0
        self.my_ts = 0
        self.seq = 0
        self.op: Optional[dict] = None
        self._inbox: deque = deque()

    def vc(self):
        return None

    def _quorum(self, count: int) -> bool:
        return 2 * count > self.n

    def _send(self, step: Step, msg: AbdMessage, dests=None) -> None:
        step.sends.append((msg, dests))
        if dests is None or self.pid in dests:
            self._inbox.append((self.pid, msg))

    def invoke(self, op_id: int, kind: str, value: Any) -> Step:
        step = Step()
        self.seq += 1
        if kind == WRITE:
            if self.pid != self.owner:
                raise ConfigError(f"p{self.pid} cannot write register owned by p{self.owner}")
            self.my_ts += 1
            self.op = {"id": op_id, "phase": "write", "acks": set(), "seq": self.seq}
            self._send(step, AbdMessage("WRITE", self.pid, self.seq, self.my_ts, value))
        elif kind in (READ, "snapshot"):
            self.op = {"id": op_id, "phase": "query", "replies": {}, "seq": self.seq}
            self._send(step, AbdMessage("QUERY", self.pid, self.seq))
        else:
            raise ConfigError(f"ABD does not support {kind!r}")
        self._drain(step)
        return step

    def deliver(self, sender: int, msg: AbdMessage) -> Step:
        step = Step()
        self._handle(sender, msg, step)
        self._drain(step)
        return step

    def _drain(self, step: Step) -> None:
        while self._inbox:
            sender, msg = self._inbox.popleft()
            self._handle(sender, msg, step)

    def _handle(self, sender: int, msg: AbdMessage, step: Step) -> None:
        t = msg.mtype
        if t in ("WRITE", "WB"):
            if msg.ts > self.ts:
                self.ts, self.value = msg.ts, msg.value
            ack = "WACK" if t == "WRITE" else "WBACK"
            self._send(step, AbdMessage(ack, msg.origin, msg.seq, msg.ts), (sender,))
        elif t == "QUERY":
            self._send(
                step, AbdMessage("QREPLY", msg.origin, msg.seq, self.ts, self.value), (sender,)
            )
        elif msg.origin == self.pid and self.op is not None and msg.seq == self.op["seq"]:
            self._on_reply(sender, msg, step)

    def _on_reply(self, sender: int, msg: AbdMessage, step: Step) -> None:
        op = self.op
        if op["phase"] == "write" and msg.mtype == "WACK":
            op["acks"].add(sender)
            if self._quorum(len(op["acks"])):
                step.completions.append((op["id"], None))
                self.op = None
        elif op["phase"] == "query" and msg.mtype == "QREPLY":
            op["replies"][sender] = (msg.ts, msg.value)
            if self._quorum(len(op["replies"])):
                ts, value = max(op["replies"].values(), key=lambda tv: tv[0])
                op.update(phase="writeback", acks=set(), result=value)
                self._send(step, AbdMessage("WB", self.pid, op["seq"], ts, value))
        elif op["phase"] == "writeback" and msg.mtype == "WBACK":
            op["acks"].add(sender)
            if self._quorum(len(op["acks"])):
                step.completions.append((op["id"], op["result"]))
                self.op = None
