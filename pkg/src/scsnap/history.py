"""Operation histories and the sequential specifications they are checked against."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional


class HistoryError(ValueError):
    """Malformed or inconsistent history input."""


@dataclass
class OperationRecord:
    op_id: int
    process: int
    obj: str
    kind: str  # "write" | "snapshot" | "read"
    value: Any = None
    returned: Any = None
    invoke_index: int = 0
    respond_index: Optional[int] = None

    @property
    def complete(self) -> bool:
        return self.respond_index is not None

    @property
    def is_update(self) -> bool:
        return self.kind == "write"

    def to_dict(self) -> dict:
        ret = self.returned
        return {
            "op": self.op_id,
            "process": self.process,
            "obj": self.obj,
            "kind": self.kind,
            "value": self.value,
            "returned": list(ret) if isinstance(ret, tuple) else ret,
            "invoke": self.invoke_index,
            "respond": self.respond_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OperationRecord":
        try:
            ret = d.get("returned")
            return cls(
                op_id=int(d["op"]),
                process=int(d["process"]),
                obj=str(d.get("obj", "REG")),
                kind=str(d["kind"]),
                value=d.get("value"),
                returned=tuple(ret) if isinstance(ret, list) else ret,
                invoke_index=int(d["invoke"]),
                respond_index=None if d.get("respond") is None else int(d["respond"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise HistoryError(f"bad operation record {d!r}: {exc}") from exc


@dataclass
class History:
    ops: list[OperationRecord] = field(default_factory=list)

    def __post_init__(self):
        ids = [op.op_id for op in self.ops]
        if len(set(ids)) != len(ids):
            raise HistoryError("duplicate operation ids")
        for p, seq in self.by_process().items():
            for a, b in zip(seq, seq[1:]):
                if a.respond_index is None or a.respond_index > b.invoke_index:
                    raise HistoryError(
                        f"process {p} invokes op {b.op_id} before op {a.op_id} returned"
                    )

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    def op(self, op_id: int) -> OperationRecord:
        for o in self.ops:
            if o.op_id == op_id:
                return o
        raise KeyError(op_id)

    def by_process(self) -> dict[int, list[OperationRecord]]:
        out: dict[int, list[OperationRecord]] = {}
        for o in sorted(self.ops, key=lambda o: o.invoke_index):
            out.setdefault(o.process, []).append(o)
        return out

    def objects(self) -> list[str]:
        return sorted({o.obj for o in self.ops})

    def restrict(self, obj: str) -> "History":
        return History([o for o in self.ops if o.obj == obj])

    def process_order_pairs(self) -> list[tuple[int, int]]:
        """Immediate process-order successor pairs."""
        pairs = []
        for seq in self.by_process().values():
            pairs.extend((a.op_id, b.op_id) for a, b in zip(seq, seq[1:]))
        return pairs

    def dumps(self) -> str:
        ops = sorted(self.ops, key=lambda o: o.invoke_index)
        return "".join(json.dumps(o.to_dict(), separators=(",", ":")) + "\n" for o in ops)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "History":
        ops = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise HistoryError(f"line {lineno}: {exc}") from exc
            ops.append(OperationRecord.from_dict(d))
        return cls(ops)

    @classmethod
    def load(cls, path) -> "History":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def sequential_history(
    steps: Iterable[tuple[int, str, str, Any, Any]], start: int = 0
) -> History:
    """Build a history from (process, obj, kind, value, returned) tuples.

    Each operation gets its own invoke/respond slot, so the resulting history
    is non-overlapping in real time in the listed order.
    """
    ops = []
    for i, (p, obj, kind, value, ret) in enumerate(steps):
        ops.append(OperationRecord(start + i, p, obj, kind, value, ret, 2 * i, 2 * i + 1))
    return History(ops)


# -- sequential specifications ------------------------------------------------


class SnapshotSpec:
    """Array of ``n`` single-writer registers with an atomic snapshot.

    ``write(v)`` by process k sets register k; ``snapshot`` returns the array.
    """

    def __init__(self, n: int, initial: Any = 0):
        self.n = n
        self.initial_value = initial

    def initial(self):
        return (self.initial_value,) * self.n

    def step(self, state, op: OperationRecord):
        """Return the successor state, or None if ``op`` is illegal here."""
        if op.kind == "write":
            if not 0 <= op.process < self.n:
                return None
            s = list(state)
            s[op.process] = op.value
            return tuple(s)
        if op.kind in ("snapshot", "read"):
            if op.returned is None or tuple(op.returned) != state:
                return None
            return state
        return None

    def result(self, state, op: OperationRecord):
        return state if op.kind in ("snapshot", "read") else None


class RegisterSpec:
    """A single read/write register."""

    def __init__(self, initial: Any = 0):
        self.initial_value = initial

    def initial(self):
        return self.initial_value

    def step(self, state, op: OperationRecord):
        if op.kind == "write":
            return op.value
        if op.kind in ("read", "snapshot"):
            return state if op.returned == state else None
        return None

    def result(self, state, op: OperationRecord):
        return state if op.kind != "write" else None


class ProductSpec:
    """Interleavings of independent objects, keyed by ``op.obj``."""

    def __init__(self, specs: dict):
        self.specs = dict(specs)
        self.keys = sorted(self.specs)

    def initial(self):
        return tuple(self.specs[k].initial() for k in self.keys)

    def step(self, state, op: OperationRecord):
        try:
            i = self.keys.index(op.obj)
        except ValueError:
            return None
        nxt = self.specs[op.obj].step(state[i], op)
        if nxt is None:
            return None
        return state[:i] + (nxt,) + state[i + 1:]


def spec_for(history: History, name: str, n: Optional[int] = None):
    """Product of one ``name`` spec per object appearing in ``history``."""
    if n is None:
        n = 1 + max((o.process for o in history), default=0)
    if name == "snapshot":
        make = lambda: SnapshotSpec(n)  # noqa: E731
    elif name == "register":
        make = RegisterSpec
    else:
        raise HistoryError(f"unknown spec {name!r}")
    return ProductSpec({obj: make() for obj in history.objects()})
