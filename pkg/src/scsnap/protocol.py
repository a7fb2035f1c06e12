"""Single-process state machine of the sequentially consistent snapshot memory.

A :class:`Process` holds one replica's local view (validated values ``x`` and
their writer stamps ``vc``), its own message clock ``sc``, the set of pending
(not yet validated) updates ``g`` and the postponed-write buffer ``v``.

The machine is driven by three inputs: a local ``write``, a local
``request_snapshot`` and ``on_message`` for network deliveries.  Every call is
a synchronous transition that returns an :class:`Effects` record listing the
broadcasts it emitted and the snapshot requests it completed.  Messages a
process broadcasts to itself are consumed inside the emitting transition,
before it returns, because self-delivery is instantaneous.
"""

from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Optional


class ProtocolError(Exception):
    """Raised when a process receives a message it cannot interpret."""


class InvariantViolation(ProtocolError):
    """Raised when a transition observes a state the protocol rules out."""


class _Unknown:
    """Stamp of a process that has not yet been heard from for an update.

    Orders strictly above every finite stamp.
    """

    _instance: Optional["_Unknown"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNKNOWN"

    def __reduce__(self):
        return (_Unknown, ())

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("UNKNOWN")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True


UNKNOWN = _Unknown()


def stamp_lt(a, b) -> bool:
    """``a < b`` where either side may be UNKNOWN."""
    if a is UNKNOWN:
        return False
    if b is UNKNOWN:
        return True
    return a < b


@dataclass(frozen=True)
class ProtocolMessage:
    """The ``M(value, writer, writer_stamp, sender_stamp)`` tuple."""

    value: Any
    writer: int
    writer_stamp: int
    sender_stamp: int

    @property
    def update_id(self) -> tuple[int, int]:
        return (self.writer, self.writer_stamp)


@dataclass(frozen=True)
class Emission:
    """A FIFO broadcast to every process, the emitter included."""

    message: ProtocolMessage
    kind: str = "BROADCAST"


@dataclass
class PendingEntry:
    value: Any
    writer: int
    writer_stamp: int
    stamps: list

    @property
    def update_id(self) -> tuple[int, int]:
        return (self.writer, self.writer_stamp)

    def known(self) -> int:
        return sum(1 for s in self.stamps if s is not UNKNOWN)


@dataclass
class Effects:
    """Outputs of one transition."""

    emissions: list[Emission] = field(default_factory=list)
    completions: list[tuple[Hashable, tuple]] = field(default_factory=list)
    # update ids validated during the transition, in validation order
    validated: list[tuple[int, int]] = field(default_factory=list)
    # messages consumed by self-delivery, in order
    self_delivered: list[ProtocolMessage] = field(default_factory=list)

    def extend(self, other: "Effects") -> None:
        self.emissions.extend(other.emissions)
        self.completions.extend(other.completions)
        self.validated.extend(other.validated)
        self.self_delivered.extend(other.self_delivered)


def _majority(count: int, n: int) -> bool:
    return 2 * count > n


def validate_step(
    g: Iterable[PendingEntry], n: int
) -> tuple[list[PendingEntry], list[PendingEntry]]:
    """Split pending entries into (validated, remaining).

    Candidates are entries stamped by a strict majority.  A candidate is then
    dropped while some non-candidate exists that a strict majority did *not*
    stamp after it, i.e. the candidate still depends on an update that
    cannot be validated yet.  Runs to a fixpoint.
    """
    entries = list(g)
    chosen = [e for e in entries if _majority(e.known(), n)]
    ids = {e.update_id for e in chosen}
    changed = True
    while changed:
        changed = False
        others = [e for e in entries if e.update_id not in ids]
        for cand in chosen:
            for other in others:
                before = sum(
                    1 for l in range(n) if stamp_lt(cand.stamps[l], other.stamps[l])
                )
                if not _majority(before, n):
                    ids.discard(cand.update_id)
                    changed = True
                    break
            if changed:
                break
        chosen = [e for e in chosen if e.update_id in ids]
    remaining = [e for e in entries if e.update_id not in ids]
    return chosen, remaining


class Process:
    """Replica ``self_id`` of an ``n``-process snapshot memory."""

    def __init__(self, self_id: int, n: int, initial: Any = 0):
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if not 0 <= self_id < n:
            raise ValueError(f"process id {self_id} out of range for n={n}")
        self.self_id = self_id
        self.n = n
        self.x: list = [initial] * n
        self.vc: list[int] = [0] * n
        self.sc = 0
        self.g: dict[tuple[int, int], PendingEntry] = {}
        self.v: Optional[Any] = None
        self.has_v = False
        self.pending_snapshots: deque = deque()
        # (writer, stamp) -> senders we already got a message from
        self._seen: dict[tuple[int, int], set[int]] = {}
        self._inbox: deque = deque()

    # -- queries -------------------------------------------------------

    def own_pending(self) -> bool:
        return any(e.writer == self.self_id for e in self.g.values())

    def snapshot_ready(self) -> bool:
        return not self.has_v and not self.own_pending()

    def view(self) -> tuple:
        return tuple(self.x)

    def clone(self) -> "Process":
        return copy.deepcopy(self)

    # -- inputs --------------------------------------------------------

    def write(self, value: Any) -> Effects:
        """Wait-free update of this process's register."""
        fx = Effects()
        if not self.own_pending() and not self.has_v:
            self._propose(value, fx)
        else:
            # postponed; a later value overwrites an earlier buffered one
            self.v = value
            self.has_v = True
        self._drain(fx)
        return fx

    def request_snapshot(self, token: Hashable) -> Effects:
        fx = Effects()
        self.pending_snapshots.append(token)
        self._complete_snapshots(fx)
        return fx

    def on_message(self, sender: int, m: ProtocolMessage) -> Effects:
        fx = Effects()
        self._handle(sender, m, fx)
        self._drain(fx)
        return fx

    # -- internals -----------------------------------------------------

    def _broadcast(self, m: ProtocolMessage, fx: Effects) -> None:
        fx.emissions.append(Emission(m))
        self._inbox.append(m)

    def _propose(self, value: Any, fx: Effects) -> None:
        self.sc += 1
        self._broadcast(ProtocolMessage(value, self.self_id, self.sc, self.sc), fx)

    def _drain(self, fx: Effects) -> None:
        while self._inbox:
            m = self._inbox.popleft()
            fx.self_delivered.append(m)
            self._handle(self.self_id, m, fx)
        self._complete_snapshots(fx)

    def _handle(self, sender: int, m: ProtocolMessage, fx: Effects) -> None:
        n = self.n
        if not (0 <= m.writer < n) or not (0 <= sender < n):
            raise ProtocolError(f"malformed message {m!r} from {sender}")
        if m.writer_stamp < 1 or m.sender_stamp < 1:
            raise ProtocolError(f"non-positive stamp in {m!r}")
        key = m.update_id
        if m.writer_stamp > self.vc[m.writer]:
            seen = self._seen.setdefault(key, set())
            if sender in seen:
                raise InvariantViolation(
                    f"p{self.self_id}: second message for {key} from p{sender}"
                )
            seen.add(sender)
            entry = self.g.get(key)
            if entry is not None:
                entry.stamps[sender] = m.sender_stamp
            else:
                if m.writer != self.self_id:
                    self.sc += 1
                    self._broadcast(
                        ProtocolMessage(m.value, m.writer, m.writer_stamp, self.sc), fx
                    )
                stamps = [UNKNOWN] * n
                stamps[sender] = m.sender_stamp
                self.g[key] = PendingEntry(m.value, m.writer, m.writer_stamp, stamps)

        validated, _ = validate_step(self.g.values(), n)
        if validated:
            self.apply_validated(validated)
            fx.validated.extend(e.update_id for e in validated)

        if self.has_v and not self.own_pending():
            value = self.v
            self.v = None
            self.has_v = False
            self._propose(value, fx)

    def apply_validated(self, validated: Iterable[PendingEntry]) -> None:
        for e in validated:
            self.g.pop(e.update_id, None)
            if self.vc[e.writer] < e.writer_stamp:
                self.vc[e.writer] = e.writer_stamp
                self.x[e.writer] = e.value
        # stamps at or below vc can never be received again
        self._seen = {
            k: s for k, s in self._seen.items() if k[1] > self.vc[k[0]]
        }

    def _complete_snapshots(self, fx: Effects) -> None:
        if self.pending_snapshots and self.snapshot_ready():
            view = self.view()
            while self.pending_snapshots:
                fx.completions.append((self.pending_snapshots.popleft(), view))
