"""Built-in scenarios and fixture histories."""

from __future__ import annotations

from importlib import resources

from scsnap.history import History, OperationRecord
from scsnap.netsim import SNAPSHOT, WRITE, CrashSpec, OpSpec, SimConfig


def crossed_history() -> History:
    """Two registers, each fine alone, jointly not sequentially consistent.

    p1 writes X then reads Y as 0; p0 writes Y then reads X as 0.
    """
    return History([
        OperationRecord(0, 1, "X", "write", 1, None, 0, 2),
        OperationRecord(1, 0, "Y", "write", 1, None, 1, 3),
        OperationRecord(2, 1, "Y", "read", None, 0, 4, 6),
        OperationRecord(3, 0, "X", "read", None, 0, 5, 7),
    ])


def crossed_x() -> History:
    return crossed_history().restrict("X")


def crossed_y() -> History:
    return crossed_history().restrict("Y")


def builtin_history(name: str) -> History:
    """Load a packaged ``<name>.history`` file."""
    text = resources.files("scsnap.fixtures").joinpath(f"{name}.history").read_text()
    return History.loads(text)


# Two concurrent writes on five processes: a = write(1) by p4, b = write(1)
# by p0.  Delays of the messages that matter are scripted; everything else
# arrives after time 20.  Channel index k is the sender's k-th broadcast:
#   p4: a, fwd b    p0: b, fwd a    p3: fwd a, fwd b
#   p2: fwd a, fwd b    p1: fwd b, fwd a
TWO_WRITER_DELAYS = {
    # a
    (4, 3, 1): 3, (3, 2, 1): 3, (3, 4, 1): 3,
    (2, 3, 1): 3, (2, 4, 1): 3, (2, 1, 1): 4, (2, 0, 1): 4,
    (1, 0, 2): 5, (1, 2, 2): 2, (0, 1, 2): 5,
    # b
    (0, 1, 1): 3, (1, 2, 1): 6, (1, 0, 1): 4, (1, 4, 1): 4,
    (2, 0, 2): 3, (2, 3, 2): 2, (2, 4, 2): 2, (2, 1, 2): 3,
    (3, 2, 2): 4, (4, 3, 2): 8,
}


def two_writers_config(seed: int = 0) -> SimConfig:
    ops = [OpSpec(0, 4, WRITE, 1), OpSpec(0, 0, WRITE, 1)]
    ops += [OpSpec(40, p, SNAPSHOT) for p in range(5)]
    return SimConfig(
        n=5, max_crashes=0, seed=seed, delay_range=(20, 30), ops=ops,
        scripted_delays=dict(TWO_WRITER_DELAYS),
    )


def chain_config(seed: int = 0, rounds: int = 6) -> SimConfig:
    """p0 and p3 write alternately and fast, so updates overlap in flight.

    Without the write buffer this pattern can build an endless chain of
    mutual dependencies; with it, every process still validates everything.
    """
    ops = []
    for i in range(rounds):
        ops.append(OpSpec(2 * i, 3, WRITE, 100 + i))
        ops.append(OpSpec(2 * i + 1, 0, WRITE, 200 + i))
    ops += [OpSpec(200, p, SNAPSHOT) for p in range(4)]
    return SimConfig(n=4, max_crashes=1, seed=seed, delay_range=(1, 12), ops=ops)


def back_to_back_config(delay: int = 5) -> SimConfig:
    """Two writes then a snapshot on p0, all at time 0, fixed delays."""
    ops = [OpSpec(0, 0, WRITE, 1), OpSpec(0, 0, WRITE, 2), OpSpec(0, 0, SNAPSHOT)]
    return SimConfig(n=3, delay_range=(delay, delay), ops=ops)


def snapshot_pair_config() -> SimConfig:
    """Write, wait for quiescence, then two snapshots back to back."""
    ops = [OpSpec(0, 0, WRITE, 1), OpSpec(100, 0, SNAPSHOT), OpSpec(100, 0, SNAPSHOT)]
    return SimConfig(n=3, delay_range=(1, 10), ops=ops)


def crash_mid_broadcast_config(seed: int = 0) -> SimConfig:
    """n=5, p4 crashes after 2 of the 5 sends of its write's broadcast."""
    ops = [OpSpec(0, 4, WRITE, 7), OpSpec(1, 0, WRITE, 3)]
    ops += [OpSpec(60, p, SNAPSHOT) for p in range(4)]
    return SimConfig(
        n=5, max_crashes=2, seed=seed, delay_range=(1, 10), ops=ops,
        crashes=[CrashSpec(0, 4, cut=2)],
    )


SCENARIOS = {
    "two-writers": two_writers_config,
    "chain": chain_config,
    "back-to-back": lambda seed=0: back_to_back_config(),
    "snapshot-pair": lambda seed=0: snapshot_pair_config(),
    "crash-mid-broadcast": crash_mid_broadcast_config,
}
