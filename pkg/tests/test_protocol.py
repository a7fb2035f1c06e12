from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from scsnap.protocol import (
    UNKNOWN,
    InvariantViolation,
    PendingEntry,
    Process,
    ProtocolError,
    ProtocolMessage,
    stamp_lt,
    validate_step,
)

U = UNKNOWN


def entry(writer, stamp, stamps, value=1):
    return PendingEntry(value, writer, stamp, list(stamps))


# -- init --------------------------------------------------------------------


def test_init_zeroed():
    p = Process(0, 3)
    assert p.x == [0, 0, 0]
    assert p.vc == [0, 0, 0]
    assert p.sc == 0
    assert p.g == {}


def test_init_no_buffered_value():
    p = Process(2, 3)
    assert p.v is None and not p.has_v


def test_init_singleton():
    p = Process(0, 1)
    assert p.view() == (0,)


@pytest.mark.parametrize("pid,n", [(3, 3), (-1, 3), (0, 0)])
def test_init_rejects_bad_ids(pid, n):
    with pytest.raises(ValueError):
        Process(pid, n)


# -- stamps ------------------------------------------------------------------


def test_unknown_is_above_every_stamp():
    assert stamp_lt(10**9, U)
    assert not stamp_lt(U, 3)
    assert not stamp_lt(U, U)
    assert U > 5 and not U < 5
    assert sorted([U, 3, 1]) == [1, 3, U]


# -- write -------------------------------------------------------------------


def test_first_write_proposes():
    p = Process(0, 3)
    fx = p.write(1)
    assert p.sc == 1
    assert [e.message for e in fx.emissions] == [ProtocolMessage(1, 0, 1, 1)]
    assert not p.has_v
    # the self-copy is consumed at once and creates the pending entry
    assert fx.self_delivered == [ProtocolMessage(1, 0, 1, 1)]
    assert p.g[(0, 1)].stamps == [1, U, U]


def test_write_postponed_while_own_update_pending():
    p = Process(0, 3)
    p.write(1)
    fx = p.write(5)
    assert fx.emissions == []
    assert p.has_v and p.v == 5


def test_later_postponed_write_overwrites_earlier():
    p = Process(0, 3)
    p.write(1)
    p.write(5)
    p.write(7)
    assert p.v == 7


def test_buffered_value_proposed_once_own_update_validated():
    p = Process(0, 3)
    p.write(1)
    p.write(5)
    fx = p.on_message(1, ProtocolMessage(1, 0, 1, 1))
    assert fx.validated == [(0, 1)]
    assert [e.message for e in fx.emissions] == [ProtocolMessage(5, 0, 2, 2)]
    assert not p.has_v
    assert p.vc == [1, 0, 0]


# -- snapshot ----------------------------------------------------------------


def test_snapshot_on_fresh_process_is_immediate():
    p = Process(1, 4)
    fx = p.request_snapshot("s")
    assert fx.completions == [("s", (0, 0, 0, 0))]


def test_snapshot_waits_for_own_update():
    p = Process(0, 3)
    p.write(9)
    assert p.request_snapshot("s").completions == []
    fx = p.on_message(2, ProtocolMessage(9, 0, 1, 1))
    assert fx.completions == [("s", (9, 0, 0))]


def test_second_snapshot_immediate():
    p = Process(0, 3)
    assert p.request_snapshot("a").completions
    assert p.request_snapshot("b").completions == [("b", (0, 0, 0))]


def test_singleton_write_then_snapshot():
    p = Process(0, 1)
    fx = p.write(4)
    assert fx.validated == [(0, 1)]
    assert p.request_snapshot("s").completions == [("s", (4,))]


# -- onMessage ---------------------------------------------------------------


def test_first_message_is_forwarded_with_own_stamp():
    p = Process(1, 3)
    fx = p.on_message(0, ProtocolMessage(1, 0, 1, 1))
    assert [e.message for e in fx.emissions] == [ProtocolMessage(1, 0, 1, 1)]
    assert p.sc == 1
    # stamps from p0 and from p1's own forward: 2 of 3, nothing competing
    assert fx.validated == [(0, 1)]
    assert p.g == {} and p.vc == [1, 0, 0]


def test_forward_uses_incremented_local_clock():
    p = Process(1, 3)
    p.write(3)  # sc = 1
    fx = p.on_message(0, ProtocolMessage(1, 0, 1, 1))
    assert fx.emissions[0].message == ProtocolMessage(1, 0, 1, 2)
    assert p.g[(0, 1)].stamps == [1, 2, U]


def test_stale_message_ignored():
    p = Process(1, 3)
    p.on_message(0, ProtocolMessage(1, 0, 1, 1))
    assert p.vc == [1, 0, 0]
    before = (list(p.x), list(p.vc), p.sc, dict(p.g))
    fx = p.on_message(2, ProtocolMessage(1, 0, 1, 1))
    assert fx.emissions == [] and fx.validated == []
    assert (list(p.x), list(p.vc), p.sc, dict(p.g)) == before


def test_three_process_validation_by_hand():
    p0 = Process(0, 3)
    p0.write(1)
    assert p0.vc == [0, 0, 0]
    fx = p0.on_message(1, ProtocolMessage(1, 0, 1, 1))
    assert fx.validated == [(0, 1)]
    assert p0.x == [1, 0, 0] and p0.vc == [1, 0, 0]
    assert p0.g == {}


def test_malformed_writer_rejected():
    with pytest.raises(ProtocolError):
        Process(0, 3).on_message(1, ProtocolMessage(1, 3, 1, 1))


def test_duplicate_from_same_sender_reported():
    p = Process(0, 5)
    p.on_message(1, ProtocolMessage(1, 2, 1, 1))
    with pytest.raises(InvariantViolation):
        p.on_message(1, ProtocolMessage(1, 2, 1, 4))


# -- validateStep ------------------------------------------------------------


def test_single_majority_entry_validates():
    for n in (1, 2, 3, 4, 5, 7):
        k = n // 2 + 1
        e = entry(0, 1, [1] * k + [U] * (n - k))
        assert validate_step([e], n) == ([e], [])


def test_minority_entry_not_validated():
    e = entry(0, 1, [1, 1, U, U])
    assert validate_step([e], 4) == ([], [e])


def test_dependency_holds_back_candidate():
    # a has a majority but only 2 of 5 processes saw it before b, and b
    # itself lacks a majority, so a must wait for b
    a = entry(4, 1, [5, 4, 3, U, 1])
    b = entry(0, 1, [1, 1, U, U, U])
    assert validate_step([a, b], 5) == ([], [a, b])
    # one more stamp for b: both go through together
    b.stamps[2] = 2
    chosen, rest = validate_step([a, b], 5)
    assert {e.update_id for e in chosen} == {(4, 1), (0, 1)} and rest == []


def test_validated_candidate_leaves_later_entry_pending():
    b = entry(0, 1, [1, 1, 2, U, U])
    a = entry(4, 1, [5, U, 3, U, U])
    assert validate_step([a, b], 5) == ([b], [a])


def test_mutually_unordered_candidates_removed_by_cascade():
    # neither a nor b is seen first by a majority; c lacks a majority and is
    # not preceded by a majority from either, so a and b both drop out
    a = entry(0, 1, [1, 5, 9, U, U])
    b = entry(1, 1, [2, 3, U, 4, U])
    c = entry(2, 1, [1, 1, U, U, U])
    assert validate_step([a, b, c], 5) == ([], [a, b, c])


def test_two_candidates_alone_validate():
    # the removal test only looks at entries outside the candidate set
    a = entry(0, 1, [1, 5, 9, U, U])
    b = entry(1, 1, [2, 3, U, 4, U])
    chosen, rest = validate_step([a, b], 5)
    assert chosen == [a, b] and rest == []


def test_cascade_removes_transitively():
    c = entry(2, 1, [1, 1, U, U, U])  # not a candidate
    a = entry(0, 1, [2, 2, 2, U, U])  # after c at processes 0 and 1 -> held
    b = entry(1, 1, [U, U, 3, 3, 3])  # before c by majority, but not before a
    assert validate_step([c, a, b], 5) == ([], [c, a, b])


# -- applyValidated ------------------------------------------------------------


def test_apply_single():
    p = Process(1, 3)
    p.apply_validated([entry(0, 1, [1, 1, U], value=1)])
    assert p.vc == [1, 0, 0] and p.x == [1, 0, 0]


@pytest.mark.parametrize("order", [(0, 1), (1, 0)])
def test_apply_order_independent(order):
    es = [entry(0, 1, [1, 1, U], value="old"), entry(0, 2, [2, 2, U], value="new")]
    p = Process(1, 3)
    p.apply_validated([es[i] for i in order])
    assert p.vc[0] == 2 and p.x[0] == "new"


def test_apply_stale_keeps_value():
    p = Process(1, 3)
    p.apply_validated([entry(0, 2, [2, 2, U], value="new")])
    p.apply_validated([entry(0, 1, [1, 1, U], value="old")])
    assert p.x[0] == "new" and p.vc[0] == 2


# -- properties ----------------------------------------------------------------


stamp_vectors = st.lists(
    st.one_of(st.just(U), st.integers(1, 6)), min_size=5, max_size=5
)


@given(st.lists(stamp_vectors, min_size=0, max_size=5))
def test_validate_step_partitions_and_needs_majority(vectors):
    g = [entry(i % 5, 1 + i, v) for i, v in enumerate(vectors)]
    chosen, rest = validate_step(g, 5)
    assert sorted(e.update_id for e in chosen + rest) == sorted(e.update_id for e in g)
    for e in chosen:
        assert e.known() >= 3
        for o in rest:
            assert sum(1 for l in range(5) if stamp_lt(e.stamps[l], o.stamps[l])) >= 3


def _simulate(n, writes, picks):
    """Deliver messages through FIFO channels in an order chosen by ``picks``."""
    procs = [Process(i, n) for i in range(n)]
    chans = {(i, j): deque() for i in range(n) for j in range(n) if i != j}
    samples = []

    def emit(src, fx):
        for e in fx.emissions:
            for j in range(n):
                if j != src:
                    chans[(src, j)].append(e.message)
        samples.append(tuple(procs[src].vc))

    for w, v in writes:
        emit(w, procs[w].write(v))
    k = 0
    while True:
        live = [c for c, q in chans.items() if q]
        if not live:
            break
        src, dst = live[picks[k % len(picks)] % len(live)] if picks else live[0]
        k += 1
        emit(dst, procs[dst].on_message(src, chans[(src, dst)].popleft()))
    return procs, samples


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from([1, 2, 3, 4, 5]),
    st.lists(st.tuples(st.integers(0, 4), st.integers(1, 99)), max_size=6),
    st.lists(st.integers(0, 1000), max_size=50),
)
def test_random_schedules_converge_with_comparable_clocks(n, writes, picks):
    writes = [(w % n, v) for w, v in writes]
    procs, samples = _simulate(n, writes, picks)
    for a in samples:
        for b in samples:
            assert all(x <= y for x, y in zip(a, b)) or all(x >= y for x, y in zip(a, b))
    final = {tuple(p.vc) for p in procs}
    assert len(final) == 1
    for p in procs:
        assert p.g == {} and not p.has_v
        assert p.request_snapshot("s").completions
    # last written value of every writer wins (postponed values may be dropped)
    last = {}
    for w, v in writes:
        last[w] = v
    for w, v in last.items():
        assert procs[0].x[w] == v
