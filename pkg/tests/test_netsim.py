import json

import pytest
from hypothesis import given, settings, strategies as st

from scsnap import checker, invariants, metrics
from scsnap.history import SnapshotSpec
from scsnap.netsim import (
    SNAPSHOT,
    WRITE,
    ConfigError,
    CrashSpec,
    LivenessFailure,
    OpSpec,
    SimConfig,
    Trace,
    run,
)
from scsnap.scenarios import (
    chain_config,
    crash_mid_broadcast_config,
    two_writers_config,
)


def deliveries(trace, network_only=False):
    out = [r for r in trace.records if r["kind"] == "DELIVER"]
    if network_only:
        out = [r for r in out if r["sender"] != r["receiver"]]
    return out


def test_single_write_n3_delivers_nine_messages():
    trace, history = run(SimConfig(n=3, ops=[OpSpec(0, 0, WRITE, 1)]))
    assert len(deliveries(trace)) == 9
    assert metrics.message_counts(trace) == {("REG", 0, 1): 9}


def test_singleton_write_then_snapshot():
    trace, history = run(SimConfig(n=1, ops=[OpSpec(0, 0, WRITE, 5), OpSpec(0, 0, SNAPSHOT)]))
    snap = [o for o in history if o.kind == SNAPSHOT][0]
    assert snap.returned == (5,)
    assert len(deliveries(trace)) == 1


def test_same_config_same_trace():
    cfg = chain_config(seed=7)
    a, _ = run(cfg)
    b, _ = run(chain_config(seed=7))
    assert a.dumps() == b.dumps()
    c, _ = run(chain_config(seed=8))
    assert a.dumps() != c.dumps()


def test_fifo_per_channel():
    trace, _ = run(chain_config(seed=3))
    assert invariants.fifo_channels(trace) == []
    sent = {}
    for r in deliveries(trace, network_only=True):
        chan = (r["sender"], r["receiver"])
        assert r["msg"] > sent.get(chan, -1)
        sent[chan] = r["msg"]


def test_every_message_to_live_process_delivered():
    trace, _ = run(SimConfig(n=4, seed=2, ops=[OpSpec(0, p, WRITE, p + 1) for p in range(4)]))
    # 4 updates, each broadcast by all 4 processes to all 4
    assert len(deliveries(trace)) == 4 * 16


def test_self_delivery_within_emitting_step():
    trace, _ = run(SimConfig(n=3, ops=[OpSpec(0, 0, WRITE, 1)]))
    for r in deliveries(trace):
        if r["sender"] == r["receiver"]:
            assert r["sent_step"] == r["step"]


def test_crash_mid_broadcast_partial_delivery():
    trace, history = run(crash_mid_broadcast_config())
    crash = trace.of_kind("CRASH")
    assert [r["process"] for r in crash] == [4]
    first = [r for r in deliveries(trace) if r["writer"] == 4 and r["sender"] == 4]
    assert sorted(r["receiver"] for r in first) == [0, 1]
    counts = metrics.message_counts(trace)
    assert all(c < 25 for c in counts.values())
    assert checker.check_sc(history, SnapshotSpec(5)).ok
    assert invariants.crash_containment(trace) == []


def test_crash_before_activity_contributes_nothing():
    cfg = SimConfig(
        n=3, max_crashes=1,
        ops=[OpSpec(5, 2, WRITE, 9), OpSpec(5, 0, WRITE, 1), OpSpec(50, 1, SNAPSHOT)],
        crashes=[CrashSpec(0, 2)],
    )
    trace, history = run(cfg)
    assert all(r["process"] != 2 or r["kind"] == "CRASH" for r in trace.records)
    assert [o.returned for o in history if o.kind == SNAPSHOT] == [(1, 0, 0)]


def test_writer_crash_after_full_broadcast_still_validated():
    cfg = SimConfig(
        n=3, max_crashes=1, seed=1,
        ops=[OpSpec(0, 0, WRITE, 4), OpSpec(100, 1, SNAPSHOT), OpSpec(100, 2, SNAPSHOT)],
        crashes=[CrashSpec(0, 0, cut=3)],
    )
    trace, history = run(cfg)
    assert [r["process"] for r in trace.of_kind("CRASH")] == [0]
    assert [o.returned for o in history if o.kind == SNAPSHOT] == [(4, 0, 0), (4, 0, 0)]


def test_crash_cut_zero_write_may_vanish():
    cfg = SimConfig(
        n=3, max_crashes=1,
        ops=[OpSpec(0, 0, WRITE, 4), OpSpec(50, 1, SNAPSHOT)],
        crashes=[CrashSpec(0, 0, cut=0)],
    )
    trace, history = run(cfg)
    assert trace.of_kind("PROPOSE") == []
    assert [o.returned for o in history if o.kind == SNAPSHOT] == [(0, 0, 0)]
    assert checker.check_sc(history, SnapshotSpec(3)).ok


def test_armed_crash_that_never_fires_happens_at_end():
    cfg = SimConfig(n=3, max_crashes=1, ops=[OpSpec(0, 1, SNAPSHOT)], crashes=[CrashSpec(0, 2, cut=1)])
    trace, _ = run(cfg)
    assert [r["process"] for r in trace.of_kind("CRASH")] == [2]


def test_two_writers_dependency_at_p2():
    trace, history = run(two_writers_config())
    log = metrics.validation_log(trace, 2)
    # a = (4, 1) is never validated ahead of b = (0, 1) at p2
    assert log == [(15, [(0, 1), (4, 1)])]
    # yet at time 12 p2 already held a majority of stamps for a
    got = {r["sender"] for r in deliveries(trace)
           if r["receiver"] == 2 and r["writer"] == 4 and r["time"] <= 12}
    assert len(got) >= 3
    assert checker.check_sc(history, SnapshotSpec(5)).ok
    assert checker.check_sc_witness(history, trace).ok
    assert all(o.returned == (1, 0, 0, 0, 1) for o in history if o.kind == SNAPSHOT)


def test_chain_scenario_validates_everything():
    trace, history = run(chain_config())
    assert not any(invariants.check_all(trace).values())
    snaps = [o.returned for o in history if o.kind == SNAPSHOT]
    assert len(set(snaps)) == 1 and snaps[0][0] == 205 and snaps[0][3] == 105


def test_config_round_trip():
    cfg = two_writers_config(seed=3)
    cfg.crashes = [CrashSpec(3, 1, cut=2)]
    cfg.max_crashes = 1
    doc = json.loads(json.dumps(cfg.to_dict()))
    assert SimConfig.from_dict(doc) == cfg


@pytest.mark.parametrize(
    "cfg",
    [
        SimConfig(n=4, max_crashes=2),
        SimConfig(n=0),
        SimConfig(n=3, delay_range=(0, 3)),
        SimConfig(n=3, max_crashes=1, crashes=[CrashSpec(0, 0), CrashSpec(1, 1)]),
        SimConfig(n=3, ops=[OpSpec(0, 3, WRITE, 1)]),
        SimConfig(n=3, ops=[OpSpec(0, 0, "read")]),
    ],
)
def test_invalid_configs_rejected(cfg):
    with pytest.raises(ConfigError):
        run(cfg)


def test_unknown_config_key_rejected():
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"n": 3, "colour": "blue"})


def test_no_liveness_allows_half_crashed():
    cfg = SimConfig(
        n=4, max_crashes=2, liveness=False,
        ops=[OpSpec(1, 0, WRITE, 1), OpSpec(1, 0, SNAPSHOT)],
        crashes=[CrashSpec(0, 2), CrashSpec(0, 3)],
    )
    trace, history = run(cfg)
    snap = [o for o in history if o.kind == SNAPSHOT][0]
    assert not snap.complete  # only 2 of 4 alive: never validated


def test_event_cap_is_liveness_failure():
    cfg = SimConfig(n=5, ops=[OpSpec(0, p, WRITE, 1) for p in range(5)], max_events=10)
    with pytest.raises(LivenessFailure) as exc:
        run(cfg)
    assert exc.value.trace is not None


def test_trace_file_round_trip(tmp_path):
    trace, history = run(two_writers_config())
    path = tmp_path / "t.jsonl"
    trace.write(path)
    back = Trace.load(path, trace.config)
    assert back.records == trace.records
    assert back.history().dumps() == history.dumps()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([2, 3, 5]))
def test_random_runs_deterministic_and_safe(seed, n):
    ops = [OpSpec((seed >> i) % 20, i % n, WRITE if i % 3 else SNAPSHOT, i) for i in range(8)]
    cfg = SimConfig(n=n, seed=seed, ops=ops)
    a, h = run(cfg)
    b, _ = run(cfg)
    assert a.dumps() == b.dumps()
    assert not any(invariants.check_all(a).values())
