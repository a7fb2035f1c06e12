import pytest

from scsnap.history import (
    History,
    HistoryError,
    OperationRecord,
    ProductSpec,
    RegisterSpec,
    SnapshotSpec,
    sequential_history,
    spec_for,
)
from scsnap.scenarios import builtin_history, crossed_history


def test_process_order_must_be_sequential():
    with pytest.raises(HistoryError):
        History([
            OperationRecord(0, 0, "X", "write", 1, None, 0, 5),
            OperationRecord(1, 0, "X", "read", None, 1, 3, 6),
        ])


def test_pending_op_must_be_last_of_its_process():
    with pytest.raises(HistoryError):
        History([
            OperationRecord(0, 0, "X", "write", 1, None, 0, None),
            OperationRecord(1, 0, "X", "read", None, 1, 3, 6),
        ])


def test_duplicate_ids_rejected():
    with pytest.raises(HistoryError):
        History([
            OperationRecord(0, 0, "X", "write", 1, None, 0, 1),
            OperationRecord(0, 1, "X", "write", 2, None, 2, 3),
        ])


def test_round_trip_text():
    h = crossed_history()
    assert History.loads(h.dumps()).dumps() == h.dumps()


def test_builtin_matches_constructor():
    assert builtin_history("crossed").dumps() == crossed_history().dumps()
    assert len(builtin_history("empty")) == 0


def test_loads_skips_blank_and_comment_lines():
    text = "\n# comment\n" + crossed_history().dumps()
    assert len(History.loads(text)) == 4


def test_loads_reports_line_of_bad_json():
    with pytest.raises(HistoryError, match="line 2"):
        History.loads('{"op":0,"process":0,"kind":"write","invoke":0,"respond":1}\n{oops\n')


def test_restrict_and_objects():
    h = crossed_history()
    assert h.objects() == ["X", "Y"]
    assert [o.op_id for o in h.restrict("X")] == [0, 3]


def test_snapshot_spec_step():
    s = SnapshotSpec(3)
    st = s.initial()
    st = s.step(st, OperationRecord(0, 1, "R", "write", 4))
    assert st == (0, 4, 0)
    assert s.step(st, OperationRecord(1, 2, "R", "snapshot", returned=(0, 4, 0))) == st
    assert s.step(st, OperationRecord(1, 2, "R", "snapshot", returned=(0, 0, 0))) is None


def test_register_spec_step():
    r = RegisterSpec()
    assert r.step(0, OperationRecord(0, 1, "R", "write", 4)) == 4
    assert r.step(4, OperationRecord(1, 0, "R", "read", returned=4)) == 4
    assert r.step(4, OperationRecord(1, 0, "R", "read", returned=0)) is None


def test_product_spec_routes_by_object():
    p = ProductSpec({"X": RegisterSpec(), "Y": RegisterSpec()})
    st = p.step(p.initial(), OperationRecord(0, 0, "Y", "write", 1))
    assert st == (0, 1)
    assert p.step(st, OperationRecord(1, 0, "Z", "write", 1)) is None


def test_spec_for_unknown_name():
    with pytest.raises(HistoryError):
        spec_for(crossed_history(), "queue")


def test_sequential_history_is_non_overlapping():
    h = sequential_history([(0, "X", "write", 1, None), (1, "X", "read", None, 1)])
    a, b = list(h)
    assert a.respond_index < b.invoke_index
