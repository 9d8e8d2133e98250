from __future__ import annotations

import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgewarp.mobility import (
    EdgeHost,
    EdgeTopology,
    EventKind,
    MobilityHandler,
    TopologyError,
    UnknownCell,
)
from edgewarp.predictor import resolve

A, B, C = EdgeHost("10.0.0.1", 7000), EdgeHost("10.0.0.2", 7000), EdgeHost("10.0.0.3", 7000)
TOPO = EdgeTopology({1: A, 2: A, 3: B, 4: C})


def hint(t, cell, p=0.9):
    return resolve(t, {cell: p}, 0.5)


@pytest.fixture
def bus():
    h = MobilityHandler(TOPO, debounce_ms=500)
    got = []
    h.register_app("app", got.append)
    h.set_serving("u", 1)
    return h, got


def test_hint_for_other_host(bus):
    h, got = bus
    h.on_prediction("u", hint(100, 3))
    assert [(e.kind, e.target_cell, e.target_host, e.source_host) for e in got] == \
        [(EventKind.HINT, 3, B, A)]
    assert got[0].predicted


def test_same_host_target_is_suppressed(bus):
    h, got = bus
    assert h.on_prediction("u", hint(100, 2)) == []
    assert got == []


def test_unlikely_prediction_is_ignored(bus):
    h, got = bus
    h.on_prediction("u", hint(100, 3, p=0.3))
    assert got == []


def test_debounce_repeats_for_same_host(bus):
    h, got = bus
    for t in (0, 100, 499):
        h.on_prediction("u", hint(t, 3))
    h.on_prediction("u", hint(500, 3))
    h.on_prediction("u", hint(600, 4))
    assert [(e.t, e.target_cell) for e in got] == [(0, 3), (500, 3), (600, 4)]


def test_handover_after_matching_hint_is_predicted(bus):
    h, got = bus
    h.on_prediction("u", hint(0, 3))
    h.on_handover_start("u", 3, 400)
    h.on_handover_complete("u", 3, 450)
    start = got[1]
    assert start.kind is EventKind.HANDOVER_START
    assert start.predicted and not start.misprediction
    assert got[2].kind is EventKind.HANDOVER_COMPLETE
    assert h.serving("u") == 3


def test_handover_to_other_host_flags_misprediction(bus):
    h, got = bus
    h.on_prediction("u", hint(0, 3))
    h.on_handover_start("u", 4, 300)
    ev = got[-1]
    assert ev.misprediction and not ev.predicted
    assert ev.hinted_host == B and ev.target_host == C


def test_unhinted_handover_not_predicted(bus):
    h, got = bus
    h.on_handover_start("u", 3, 300)
    assert not got[-1].predicted and not got[-1].misprediction
    # the hint state is cleared by the handover
    h.on_handover_start("u", 4, 900)
    assert got[-1].hinted_host is None


def test_register_unregister_reregister(bus):
    h, got = bus
    h.unregister_app("app")
    h.on_prediction("u", hint(0, 3))
    assert got == []
    h.unregister_app("app")  # no-op
    second = []
    h.register_app("app", second.append)
    h.on_prediction("u", hint(1000, 4))
    assert len(second) == 1 and got == []


def test_user_filter():
    h = MobilityHandler(TOPO)
    mine, all_ = [], []
    h.register_app("a", mine.append, users=["u1"])
    h.register_app("b", all_.append)
    h.on_prediction("u1", hint(0, 3))
    h.on_prediction("u2", hint(0, 3))
    assert [e.ue_id for e in mine] == ["u1"]
    assert sorted(e.ue_id for e in all_) == ["u1", "u2"]


def test_unknown_cell(bus):
    h, _ = bus
    with pytest.raises(UnknownCell) as exc:
        h.on_prediction("u", hint(0, 99))
    assert exc.value.code == "UNKNOWN_CELL"
    with pytest.raises(UnknownCell):
        h.set_serving("u", 42)


def test_topology_csv(tmp_path):
    p = tmp_path / "topo.csv"
    p.write_text("cell_id,edge_host,port\n1,10.0.0.1,7000\n2,10.0.0.1,7000\n3,10.0.0.2,7001\n")
    topo = EdgeTopology.from_csv(p)
    assert topo.host_for(3) == EdgeHost("10.0.0.2", 7001)
    assert topo.hosts() == [EdgeHost("10.0.0.1", 7000), EdgeHost("10.0.0.2", 7001)]
    for bad in ("cell,host\n", "cell_id,edge_host,port\n1,a,x\n", "cell_id,edge_host,port\n1,a,1\n1,b,2\n"):
        p.write_text(bad)
        with pytest.raises(TopologyError):
            EdgeTopology.from_csv(p)


def test_concurrent_ues_each_get_their_events():
    h = MobilityHandler(TOPO, debounce_ms=0)
    got, lock = [], threading.Lock()

    def sink(e):
        with lock:
            got.append(e)

    h.register_app("a", sink)

    def drive(u):
        h.set_serving(u, 1)
        for k in range(50):
            h.on_prediction(u, hint(k * 10, 3 if k % 2 else 4))

    threads = [threading.Thread(target=drive, args=(f"u{i}",)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(got) == 8 * 50


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.sampled_from([1, 2, 3, 4])), max_size=30))
def test_hints_never_target_serving_host(steps):
    h = MobilityHandler(TOPO, debounce_ms=200)
    got = []
    h.register_app("a", got.append)
    h.set_serving("u", 1)
    t = 0
    for dt, cell in steps:
        t += dt
        for e in h.on_prediction("u", hint(t, cell)):
            assert e.target_host != e.source_host
    # consecutive hints to the same host are at least the debounce apart
    for a, b in zip(got, got[1:]):
        if a.target_host == b.target_host:
            assert b.t - a.t >= 200
