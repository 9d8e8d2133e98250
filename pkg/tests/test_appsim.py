from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from edgewarp.appsim import (
    MODES,
    InvalidScenario,
    Scenario,
    StateProfile,
    carmap_profile,
    emp_profile,
    empirical_sampler,
    run_many,
    run_scenario,
    sweep,
)

MB3 = 3_000_000


def both(profile, runs=3, **kw):
    return {mode: run_many(Scenario(profile, mode=mode, **kw), runs) for mode in MODES}


def test_profile_build_sizes():
    p = StateProfile.build(100_000, 0.25, 40.0)
    assert p.total_bytes == 100_000
    assert p.dynamic_bytes == 25_000
    assert {o.rate for o in p.objects} == {0.0, 40.0}
    assert StateProfile.build(100_000, 0.5, 0.0).dynamic_bytes == 0
    assert carmap_profile().total_bytes == 2_300_000
    assert emp_profile().dynamic_fraction == 1.0


def test_static_state_migrates_in_one_round_trip():
    m = both(StateProfile.build(MB3, 0.0, 50.0))
    two = m["two_step"]
    # two-way latency of 1 ms each way
    assert two.median("blocking_ms") == pytest.approx(2.0, abs=0.1)
    assert set(two.residual_keys) == {0}
    # baseline ships the whole 3 MB over a 1 Gb/s link
    assert m["baseline"].median("blocking_ms") == pytest.approx(2.0 + MB3 * 8 / 1e9 * 1000, rel=0.05)


def test_dynamic_state_blocking_at_least_halved():
    m = both(StateProfile.build(MB3, 0.2, 50.0))
    assert m["two_step"].median("blocking_ms") <= m["baseline"].median("blocking_ms") / 2


def test_zero_horizon_matches_baseline():
    p = StateProfile.build(MB3, 0.2, 50.0)
    base = run_many(Scenario(p, mode="baseline"), 3)
    zero = run_many(Scenario(p, mode="two_step", horizon_ms=0), 3)
    assert zero.median("blocking_ms") == pytest.approx(base.median("blocking_ms"), rel=0.02)


def test_downtime_decomposes_into_gap_sync_and_reconnect():
    sc = Scenario(StateProfile.build(500_000, 0.1, 50.0), handovers=3)
    for mode in MODES:
        m = run_scenario(replace(sc, mode=mode))
        for d, g, b in zip(m.downtime_ms, m.cp_gap_ms, m.blocking_ms):
            parts = g + b + sc.reconnect_rtt_ms
            assert d == pytest.approx(parts, rel=0.15)


def test_two_step_sends_at_least_as_many_bytes():
    m = both(StateProfile.build(500_000, 0.2, 50.0))
    assert m["two_step"].bytes_transferred >= m["baseline"].bytes_transferred


def test_checksums_match_after_every_migration():
    sc = Scenario(StateProfile.build(300_000, 0.3, 80.0), handovers=4, misprediction_rate=0.5)
    m = run_scenario(sc)
    assert len(m.checksum_ok) == 4 and all(m.checksum_ok)
    assert any(m.mispredicted)


def test_runs_are_deterministic():
    sc = Scenario(StateProfile.build(300_000, 0.2, 50.0), seed=4)
    a, b = run_scenario(sc), run_scenario(sc)
    assert a.blocking_ms == b.blocking_ms and a.bytes_transferred == b.bytes_transferred


def test_horizon_sweep_monotone():
    base = Scenario(StateProfile.build(1_000_000, 0.05, 50.0))
    rows = sweep("horizon", [0, 20, 100], base, runs=3, modes=["two_step"])
    vals = [r.blocking_p50 for r in rows]
    assert vals[0] >= vals[1] >= vals[2]


def test_dynamic_sweep_advantage_shrinks():
    base = Scenario(StateProfile.build(400_000, 0.1, 50.0))
    rows = sweep("dynamic_fraction", [0.0, 0.25, 1.0], base, runs=3)
    by = {(r.value, r.mode): r.blocking_p50 for r in rows}
    adv = [by[(v, "baseline")] - by[(v, "two_step")] for v in (0.0, 0.25, 1.0)]
    assert adv[0] >= adv[1] >= adv[2] - 0.5


def test_size_sweep_flat_without_dynamic_state():
    base = Scenario(StateProfile.build(100_000, 0.0, 50.0))
    rows = sweep("total_size", [100_000, 1_000_000, 4_000_000], base, runs=2, modes=["two_step"])
    vals = [r.blocking_p50 for r in rows]
    assert max(vals) - min(vals) < 0.2


def test_empirical_gap_sampler():
    sc = Scenario(StateProfile.build(100_000, 0.0, 50.0), handovers=3)
    m = run_scenario(sc, empirical_sampler(np.array([7.0, 7.0])))
    assert m.cp_gap_ms == [7.0, 7.0, 7.0]
    with pytest.raises(InvalidScenario):
        empirical_sampler(np.array([]))


@pytest.mark.parametrize("kw", [
    dict(mode="eager"), dict(horizon_ms=-1), dict(bandwidth_bps=0), dict(misprediction_rate=1.5),
    dict(horizon_ms=5000), dict(handovers=-1), dict(client_interval_ms=0),
])
def test_invalid_scenario(kw):
    with pytest.raises(InvalidScenario) as exc:
        run_scenario(Scenario(StateProfile.build(1000, 0.0, 1.0), **kw))
    assert exc.value.code == "INVALID_SCENARIO"


def test_invalid_profile_and_axis():
    with pytest.raises(InvalidScenario):
        StateProfile.build(1000, 1.5, 1.0)
    with pytest.raises(InvalidScenario):
        sweep("latency", [1], Scenario(StateProfile.build(1000, 0.0, 1.0)), runs=1)
