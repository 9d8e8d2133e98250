from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgewarp.predictor import (
    N_FEATURES,
    Empty,
    NoCandidate,
    NoSourceWindow,
    build_features,
    candidates_at,
    denormalize,
    extrapolate,
    normalize,
    pair_windows,
    raw_window,
)
from edgewarp.traces import RadioSample, Trace, generate_trace, road_config


def make_trace(series: dict[int, dict[int, tuple[float, float]]], serving: int = 1) -> Trace:
    """series: cell -> {t: (rsrp, rsrq)}."""
    samples = []
    for cell, rows in series.items():
        for t, (p, q) in rows.items():
            samples.append(RadioSample(t, cell, p, q, cell == serving))
    samples.sort(key=lambda s: (s.t, s.cell_id))
    return Trace(samples, [])


def ramp(times, p0, q0, dp=0.0, dq=0.0):
    return {t: (p0 + dp * k, q0 + dq * k) for k, t in enumerate(times)}


def test_extrapolate_zero_order_hold():
    s = [RadioSample(200, 2, -90.0, -11.0, False), RadioSample(250, 2, -89.0, -10.5, False)]
    out = extrapolate(s, 5)
    assert [x.t for x in out] == [50, 100, 150, 200, 250]
    assert [x.rsrp for x in out] == [-90.0, -90.0, -90.0, -90.0, -89.0]
    assert extrapolate(out, 5) == out
    assert extrapolate(s, 1) == s


def test_extrapolate_empty():
    with pytest.raises(Empty) as exc:
        extrapolate([], 4)
    assert exc.value.code == "EMPTY"


def test_identical_series_give_zero_relative_features():
    times = range(0, 300, 50)
    tr = make_trace({1: ramp(times, -90, -12, 0.5), 2: ramp(times, -90, -12, 0.5)})
    raw = raw_window(tr, 1, 2, 250)
    assert raw.shape == (6, N_FEATURES)
    assert np.all(raw[:, 2:] == 0.0)


def test_candidate_with_two_samples_is_held_back():
    times = list(range(0, 300, 50))
    tr = make_trace({1: ramp(times, -80, -10), 2: ramp(times[-2:], -95, -14, 1.0)})
    raw = raw_window(tr, 1, 2, 250)
    assert raw[:, 0].tolist() == [-95.0] * 5 + [-94.0]
    assert raw[:, 2].tolist() == [-15.0] * 5 + [-14.0]


def test_errors():
    times = list(range(0, 400, 50))
    tr = make_trace({1: ramp(times, -80, -10), 2: ramp(times[-1:], -95, -14)})
    with pytest.raises(NoSourceWindow) as exc:
        raw_window(tr, 1, 2, 200)
    assert exc.value.code == "NO_SOURCE_WINDOW"
    with pytest.raises(NoCandidate):
        raw_window(tr, 1, 2, 300)
    with pytest.raises(NoCandidate):
        raw_window(tr, 1, 7, 350)


def test_candidates_at_requires_sample_inside_window():
    times = list(range(0, 600, 50))
    tr = make_trace({1: ramp(times, -80, -10), 2: ramp(times[:2], -95, -14), 3: ramp(times[-1:], -95, -14)})
    assert candidates_at(tr, 1, 550) == [3]
    assert candidates_at(tr, 1, 100) == [2]


def test_normalize_round_trip_and_range():
    raw = np.array([[-140.0, -20.0, -50.0, -50.0], [-44.0, -3.0, 50.0, 50.0]])
    assert normalize(raw).tolist() == [[0.0] * 4, [1.0] * 4]
    assert np.allclose(denormalize(normalize(raw)), raw)
    fv = build_features(make_trace({1: ramp(range(0, 300, 50), -80, -10), 2: ramp(range(0, 300, 50), -85, -9)}),
                        1, 2, 250)
    assert fv.window == 6 and np.allclose(fv.raw[:, 2], -5.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pair_windows_match_raw_window(seed):
    tr = generate_trace(road_config(seed, shadowing_sigma_db=4.0))
    ts, src, cands, raw = pair_windows(tr)
    assert len(ts) > 100
    rng = np.random.default_rng(seed)
    for k in rng.choice(len(ts), size=60, replace=False).tolist():
        assert np.array_equal(raw[k], raw_window(tr, int(src[k]), int(cands[k]), int(ts[k])))
    for t in tr.times[::17].tolist():
        s = tr.serving_at(t)
        got = sorted(cands[ts == t].tolist())
        want = [c for c in candidates_at(tr, s, t) if _window_ok(tr, s, c, t)]
        assert got == want


def _window_ok(tr, s, c, t):
    try:
        raw_window(tr, s, c, t)
        return True
    except Exception:
        return False


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-139, -45), min_size=1, max_size=8), st.integers(1, 10))
def test_extrapolate_property(rsrps, n):
    s = [RadioSample(1000 + 50 * i, 2, p, -10.0, False) for i, p in enumerate(rsrps)]
    out = extrapolate(s, n)
    assert len(out) == max(n, len(s))
    assert out[-len(s):] == s
    assert all(x.rsrp == s[0].rsrp for x in out[:len(out) - len(s)])
    assert np.all(np.diff([x.t for x in out]) == 50)
