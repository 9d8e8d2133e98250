"""Sliding-window features for one (source, candidate) cell pair.

Each timestep carries four values: the candidate's RSRP and RSRQ, and both
relative to the source cell at the aligned instant.  Values are mapped to
[0, 1] by fixed affine maps over the declared measurement ranges.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ..traces import RSRP_RANGE, RSRQ_RANGE, RadioSample, Trace

REL_RANGE = (-50.0, 50.0)
N_FEATURES = 4
DEFAULT_WINDOW = 6

_LO = np.array([RSRP_RANGE[0], RSRQ_RANGE[0], REL_RANGE[0], REL_RANGE[0]])
_SPAN = np.array([RSRP_RANGE[1] - RSRP_RANGE[0], RSRQ_RANGE[1] - RSRQ_RANGE[0],
                  REL_RANGE[1] - REL_RANGE[0], REL_RANGE[1] - REL_RANGE[0]])


class FeatureError(ValueError):
    code = "FEATURE_ERROR"


class Empty(FeatureError):
    code = "EMPTY"


class NoSourceWindow(FeatureError):
    code = "NO_SOURCE_WINDOW"


class NoCandidate(FeatureError):
    code = "NO_CANDIDATE"


def normalize(raw: np.ndarray) -> np.ndarray:
    return (raw - _LO) / _SPAN


def denormalize(values: np.ndarray) -> np.ndarray:
    return values * _SPAN + _LO


@dataclass(frozen=True)
class FeatureVector:
    """``values`` has shape (N, 4): rsrp_abs, rsrq_abs, rsrp_rel, rsrq_rel."""

    values: np.ndarray

    @property
    def window(self) -> int:
        return self.values.shape[0]

    @property
    def raw(self) -> np.ndarray:
        return denormalize(self.values)


def extrapolate(samples: Sequence[RadioSample], n: int, interval_ms: int = 50) -> list[RadioSample]:
    """Pad to ``n`` entries by holding the earliest sample's values backwards."""
    if not samples:
        raise Empty("no samples to extrapolate")
    if n < 1:
        raise ValueError("window must be >= 1")
    samples = list(samples)
    missing = n - len(samples)
    if missing <= 0:
        return samples
    first = samples[0]
    pad = [replace(first, t=first.t - k * interval_ms) for k in range(missing, 0, -1)]
    return pad + samples


def _window(series_t: np.ndarray, t: int) -> int:
    return int(np.searchsorted(series_t, t, side="right"))


def raw_window(trace: Trace, source: int, candidate: int, t: int, n: int = DEFAULT_WINDOW) -> np.ndarray:
    """Un-normalized (n, 4) feature window at time ``t``."""
    cells = trace.cells
    src = cells.get(source)
    ks = _window(src.t, t) if src is not None else 0
    if ks < n:
        raise NoSourceWindow(f"source cell {source} has {ks} samples by t={t}, need {n}")
    cand = cells.get(candidate)
    kc = _window(cand.t, t) if cand is not None else 0
    if kc == 0:
        raise NoCandidate(f"candidate cell {candidate} has no samples by t={t}")
    lo = max(0, kc - n)
    ct, crsrp, crsrq = cand.t[lo:kc], cand.rsrp[lo:kc], cand.rsrq[lo:kc]
    if len(ct) < n:
        pad = n - len(ct)
        ct = np.concatenate([ct[0] - trace.interval_ms * np.arange(pad, 0, -1), ct])
        crsrp = np.concatenate([np.full(pad, crsrp[0]), crsrp])
        crsrq = np.concatenate([np.full(pad, crsrq[0]), crsrq])
    st = src.t[:ks]
    j = np.clip(np.searchsorted(st, ct), 1, ks - 1) if ks > 1 else np.zeros(n, dtype=int)
    if ks > 1:
        left_closer = (ct - st[j - 1]) <= (st[j] - ct)
        j = np.where(left_closer, j - 1, j)
    tol = trace.interval_ms / 2
    if np.any(np.abs(st[j] - ct) > tol):
        raise NoSourceWindow(f"no source sample within {tol} ms of candidate samples at t={t}")
    out = np.empty((n, N_FEATURES))
    out[:, 0] = crsrp
    out[:, 1] = crsrq
    out[:, 2] = crsrp - src.rsrp[j]
    out[:, 3] = crsrq - src.rsrq[j]
    return out


def build_features(trace: Trace, source: int, candidate: int, t: int, n: int = DEFAULT_WINDOW) -> FeatureVector:
    return FeatureVector(normalize(raw_window(trace, source, candidate, t, n)))


def candidates_at(trace: Trace, source: int, t: int, n: int = DEFAULT_WINDOW) -> list[int]:
    """Neighbour cells with at least one sample inside the window ending at ``t``."""
    start = t - (n - 1) * trace.interval_ms
    out = []
    for cell, s in trace.cells.items():
        if cell == source:
            continue
        k = _window(s.t, t)
        if k and s.t[k - 1] >= start:
            out.append(cell)
    return sorted(out)


def pair_windows(trace: Trace, n: int = DEFAULT_WINDOW, times: Optional[np.ndarray] = None
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Raw windows for every (instant, candidate) pair at once.

    Returns ``(t, source, candidate, raw)`` with ``raw`` of shape (k, n, 4);
    pairs follow instant order, candidates ascending.  Instants are the
    trace's sample instants (or the subset ``times``).  Pairs where either
    series has a gap inside the window go through :func:`raw_window`, so the
    output matches calling it pair by pair.
    """
    grid_t = trace.times
    cells = sorted(trace.cells)
    col = {c: j for j, c in enumerate(cells)}
    tn, cn = len(grid_t), len(cells)
    rsrp = np.full((tn, cn), np.nan)
    rsrq = np.full((tn, cn), np.nan)
    for c, s in trace.cells.items():
        rows = np.searchsorted(grid_t, s.t)
        ok = (rows < tn) & (grid_t[np.minimum(rows, tn - 1)] == s.t)
        rsrp[rows[ok], col[c]] = s.rsrp[ok]
        rsrq[rows[ok], col[c]] = s.rsrq[ok]
    serving = np.asarray([col[trace.serving_at(int(t))] for t in grid_t], dtype=np.int64)
    idx = np.arange(tn) if times is None else np.searchsorted(grid_t, np.asarray(times, dtype=np.int64))
    present = ~np.isnan(rsrp)
    # present samples in the trailing window, per (instant, cell)
    csum = np.vstack([np.zeros((1, cn), dtype=np.int64), np.cumsum(present, axis=0)])
    ts, ss, cs, raws = [], [], [], []
    dt = trace.interval_ms
    for i in idx.tolist():
        if i >= tn:
            continue
        s = serving[i]
        t = int(grid_t[i])
        lo = max(i - n + 1, 0)
        in_win = csum[i + 1] - csum[lo]
        regular = i >= n - 1 and grid_t[i] - grid_t[lo] == (n - 1) * dt
        for j in range(cn):
            if j == s:
                continue
            if regular and in_win[j] == n and in_win[s] == n:
                w = np.empty((n, N_FEATURES))
                w[:, 0] = rsrp[lo:i + 1, j]
                w[:, 1] = rsrq[lo:i + 1, j]
                w[:, 2] = w[:, 0] - rsrp[lo:i + 1, s]
                w[:, 3] = w[:, 1] - rsrq[lo:i + 1, s]
            else:
                series = trace.cells[cells[j]].t
                k = int(np.searchsorted(series, t, side="right"))
                if k == 0 or series[k - 1] < t - (n - 1) * dt:
                    continue
                try:
                    w = raw_window(trace, cells[s], cells[j], t, n)
                except FeatureError:
                    continue
            ts.append(t)
            ss.append(cells[s])
            cs.append(cells[j])
            raws.append(w)
    if not raws:
        empty = np.zeros(0, np.int64)
        return empty, empty, empty, np.zeros((0, n, N_FEATURES))
    return np.asarray(ts, dtype=np.int64), np.asarray(ss), np.asarray(cs), np.stack(raws)
