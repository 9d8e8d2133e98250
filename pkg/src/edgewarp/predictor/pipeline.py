"""Turning per-pair probabilities into handover predictions, and scoring them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..traces import Trace
from .features import DEFAULT_WINDOW, normalize, pair_windows
from .lstm import DegenerateDataset, LstmModel

GRID = np.round(np.arange(1, 100) * 0.01, 2)


class NoServingCell(ValueError):
    code = "NO_SERVING_CELL"


@dataclass(frozen=True)
class HandoverPrediction:
    t: int
    handover_likely: bool
    candidates: tuple[tuple[int, float], ...]
    targets: tuple[int, ...]


@dataclass(frozen=True)
class PredictionMetrics:
    true_at_horizon: float
    late_true: float
    wrong_or_missed: float
    count: int
    horizon_ms: int = 0

    @property
    def empty(self) -> bool:
        return self.count == 0


def resolve(t: int, probs: dict[int, float], threshold: float, x: int = 1) -> HandoverPrediction:
    """Rank candidates and keep the top ``x`` if any clears the threshold."""
    ranked = tuple(sorted(probs.items(), key=lambda kv: (-kv[1], kv[0])))
    likely = bool(ranked) and ranked[0][1] > threshold
    targets = tuple(c for c, _ in ranked[:x]) if likely else ()
    return HandoverPrediction(t, likely, ranked, targets)


def threshold_from_scores(probs: np.ndarray, labels: np.ndarray) -> float:
    """Grid threshold (0.01 steps) maximizing F1 of ``prob > P``; ties go low."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if labels.all() or not labels.any():
        raise DegenerateDataset("threshold search needs both classes")
    pred = probs[None, :] > GRID[:, None]
    tp = (pred & labels).sum(axis=1)
    fp = (pred & ~labels).sum(axis=1)
    fn = (~pred & labels).sum(axis=1)
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    best = np.flatnonzero(f1 == f1.max())[0]
    return float(GRID[best])


def learn_threshold(model: LstmModel, x: np.ndarray, y: np.ndarray) -> float:
    return threshold_from_scores(model.forward(x), y)


class ModelPredictor:
    """Runs the classifier over every candidate at a given instant."""

    def __init__(self, model: LstmModel, threshold: float, x: int = 1) -> None:
        self.model = model
        self.threshold = threshold
        self.x = x

    @property
    def window(self) -> int:
        return self.model.window

    def __call__(self, trace: Trace, t: int) -> HandoverPrediction:
        return self.predict_many(trace, [t])[0]

    def predict_many(self, trace: Trace, times: Sequence[int]) -> list[HandoverPrediction]:
        """Batched :meth:`__call__` over several instants of one trace."""
        for t in times:
            if trace.serving_at(t) is None:
                raise NoServingCell(f"no serving cell at t={t}")
        ts, _, cands, raw = pair_windows(trace, self.window, np.asarray(times, dtype=np.int64))
        probs = self.model.forward(normalize(raw)) if len(raw) else np.zeros(0)
        by_t: dict[int, dict[int, float]] = {}
        for t, c, p in zip(ts.tolist(), cands.tolist(), probs.tolist()):
            by_t.setdefault(t, {})[c] = p
        return [resolve(t, by_t.get(int(t), {}), self.threshold, self.x) for t in times]


def predict(trace: Trace, t: int, model: LstmModel, threshold: float, x: int = 1) -> HandoverPrediction:
    return ModelPredictor(model, threshold, x)(trace, t)


Predictor = Callable[[Trace, int], HandoverPrediction]


def _many(predictor: Predictor, trace: Trace, times: list[int]) -> list[HandoverPrediction]:
    batch = getattr(predictor, "predict_many", None)
    if batch is not None:
        return batch(trace, times)
    return [predictor(trace, t) for t in times]


def earliest_correct(predictor: Predictor, trace: Trace, lookback_ms: int = 3000) -> list[Optional[int]]:
    """Per handover, the earliest instant from which the true target stays top-1.

    Only instants after the previous handover (and within ``lookback_ms``)
    are considered; ``None`` when the prediction at the last sample before
    the handover is already wrong.
    """
    times = trace.times
    out: list[Optional[int]] = []
    prev = -1
    for h in trace.handovers:
        lo = max(prev, h.t - lookback_ms)
        sel = times[(times >= lo) & (times < h.t)].tolist()
        prev = h.t
        if not sel:
            out.append(None)
            continue
        preds = _many(predictor, trace, sel)
        earliest = None
        for t, p in zip(reversed(sel), reversed(preds)):
            if p.targets[:1] == (h.target,):
                earliest = t
            else:
                break
        out.append(earliest)
    return out


def evaluate(traces: Iterable[Trace], predictor: Predictor, horizon_ms: int,
             lookback_ms: int = 3000) -> PredictionMetrics:
    """Classify every handover as predicted in time, late, or wrong/missed."""
    on_time = late = wrong = 0
    for trace in traces:
        for h, e in zip(trace.handovers, earliest_correct(predictor, trace, lookback_ms)):
            if e is None:
                wrong += 1
            elif e <= h.t - horizon_ms:
                on_time += 1
            else:
                late += 1
    n = on_time + late + wrong
    if n == 0:
        return PredictionMetrics(0.0, 0.0, 0.0, 0, horizon_ms)
    return PredictionMetrics(on_time / n, late / n, wrong / n, n, horizon_ms)


def availability_upper_bound(traces: Iterable[Trace], horizon_ms: int) -> float:
    """Share of handovers whose target was reported at least ``horizon_ms`` early.

    No predictor working from reported measurements can name a target it has
    never seen, so this bounds ``true_at_horizon`` from above.
    """
    hit = n = 0
    for trace in traces:
        cells = trace.cells
        prev = -1
        for h in trace.handovers:
            n += 1
            s = cells.get(h.target)
            if s is not None and np.any((s.t <= h.t - horizon_ms) & (s.t >= prev)):
                hit += 1
            prev = h.t
    return hit / n if n else 0.0


@dataclass(frozen=True)
class DatasetConfig:
    window: int = DEFAULT_WINDOW
    # a candidate counts as positive while its handover is at most this far ahead
    label_window_ms: int = 400
    # negatives kept per positive (all negatives near a handover are kept)
    negative_ratio: float = 3.0
    near_ms: int = 1500
    seed: int = 0


def build_dataset(traces: Sequence[Trace], config: DatasetConfig = DatasetConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Labelled, normalized windows for every (instant, candidate) pair.

    Positive: the candidate is the target of the serving cell's next handover
    and that handover is at most ``label_window_ms`` away.  Far-from-handover
    negatives are subsampled.
    """
    rng = np.random.default_rng(config.seed)
    near_x, near_y, far_x = [], [], []
    n = config.window
    for trace in traces:
        ts, _, cands, raw = pair_windows(trace, n)
        if not len(ts):
            continue
        ho_t = np.asarray([h.t for h in trace.handovers], dtype=np.int64)
        ho_target = np.asarray([h.target for h in trace.handovers], dtype=np.int64)
        k = np.searchsorted(ho_t, ts, side="right")
        has_next = k < len(ho_t)
        kk = np.minimum(k, max(len(ho_t) - 1, 0))
        ahead = np.where(has_next, ho_t[kk] - ts, np.iinfo(np.int64).max) if len(ho_t) else \
            np.full(len(ts), np.iinfo(np.int64).max)
        pos = has_next & (ho_target[kk] == cands) & (ahead <= config.label_window_ms) if len(ho_t) else \
            np.zeros(len(ts), dtype=bool)
        near = ahead <= config.near_ms
        near_x.append(raw[near])
        near_y.append(pos[near].astype(float))
        far_x.append(raw[~near])
    nx = np.concatenate(near_x) if near_x else np.zeros((0, n, 4))
    ny = np.concatenate(near_y) if near_y else np.zeros(0)
    fx = np.concatenate(far_x) if far_x else np.zeros((0, n, 4))
    n_pos = int(ny.sum())
    keep = min(len(fx), max(0, int(config.negative_ratio * n_pos) - (len(ny) - n_pos)))
    picked = np.sort(rng.choice(len(fx), size=keep, replace=False)) if keep else np.zeros(0, dtype=int)
    x = np.concatenate([nx, fx[picked]])
    y = np.concatenate([ny, np.zeros(keep)])
    return normalize(x), y
