"""Generate seeded trace splits, fit the classifier and pick its threshold."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from ..traces import Trace, generate_trace, road_config
from .lstm import LstmModel, TrainConfig, train
from .pipeline import DatasetConfig, ModelPredictor, build_dataset, learn_threshold

log = logging.getLogger(__name__)

# Disjoint seed blocks per split, so growing one split never reuses another's drives.
SPLIT_OFFSETS = {"train": 0, "validation": 100_000, "test": 200_000}
SEED_STRIDE = 1_000_000


def trace_seeds(seed: int, split: str, count: int) -> list[int]:
    if split not in SPLIT_OFFSETS:
        raise ValueError(f"unknown split {split!r}")
    base = seed * SEED_STRIDE + SPLIT_OFFSETS[split]
    return [base + i for i in range(count)]


def generate_split(seed: int, split: str, count: int, n_bs: int = 4, **overrides) -> list[Trace]:
    return [generate_trace(road_config(s, n_bs=n_bs, **overrides)) for s in trace_seeds(seed, split, count)]


@dataclass
class FitResult:
    model: LstmModel
    threshold: float
    history: list[float]
    n_samples: int
    positive_share: float

    def predictor(self, x: int = 1) -> ModelPredictor:
        return ModelPredictor(self.model, self.threshold, x)


def fit(train_traces: Sequence[Trace], validation_traces: Sequence[Trace],
        dataset: DatasetConfig = DatasetConfig(), training: TrainConfig = TrainConfig()) -> FitResult:
    x, y = build_dataset(train_traces, dataset)
    log.info("training set: %d windows, %.3f positive", len(y), float(y.mean()) if len(y) else 0.0)
    model, history = train(x, y, training)
    vx, vy = build_dataset(validation_traces, DatasetConfig(
        dataset.window, dataset.label_window_ms, dataset.negative_ratio, dataset.near_ms, dataset.seed + 1))
    threshold = learn_threshold(model, vx, vy)
    log.info("threshold %.2f", threshold)
    return FitResult(model, threshold, history, len(y), float(y.mean()))
