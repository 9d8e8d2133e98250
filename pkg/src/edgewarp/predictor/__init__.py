from .features import (
    DEFAULT_WINDOW,
    N_FEATURES,
    Empty,
    FeatureError,
    FeatureVector,
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
from .lstm import DegenerateDataset, LstmModel, ModelError, ModelFormatError, ShapeMismatch, TrainConfig, gradient_check, train
from .pipeline import (
    DatasetConfig,
    HandoverPrediction,
    ModelPredictor,
    NoServingCell,
    PredictionMetrics,
    availability_upper_bound,
    build_dataset,
    earliest_correct,
    evaluate,
    learn_threshold,
    predict,
    resolve,
    threshold_from_scores,
)
from .workflow import FitResult, fit, generate_split, trace_seeds

__all__ = [
    "DEFAULT_WINDOW", "N_FEATURES", "Empty", "FeatureError", "FeatureVector", "NoCandidate", "NoSourceWindow",
    "build_features", "candidates_at", "denormalize", "extrapolate", "normalize", "pair_windows", "raw_window",
    "DegenerateDataset", "LstmModel", "ModelError", "ModelFormatError", "ShapeMismatch", "TrainConfig",
    "gradient_check", "train", "DatasetConfig", "HandoverPrediction", "ModelPredictor", "NoServingCell",
    "PredictionMetrics", "availability_upper_bound", "build_dataset", "earliest_correct", "evaluate",
    "learn_threshold", "predict", "resolve", "threshold_from_scores", "FitResult", "fit", "generate_split",
    "trace_seeds",
]
