"""Optimization, early stopping, metrics and the Historical baselines."""

from src.training.baseline import HistoricalBaseline, historical_baseline
from src.training.config import TrainConfig
from src.training.early_stopping import EarlyStopping, EarlyStopState, early_stop_update
from src.training.metrics import MetricsReport, MetricTriple, collect_predictions, compute_metrics, evaluate
from src.training.optim import Adam, AdamState, adam_step, clip_grad_norm, cosine_lr
from src.training.trainer import EpochRecord, Trainer, TrainResult, mse_loss, train

__all__ = [
    "HistoricalBaseline",
    "historical_baseline",
    "TrainConfig",
    "EarlyStopping",
    "EarlyStopState",
    "early_stop_update",
    "MetricsReport",
    "MetricTriple",
    "collect_predictions",
    "compute_metrics",
    "evaluate",
    "Adam",
    "AdamState",
    "adam_step",
    "clip_grad_norm",
    "cosine_lr",
    "EpochRecord",
    "Trainer",
    "TrainResult",
    "mse_loss",
    "train",
]
