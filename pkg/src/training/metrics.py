"""MAE, RMSE and MAPE in denormalized units, pooled and broken down."""

import logging
from typing import Dict, Iterable, List, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.core.errors import ConfigError, DimensionError
from src.data.dataset import CHANNELS
from src.data.normalize import Normalizer
from src.data.windows import WindowBatch

logger = logging.getLogger(__name__)

SUMMARY_HORIZONS = (3, 6, 12)


class Forecaster(Protocol):
    def predict(self, batch: WindowBatch) -> np.ndarray:
        ...


class MetricTriple(BaseModel):
    mae: float
    rmse: float
    mape: float = Field(description="Percent, over targets with |y| >= mape_floor")
    mape_excluded: float = Field(description="Fraction of targets left out of MAPE")


class MetricsReport(MetricTriple):
    """Pooled metrics plus per-channel and per-horizon breakdowns."""

    count: int
    per_channel: Dict[str, MetricTriple] = Field(default_factory=dict)
    per_horizon: List[MetricTriple] = Field(default_factory=list)
    horizon_summary: Dict[str, MetricTriple] = Field(default_factory=dict)


def _triple(y_true: np.ndarray, y_pred: np.ndarray, mape_floor: float) -> MetricTriple:
    diff = np.abs(y_pred - y_true)
    mask = np.abs(y_true) >= mape_floor
    mape = float(100.0 * np.mean(diff[mask] / np.abs(y_true[mask]))) if mask.any() else 0.0
    return MetricTriple(
        mae=float(np.mean(diff)),
        rmse=float(np.sqrt(np.mean(diff * diff))),
        mape=mape,
        mape_excluded=float(1.0 - mask.mean()),
    )


def compute_metrics(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    mape_floor: float = 1e-4,
    channels: Sequence[str] = CHANNELS,
) -> MetricsReport:
    """
    Score denormalized predictions.

    Args:
        y_true: Targets; [windows, horizons, nodes, channels] enables the breakdowns
        y_pred: Predictions, same shape
        mape_floor: Targets with smaller magnitude are excluded from MAPE
        channels: Channel names of the last axis

    Returns:
        MetricsReport
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise DimensionError(f"prediction shape {y_pred.shape} != target shape {y_true.shape}")
    if y_true.size == 0:
        raise ConfigError("cannot score an empty split")

    pooled = _triple(y_true, y_pred, mape_floor)
    report = MetricsReport(**pooled.model_dump(), count=int(y_true.size))
    if y_true.ndim == 4 and y_true.shape[-1] == len(channels):
        report.per_channel = {
            name: _triple(y_true[..., c], y_pred[..., c], mape_floor) for c, name in enumerate(channels)
        }
        report.per_horizon = [
            _triple(y_true[:, h], y_pred[:, h], mape_floor) for h in range(y_true.shape[1])
        ]
        report.horizon_summary = {
            f"h{h}": report.per_horizon[h - 1] for h in SUMMARY_HORIZONS if h <= y_true.shape[1]
        }
    return report


def collect_predictions(
    forecaster: Forecaster,
    batches: Iterable[WindowBatch],
    normalizer: Normalizer,
) -> Tuple[np.ndarray, np.ndarray]:
    """Run ``forecaster`` over ``batches``; returns denormalized (predictions, targets)."""
    preds, trues = [], []
    for batch in batches:
        preds.append(normalizer.invert(forecaster.predict(batch)))
        trues.append(normalizer.invert(batch.y))
    if not preds:
        raise ConfigError("cannot evaluate an empty split")
    return np.concatenate(preds), np.concatenate(trues)


def evaluate(
    forecaster: Forecaster,
    batches: Iterable[WindowBatch],
    normalizer: Normalizer,
    mape_floor: float = 1e-4,
) -> MetricsReport:
    """Denormalize the forecasts of a frozen forecaster and score them against the targets."""
    pred, true = collect_predictions(forecaster, batches, normalizer)
    return compute_metrics(true, pred, mape_floor)
