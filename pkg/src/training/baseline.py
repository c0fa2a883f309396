"""Historical baselines: repeat the last observation or the window mean."""

import logging

import numpy as np

from src.core.errors import ConfigError
from src.data.windows import WindowBatch

logger = logging.getLogger(__name__)

BASELINE_MODES = ("inertia", "mean")


def historical_baseline(x: np.ndarray, mode: str, t_out: int = 12) -> np.ndarray:
    """
    Forecast ``t_out`` steps from history ``x`` [m, t_in, n, c] without any learned state.

    Args:
        x: History
        mode: ``inertia`` repeats the last step, ``mean`` repeats the per-(node, channel) window mean
        t_out: Horizons to emit

    Returns:
        Forecast [m, t_out, n, c]
    """
    if mode == "inertia":
        anchor = x[:, -1:]
    elif mode == "mean":
        anchor = x.mean(axis=1, keepdims=True)
    else:
        raise ConfigError(f"unknown baseline mode {mode!r}; expected one of {BASELINE_MODES}")
    return np.repeat(anchor, t_out, axis=1)


class HistoricalBaseline:
    """Forecaster wrapper so baselines and the model share ``predict(batch)``."""

    def __init__(self, mode: str, t_out: int = 12):
        if mode not in BASELINE_MODES:
            raise ConfigError(f"unknown baseline mode {mode!r}; expected one of {BASELINE_MODES}")
        self.mode = mode
        self.t_out = t_out

    def predict(self, batch: WindowBatch) -> np.ndarray:
        return historical_baseline(batch.x, self.mode, self.t_out)
