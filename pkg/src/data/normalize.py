"""Per-channel z-score normalization fitted on the training range."""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Normalizer:
    """``(x - mean) / std`` over the last (channel) axis."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def invert(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean


def zscore_fit(raw: np.ndarray, train_range: Tuple[int, int]) -> Normalizer:
    """
    Fit channel statistics on ``raw[start:stop]`` only.

    Args:
        raw: Series [T, n, c]
        train_range: Half-open step range of the training split

    Returns:
        Normalizer whose std is clamped to ``STD_FLOOR`` on constant channels
    """
    start, stop = train_range
    if not 0 <= start < stop <= raw.shape[0]:
        raise ConfigError(f"training range {train_range} is empty or outside [0, {raw.shape[0]})")
    train = raw[start:stop].reshape(-1, raw.shape[-1])
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    constant = std < STD_FLOOR
    if constant.any():
        logger.warning(f"Clamping std of constant channels {np.flatnonzero(constant).tolist()} to {STD_FLOOR}")
        std = np.where(constant, STD_FLOOR, std)
    return Normalizer(mean=mean, std=std)
