"""Split, normalize and window a dataset in one step."""

import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from src.data.dataset import TrafficTensorFile
from src.data.normalize import Normalizer, zscore_fit
from src.data.windows import SPLIT_NAMES, SplitRanges, WindowSet, make_windows, split_chronological

logger = logging.getLogger(__name__)


@dataclass
class PreparedData:
    """A dataset with its splits, training-range normalizer and per-split windows."""

    dataset: TrafficTensorFile
    splits: SplitRanges
    normalizer: Normalizer
    normalized: np.ndarray
    windows: Dict[str, WindowSet]


def prepare_data(dataset: TrafficTensorFile, t_in: int = 12, t_out: int = 12) -> PreparedData:
    """
    Split chronologically, fit the normalizer on the training range and window every split.

    Raises:
        ConfigError: A split is shorter than one window
    """
    splits = split_chronological(dataset.n_steps)
    normalizer = zscore_fit(dataset.raw, splits.train)
    normalized = normalizer.apply(dataset.raw)
    windows = {
        name: make_windows(
            normalized,
            splits.get(name),
            t_in,
            t_out,
            dataset.start_slot,
            dataset.start_dow,
            dataset.slots_per_day,
        )
        for name in SPLIT_NAMES
    }
    sizes = ", ".join(f"{name}={len(w)}" for name, w in windows.items())
    logger.info(f"Prepared {dataset.n_steps} steps x {dataset.n_nodes} sensors; windows: {sizes}")
    return PreparedData(dataset, splits, normalizer, normalized, windows)
