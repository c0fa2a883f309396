"""Dataset files, normalization, windowing and the synthetic generator."""

from src.data.dataset import CHANNELS, TrafficTensorFile, load_dataset, save_dataset
from src.data.normalize import Normalizer, zscore_fit
from src.data.synthetic import synthetic_generate
from src.data.windows import (
    BackgroundLoader,
    SplitRanges,
    WindowBatch,
    WindowSet,
    make_windows,
    split_chronological,
)

__all__ = [
    "CHANNELS",
    "TrafficTensorFile",
    "load_dataset",
    "save_dataset",
    "Normalizer",
    "zscore_fit",
    "synthetic_generate",
    "BackgroundLoader",
    "SplitRanges",
    "WindowBatch",
    "WindowSet",
    "make_windows",
    "split_chronological",
]
