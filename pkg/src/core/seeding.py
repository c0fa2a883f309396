"""Fan a single run seed out into independent, fixed sub-streams."""

import logging
from typing import Dict

import numpy as np

from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

# Spawn keys are part of the reproducibility contract; never renumber
STREAMS: Dict[str, int] = {
    "data": 0,
    "init": 1,
    "shuffle": 2,
    "dropout": 3,
}


def derive_seed(seed: int, stream: str) -> int:
    """
    Derive the 63-bit seed of one named sub-stream.

    Args:
        seed: Run seed from the ``[train]`` section
        stream: One of ``data``, ``init``, ``shuffle``, ``dropout``

    Returns:
        Non-negative integer seed
    """
    if stream not in STREAMS:
        raise ConfigError(f"unknown random stream: {stream}")
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[stream],))
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def stream_rng(seed: int, stream: str) -> np.random.Generator:
    """Generator for one sub-stream of ``seed``."""
    return np.random.default_rng(derive_seed(seed, stream))
