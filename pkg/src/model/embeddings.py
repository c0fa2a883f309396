"""Feature, periodic, spatial and adaptive embeddings and their fusion projection."""

import logging
from typing import Tuple

import numpy as np

from src.core.errors import ConfigError, DimensionError
from src.model.config import EmbeddingConfig
from src.tensor import ops
from src.tensor.nn import Linear, Module
from src.tensor.tensor import Tensor

logger = logging.getLogger(__name__)

TABLE_INIT_BOUND = 0.07


def time_indices(
    start_slot: int,
    start_dow: int,
    t: int,
    stride: int = 1,
    slots: int = 288,
    dow_slots: int = 7,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Time-of-day and day-of-week indices of ``t`` consecutive steps.

    Args:
        start_slot: Slot of the first step within its day
        start_dow: Weekday of the first step, 0 = Monday
        t: Number of steps
        stride: Slots advanced per step
        slots: Slots per day
        dow_slots: Days per week

    Returns:
        (tod_idx, dow_idx), each int64 [t]; the weekday advances whenever the
        slot wraps past midnight
    """
    if not 0 <= start_slot < slots:
        raise ConfigError(f"start_slot must be in [0, {slots}), got {start_slot}")
    if not 0 <= start_dow < dow_slots:
        raise ConfigError(f"start_dow must be in [0, {dow_slots}), got {start_dow}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    absolute = start_slot + np.arange(t, dtype=np.int64) * stride
    return absolute % slots, (start_dow + absolute // slots) % dow_slots


class EmbeddingTables(Module):
    """
    The five embedding stores plus the projection to the block width.

    Parameters (local names): ``feat.w``/``feat.b`` (E_f), ``tod``, ``dow``,
    ``spatial`` [n, d_spatial], ``adaptive`` [t_in, n, d_adaptive] and
    ``proj.w``/``proj.b``.
    """

    def __init__(self, config: EmbeddingConfig, n_nodes: int, t_in: int, c_features: int, rng: np.random.Generator):
        super().__init__()
        self.config = config
        self.n_nodes = n_nodes
        self.t_in = t_in
        bound = TABLE_INIT_BOUND

        self.feat = self.add_module("feat", Linear(c_features, config.d_feat, rng))
        self.tod = self.add_parameter("tod", rng.uniform(-bound, bound, size=(config.tod_slots, config.d_tod)))
        self.dow = self.add_parameter("dow", rng.uniform(-bound, bound, size=(config.dow_slots, config.d_dow)))
        self.spatial = self.add_parameter("spatial", rng.uniform(-bound, bound, size=(n_nodes, config.d_spatial)))
        self.adaptive = self.add_parameter(
            "adaptive", rng.uniform(-bound, bound, size=(t_in, n_nodes, config.d_adaptive))
        )
        self.proj = self.add_module("proj", Linear(config.d_concat, config.d_mamba, rng))


def assemble_embedding(tables: EmbeddingTables, x: Tensor, tod_idx: np.ndarray, dow_idx: np.ndarray) -> Tensor:
    """
    Concatenate the five embeddings of every (sample, step, node).

    Args:
        tables: Embedding stores
        x: Normalized inputs [m, t, n, c]
        tod_idx: Time-of-day slots [m, t]
        dow_idx: Weekdays [m, t]

    Returns:
        Z [m, t, n, d_concat]
    """
    if x.ndim != 4:
        raise DimensionError(f"expected inputs [m, t, n, c], got {x.shape}")
    m, t, n, _ = x.shape
    if n != tables.n_nodes or t > tables.t_in:
        raise DimensionError(f"inputs {x.shape} do not fit tables built for n={tables.n_nodes}, t_in={tables.t_in}")
    tod_idx, dow_idx = np.asarray(tod_idx), np.asarray(dow_idx)
    if tod_idx.shape != (m, t) or dow_idx.shape != (m, t):
        raise DimensionError(f"time indices {tod_idx.shape}/{dow_idx.shape} do not match [m, t] = {(m, t)}")

    # Per-step tables broadcast over nodes, per-node tables over samples
    full = (m, t, n)
    tod = ops.embedding_lookup(tables.tod, np.broadcast_to(tod_idx[:, :, None], full))
    dow = ops.embedding_lookup(tables.dow, np.broadcast_to(dow_idx[:, :, None], full))
    spatial = ops.embedding_lookup(tables.spatial, np.broadcast_to(np.arange(n), full))
    cells = np.arange(t)[:, None] * n + np.arange(n)[None, :]
    adaptive_rows = ops.reshape(tables.adaptive, (tables.t_in * n, tables.config.d_adaptive))
    adaptive = ops.embedding_lookup(adaptive_rows, np.broadcast_to(cells, full))
    return ops.concat_last([tables.feat(x), tod, dow, spatial, adaptive])


def project(tables: EmbeddingTables, z: Tensor) -> Tensor:
    """Affine map of the concatenated embedding to the block width."""
    if z.shape[-1] != tables.config.d_concat:
        raise DimensionError(f"expected last axis {tables.config.d_concat}, got {z.shape}")
    return tables.proj(z)
