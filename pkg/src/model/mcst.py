"""Dual-pathway forecaster: embeddings, temporal and spatial scans, fusion and head."""

import logging
from typing import Dict, Tuple

import numpy as np

from src.core.errors import DimensionError
from src.core.seeding import derive_seed, stream_rng
from src.model.config import ModelConfig
from src.model.embeddings import EmbeddingTables, assemble_embedding, project
from src.ssm.mamba import MCSTBlock
from src.tensor import ops
from src.tensor.nn import Dropout, LayerNorm, Linear, Module
from src.tensor.tensor import Tensor

logger = logging.getLogger(__name__)


def reshape_temporal(e: Tensor) -> Tensor:
    """[m, t, n, d] -> [m*n, t, d]; element (s, k, v) lands at row s*n + v, position k."""
    m, t, n, d = e.shape
    return ops.reshape(ops.permute(e, (0, 2, 1, 3)), (m * n, t, d))


def inverse_temporal(y: Tensor, m: int, n: int) -> Tensor:
    rows, t, d = y.shape
    if rows != m * n:
        raise DimensionError(f"{rows} temporal rows cannot be split into m={m}, n={n}")
    return ops.permute(ops.reshape(y, (m, n, t, d)), (0, 2, 1, 3))


def reshape_spatial(e: Tensor) -> Tensor:
    """[m, t, n, d] -> [m*t, n, d]; element (s, k, v) lands at row s*t + k, position v."""
    m, t, n, d = e.shape
    return ops.reshape(e, (m * t, n, d))


def inverse_spatial(y: Tensor, m: int, t: int) -> Tensor:
    rows, n, d = y.shape
    if rows != m * t:
        raise DimensionError(f"{rows} spatial rows cannot be split into m={m}, t={t}")
    return ops.reshape(y, (m, t, n, d))


def combine_pathways(y_t: Tensor, y_s: Tensor, w_t: Tensor, w_s: Tensor) -> Tensor:
    """``w_t * Y_t + w_s * Y_s`` with scalar weights."""
    if y_t.shape != y_s.shape:
        raise DimensionError(f"pathway outputs differ in shape: {y_t.shape} vs {y_s.shape}")
    return ops.add(ops.mul(y_t, w_t), ops.mul(y_s, w_s))


class BlockStack(Module):
    """Consecutive MCST blocks of one pathway, named ``0``, ``1``, ..."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dropout_seed: int, first_layer_id: int):
        super().__init__()
        self.blocks = [
            self.add_module(
                str(i),
                MCSTBlock(config.ssm, config.d_ff, config.dropout, rng, dropout_seed, first_layer_id + i),
            )
            for i in range(config.blocks_per_pathway)
        ]

    def __call__(self, u: Tensor, training: bool) -> Tensor:
        for block in self.blocks:
            u = block(u, training)
        return u


class FusionWeights(Module):
    def __init__(self):
        super().__init__()
        self.w_t = self.add_parameter("w_t", np.array(0.5))
        self.w_s = self.add_parameter("w_s", np.array(0.5))


class ForecastHead(Module):
    """Layer norm, then one linear map from each node's full history to all horizons and channels."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        d = config.ssm.d_model
        self.norm = self.add_module("norm", LayerNorm(d))
        self.linear = self.add_module("linear", Linear(config.t_in * d, config.t_out * config.c_features, rng))

    def __call__(self, y: Tensor) -> Tensor:
        m, t, n, d = y.shape
        cfg = self.config
        per_node = ops.reshape(ops.permute(self.norm(y), (0, 2, 1, 3)), (m, n, t * d))
        out = ops.reshape(self.linear(per_node), (m, n, cfg.t_out, cfg.c_features))
        return ops.permute(out, (0, 2, 1, 3))


class MCSTModel(Module):
    """
    Maps ``t_in`` normalized history steps of every sensor to ``t_out`` future steps.

    Parameter names start with ``emb.`` for the embedding stores and ``model.``
    for the pathways (``model.temporal``, ``model.spatial``), the fusion
    weights (``model.fuse.w_t``, ``model.fuse.w_s``) and the head (``model.head``).
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = seed
        rng = stream_rng(seed, "init")
        dropout_seed = derive_seed(seed, "dropout")
        blocks = config.blocks_per_pathway

        self.emb = self.add_module(
            "emb", EmbeddingTables(config.emb, config.n_nodes, config.t_in, config.c_features, rng)
        )
        core = self.add_module("model", Module())
        self.temporal = core.add_module("temporal", BlockStack(config, rng, dropout_seed, first_layer_id=1))
        self.spatial = core.add_module("spatial", BlockStack(config, rng, dropout_seed, first_layer_id=1 + blocks))
        self.fuse = core.add_module("fuse", FusionWeights())
        self.head = core.add_module("head", ForecastHead(config, rng))
        self.emb_dropout = Dropout(config.dropout, seed=dropout_seed, layer_id=0)

        n = config.n_nodes
        if config.spatial_order == "reversed":
            self.node_order = np.arange(n)[::-1].copy()
        elif config.spatial_order == "shuffled":
            self.node_order = rng.permutation(n)
        else:
            self.node_order = np.arange(n)
        self.node_order_inverse = np.argsort(self.node_order)
        self._reorders = config.spatial_order != "sensor"

    def forward(self, x, tod_idx: np.ndarray, dow_idx: np.ndarray, training: bool = False) -> Tensor:
        """
        Forecast every horizon at once.

        Args:
            x: Normalized history [m, t_in, n, c]
            tod_idx: Time-of-day slots [m, t_in]
            dow_idx: Weekdays [m, t_in]
            training: Enables dropout

        Returns:
            Normalized forecast [m, t_out, n, c]
        """
        x = ops.as_tensor(x)
        cfg = self.config
        if x.ndim != 4 or x.shape[1:] != (cfg.t_in, cfg.n_nodes, cfg.c_features):
            raise DimensionError(
                f"expected inputs [m, {cfg.t_in}, {cfg.n_nodes}, {cfg.c_features}], got {x.shape}"
            )
        m, t, n, _ = x.shape

        e = project(self.emb, assemble_embedding(self.emb, x, tod_idx, dow_idx))
        e = self.emb_dropout(e, training)

        y_t = inverse_temporal(self.temporal(reshape_temporal(e), training), m, n)

        spatial_in = ops.index_select(e, self.node_order, axis=2) if self._reorders else e
        y_s = inverse_spatial(self.spatial(reshape_spatial(spatial_in), training), m, t)
        if self._reorders:
            y_s = ops.index_select(y_s, self.node_order_inverse, axis=2)

        y_c = combine_pathways(y_t, y_s, self.fuse.w_t, self.fuse.w_s)
        return self.head(y_c)

    __call__ = forward

    def predict(self, batch) -> np.ndarray:
        """Eval-mode forecast of a ``WindowBatch`` in normalized units."""
        return self.forward(batch.x, batch.tod_idx, batch.dow_idx, training=False).data


def parameter_count(model: Module) -> Tuple[int, Dict[str, int]]:
    """
    Count scalar parameters.

    Returns:
        (total, breakdown) where the breakdown groups parameters by the first two
        components of their dotted name, e.g. ``emb.adaptive`` or ``model.temporal``
    """
    breakdown: Dict[str, int] = {}
    for name, param in model.named_parameters():
        key = ".".join(name.split(".")[:2])
        breakdown[key] = breakdown.get(key, 0) + param.size
    return sum(breakdown.values()), breakdown
