"""Mamba block and the normalized residual wrapper used by both pathways."""

import logging

import numpy as np

from src.ssm.config import SelectiveSSMConfig
from src.ssm.scan import selective_scan
from src.tensor import ops
from src.tensor.nn import Dropout, LayerNorm, Linear, Module
from src.tensor.tensor import Tensor

logger = logging.getLogger(__name__)

DT_MIN = 1e-3
DT_MAX = 0.1


def inverse_softplus(y: np.ndarray) -> np.ndarray:
    return y + np.log(-np.expm1(-y))


class MambaBlock(Module):
    """
    Selective SSM block holding every learnable quantity of one scan layer.

    Parameters (local names): ``in_proj.w`` (value and gate branches), ``conv.w``
    and ``conv.b`` (depthwise causal kernel), ``x_proj.w`` (step latent, B, C),
    ``dt_proj.w`` and ``dt_proj.b`` (step size), ``A_log``, ``D`` and ``out_proj.w``.
    """

    def __init__(self, config: SelectiveSSMConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        d_model, d_inner, n_state = config.d_model, config.d_inner, config.state_dim
        dt_rank, width = config.dt_rank, config.conv_kernel

        self.in_proj = self.add_module("in_proj", Linear(d_model, 2 * d_inner, rng, bias=False))
        bound = 1.0 / np.sqrt(width)
        self.conv_w = self.add_parameter("conv.w", rng.uniform(-bound, bound, size=(d_inner, width)))
        self.conv_b = self.add_parameter("conv.b", rng.uniform(-bound, bound, size=d_inner))
        self.x_proj = self.add_module("x_proj", Linear(d_inner, dt_rank + 2 * n_state, rng, bias=False))

        dt_bound = dt_rank ** -0.5
        self.dt_proj = self.add_module("dt_proj", Linear(dt_rank, d_inner, rng))
        self.dt_proj.weight.data[...] = rng.uniform(-dt_bound, dt_bound, size=(dt_rank, d_inner))
        dt = np.exp(rng.uniform(np.log(DT_MIN), np.log(DT_MAX), size=d_inner))
        self.dt_proj.bias.data[...] = inverse_softplus(dt)

        # A = -exp(A_log) spans -1 ... -N along the state axis
        self.A_log = self.add_parameter("A_log", np.tile(np.log(np.arange(1, n_state + 1, dtype=np.float64)), (d_inner, 1)))
        self.D = self.add_parameter("D", np.ones(d_inner))
        self.out_proj = self.add_module("out_proj", Linear(d_inner, d_model, rng, bias=False))

    def transition(self) -> Tensor:
        """Continuous diagonal transition ``A = -exp(A_log)``."""
        return ops.scale(ops.exp(self.A_log), -1.0)

    def __call__(self, u: Tensor) -> Tensor:
        """
        Run the block over sequences.

        Args:
            u: Input [rows, length, d_model]

        Returns:
            Output [rows, length, d_model]; step k depends only on steps <= k
        """
        cfg = self.config
        d_inner, n_state, dt_rank = cfg.d_inner, cfg.state_dim, cfg.dt_rank
        projected = self.in_proj(u)
        value = ops.slice_last(projected, 0, d_inner)
        gate = ops.slice_last(projected, d_inner, 2 * d_inner)

        value = ops.silu(ops.causal_conv1d(value, self.conv_w, self.conv_b))
        selection = self.x_proj(value)
        dt_latent = ops.slice_last(selection, 0, dt_rank)
        B = ops.slice_last(selection, dt_rank, dt_rank + n_state)
        C = ops.slice_last(selection, dt_rank + n_state, dt_rank + 2 * n_state)
        delta = ops.softplus(self.dt_proj(dt_latent))

        y = selective_scan(value, delta, self.transition(), B, C, self.D, cfg.scan_chunk)
        return self.out_proj(ops.mul(y, ops.silu(gate)))


class FeedForward(Module):
    """Two-layer relu network with dropout between the layers."""

    def __init__(self, d_model: int, d_ff: int, dropout: float, rng: np.random.Generator, seed: int = 0, layer_id: int = 0):
        super().__init__()
        self.fc1 = self.add_module("fc1", Linear(d_model, d_ff, rng))
        self.fc2 = self.add_module("fc2", Linear(d_ff, d_model, rng))
        self.dropout = Dropout(dropout, seed=seed, layer_id=layer_id)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        hidden = self.dropout(ops.relu(self.fc1(x)), training)
        return self.fc2(hidden)


class MCSTBlock(Module):
    """``h = U + mamba(norm1(U))``; ``out = h + ffn(norm2(h))``."""

    def __init__(
        self,
        config: SelectiveSSMConfig,
        d_ff: int,
        dropout: float,
        rng: np.random.Generator,
        seed: int = 0,
        layer_id: int = 0,
    ):
        super().__init__()
        self.norm1 = self.add_module("norm1", LayerNorm(config.d_model))
        self.mamba = self.add_module("mamba", MambaBlock(config, rng))
        self.norm2 = self.add_module("norm2", LayerNorm(config.d_model))
        self.ffn = self.add_module("ffn", FeedForward(config.d_model, d_ff, dropout, rng, seed, layer_id))

    def __call__(self, u: Tensor, training: bool = False) -> Tensor:
        h = ops.add(u, self.mamba(self.norm1(u)))
        return ops.add(h, self.ffn(self.norm2(h), training))
