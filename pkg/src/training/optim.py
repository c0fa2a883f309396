"""Adam, cosine learning-rate annealing and global-norm gradient clipping."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from src.core.errors import ContractError
from src.tensor.tensor import Parameter

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First and second moments per parameter (keyed by name) and the step count."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    named_params: Sequence[Tuple[str, Parameter]],
    state: AdamState,
    lr: float,
    betas=(0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """
    One bias-corrected Adam update of every parameter, in place.

    Args:
        named_params: (name, parameter) pairs whose ``grad`` is populated
        state: Moments, created on first use
        lr: Step size
        betas: Moment decay rates
        eps: Denominator guard

    Raises:
        ContractError: A parameter has no gradient
    """
    missing = [name for name, p in named_params if p.grad is None]
    if missing:
        raise ContractError(f"adam_step: no gradient for {missing}")
    beta1, beta2 = betas
    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for key, param in named_params:
        g = param.grad
        if key not in state.m:
            state.m[key] = np.zeros(param.shape)
            state.v[key] = np.zeros(param.shape)
        m = state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * g
        v = state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Adam bound to a fixed list of named parameters."""

    def __init__(self, named_params, betas=(0.9, 0.999), eps: float = 1e-8):
        self.named_params = list(named_params)
        self.params = [p for _, p in self.named_params]
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def step(self, lr: float) -> None:
        adam_step(self.named_params, self.state, lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()


def cosine_lr(epoch: int, max_epochs: int, lr_init: float, lr_min: float) -> float:
    """``lr_min + (lr_init - lr_min) (1 + cos(pi epoch / max_epochs)) / 2``; clamps to ``lr_min`` past the end."""
    if epoch >= max_epochs:
        return lr_min
    progress = max(epoch, 0) / max_epochs
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + math.cos(math.pi * progress))


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """
    Rescale gradients so their global L2 norm is at most ``max_norm``.

    Returns:
        The norm before clipping
    """
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-12)
        for param in params:
            if param.grad is not None:
                param.grad = param.grad * factor
    return total
