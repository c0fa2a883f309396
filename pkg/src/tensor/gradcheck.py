"""Finite-difference verification of tape gradients."""

import logging
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from src.tensor.tensor import Tape, Tensor

logger = logging.getLogger(__name__)

# Elements whose gradients are both below this are compared against the floor instead
GRAD_SCALE_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest per-element ``|a - n| / max(|a|, |n|, floor)``."""
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), GRAD_SCALE_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / scale))


def numeric_gradient(f: Callable[[], Tensor], x: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(x+eps) - f(x-eps)) / (2 eps)`` for every element of ``x``."""
    grad = np.zeros(x.shape)
    flat = x.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = f().item()
        flat[i] = original - eps
        minus = f().item()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def analytic_gradients(f: Callable[[], Tensor], tensors: Sequence[Tensor]) -> Tuple[float, Dict[int, np.ndarray]]:
    """Run ``f`` under a fresh tape and back-propagate once."""
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    grads = {id(t): (t.grad.copy() if t.grad is not None else np.zeros(t.shape)) for t in tensors}
    return loss.item(), grads


def grad_check(f: Callable[[], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """
    Compare the tape gradient of a scalar function against central differences.

    Args:
        f: Zero-argument callable returning a scalar Tensor that depends on ``x``
        x: Leaf tensor with ``requires_grad`` set; perturbed in place and restored
        eps: Finite-difference step

    Returns:
        Max relative error between analytic and numeric gradients
    """
    _, grads = analytic_gradients(f, [x])
    return relative_error(grads[id(x)], numeric_gradient(f, x, eps))


def grad_check_many(
    f: Callable[[], Tensor],
    named: Sequence[Tuple[str, Tensor]],
    eps: float = 1e-5,
) -> Dict[str, float]:
    """Check several tensors with a single backward pass; returns max relative error per name."""
    tensors = [t for _, t in named]
    _, grads = analytic_gradients(f, tensors)
    errors: Dict[str, float] = {}
    for name, tensor in named:
        errors[name] = relative_error(grads[id(tensor)], numeric_gradient(f, tensor, eps))
        logger.debug(f"gradcheck {name}: {errors[name]:.3e}")
    return errors
