"""Differentiable tensor operations.

Every op computes its forward result with numpy, checks it for NaN/Inf, and,
when a tape is active and an input requires grad, records a backward closure
that maps the output gradient to one gradient per input.

Broadcasting is limited to scalars and to leading batch extents (one shape is
a suffix of the other).
"""

import logging
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.config import get_settings
from src.core.errors import ConfigError, DimensionError, EmbeddingIndexError, NonFiniteError
from src.tensor.tensor import BackwardFn, Tensor, current_tape

logger = logging.getLogger(__name__)

Operand = Union[Tensor, float, int, np.ndarray]


def as_tensor(value: Operand) -> Tensor:
    """Wrap constants as non-differentiable tensors."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def emit(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward: BackwardFn) -> Tensor:
    """
    Wrap an op result in a Tensor and record it on the active tape.

    Args:
        op: Op kind, used in diagnostics
        inputs: Tensors the result was computed from
        out_data: Forward result
        backward: Closure from output gradient to per-input gradients

    Returns:
        Output tensor
    """
    if get_settings().check_finite and not np.all(np.isfinite(out_data)):
        bad = int(np.size(out_data) - np.count_nonzero(np.isfinite(out_data)))
        raise NonFiniteError(f"{op} produced {bad} non-finite values")
    out = Tensor(out_data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(op, inputs, out, backward)
    return out


def broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    """Result shape under scalar / leading-batch broadcasting."""
    if a == b:
        return a
    if int(np.prod(a)) == 1 and len(a) <= len(b):
        return b
    if int(np.prod(b)) == 1 and len(b) <= len(a):
        return a
    if len(a) >= len(b) and a[len(a) - len(b):] == b:
        return a
    if len(b) > len(a) and b[len(b) - len(a):] == a:
        return b
    raise DimensionError(f"shapes {a} and {b} are not broadcastable")


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape of the operand that was broadcast."""
    if grad.shape == shape:
        return grad
    if int(np.prod(shape)) == 1:
        return np.full(shape, grad.sum())
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead))) if lead > 0 else grad


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# Keeps softplus step sizes strictly positive where logaddexp underflows
SOFTPLUS_FLOOR = np.finfo(np.float64).tiny

# kind -> (forward, derivative given (x, y))
UNARY: Dict[str, Tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray, np.ndarray], np.ndarray]]] = {
    "exp": (np.exp, lambda x, y: y),
    "sigmoid": (_sigmoid, lambda x, y: y * (1.0 - y)),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0.0).astype(np.float64)),
    "silu": (
        lambda x: x * _sigmoid(x),
        lambda x, y: _sigmoid(x) * (1.0 + x * (1.0 - _sigmoid(x))),
    ),
    "softplus": (lambda x: np.maximum(np.logaddexp(0.0, x), SOFTPLUS_FLOOR), lambda x, y: _sigmoid(x)),
}


def unary(kind: str, x: Tensor) -> Tensor:
    """Apply a registered elementwise function with its exact derivative."""
    if kind not in UNARY:
        raise ConfigError(f"unknown elementwise op: {kind}")
    forward, derivative = UNARY[kind]
    xd = x.data
    yd = forward(xd)

    def backward(g: np.ndarray):
        return (g * derivative(xd, yd),)

    return emit(kind, (x,), yd, backward)


def exp(x: Tensor) -> Tensor:
    return unary("exp", x)


def sigmoid(x: Tensor) -> Tensor:
    return unary("sigmoid", x)


def relu(x: Tensor) -> Tensor:
    return unary("relu", x)


def silu(x: Tensor) -> Tensor:
    return unary("silu", x)


def softplus(x: Tensor) -> Tensor:
    return unary("softplus", x)


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return emit("scale", (x,), x.data * factor, lambda g: (g * factor,))


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a.shape, b.shape)
    out = a.data + b.data
    return emit("add", (a, b), out, lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a.shape, b.shape)
    out = a.data - b.data
    return emit("sub", (a, b), out, lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a.shape, b.shape)
    ad, bd = a.data, b.data

    def backward(g: np.ndarray):
        return unbroadcast(g * bd, a.shape), unbroadcast(g * ad, b.shape)

    return emit("mul", (a, b), ad * bd, backward)


def elementwise(kind: str, *inputs: Operand, factor: Optional[float] = None) -> Tensor:
    """Dispatch an elementwise op by name: add, sub, mul, scale or a unary kind."""
    if kind in ("add", "sub", "mul"):
        if len(inputs) != 2:
            raise ConfigError(f"{kind} takes two inputs, got {len(inputs)}")
        return {"add": add, "sub": sub, "mul": mul}[kind](*inputs)
    if kind == "scale":
        if factor is None:
            raise ConfigError("scale needs a factor")
        return scale(as_tensor(inputs[0]), factor)
    return unary(kind, as_tensor(inputs[0]))


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Batched matrix product ``a[..., p, q] @ b[..., q, r]``.

    Stacked operands are multiplied matrix by matrix, so each output row only
    depends on the matching input row of its own matrix.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} do not align")
    if b.ndim > 2 or a.ndim > 2:
        broadcast_shape(a.shape[:-2], b.shape[:-2])
    ad, bd = a.data, b.data
    out = np.matmul(ad, bd)

    def backward(g: np.ndarray):
        if bd.ndim == 2:
            ga = np.matmul(g, bd.T)
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
        ga = unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        gb = unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return emit("matmul", (a, b), out, backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map over the last axis with ``weight`` stored as [in, out]."""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then apply ``gamma`` and ``beta``."""
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise DimensionError("layer_norm needs a non-empty last axis")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match last axis {d}")
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be positive, got {eps}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data

    def backward(g: np.ndarray):
        g_xhat = g * gamma.data
        gx = inv_std * (
            g_xhat
            - g_xhat.mean(axis=-1, keepdims=True)
            - xhat * (g_xhat * xhat).mean(axis=-1, keepdims=True)
        )
        g_gamma = (g * xhat).reshape(-1, d).sum(axis=0)
        g_beta = g.reshape(-1, d).sum(axis=0)
        return gx, g_gamma, g_beta

    return emit("layer_norm", (x, gamma, beta), out, backward)


# ---------------------------------------------------------------------------
# Data movement
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    known = [s for s in shape if s != -1]
    if shape.count(-1) > 1:
        raise DimensionError(f"reshape target {shape} has more than one inferred extent")
    if -1 in shape:
        rest = int(np.prod(known)) if known else 1
        if rest == 0 or x.size % rest:
            raise DimensionError(f"cannot reshape {x.shape} to {shape}")
    elif int(np.prod(shape)) != x.size:
        raise DimensionError(f"cannot reshape {x.shape} ({x.size} elements) to {shape}")
    src = x.shape
    out = np.reshape(x.data, shape)
    return emit("reshape", (x,), out, lambda g: (np.reshape(g, src),))


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"{axes} is not an axis order for a rank-{x.ndim} tensor")
    inverse = tuple(int(i) for i in np.argsort(axes))
    out = np.ascontiguousarray(np.transpose(x.data, axes))
    return emit("permute", (x,), out, lambda g: (np.transpose(g, inverse),))


def concat_last(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis; all leading extents must match."""
    if not xs:
        raise DimensionError("concat_last needs at least one input")
    lead = xs[0].shape[:-1]
    for t in xs[1:]:
        if t.shape[:-1] != lead:
            raise DimensionError(f"concat_last leading shapes differ: {lead} vs {t.shape[:-1]}")
    widths = [t.shape[-1] for t in xs]
    bounds = np.cumsum([0] + widths)
    out = np.concatenate([t.data for t in xs], axis=-1)

    def backward(g: np.ndarray):
        return tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return emit("concat_last", tuple(xs), out, backward)


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    """Take ``x[..., start:stop]``."""
    width = x.shape[-1]
    if not 0 <= start < stop <= width:
        raise DimensionError(f"slice [{start}:{stop}] outside last axis of width {width}")
    out = x.data[..., start:stop].copy()

    def backward(g: np.ndarray):
        full = np.zeros(x.shape)
        full[..., start:stop] = g
        return (full,)

    return emit("slice_last", (x,), out, backward)


def embedding_lookup(table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of ``table[V, d]``; the backward pass scatter-adds into the table."""
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise EmbeddingIndexError(f"embedding indices must be integers, got {idx.dtype}")
    vocab, width = table.shape
    if idx.size:
        bad = idx[(idx < 0) | (idx >= vocab)]
        if bad.size:
            raise EmbeddingIndexError(f"index {int(bad.flat[0])} out of range for table of size V={vocab}")
    out = table.data[idx]

    def backward(g: np.ndarray):
        g_table = np.zeros(table.shape)
        np.add.at(g_table, idx.reshape(-1), g.reshape(-1, width))
        return (g_table,)

    return emit("embedding_lookup", (table,), out, backward)


def index_select(x: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Gather along ``axis``; used to reorder nodes."""
    idx = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim
    out = np.take(x.data, idx, axis=axis)

    def backward(g: np.ndarray):
        gx = np.zeros(x.shape)
        selector = (slice(None),) * axis + (idx,)
        np.add.at(gx, selector, g)
        return (gx,)

    return emit("index_select", (x,), out, backward)


# ---------------------------------------------------------------------------
# Regularization, convolution and reductions
# ---------------------------------------------------------------------------

def dropout_mask(shape: Tuple[int, ...], rate: float, rng_seed: Tuple[int, int, int]) -> np.ndarray:
    """Survivor mask from Philox keyed by (seed, layer); ``step`` sits in a counter word the draw never reaches."""
    seed, layer_id, step = (int(v) for v in rng_seed)
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, layer_id & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    counter = np.array([0, 0, step & 0xFFFFFFFFFFFFFFFF, 0], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key, counter=counter))
    return rng.random(shape) >= rate


def dropout(x: Tensor, rate: float, training: bool, rng_seed: Tuple[int, int, int] = (0, 0, 0)) -> Tensor:
    """Zero elements with probability ``rate`` and rescale survivors; identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = dropout_mask(x.shape, rate, rng_seed) / (1.0 - rate)
    return emit("dropout", (x,), x.data * keep, lambda g: (g * keep,))


def causal_conv1d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    Depthwise causal convolution over the sequence axis.

    Args:
        x: Input [..., seq, channels]
        weight: Kernel [channels, width]; tap ``width - 1`` multiplies the current step
        bias: Per-channel bias [channels]

    Returns:
        Output [..., seq, channels]; step k only sees steps <= k
    """
    channels, width = weight.shape
    if x.shape[-1] != channels or bias.shape != (channels,):
        raise DimensionError(f"conv shapes {x.shape}, {weight.shape}, {bias.shape} do not align")
    seq = x.shape[-2]
    pad = [(0, 0)] * (x.ndim - 2) + [(width - 1, 0), (0, 0)]
    padded = np.pad(x.data, pad)
    out = np.broadcast_to(bias.data, x.shape).copy()
    for j in range(width):
        out += padded[..., j:j + seq, :] * weight.data[:, j]

    def backward(g: np.ndarray):
        g_padded = np.zeros(padded.shape)
        g_weight = np.zeros(weight.shape)
        flat_g = g.reshape(-1, channels)
        for j in range(width):
            window = padded[..., j:j + seq, :]
            g_weight[:, j] = (window.reshape(-1, channels) * flat_g).sum(axis=0)
            g_padded[..., j:j + seq, :] += g * weight.data[:, j]
        return g_padded[..., width - 1:, :], g_weight, flat_g.sum(axis=0)

    return emit("causal_conv1d", (x, weight, bias), out, backward)


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return emit("sum", (x,), np.array(x.data.sum()), lambda g: (np.full(shape, float(g)),))


def mean_all(x: Tensor) -> Tensor:
    shape, count = x.shape, max(x.size, 1)
    return emit("mean", (x,), np.array(x.data.mean()), lambda g: (np.full(shape, float(g) / count),))


def mse(pred: Tensor, target: Operand) -> Tensor:
    """Mean of squared differences over every element."""
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    count = max(diff.size, 1)

    def backward(g: np.ndarray):
        gd = float(g) * 2.0 * diff / count
        return gd, -gd

    return emit("mse", (pred, target), np.array((diff * diff).mean()), backward)
