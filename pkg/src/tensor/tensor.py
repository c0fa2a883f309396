"""Dense float64 tensors and the tape that records them for reverse-mode differentiation."""

import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import ContractError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Row-major n-dimensional array of 64-bit floats with optional gradient tracking."""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        # Set when the tensor is the output of a recorded op
        self._tape: Optional["Tape"] = None
        self._recorded = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return not self._recorded

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying array."""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    def backward(self) -> None:
        """Back-propagate from this scalar through the tape that produced it."""
        if self._tape is None:
            raise ContractError("backward() called on a tensor that is not attached to a tape")
        self._tape.backward(self)

    # Operator sugar; the implementations live in src.tensor.ops
    def __add__(self, other):
        from src.tensor import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from src.tensor import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from src.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from src.tensor import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from src.tensor import ops
        return ops.mul(other, self)

    def __neg__(self):
        from src.tensor import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from src.tensor import ops
        return ops.matmul(self, other)

    def reshape(self, *shape: int) -> "Tensor":
        from src.tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def permute(self, *axes: int) -> "Tensor":
        from src.tensor import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.permute(self, axes)

    def sum(self) -> "Tensor":
        from src.tensor import ops
        return ops.sum_all(self)

    def mean(self) -> "Tensor":
        from src.tensor import ops
        return ops.mean_all(self)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


class Parameter(Tensor):
    """A trainable tensor with a dotted name assigned by its owning module."""

    def __init__(self, data: ArrayLike, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)


@dataclass
class Node:
    """One executed operation on the tape."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Append-only record of executed operations.

    Nodes are appended in execution order, so inputs always precede the nodes
    that consume them. ``backward`` walks the record once in reverse.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _active_tapes().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _active_tapes()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn) -> None:
        if self._consumed:
            raise ContractError("cannot record onto a tape that has already been back-propagated")
        output.requires_grad = True
        output._tape = self
        output._recorded = True
        self.nodes.append(Node(op=op, inputs=tuple(inputs), output=output, backward=backward))

    def backward(self, loss: Tensor) -> None:
        """
        Populate ``grad`` on every leaf ancestor of ``loss`` that requires grad.

        Args:
            loss: Scalar tensor recorded on this tape

        Raises:
            ContractError: If ``loss`` is not scalar, not on this tape, or the tape was already used
        """
        if loss.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ContractError("loss is detached from this tape")
        if self._consumed:
            raise ContractError("tape has already been back-propagated")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            grad_out = grads.pop(id(node.output), None)
            if grad_out is None:
                continue
            input_grads = node.backward(grad_out)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.is_leaf:
                    tensor.accumulate_grad(grad)
                else:
                    key = id(tensor)
                    grads[key] = grads[key] + grad if key in grads else grad
        self._consumed = True
        logger.debug(f"Back-propagated through {len(self.nodes)} tape nodes")


_local = threading.local()


def _active_tapes() -> List[Tape]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def current_tape() -> Optional[Tape]:
    """Return the innermost tape active on this thread, if any."""
    stack = _active_tapes()
    return stack[-1] if stack else None


def backward(loss: Tensor) -> None:
    """Back-propagate ``loss`` through the tape that recorded it."""
    loss.backward()
