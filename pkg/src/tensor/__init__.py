"""Dense float64 tensors with tape-based reverse-mode differentiation."""

from src.tensor.tensor import Node, Parameter, Tape, Tensor, backward, current_tape

__all__ = ["Node", "Parameter", "Tape", "Tensor", "backward", "current_tape"]
