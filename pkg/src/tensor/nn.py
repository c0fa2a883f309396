"""Module base class and the small set of layers the forecaster is built from."""

import logging
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from src.core.errors import ConfigError
from src.tensor import ops
from src.tensor.tensor import Parameter, Tensor

logger = logging.getLogger(__name__)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Glorot-uniform weights stored as [fan_in, fan_out]."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Module:
    """Owns named parameters and child modules; names compose into dotted paths."""

    def __init__(self):
        self._registry: Dict[str, Union[Parameter, "Module"]] = {}

    def add_parameter(self, name: str, data: np.ndarray) -> Parameter:
        """
        Register a trainable tensor under ``name``.

        Args:
            name: Local name, may itself be dotted
            data: Initial values

        Returns:
            The registered parameter
        """
        if name in self._registry:
            raise ConfigError(f"duplicate parameter name: {name}")
        param = Parameter(data, name=name)
        self._registry[name] = param
        return param

    def add_module(self, name: str, module: "Module") -> "Module":
        if name in self._registry:
            raise ConfigError(f"duplicate module name: {name}")
        self._registry[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        """Yield (dotted name, parameter) depth-first in registration order."""
        for name, entry in self._registry.items():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(entry, Module):
                yield from entry.named_parameters(full)
            else:
                yield full, entry

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copy of every parameter keyed by dotted name, in registration order."""
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Overwrite parameters in place; names and shapes must match exactly."""
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ConfigError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for name, param in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ConfigError(f"shape mismatch for {name}: expected {param.shape}, got {value.shape}")
            param.data[...] = value


class Linear(Module):
    """Affine map over the last axis (weight stored [in, out])."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = self.add_parameter("w", xavier_uniform(rng, in_features, out_features))
        self.bias: Optional[Parameter] = self.add_parameter("b", np.zeros(out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    """Layer normalization over the last axis."""

    def __init__(self, width: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.add_parameter("gamma", np.ones(width))
        self.beta = self.add_parameter("beta", np.zeros(width))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    """Dropout whose masks come from (seed, layer_id, step); ``step`` advances per training call."""

    def __init__(self, rate: float, seed: int = 0, layer_id: int = 0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.seed = seed
        self.layer_id = layer_id
        self.step = 0

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if not training or self.rate == 0.0:
            return x
        out = ops.dropout(x, self.rate, training, (self.seed, self.layer_id, self.step))
        self.step += 1
        return out
