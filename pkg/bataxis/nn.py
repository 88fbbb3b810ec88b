"""
Module plumbing on top of bataxis.tensor: parameter containers, naming,
train/eval mode, state dicts, and the small layers every encoder uses.

Each parameter draws its initial values from a generator seeded by
(model seed, CRC32 of its dotted name). Two models built with the same
seed therefore agree on every parameter they share by name, no matter
which other submodules exist.
"""

import zlib
from collections import OrderedDict
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import DiffTensor, Parameter


def init_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


class Module:
    """Base class: walks attributes in definition order to find parameters."""

    def __init__(self, name: str = ""):
        self.name = name
        self.training = True

    def children(self) -> Iterator["Module"]:
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield item

    def named_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        seen = set()
        for name, param in self._walk():
            if id(param) in seen:
                continue
            seen.add(id(param))
            yield name, param

    def _walk(self) -> Iterator[Tuple[str, Parameter]]:
        for value in vars(self).values():
            if isinstance(value, Parameter):
                yield value.name, value
            elif isinstance(value, Module):
                yield from value._walk()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item._walk()

    def parameters(self) -> Dict[str, Parameter]:
        params: Dict[str, Parameter] = OrderedDict()
        for name, param in self.named_parameters():
            if name in params:
                raise ValueError(f"duplicate parameter name {name!r}")
            params[name] = param
        return params

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for _, param in self.named_parameters():
            param.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return OrderedDict((name, p.data.copy()) for name, p in self.parameters().items())

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        params = self.parameters()
        if strict:
            missing = sorted(set(params) - set(state))
            unexpected = sorted(set(state) - set(params))
            if missing or unexpected:
                raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, value in state.items():
            if name not in params:
                continue
            value = np.asarray(value, dtype=np.float64)
            if value.shape != params[name].shape:
                raise DimensionError(
                    f"parameter {name!r}: stored shape {value.shape} != model shape {params[name].shape}"
                )
            params[name].data = value.copy()


def count_parameters(module: Module) -> int:
    return sum(p.size for p in module.parameters().values())


class Linear(Module):
    """y = x W + b, W of shape (in, out), uniform fan-in init, zero bias."""

    def __init__(self, in_features: int, out_features: int, name: str, seed: int = 0):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        bound = 1.0 / np.sqrt(in_features)
        rng = init_rng(seed, _join(name, "weight"))
        self.weight = Parameter(
            rng.uniform(-bound, bound, size=(in_features, out_features)), _join(name, "weight")
        )
        self.bias = Parameter(np.zeros(out_features), _join(name, "bias"))

    def __call__(self, x: DiffTensor) -> DiffTensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(
                f"{self.name}: input width {x.shape[-1]} != expected {self.in_features} "
                f"(input shape {x.shape}, weight shape {self.weight.shape})"
            )
        return T.matmul(x, self.weight) + self.bias


class LayerNorm(Module):
    def __init__(self, width: int, name: str, eps: float = 1e-5):
        super().__init__(name)
        self.eps = eps
        self.gain = Parameter(np.ones(width), _join(name, "gain"))
        self.bias = Parameter(np.zeros(width), _join(name, "bias"))

    def __call__(self, x: DiffTensor) -> DiffTensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class FeedForward(Module):
    """Two linear maps with a ReLU between them."""

    def __init__(self, width: int, hidden: int, name: str, seed: int = 0, dropout: float = 0.0):
        super().__init__(name)
        self.dropout = dropout
        self.inner = Linear(width, hidden, _join(name, "inner"), seed)
        self.outer = Linear(hidden, width, _join(name, "outer"), seed)

    def __call__(self, x: DiffTensor, rng: Optional[np.random.Generator] = None) -> DiffTensor:
        hidden = T.dropout(T.relu(self.inner(x)), self.dropout, rng, self.training)
        return self.outer(hidden)
