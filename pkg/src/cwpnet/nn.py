"""Parameter containers shared by the network blocks."""
from __future__ import annotations

import copy
from typing import Iterator

import numpy as np

from .tensor import Tensor, conv2d


class ConfigError(ValueError):
    """Invalid block or model configuration."""


class Module:
    """Holds trainable tensors and child modules as plain attributes.

    Parameter names follow attribute insertion order, so two modules built
    from the same configuration enumerate parameters identically.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                if value.trainable:
                    yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple, dict)):
                items = value.items() if isinstance(value, dict) else enumerate(value)
                for k, item in items:
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{k}.")
                    elif isinstance(item, Tensor) and item.trainable:
                        yield f"{name}.{k}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype):
        """Deep copy with every parameter cast to ``dtype``."""
        clone = copy.deepcopy(self)
        for p in clone.parameters():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)
        return clone


def param(values: np.ndarray, name: str = "") -> Tensor:
    return Tensor(values, trainable=True, name=name)


class Conv2d(Module):
    """Same-padded convolution; weights uniform on +-1/sqrt(fan_in), zero bias."""

    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator, stride: int = 1,
                 bias: bool = True):
        if k % 2 == 0:
            raise ConfigError(f"kernel size must be odd for same padding, got {k}")
        bound = 1.0 / np.sqrt(cin * k * k)
        self.weight = param(rng.uniform(-bound, bound, size=(cout, cin, k, k)))
        self.bias = param(np.zeros(cout)) if bias else None
        self.stride = stride
        self.pad = k // 2

    @property
    def in_channels(self) -> int:
        return self.weight.dims[1]

    @property
    def out_channels(self) -> int:
        return self.weight.dims[0]

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.pad)

    def zero_(self) -> Conv2d:
        self.weight.data[...] = 0
        if self.bias is not None:
            self.bias.data[...] = 0
        return self
