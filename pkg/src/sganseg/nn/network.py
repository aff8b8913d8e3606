"""Sequential networks with residual spans."""

from __future__ import annotations

import copy
from typing import Iterator

import numpy as np

from ..errors import ShapeError
from .layers import Layer, ResBegin, ResEnd


class Network:
    """A chain of layers; ``ResBegin``/``ResEnd`` pairs add a skip connection.

    If ``input_shape`` is given the whole chain is shape-checked on
    construction, before any arithmetic runs.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple | None = None, name: str = ""):
        self.layers = list(layers)
        self.name = name
        depth = 0
        for layer in self.layers:
            depth += isinstance(layer, ResBegin) - isinstance(layer, ResEnd)
            if depth < 0:
                raise ShapeError("ResEnd without a matching ResBegin")
        if depth:
            raise ShapeError("unclosed ResBegin")
        if input_shape is not None:
            self.output_shape(input_shape)

    def output_shape(self, shape: tuple) -> tuple:
        stack = []
        for layer in self.layers:
            if isinstance(layer, ResBegin):
                stack.append(shape)
            elif isinstance(layer, ResEnd):
                skip = stack.pop()
                if skip != shape:
                    raise ShapeError(f"residual span maps {skip} to {shape}")
            else:
                shape = layer.output_shape(tuple(shape))
        return tuple(shape)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        stack = []
        for layer in self.layers:
            if isinstance(layer, ResBegin):
                stack.append(x)
            elif isinstance(layer, ResEnd):
                skip = stack.pop()
                if skip.shape != x.shape:
                    raise ShapeError(f"residual span maps {skip.shape} to {x.shape}")
                x = x + skip
            else:
                x = layer.forward(x, train)
        return x

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x, train=False)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        stack = []
        for layer in reversed(self.layers):
            if isinstance(layer, ResEnd):
                stack.append(grad)
            elif isinstance(layer, ResBegin):
                grad = grad + stack.pop()
            else:
                grad = layer.backward(grad)
        return grad

    def parameters(self) -> Iterator[tuple[str, Layer, str]]:
        """Yield (key, layer, name) for every trainable array."""
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                yield f"{i}.{name}", layer, name

    def param_dict(self) -> dict[str, np.ndarray]:
        return {key: layer.params[name] for key, layer, name in self.parameters()}

    def grad_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for key, layer, name in self.parameters():
            g = layer.grads.get(name)
            out[key] = np.zeros_like(layer.params[name]) if g is None else g
        return out

    def load_param_dict(self, params: dict[str, np.ndarray]) -> None:
        for key, layer, name in self.parameters():
            layer.params[name] = params[key]

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.grads = {}

    def freeze(self) -> "Network":
        for layer in self.layers:
            layer.frozen = True
        return self

    def astype(self, dtype) -> "Network":
        """Return a copy with all parameters and buffers cast to ``dtype``."""
        net = copy.deepcopy(self)
        for layer in net.layers:
            layer.astype(dtype)
        return net

    def n_params(self) -> int:
        return sum(layer.params[name].size for _, layer, name in self.parameters())

    def __repr__(self):
        return f"Network({self.name!r}, {len(self.layers)} layers, {self.n_params()} params)"
