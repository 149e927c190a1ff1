from __future__ import annotations

import numpy as np

from ..errors import DimensionError, StateError
from .layers import Layer, layer_from_spec


class Sequential:
    """A stack of layers with a cached forward pass for backpropagation.

    ``input_shape`` is the per-sample shape, e.g. ``(64, 64, 4)`` for
    channels-last image patches or ``(3,)`` for tabular features.
    """

    def __init__(self, layers: list[Layer], input_shape, dtype=np.float64):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.build(shape)
            except DimensionError as exc:
                raise DimensionError(f"layer {i} ({layer.kind}): {exc}") from None
        self.output_shape = shape
        self._trained_forward = False

    @classmethod
    def from_specs(cls, specs, input_shape, dtype=np.float64):
        return cls([layer_from_spec(s) for s in specs], input_shape, dtype=dtype)

    def specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def initialize(self, seed: int):
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.initialize(rng, dtype=self.dtype)
        return self

    def forward(self, x, training=False, seed=None):
        """Run the network on a batch.

        Dropout masks are drawn from ``np.random.default_rng(seed)`` so a
        training pass is reproducible given ``seed``.
        """
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise DimensionError(
                f"layer 0 ({self.layers[0].kind}) expects per-sample shape "
                f"{self.input_shape}, got {x.shape[1:]}"
            )
        rng = np.random.default_rng(seed) if training else None
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        self._trained_forward = training
        return x

    __call__ = forward

    def backward(self, dy, input_grad=False):
        """Backpropagate ``dy``; parameter gradients land in ``layer.grads``."""
        if not self._trained_forward:
            raise StateError("backward() requires a preceding forward(training=True)")
        dy = np.asarray(dy, dtype=self.dtype)
        for i in range(len(self.layers) - 1, -1, -1):
            need = input_grad or i > 0
            dy = self.layers[i].backward(dy, input_grad=need)
        return dy

    def penalty(self) -> float:
        return sum(getattr(layer, "penalty", lambda: 0.0)() for layer in self.layers)

    def parameters(self):
        """Ordered ``(name, array)`` pairs; names look like ``"3.W"``."""
        out = []
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                out.append((f"{i}.{key}", layer.params[key]))
        return out

    def gradients(self):
        out = []
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                out.append((f"{i}.{key}", layer.grads[key]))
        return out

    def n_parameters(self) -> int:
        return sum(p.size for _, p in self.parameters())

    def patterns(self):
        return [layer.pattern() for layer in self.layers]

    def set_parameters(self, arrays):
        """Load parameters in ``parameters()`` order, casting to the model dtype."""
        it = iter(arrays)
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                a = np.asarray(next(it), dtype=self.dtype)
                if a.shape != layer.params[key].shape:
                    raise DimensionError(
                        f"layer {i} ({layer.kind}) param {key}: expected "
                        f"{layer.params[key].shape}, got {a.shape}")
                layer.params[key] = a.copy()

    def astype(self, dtype):
        clone = Sequential.from_specs(self.specs(), self.input_shape, dtype=dtype)
        for src, dst in zip(self.layers, clone.layers):
            dst.params = {k: v.astype(dtype) for k, v in src.params.items()}
        return clone
