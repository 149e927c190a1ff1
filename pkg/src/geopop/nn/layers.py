"""Layer implementations with explicit forward/backward passes.

Spatial tensors use the channels-last layout ``(N, H, W, C)`` throughout;
convolution weights are stored as ``(filters, in_channels, 3, 3)``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import DimensionError


class Layer:
    kind = "layer"
    init_scheme = None

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.input_shape: tuple | None = None

    def build(self, input_shape: tuple) -> tuple:
        """Bind the per-sample input shape and return the output shape."""
        self.input_shape = tuple(input_shape)
        return self.input_shape

    def initialize(self, rng: np.random.Generator, dtype=np.float64):
        pass

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dy, input_grad=True):
        raise NotImplementedError

    def pattern(self):
        """Discrete state of the last forward pass (kink locations)."""
        return None

    def spec(self) -> dict:
        return {"kind": self.kind}


class Conv2D(Layer):
    """3x3 same-padding stride-1 convolution."""

    kind = "conv2d"
    init_scheme = "he_uniform"

    def __init__(self, filters: int, kernel: int = 3):
        super().__init__()
        if kernel != 3:
            raise ValueError("only 3x3 kernels are supported")
        self.filters = filters
        self.kernel = kernel
        self._cols = None
        self._xshape = None

    def build(self, input_shape):
        if len(input_shape) != 3:
            raise DimensionError(f"conv2d expects (H, W, C) input, got {input_shape}")
        self.input_shape = tuple(input_shape)
        h, w, _ = input_shape
        return (h, w, self.filters)

    @property
    def in_channels(self):
        return self.input_shape[2]

    def initialize(self, rng, dtype=np.float64):
        fan_in = self.in_channels * 9
        fan_out = self.filters * 9
        limit = _init_limit(self.init_scheme, fan_in, fan_out)
        w = rng.uniform(-limit, limit, size=(self.filters, self.in_channels, 3, 3))
        # float32-representable so a saved untrained model reloads exactly
        self.params = {"W": w.astype(np.float32).astype(dtype), "b": np.zeros(self.filters, dtype=dtype)}

    def _wmat(self):
        # (F, C, 3, 3) -> (F, 3*3*C) to match the (ki, kj, c) column order
        return self.params["W"].transpose(0, 2, 3, 1).reshape(self.filters, -1)

    def forward(self, x, training=False, rng=None):
        n, h, w, c = x.shape
        xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
        xp[:, 1:-1, 1:-1, :] = x
        # each kernel row's three taps are 3*C contiguous values in xp
        sn, sh, sw, sc = xp.strides
        win = as_strided(xp, shape=(n, h, w, 3, 3 * c), strides=(sn, sh, sw, sh, sc),
                         writeable=False)
        cols = np.ascontiguousarray(win).reshape(n * h * w, 9 * c)
        self._cols = cols
        self._xshape = x.shape
        y = cols @ self._wmat().T
        y += self.params["b"]
        return y.reshape(n, h, w, self.filters)

    def backward(self, dy, input_grad=True):
        n, h, w, c = self._xshape
        dy2 = dy.reshape(-1, self.filters)
        dw = dy2.T @ self._cols
        self.grads = {
            "W": dw.reshape(self.filters, 3, 3, c).transpose(0, 3, 1, 2),
            "b": dy2.sum(axis=0),
        }
        if not input_grad:
            return None
        dcols = (dy2 @ self._wmat()).reshape(n, h, w, 3, 3, c)
        dxp = np.zeros((n, h + 2, w + 2, c), dtype=dy.dtype)
        for i in range(3):
            for j in range(3):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, 1:-1, 1:-1, :]

    def spec(self):
        return {"kind": self.kind, "filters": self.filters, "kernel": self.kernel}


class MaxPool2(Layer):
    """2x2 max pooling, stride 2. Ties route the gradient to the first maximum."""

    kind = "maxpool2"

    def __init__(self):
        super().__init__()
        self._masks = None

    def build(self, input_shape):
        if len(input_shape) != 3 or input_shape[0] % 2 or input_shape[1] % 2:
            raise DimensionError(f"maxpool2 needs even (H, W, C) input, got {input_shape}")
        self.input_shape = tuple(input_shape)
        h, w, c = input_shape
        return (h // 2, w // 2, c)

    def forward(self, x, training=False, rng=None):
        quads = (x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2])
        y = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))
        taken = np.zeros(y.shape, dtype=bool)
        masks = []
        for q in quads:
            m = (q == y) & ~taken
            taken |= m
            masks.append(m)
        self._masks = masks
        return y

    def backward(self, dy, input_grad=True):
        n, h2, w2, c = dy.shape
        dx = np.empty((n, 2 * h2, 2 * w2, c), dtype=dy.dtype)
        m = self._masks
        dx[:, 0::2, 0::2] = dy * m[0]
        dx[:, 0::2, 1::2] = dy * m[1]
        dx[:, 1::2, 0::2] = dy * m[2]
        dx[:, 1::2, 1::2] = dy * m[3]
        return dx

    def pattern(self):
        return np.stack(self._masks)


class Dense(Layer):
    """Fully connected layer ``y = x W^T + b`` with W of shape (units, inputs)."""

    kind = "dense"
    init_scheme = "he_uniform"

    def __init__(self, units: int, l2: float = 0.0, init: str = "he_uniform"):
        super().__init__()
        self.units = units
        self.l2 = l2
        self.init_scheme = init
        self._x = None

    def build(self, input_shape):
        if len(input_shape) != 1:
            raise DimensionError(f"dense expects flat input, got {input_shape}")
        self.input_shape = tuple(input_shape)
        return (self.units,)

    def initialize(self, rng, dtype=np.float64):
        fan_in = self.input_shape[0]
        limit = _init_limit(self.init_scheme, fan_in, self.units)
        w = rng.uniform(-limit, limit, size=(self.units, fan_in))
        self.params = {"W": w.astype(np.float32).astype(dtype), "b": np.zeros(self.units, dtype=dtype)}

    def forward(self, x, training=False, rng=None):
        self._x = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy, input_grad=True):
        dw = dy.T @ self._x
        if self.l2:
            dw = dw + self.l2 * self.params["W"]
        self.grads = {"W": dw, "b": dy.sum(axis=0)}
        if not input_grad:
            return None
        return dy @ self.params["W"]

    def penalty(self) -> float:
        """L2 penalty whose gradient is ``l2 * W``."""
        if not self.l2:
            return 0.0
        return 0.5 * self.l2 * float(np.sum(self.params["W"] ** 2))

    def spec(self):
        return {"kind": self.kind, "units": self.units, "l2": self.l2, "init": self.init_scheme}


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dy, input_grad=True):
        return dy * self._mask

    def pattern(self):
        return self._mask


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, slope: float = 0.01):
        super().__init__()
        self.slope = slope
        self._mask = None

    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, dy, input_grad=True):
        return np.where(self._mask, dy, self.slope * dy)

    def pattern(self):
        return self._mask

    def spec(self):
        return {"kind": self.kind, "slope": self.slope}


class Dropout(Layer):
    """Inverted dropout: kept units are divided by the keep probability."""

    kind = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"drop rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._scale = None

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._scale = None
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        keep = 1.0 - self.rate
        self._scale = (rng.random(x.shape) >= self.rate).astype(x.dtype) / keep
        return x * self._scale

    def backward(self, dy, input_grad=True):
        if self._scale is None:
            return dy
        return dy * self._scale

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}


class Sigmoid(Layer):
    kind = "sigmoid"

    def __init__(self):
        super().__init__()
        self._y = None

    def forward(self, x, training=False, rng=None):
        # tanh form is overflow-free for large |x|
        y = 0.5 * (1.0 + np.tanh(0.5 * x))
        self._y = y
        return y

    def backward(self, dy, input_grad=True):
        return dy * self._y * (1.0 - self._y)


class Flatten(Layer):
    kind = "flatten"

    def build(self, input_shape):
        self.input_shape = tuple(input_shape)
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False, rng=None):
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, input_grad=True):
        return dy.reshape((dy.shape[0],) + self.input_shape)


LAYER_KINDS = {
    cls.kind: cls
    for cls in (Conv2D, MaxPool2, Dense, ReLU, LeakyReLU, Dropout, Sigmoid, Flatten)
}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    kind = spec.pop("kind")
    try:
        cls = LAYER_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {kind!r}") from None
    return cls(**spec)


def _init_limit(scheme, fan_in, fan_out):
    if scheme == "he_uniform":
        return np.sqrt(6.0 / fan_in)
    if scheme == "xavier_uniform":
        return np.sqrt(6.0 / (fan_in + fan_out))
    raise ValueError(f"unknown init scheme {scheme!r}")
