"""Sequential layer types with explicit forward/backward passes.

Tensors are plain numpy arrays, batch first: ``(N, C, L)`` for 1-D
convolutions, ``(N, C, H, W)`` for 2-D ones, ``(N, D)`` for dense layers.
Convolutions and pools use no padding.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatchError


class Layer:
    kind = "Layer"
    param_names: tuple = ()

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.input_shape = None
        self.output_shape = None
        self._cache = None

    @property
    def has_params(self) -> bool:
        return bool(self.param_names)

    def build(self, input_shape, rng, dtype):
        """Fix shapes (without the batch axis) and initialise parameters."""
        self.input_shape = tuple(input_shape)
        self.output_shape = self._out_shape(self.input_shape)
        self.dtype = dtype
        return self.output_shape

    def _out_shape(self, shape):
        return shape

    def args(self) -> tuple:
        return ()

    def reset(self, rng):
        """Re-draw parameters for the already-known input shape."""
        self.build(self.input_shape, rng, self.dtype)

    def _check(self, x):
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatchError(
                f"{self.kind} expects input {self.input_shape}, got {x.shape[1:]}")

    def __repr__(self):
        return f"{self.kind}{self.args()}"


def _he_uniform(rng, fan_in, shape, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Dense(Layer):
    kind = "Dense"
    param_names = ("W", "b")

    def __init__(self, out_dim: int):
        super().__init__()
        if out_dim < 1:
            raise ValueError("out_dim must be >= 1")
        self.out_dim = out_dim

    def args(self):
        return (self.out_dim,)

    def _out_shape(self, shape):
        if len(shape) != 1:
            raise ShapeMismatchError(f"Dense needs flat input, got {shape}")
        return (self.out_dim,)

    def build(self, input_shape, rng, dtype):
        out = super().build(input_shape, rng, dtype)
        d = input_shape[0]
        self.params = {"W": _he_uniform(rng, d, (d, self.out_dim), dtype),
                       "b": np.zeros(self.out_dim, dtype=dtype)}
        return out

    def forward(self, x, train=False):
        self._check(x)
        self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x = self._cache
        self.grads = {"W": x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T


class Conv1D(Layer):
    kind = "Conv1D"
    param_names = ("W", "b")

    def __init__(self, out_ch: int, kernel: int, stride: int = 1):
        super().__init__()
        if min(out_ch, kernel, stride) < 1:
            raise ValueError("out_ch, kernel and stride must be >= 1")
        self.out_ch, self.kernel, self.stride = out_ch, kernel, stride

    def args(self):
        return (self.out_ch, self.kernel, self.stride)

    def _out_shape(self, shape):
        if len(shape) != 2:
            raise ShapeMismatchError(f"Conv1D needs (C, L) input, got {shape}")
        c, length = shape
        if length < self.kernel:
            raise ShapeMismatchError(f"Conv1D kernel {self.kernel} longer than input {length}")
        return (self.out_ch, (length - self.kernel) // self.stride + 1)

    def build(self, input_shape, rng, dtype):
        out = super().build(input_shape, rng, dtype)
        c = input_shape[0]
        fan_in = c * self.kernel
        self.params = {"W": _he_uniform(rng, fan_in, (self.out_ch, c, self.kernel), dtype),
                       "b": np.zeros(self.out_ch, dtype=dtype)}
        return out

    def forward(self, x, train=False):
        self._check(x)
        n, c, _ = x.shape
        lout = self.output_shape[1]
        win = sliding_window_view(x, self.kernel, axis=2)[:, :, ::self.stride][:, :, :lout]
        cols = win.transpose(0, 2, 1, 3).reshape(n * lout, c * self.kernel)
        wm = self.params["W"].reshape(self.out_ch, -1)
        out = cols @ wm.T + self.params["b"]
        self._cache = (x.shape, cols)
        return out.reshape(n, lout, self.out_ch).transpose(0, 2, 1)

    def backward(self, dout):
        xshape, cols = self._cache
        n, c, length = xshape
        lout = dout.shape[2]
        d2 = dout.transpose(0, 2, 1).reshape(n * lout, self.out_ch)
        wm = self.params["W"].reshape(self.out_ch, -1)
        self.grads = {"W": (d2.T @ cols).reshape(self.params["W"].shape), "b": d2.sum(axis=0)}
        dcols = (d2 @ wm).reshape(n, lout, c, self.kernel)
        dx = np.zeros(xshape, dtype=dout.dtype)
        span = self.stride * (lout - 1) + 1
        for k in range(self.kernel):
            dx[:, :, k:k + span:self.stride] += dcols[:, :, :, k].transpose(0, 2, 1)
        return dx


class Conv2D(Layer):
    kind = "Conv2D"
    param_names = ("W", "b")

    def __init__(self, out_ch: int, kernel: int, stride: int = 1):
        super().__init__()
        if min(out_ch, kernel, stride) < 1:
            raise ValueError("out_ch, kernel and stride must be >= 1")
        self.out_ch, self.kernel, self.stride = out_ch, kernel, stride

    def args(self):
        return (self.out_ch, self.kernel, self.stride)

    def _out_shape(self, shape):
        if len(shape) != 3:
            raise ShapeMismatchError(f"Conv2D needs (C, H, W) input, got {shape}")
        c, h, w = shape
        if min(h, w) < self.kernel:
            raise ShapeMismatchError(f"Conv2D kernel {self.kernel} larger than input {h}x{w}")
        k, s = self.kernel, self.stride
        return (self.out_ch, (h - k) // s + 1, (w - k) // s + 1)

    def build(self, input_shape, rng, dtype):
        out = super().build(input_shape, rng, dtype)
        c = input_shape[0]
        k = self.kernel
        self.params = {"W": _he_uniform(rng, c * k * k, (self.out_ch, c, k, k), dtype),
                       "b": np.zeros(self.out_ch, dtype=dtype)}
        return out

    def forward(self, x, train=False):
        self._check(x)
        n, c = x.shape[:2]
        _, ho, wo = self.output_shape
        k, s = self.kernel, self.stride
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
        # (N, C, Ho, Wo, k, k) -> (N, Ho, Wo, C, k, k)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        wm = self.params["W"].reshape(self.out_ch, -1)
        out = cols @ wm.T + self.params["b"]
        self._cache = (x.shape, cols)
        return out.reshape(n, ho, wo, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, dout):
        xshape, cols = self._cache
        n, c = xshape[:2]
        _, ho, wo = dout.shape[1:]
        k, s = self.kernel, self.stride
        d2 = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, self.out_ch)
        wm = self.params["W"].reshape(self.out_ch, -1)
        self.grads = {"W": (d2.T @ cols).reshape(self.params["W"].shape), "b": d2.sum(axis=0)}
        dcols = (d2 @ wm).reshape(n, ho, wo, c, k, k).transpose(0, 3, 1, 2, 4, 5)
        dx = np.zeros(xshape, dtype=dout.dtype)
        sh, sw = s * (ho - 1) + 1, s * (wo - 1) + 1
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + sh:s, j:j + sw:s] += dcols[..., i, j]
        return dx


def _pool_max(xr):
    """Max over the last axis; also returns per-slot one-hot masks (first index wins ties)."""
    best = xr[..., 0]
    for j in range(1, xr.shape[-1]):
        best = np.maximum(best, xr[..., j])
    masks = []
    taken = np.zeros(best.shape, dtype=bool)
    for j in range(xr.shape[-1]):
        mj = (xr[..., j] == best) & ~taken
        taken |= mj
        masks.append(mj)
    return best, masks


def _pool_scatter(dout, masks):
    dxr = np.empty(dout.shape + (len(masks),), dtype=dout.dtype)
    for j, mj in enumerate(masks):
        np.multiply(dout, mj, out=dxr[..., j])
    return dxr


class MaxPool1D(Layer):
    kind = "MaxPool1D"

    def __init__(self, size: int = 2):
        super().__init__()
        if size < 1:
            raise ValueError("size must be >= 1")
        self.size = size

    def args(self):
        return (self.size,)

    def _out_shape(self, shape):
        if len(shape) != 2 or shape[1] < self.size:
            raise ShapeMismatchError(f"MaxPool1D({self.size}) cannot pool {shape}")
        return (shape[0], shape[1] // self.size)

    def forward(self, x, train=False):
        self._check(x)
        n, c, _ = x.shape
        lo = self.output_shape[1]
        out, idx = _pool_max(x[:, :, :lo * self.size].reshape(n, c, lo, self.size))
        self._cache = (x.shape, idx)
        return out

    def backward(self, dout):
        xshape, idx = self._cache
        n, c, length = xshape
        lo = dout.shape[2]
        dx = np.zeros(xshape, dtype=dout.dtype)
        dx[:, :, :lo * self.size] = _pool_scatter(dout, idx).reshape(n, c, -1)
        return dx


class MaxPool2D(Layer):
    kind = "MaxPool2D"

    def __init__(self, size: int = 2):
        super().__init__()
        if size < 1:
            raise ValueError("size must be >= 1")
        self.size = size

    def args(self):
        return (self.size,)

    def _out_shape(self, shape):
        if len(shape) != 3 or min(shape[1:]) < self.size:
            raise ShapeMismatchError(f"MaxPool2D({self.size}) cannot pool {shape}")
        return (shape[0], shape[1] // self.size, shape[2] // self.size)

    def forward(self, x, train=False):
        self._check(x)
        n, c = x.shape[:2]
        _, ho, wo = self.output_shape
        s = self.size
        xr = (x[:, :, :ho * s, :wo * s].reshape(n, c, ho, s, wo, s)
              .transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, s * s))
        out, idx = _pool_max(xr)
        self._cache = (x.shape, idx)
        return out

    def backward(self, dout):
        xshape, idx = self._cache
        n, c = xshape[:2]
        _, ho, wo = dout.shape[1:]
        s = self.size
        dxr = _pool_scatter(dout, idx)
        dx = np.zeros(xshape, dtype=dout.dtype)
        dx[:, :, :ho * s, :wo * s] = (dxr.reshape(n, c, ho, wo, s, s)
                                      .transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * s, wo * s))
        return dx


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, train=False):
        self._check(x)
        mask = x > 0
        self._cache = mask
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._cache


class Flatten(Layer):
    kind = "Flatten"

    def _out_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, train=False):
        self._check(x)
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape((dout.shape[0],) + self.input_shape)


class Softmax(Layer):
    """Row-wise softmax. Paired with cross-entropy the model skips its Jacobian."""

    kind = "Softmax"

    def _out_shape(self, shape):
        if len(shape) != 1:
            raise ShapeMismatchError(f"Softmax needs flat input, got {shape}")
        return shape

    def forward(self, x, train=False):
        self._check(x)
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        self._cache = p
        return p

    def backward(self, dout):
        p = self._cache
        return p * (dout - np.sum(dout * p, axis=1, keepdims=True))


LAYER_TYPES = {cls.kind: cls for cls in
               (Dense, Conv1D, Conv2D, MaxPool1D, MaxPool2D, ReLU, Flatten, Softmax)}
