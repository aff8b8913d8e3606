"""Layers with hand-derived backward passes.

Every layer caches what its backward pass needs during ``forward`` and
fills ``grads`` (same keys as ``params``) during ``backward``.  Tensors are
NCHW numpy arrays; dense layers work on (N, features).
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, UninitializedStatsError


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.frozen = False

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def config(self) -> list[int]:
        """Integer hyperparameters, in constructor order."""
        return []

    def astype(self, dtype) -> None:
        for store in (self.params, self.buffers):
            for k, v in store.items():
                store[k] = v.astype(dtype)
        self.grads = {}

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(map(str, self.config()))})"


def conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def conv2d_forward(x, weight, bias, stride: int = 1, pad: int = 1) -> np.ndarray:
    """Cross-correlation of an NCHW batch with (out, in, k, k) weights."""
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if c != ci or k != k2:
        raise ShapeError(f"conv weights {weight.shape} do not fit input {x.shape}")
    ho, wo = conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {x.shape} too small for k={k}, stride={stride}, pad={pad}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))).transpose(1, 0, 2, 3)
    out = np.zeros((o, n, ho, wo), dtype=np.result_type(x, weight))
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride]
            out += np.tensordot(weight[:, :, i, j], patch, axes=([1], [0]))
    out += bias[:, None, None, None]
    return out.transpose(1, 0, 2, 3)


def conv2d_backward(x, weight, grad_out, stride: int = 1, pad: int = 1):
    """Gradients of ``sum(grad_out * conv2d_forward(x, weight, b))``: (grad_x, grad_w, grad_b)."""
    n, c, h, w = x.shape
    o, _, k, _ = weight.shape
    ho, wo = conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad)
    if grad_out.shape != (n, o, ho, wo):
        raise ShapeError(f"grad_out {grad_out.shape} does not match forward output {(n, o, ho, wo)}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))).transpose(1, 0, 2, 3)
    gt = grad_out.transpose(1, 0, 2, 3)
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(weight)
    for i in range(k):
        for j in range(k):
            sl = (slice(None), slice(None), slice(i, i + stride * (ho - 1) + 1, stride),
                  slice(j, j + stride * (wo - 1) + 1, stride))
            gw[:, :, i, j] = np.tensordot(gt, xp[sl], axes=([1, 2, 3], [1, 2, 3]))
            gxp[sl] += np.tensordot(weight[:, :, i, j], gt, axes=([0], [0]))
    gx = gxp[:, :, pad : pad + h, pad : pad + w].transpose(1, 0, 2, 3)
    gb = grad_out.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(gx), gw, gb


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, in_ch: int, out_ch: int, k: int = 3, stride: int = 1, pad: int = 1, rng=None):
        super().__init__()
        self.in_ch, self.out_ch, self.k, self.stride, self.pad = in_ch, out_ch, k, stride, pad
        rng = rng or np.random.default_rng(0)
        fan_in = in_ch * k * k
        self.params["weight"] = (rng.standard_normal((out_ch, in_ch, k, k)) * np.sqrt(2.0 / fan_in)).astype(np.float32)
        self.params["bias"] = np.zeros(out_ch, dtype=np.float32)

    def config(self):
        return [self.in_ch, self.out_ch, self.k, self.stride, self.pad]

    def output_shape(self, shape):
        if len(shape) != 4 or shape[1] != self.in_ch:
            raise ShapeError(f"{self!r} cannot take input of shape {shape}")
        ho = conv_out_size(shape[2], self.k, self.stride, self.pad)
        wo = conv_out_size(shape[3], self.k, self.stride, self.pad)
        if ho < 1 or wo < 1:
            raise ShapeError(f"{self!r} input {shape} too small")
        return (shape[0], self.out_ch, ho, wo)

    def forward(self, x, train=False):
        self._x = x
        return conv2d_forward(x, self.params["weight"], self.params["bias"], self.stride, self.pad)

    def backward(self, grad):
        gx, gw, gb = conv2d_backward(self._x, self.params["weight"], grad, self.stride, self.pad)
        if not self.frozen:
            self.grads = {"weight": gw, "bias": gb}
        return gx


class BatchNorm(Layer):
    """Per-channel batch normalization; running statistics start from the first batch."""

    kind = "batchnorm"

    def __init__(self, ch: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.ch, self.eps, self.momentum = ch, eps, momentum
        self.params["gamma"] = np.ones(ch, dtype=np.float32)
        self.params["beta"] = np.zeros(ch, dtype=np.float32)
        self.buffers["running_mean"] = np.zeros(ch, dtype=np.float32)
        self.buffers["running_var"] = np.ones(ch, dtype=np.float32)
        self.initialized = False

    def config(self):
        return [self.ch, int(self.initialized)]

    def output_shape(self, shape):
        if len(shape) != 4 or shape[1] != self.ch:
            raise ShapeError(f"{self!r} cannot take input of shape {shape}")
        return shape

    def forward(self, x, train=False):
        gamma = self.params["gamma"][None, :, None, None]
        beta = self.params["beta"][None, :, None, None]
        if train:
            if x.shape[0] * x.shape[2] * x.shape[3] < 2:
                raise ShapeError("train-mode batch norm needs at least 2 values per channel")
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            if self.initialized:
                m = self.momentum
                self.buffers["running_mean"] = ((1 - m) * rm + m * mean).astype(rm.dtype)
                self.buffers["running_var"] = ((1 - m) * rv + m * var).astype(rv.dtype)
            else:
                self.buffers["running_mean"] = mean.astype(rm.dtype)
                self.buffers["running_var"] = var.astype(rv.dtype)
                self.initialized = True
        else:
            if not self.initialized:
                raise UninitializedStatsError("batch norm used in eval mode before any training step")
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std, train)
        return (gamma * xhat + beta).astype(x.dtype, copy=False)

    def backward(self, grad):
        xhat, inv_std, train = self._cache
        gamma = self.params["gamma"][None, :, None, None]
        if not self.frozen:
            self.grads = {"gamma": (grad * xhat).sum(axis=(0, 2, 3)), "beta": grad.sum(axis=(0, 2, 3))}
        dxhat = grad * gamma
        inv = inv_std[None, :, None, None]
        if not train:
            return dxhat * inv
        m = grad.shape[0] * grad.shape[2] * grad.shape[3]
        s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        return inv * (dxhat - s1 / m - xhat * s2 / m)


class PReLU(Layer):
    kind = "prelu"

    def __init__(self, ch: int, init: float = 0.25):
        super().__init__()
        self.ch = ch
        self.params["slope"] = np.full(ch, init, dtype=np.float32)

    def config(self):
        return [self.ch]

    def output_shape(self, shape):
        if len(shape) != 4 or shape[1] != self.ch:
            raise ShapeError(f"{self!r} cannot take input of shape {shape}")
        return shape

    def forward(self, x, train=False):
        self._x = x
        a = self.params["slope"][None, :, None, None]
        return np.where(x > 0, x, a * x)

    def backward(self, grad):
        x = self._x
        a = self.params["slope"][None, :, None, None]
        if not self.frozen:
            self.grads = {"slope": np.where(x > 0, 0, grad * x).sum(axis=(0, 2, 3))}
        return np.where(x > 0, grad, a * grad)


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, alpha: float = 0.2):
        super().__init__()
        self.alpha = alpha

    def forward(self, x, train=False):
        self._pos = x > 0
        return np.where(self._pos, x, self.alpha * x)

    def backward(self, grad):
        return np.where(self._pos, grad, self.alpha * grad)


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Rearrange (N, C*r*r, H, W) into (N, C, H*r, W*r); channel c*r*r + i*r + j fills offset (i, j)."""
    n, c, h, w = x.shape
    if c % (r * r):
        raise ShapeError(f"{c} channels not divisible by r^2={r * r}")
    return x.reshape(n, c // (r * r), r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c // (r * r), h * r, w * r)


def inverse_pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = x.shape
    if h % r or w % r:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by r={r}")
    return x.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h // r, w // r)


class PixelShuffle(Layer):
    kind = "pixel_shuffle"

    def __init__(self, r: int):
        super().__init__()
        self.r = r

    def config(self):
        return [self.r]

    def output_shape(self, shape):
        if len(shape) != 4 or shape[1] % (self.r * self.r):
            raise ShapeError(f"{self!r} cannot take input of shape {shape}")
        return (shape[0], shape[1] // self.r**2, shape[2] * self.r, shape[3] * self.r)

    def forward(self, x, train=False):
        return pixel_shuffle(x, self.r)

    def backward(self, grad):
        return inverse_pixel_shuffle(grad, self.r)


class MaxPool2d(Layer):
    """Non-overlapping 2x2 max pooling; odd trailing rows/columns are dropped."""

    kind = "maxpool2d"

    def output_shape(self, shape):
        if len(shape) != 4 or shape[2] < 2 or shape[3] < 2:
            raise ShapeError(f"MaxPool2d cannot take input of shape {shape}")
        return (shape[0], shape[1], shape[2] // 2, shape[3] // 2)

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        blocks = x[:, :, : 2 * h2, : 2 * w2].reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(n, c, h2, w2, 4)
        self._arg = blocks.argmax(axis=-1)
        self._shape = x.shape
        return np.take_along_axis(blocks, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, h, w = self._shape
        h2, w2 = h // 2, w // 2
        blocks = np.zeros((n, c, h2, w2, 4), dtype=grad.dtype)
        np.put_along_axis(blocks, self._arg[..., None], grad[..., None], axis=-1)
        out = np.zeros(self._shape, dtype=grad.dtype)
        out[:, :, : 2 * h2, : 2 * w2] = (
            blocks.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
        )
        return out


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (shape[0], int(np.prod(shape[1:])))

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, rng=None):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        rng = rng or np.random.default_rng(0)
        self.params["weight"] = (rng.standard_normal((n_out, n_in)) * np.sqrt(2.0 / n_in)).astype(np.float32)
        self.params["bias"] = np.zeros(n_out, dtype=np.float32)

    def config(self):
        return [self.n_in, self.n_out]

    def output_shape(self, shape):
        if len(shape) != 2 or shape[1] != self.n_in:
            raise ShapeError(f"{self!r} cannot take input of shape {shape}")
        return (shape[0], self.n_out)

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"{self!r} cannot take input of shape {x.shape}")
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad):
        if not self.frozen:
            self.grads = {"weight": grad.T @ self._x, "bias": grad.sum(axis=0)}
        return grad @ self.params["weight"]


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, train=False):
        self._y = sigmoid(x).astype(x.dtype, copy=False)
        return self._y

    def backward(self, grad):
        return grad * self._y * (1 - self._y)


class ResBegin(Layer):
    """Opens a residual span; the matching :class:`ResEnd` adds the saved input back."""

    kind = "res_begin"


class ResEnd(Layer):
    kind = "res_end"


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to ``pred``."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff
