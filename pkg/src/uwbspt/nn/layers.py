"""Network layers with explicit forward and backward passes.

Activations use the (batch, height, width, channels) layout.  Convolutions
are stride-1 valid (no padding); pooling windows do not overlap and trailing
rows or columns that do not fill a window are dropped.  Each backward call
overwrites the layer's parameter gradients and returns the gradient with
respect to its input.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Param:
    """A trainable array and the gradient from the latest backward pass."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def size(self) -> int:
        return self.value.size


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform(-limit, limit) with limit = sqrt(6 / fan_in)."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base class; stateless layers only need forward/backward."""

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[Param]:
        return []


class Conv2D(Layer):
    """Stride-1 valid 2-D correlation: (B, H, W, C) -> (B, H-kh+1, W-kw+1, O)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: tuple[int, int],
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        kh, kw = kernel_size
        if kh < 1 or kw < 1:
            raise ValueError("kernel dims must be >= 1")
        self.kh, self.kw = kh, kw
        self.in_channels = in_channels
        self.out_channels = out_channels
        fan_in = kh * kw * in_channels
        self.w = Param(he_uniform((kh, kw, in_channels, out_channels), fan_in, rng).astype(dtype))
        self.b = Param(np.zeros(out_channels, dtype=dtype))
        self._cols: np.ndarray | None = None
        self._x_shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        batch, h, w, c = x.shape
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {c}")
        kh, kw = self.kh, self.kw
        if h < kh or w < kw:
            raise ValueError(f"input {h}x{w} smaller than kernel {kh}x{kw}")
        ho, wo = h - kh + 1, w - kw + 1
        # im2col: rows indexed by output position, columns by (kh, kw, c)
        win = sliding_window_view(x, (kh, kw), axis=(1, 2))
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(batch * ho * wo, kh * kw * c)
        out = cols @ self.w.value.reshape(kh * kw * c, -1) + self.b.value
        self._cols = cols
        self._x_shape = x.shape
        return out.reshape(batch, ho, wo, self.out_channels)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._cols is None or self._x_shape is None:
            raise RuntimeError("backward before forward")
        batch, h, w, c = self._x_shape
        kh, kw = self.kh, self.kw
        ho, wo = h - kh + 1, w - kw + 1
        g2 = grad.reshape(batch * ho * wo, self.out_channels)
        self.w.grad = (self._cols.T @ g2).reshape(self.w.value.shape)
        self.b.grad = g2.sum(axis=0)
        gcols = (g2 @ self.w.value.reshape(kh * kw * c, -1).T).reshape(batch, ho, wo, kh, kw, c)
        gx = np.zeros(self._x_shape, dtype=grad.dtype)
        for p in range(kh):
            for q in range(kw):
                gx[:, p : p + ho, q : q + wo, :] += gcols[:, :, :, p, q, :]
        return gx

    def params(self) -> list[Param]:
        return [self.w, self.b]


class MaxPool2D(Layer):
    """Non-overlapping max pooling; partial windows at the edges are dropped."""

    def __init__(self, pool_size: tuple[int, int]):
        ph, pw = pool_size
        if ph < 1 or pw < 1:
            raise ValueError("pool dims must be >= 1")
        self.ph, self.pw = ph, pw
        self._idx: np.ndarray | None = None
        self._x_shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        batch, h, w, c = x.shape
        ph, pw = self.ph, self.pw
        ho, wo = h // ph, w // pw
        if ho < 1 or wo < 1:
            raise ValueError(f"input {h}x{w} smaller than pool {ph}x{pw}")
        r = x[:, : ho * ph, : wo * pw, :].reshape(batch, ho, ph, wo, pw, c)
        flat = r.transpose(0, 1, 3, 5, 2, 4).reshape(batch, ho, wo, c, ph * pw)
        idx = flat.argmax(axis=-1)  # first maximum on ties
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        self._idx = idx
        self._x_shape = x.shape
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._idx is None or self._x_shape is None:
            raise RuntimeError("backward before forward")
        batch, h, w, c = self._x_shape
        ph, pw = self.ph, self.pw
        ho, wo = h // ph, w // pw
        flat = np.zeros((batch, ho, wo, c, ph * pw), dtype=grad.dtype)
        np.put_along_axis(flat, self._idx[..., None], grad[..., None], axis=-1)
        block = flat.reshape(batch, ho, wo, c, ph, pw).transpose(0, 1, 4, 2, 5, 3)
        gx = np.zeros(self._x_shape, dtype=grad.dtype)
        gx[:, : ho * ph, : wo * pw, :] = block.reshape(batch, ho * ph, wo * pw, c)
        return gx


class Dense(Layer):
    """Affine map on (B, in_dim) -> (B, out_dim)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float32):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.w = Param(he_uniform((in_dim, out_dim), in_dim, rng).astype(dtype))
        self.b = Param(np.zeros(out_dim, dtype=dtype))
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected (B, {self.in_dim}), got {x.shape}")
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("backward before forward")
        self.w.grad = self._x.T @ grad
        self.b.grad = grad.sum(axis=0)
        return grad @ self.w.value.T

    def params(self) -> list[Param]:
        return [self.w, self.b]


class ReLU(Layer):
    def __init__(self):
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0).astype(x.dtype, copy=False)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise RuntimeError("backward before forward")
        return np.where(self._mask, grad, 0.0).astype(grad.dtype, copy=False)


class Flatten(Layer):
    def __init__(self):
        self._x_shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._x_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._x_shape is None:
            raise RuntimeError("backward before forward")
        return grad.reshape(self._x_shape)


class _DropoutBase(Layer):
    """Inverted dropout; identity outside training mode."""

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        if not 0.0 <= rate < 1.0:
            raise ValueError("rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng()
        self._scaled_mask: np.ndarray | None = None

    def _mask_shape(self, x_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if not training or self.rate == 0.0:
            self._scaled_mask = None
            return x
        keep = self.rng.random(self._mask_shape(x.shape)) >= self.rate
        self._scaled_mask = keep.astype(x.dtype) / (1.0 - self.rate)
        return x * self._scaled_mask

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._scaled_mask is None:
            return grad
        return grad * self._scaled_mask


class Dropout(_DropoutBase):
    """Element-wise dropout."""

    def _mask_shape(self, x_shape: tuple[int, ...]) -> tuple[int, ...]:
        return x_shape


class SpatialDropout(_DropoutBase):
    """Drops whole feature maps: one mask entry per (batch, channel)."""

    def _mask_shape(self, x_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(x_shape) != 4:
            raise ValueError("SpatialDropout expects (B, H, W, C) input")
        return (x_shape[0], 1, 1, x_shape[3])


class Softmax(Layer):
    """Row-wise softmax over the last axis, shift-stabilized."""

    def __init__(self):
        self._p: np.ndarray | None = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        self._p = e / e.sum(axis=-1, keepdims=True)
        return self._p

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._p is None:
            raise RuntimeError("backward before forward")
        inner = (grad * self._p).sum(axis=-1, keepdims=True)
        return self._p * (grad - inner)


class Sequential(Layer):
    """Chains layers; backward runs them in reverse."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self) -> list[Param]:
        out: list[Param] = []
        for layer in self.layers:
            out.extend(layer.params())
        return out
