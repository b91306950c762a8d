"""Layer specifications and per-layer forward/backward passes.

Layers operate on batched arrays: dense layers on (B, n), image layers on
(B, H, W, C).  Backward passes are hand-derived; there is no autograd
graph.  Every backward function takes the cache returned by the matching
forward function.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np


class ShapeMismatchError(ValueError):
    """Consecutive layer shapes do not compose."""


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    kind: "dense", "conv2d", "maxpool2d" or "flatten".
    activation: "relu", "tanh", "softmax" or "none".  Softmax is only
    permitted on the final layer of a network.
    """

    kind: str
    activation: str = "none"
    # dense
    in_units: Optional[int] = None
    out_units: Optional[int] = None
    # conv2d
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None
    kernel_size: Optional[int] = None
    stride: int = 1
    padding: str = "same"
    # maxpool2d
    pool_size: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("dense", "conv2d", "maxpool2d", "flatten"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ("relu", "tanh", "softmax", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "dense":
            if not (self.in_units and self.in_units > 0 and self.out_units and self.out_units > 0):
                raise ValueError("dense layer needs positive in_units/out_units")
        elif self.kind == "conv2d":
            if not (self.in_channels and self.out_channels and self.kernel_size):
                raise ValueError("conv2d layer needs in_channels/out_channels/kernel_size")
            if self.padding not in ("same", "valid"):
                raise ValueError(f"unknown padding {self.padding!r}")
        elif self.kind == "maxpool2d":
            if not (self.pool_size and self.pool_size > 0):
                raise ValueError("maxpool2d layer needs positive pool_size")

    def output_shape(self, input_shape: tuple) -> tuple:
        """Shape this layer produces for the given input shape (no batch dim).

        Raises ShapeMismatchError when the input shape is incompatible.
        """
        if self.kind == "dense":
            if input_shape != (self.in_units,):
                raise ShapeMismatchError(
                    f"dense layer expects ({self.in_units},), got {input_shape}"
                )
            return (self.out_units,)
        if self.kind == "flatten":
            return (int(np.prod(input_shape)),)
        if len(input_shape) != 3:
            raise ShapeMismatchError(f"{self.kind} layer expects (H, W, C), got {input_shape}")
        h, w, c = input_shape
        if self.kind == "conv2d":
            if c != self.in_channels:
                raise ShapeMismatchError(
                    f"conv2d expects {self.in_channels} channels, got {c}"
                )
            oh, ow = _conv_out_hw(h, w, self.kernel_size, self.stride, self.padding)
            return (oh, ow, self.out_channels)
        # maxpool2d
        p, s = self.pool_size, self.stride
        if h < p or w < p:
            raise ShapeMismatchError(f"maxpool2d pool {p} larger than input {input_shape}")
        return ((h - p) // s + 1, (w - p) // s + 1, c)

    def param_shapes(self, input_shape: tuple) -> tuple:
        """(weight shape, bias shape) or (None, None) for parameterless layers."""
        if self.kind == "dense":
            return (self.in_units, self.out_units), (self.out_units,)
        if self.kind == "conv2d":
            k = self.kernel_size
            return (k, k, self.in_channels, self.out_channels), (self.out_channels,)
        return None, None

    def fan_in(self) -> int:
        if self.kind == "dense":
            return self.in_units
        if self.kind == "conv2d":
            return self.kernel_size * self.kernel_size * self.in_channels
        raise ValueError(f"{self.kind} layer has no parameters")


def _conv_out_hw(h, w, k, s, padding):
    if padding == "same":
        return -(-h // s), -(-w // s)
    return (h - k) // s + 1, (w - k) // s + 1


def _same_pad(size, k, s):
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return total // 2, total - total // 2


# --- activations (softmax lives in network.py, it needs the whole logit row) ---

def apply_activation(kind, z):
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def activation_backward(kind, z, dout):
    if kind == "relu":
        return dout * (z > 0)
    if kind == "tanh":
        t = np.tanh(z)
        return dout * (1 - t * t)
    return dout


# --- dense ---

def dense_forward(x, weight, bias):
    return x @ weight + bias, x


def dense_backward(dout, cache, weight):
    x = cache
    dw = x.T @ dout
    db = dout.sum(axis=0)
    dx = dout @ weight.T
    return dx, dw, db


# --- conv2d (im2col) ---

def conv2d_forward(x, kernel, bias, stride, padding):
    kh, kw, cin, cout = kernel.shape
    if padding == "same":
        ph = _same_pad(x.shape[1], kh, stride)
        pw = _same_pad(x.shape[2], kw, stride)
        x = np.pad(x, ((0, 0), ph, pw, (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (B, oh, ow, C, kh, kw)
    b, oh, ow = windows.shape[:3]
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(b, oh, ow, kh * kw * cin)
    out = cols @ kernel.reshape(kh * kw * cin, cout) + bias
    return out, (cols, x.shape)


def conv2d_backward(dout, cache, kernel, stride, padding, input_shape):
    cols, padded_shape = cache
    kh, kw, cin, cout = kernel.shape
    b, oh, ow, _ = dout.shape
    kflat = kernel.reshape(kh * kw * cin, cout)
    dcols = dout @ kflat.T  # (B, oh, ow, kh*kw*cin)
    dw = np.tensordot(cols, dout, axes=([0, 1, 2], [0, 1, 2])).reshape(kernel.shape)
    db = dout.sum(axis=(0, 1, 2))
    # scatter dcols back onto the (padded) input
    dxp = np.zeros(padded_shape, dtype=dout.dtype)
    dcols = dcols.reshape(b, oh, ow, kh, kw, cin)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + oh * stride : stride, j : j + ow * stride : stride] += dcols[:, :, :, i, j]
    if padding == "same":
        h, w = input_shape[0], input_shape[1]
        ph = _same_pad(h, kh, stride)
        pw = _same_pad(w, kw, stride)
        dxp = dxp[:, ph[0] : ph[0] + h, pw[0] : pw[0] + w]
    return dxp, dw, db


# --- maxpool2d ---

def maxpool2d_forward(x, pool, stride):
    windows = np.lib.stride_tricks.sliding_window_view(x, (pool, pool), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (B, oh, ow, C, p, p)
    b, oh, ow, c = windows.shape[:4]
    flat = windows.reshape(b, oh, ow, c, pool * pool)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def maxpool2d_backward(dout, cache, pool, stride):
    arg, in_shape = cache
    b, oh, ow, c = dout.shape
    dx = np.zeros(in_shape, dtype=dout.dtype)
    bi, oi, oj, ci = np.indices((b, oh, ow, c))
    ii = oi * stride + arg // pool
    jj = oj * stride + arg % pool
    np.add.at(dx, (bi, ii, jj, ci), dout)
    return dx
