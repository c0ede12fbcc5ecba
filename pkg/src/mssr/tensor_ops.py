"""Dense 4-D tensor primitives: 3x3 convolution, ReLU, and addition.

Tensors are plain numpy arrays of shape (batch, channels, height, width),
C-contiguous, batch-major.  That layout is the contract for everything
downstream: serialization, gradient flattening, and the brute-force oracles
in the test suite all index values as ``values[b, c, y, x]``.

Convolutions are fixed at kernel 3x3, stride 1, zero padding 1, so spatial
dimensions are always preserved.  Every operation accepts float32 (the
training/inference default) or float64 (gradient-check headroom) and keeps
the dtype of its inputs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL = 3
PAD = 1


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an operation's contract."""


class ContractViolation(RuntimeError):
    """Raised when an operation is invoked outside its valid call sequence."""


def check_tensor4(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate the (batch, channels, height, width) layout contract."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (batch, channels, height, width), got shape {x.shape}")
    if min(x.shape) < 1:
        raise ShapeError(f"{name} dimensions must all be >= 1, got shape {x.shape}")
    return x


class ConvLayer:
    """One 3x3 convolution: weights, bias, and gradient accumulators.

    ``grad_weights``/``grad_bias`` are accumulated into by
    :func:`conv2d_backward` and must be cleared with :meth:`reset_gradients`
    before a fresh accumulation pass.
    """

    def __init__(self, in_channels: int, out_channels: int, dtype=np.float32):
        if in_channels < 1 or out_channels < 1:
            raise ShapeError(f"channel counts must be >= 1, got in={in_channels} out={out_channels}")
        self.weights = np.zeros((out_channels, in_channels, KERNEL, KERNEL), dtype=dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def dtype(self):
        return self.weights.dtype

    def reset_gradients(self) -> None:
        self.grad_weights[...] = 0
        self.grad_bias[...] = 0

    def astype(self, dtype) -> "ConvLayer":
        """Copy of this layer (weights and zeroed grads) in another dtype."""
        out = ConvLayer(self.in_channels, self.out_channels, dtype=dtype)
        out.weights[...] = self.weights
        out.bias[...] = self.bias
        return out


def _padded_windows(x: np.ndarray) -> np.ndarray:
    """All 3x3 windows of x after zero-padding by 1: (n, c, h, w, 3, 3) view."""
    xp = np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
    return sliding_window_view(xp, (KERNEL, KERNEL), axis=(2, 3))


def conv2d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Correlate x with the layer kernel; spatial size is preserved.

    out[b, o, y, x] = bias[o]
                    + sum_{c, dy, dx} weights[o, c, dy, dx] * padded[b, c, y+dy, x+dx]
    """
    x = check_tensor4(x, "input")
    if x.shape[1] != layer.in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels (shape {x.shape}) but layer expects "
            f"{layer.in_channels} (weights shape {layer.weights.shape})"
        )
    windows = _padded_windows(x)
    # (n, h, w, o) <- contract channel and kernel axes against the filter bank
    out = np.tensordot(windows, layer.weights, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    out += layer.bias[None, :, None, None]
    return out


def conv2d_backward(x: np.ndarray, layer: ConvLayer, grad_output: np.ndarray) -> np.ndarray:
    """Backward pass of :func:`conv2d_forward`.

    Accumulates (+=) into ``layer.grad_weights`` and ``layer.grad_bias`` and
    returns the gradient with respect to x.
    """
    x = check_tensor4(x, "input")
    grad_output = check_tensor4(grad_output, "grad_output")
    expected = (x.shape[0], layer.out_channels, x.shape[2], x.shape[3])
    if grad_output.shape != expected:
        raise ShapeError(f"grad_output shape {grad_output.shape} does not match forward output shape {expected}")
    if x.shape[1] != layer.in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels (shape {x.shape}) but layer expects {layer.in_channels}"
        )

    windows = _padded_windows(x)
    layer.grad_bias += grad_output.sum(axis=(0, 2, 3))
    # d out[b,o,y,x] / d W[o,c,dy,dx] = padded[b,c,y+dy,x+dx]
    layer.grad_weights += np.tensordot(grad_output, windows, axes=([0, 2, 3], [0, 2, 3]))

    # grad wrt input: correlate grad_output with the spatially flipped kernel
    gwin = _padded_windows(grad_output)
    flipped = layer.weights[:, :, ::-1, ::-1]
    grad_in = np.tensordot(gwin, flipped, axes=([1, 4, 5], [0, 2, 3]))
    return np.ascontiguousarray(grad_in.transpose(0, 3, 1, 2))


def relu_forward(x: np.ndarray) -> np.ndarray:
    """Elementwise max(x, 0)."""
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_output: np.ndarray) -> np.ndarray:
    """Pass gradient where the forward input was strictly positive.

    The subgradient at exactly 0 is taken as 0.
    """
    x = np.asarray(x)
    grad_output = np.asarray(grad_output)
    if x.shape != grad_output.shape:
        raise ShapeError(f"input shape {x.shape} does not match grad_output shape {grad_output.shape}")
    return np.where(x > 0, grad_output, np.zeros((), dtype=grad_output.dtype))


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise sum; the backward contract passes gradients to both addends unchanged."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"addend shapes differ: {a.shape} vs {b.shape}")
    return a + b
