"""The MSSR network: two cascaded fusion blocks plus a reconstruction stack.

A fusion block runs a single sequence of conv+ReLU layers and adds the
activation after layer ``tap_index`` (the short path) to the activation after
the last layer (the long path).  Because the short path literally *is* a
prefix of the long path, the two paths share parameters and the fusion is a
skip connection inside one stack.  Two blocks are cascaded, then a
reconstruction stack (conv+ReLU except for a bare final 1-filter conv)
produces a residual detail image; the restored output is input + residual.

Every layer is 3x3 / stride 1 / pad 1, so the network is fully convolutional
and output spatial size always equals input spatial size.

Model file format (little-endian, all multi-byte integers u16):

    magic   4 bytes  b"MSSR"
    version u16      currently 1
    header  u16 x 4  long_depth, short_depth, recon_depth, width
    layers  repeated 2*long_depth + recon_depth times, in order
            block1 layers, block2 layers, reconstruction layers:
        out_channels u16
        in_channels  u16
        weights      f32 x (out*in*9), C-order (out, in, ky, kx)
        bias         f32 x out

Parameters are flattened in exactly this layer order (weights then bias per
layer) everywhere a flat parameter vector is used.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .tensor_ops import (
    ContractViolation,
    ConvLayer,
    ShapeError,
    add,
    check_tensor4,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
)

MODEL_MAGIC = b"MSSR"
MODEL_FORMAT_VERSION = 1

DEFAULT_LONG_DEPTH = 9
DEFAULT_SHORT_DEPTH = 2
DEFAULT_RECON_DEPTH = 2
DEFAULT_WIDTH = 64


class ModelFormatError(ValueError):
    """Raised when a model file fails magic/version/shape/length validation."""


class FusionBlock:
    """A conv+ReLU stack whose tap activation is summed with its final activation."""

    def __init__(self, layers: list[ConvLayer], tap_index: int):
        if not 1 <= tap_index < len(layers):
            raise ShapeError(f"tap_index must satisfy 1 <= tap < {len(layers)}, got {tap_index}")
        self.layers = layers
        self.tap_index = tap_index

    def forward_with_records(self, x: np.ndarray):
        """Run the stack; returns (fused output, per-layer (input, pre_activation) records)."""
        records = []
        act = x
        tap_act = None
        for i, layer in enumerate(self.layers):
            pre = conv2d_forward(act, layer)
            records.append((act, pre))
            act = relu_forward(pre)
            if i == self.tap_index - 1:
                tap_act = act
        return add(act, tap_act), records

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_with_records(x)
        return out

    def backward(self, records, grad_output: np.ndarray) -> np.ndarray:
        """Backprop through the stack; the tap activation receives the sum of
        the long-path gradient and the fusion skip gradient."""
        g = grad_output
        for i in reversed(range(len(self.layers))):
            if i == self.tap_index - 1:
                g = g + grad_output
            inp, pre = records[i]
            g = relu_backward(pre, g)
            g = conv2d_backward(inp, self.layers[i], g)
        return g


@dataclass
class ForwardTrace:
    """Activations retained by a traced forward pass, consumed by backward."""

    model_id: int
    version: int
    input_shape: tuple
    block1_records: list = field(repr=False, default_factory=list)
    block2_records: list = field(repr=False, default_factory=list)
    recon_records: list = field(repr=False, default_factory=list)
    residual_shape: tuple = ()


class MssrModel:
    """Two fusion blocks and a reconstruction stack predicting a residual image.

    ``short_depth`` is both the depth of the short path and the tap index of
    each block; the short path contributes no parameters of its own.  Distinct
    layer count is ``2 * long_depth + recon_depth`` (20 with defaults).
    """

    def __init__(
        self,
        long_depth: int = DEFAULT_LONG_DEPTH,
        short_depth: int = DEFAULT_SHORT_DEPTH,
        recon_depth: int = DEFAULT_RECON_DEPTH,
        width: int = DEFAULT_WIDTH,
        in_channels: int = 1,
        dtype=np.float32,
    ):
        if recon_depth < 1:
            raise ShapeError(f"recon_depth must be >= 1, got {recon_depth}")
        if width < 1:
            raise ShapeError(f"width must be >= 1, got {width}")
        self.long_depth = long_depth
        self.short_depth = short_depth
        self.recon_depth = recon_depth
        self.width = width
        self.in_channels = in_channels

        block1_layers = [ConvLayer(in_channels if i == 0 else width, width, dtype) for i in range(long_depth)]
        block2_layers = [ConvLayer(width, width, dtype) for _ in range(long_depth)]
        self.block1 = FusionBlock(block1_layers, short_depth)
        self.block2 = FusionBlock(block2_layers, short_depth)
        # all but the last reconstruction layer keep the working width; the
        # last maps to a single output filter with no nonlinearity
        self.recon_layers = [ConvLayer(width, width, dtype) for _ in range(recon_depth - 1)]
        self.recon_layers.append(ConvLayer(width, in_channels, dtype))

        self._version = 0
        self.grads_ready = False

    @property
    def dtype(self):
        return self.block1.layers[0].dtype

    def layers(self) -> list[ConvLayer]:
        """All distinct layers in serialization order: block1, block2, reconstruction."""
        return self.block1.layers + self.block2.layers + self.recon_layers

    # ---- forward / backward ----

    def forward_with_trace(self, x: np.ndarray):
        x = check_tensor4(x, "input")
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"input has {x.shape[1]} channels, model expects {self.in_channels} (shape {x.shape})")
        x = np.ascontiguousarray(x, dtype=self.dtype)
        trace = ForwardTrace(model_id=id(self), version=self._version, input_shape=x.shape)

        act, trace.block1_records = self.block1.forward_with_records(x)
        act, trace.block2_records = self.block2.forward_with_records(act)
        for i, layer in enumerate(self.recon_layers):
            pre = conv2d_forward(act, layer)
            trace.recon_records.append((act, pre))
            act = relu_forward(pre) if i < self.recon_depth - 1 else pre
        trace.residual_shape = act.shape
        return act, trace

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Predicted residual image; same batch/spatial size as x, 1 channel."""
        residual, _ = self.forward_with_trace(x)
        return residual

    def restore(self, x: np.ndarray) -> np.ndarray:
        """High-resolution estimate: input plus predicted residual."""
        x = np.ascontiguousarray(x, dtype=self.dtype)
        return add(x, self.forward(x))

    def backward(self, trace: ForwardTrace, grad_residual: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients for a traced forward pass.

        Layers shared between the long path and the tap receive the sum of
        both paths' contributions.  Returns the gradient wrt the input.
        """
        if trace.model_id != id(self):
            raise ContractViolation("trace was produced by a different model")
        if trace.version != self._version:
            raise ContractViolation("trace is stale: model parameters changed after the forward pass")
        grad_residual = check_tensor4(grad_residual, "grad_residual")
        if grad_residual.shape != trace.residual_shape:
            raise ShapeError(
                f"grad_residual shape {grad_residual.shape} does not match traced residual shape {trace.residual_shape}"
            )
        g = np.ascontiguousarray(grad_residual, dtype=self.dtype)
        for i in reversed(range(self.recon_depth)):
            inp, pre = trace.recon_records[i]
            if i < self.recon_depth - 1:
                g = relu_backward(pre, g)
            g = conv2d_backward(inp, self.recon_layers[i], g)
        g = self.block2.backward(trace.block2_records, g)
        g = self.block1.backward(trace.block1_records, g)
        self.grads_ready = True
        return g

    def zero_gradients(self) -> None:
        for layer in self.layers():
            layer.reset_gradients()
        self.grads_ready = False

    # ---- flat parameter views (serialization order) ----

    def flat_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weights.ravel(), l.bias]) for l in self.layers()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat)
        if flat.shape != (parameter_count(self),):
            raise ShapeError(f"flat parameter vector has length {flat.size}, expected {parameter_count(self)}")
        pos = 0
        for layer in self.layers():
            n = layer.weights.size
            layer.weights[...] = flat[pos : pos + n].reshape(layer.weights.shape)
            pos += n
            n = layer.bias.size
            layer.bias[...] = flat[pos : pos + n]
            pos += n
        self._version += 1

    def flat_grads(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.grad_weights.ravel(), l.grad_bias]) for l in self.layers()])

    def astype(self, dtype) -> "MssrModel":
        """Copy of the model in another dtype (e.g. float64 for gradient checks)."""
        out = MssrModel(self.long_depth, self.short_depth, self.recon_depth, self.width, self.in_channels, dtype)
        out.set_flat_params(self.flat_params().astype(dtype))
        return out


def receptive_fields(short_depth: int, long_depth: int, recon_depth: int) -> tuple[int, int, int]:
    """Receptive-field sizes of the small/middle/large scale streams.

    Each 3x3 layer grows the field by 2 pixels; the three streams traverse
    short+short, short+long, and long+long block layers plus the
    reconstruction stack, giving 2*(depth sum)+1 pixels per stream.
    """
    if min(short_depth, long_depth, recon_depth) < 1:
        raise ValueError(f"depths must all be >= 1, got ({short_depth}, {long_depth}, {recon_depth})")
    small = 2 * (short_depth + short_depth + recon_depth) + 1
    middle = 2 * (short_depth + long_depth + recon_depth) + 1
    large = 2 * (long_depth + long_depth + recon_depth) + 1
    return small, middle, large


def layer_parameter_count(layer: ConvLayer) -> int:
    return layer.weights.size + layer.bias.size


def parameter_count(model: MssrModel) -> int:
    """Total parameters over distinct layers (the short paths add none)."""
    return sum(layer_parameter_count(l) for l in model.layers())


def init_he(model: MssrModel, seed: int) -> None:
    """He initialization: N(0, 2/fan_in) weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    for layer in model.layers():
        fan_in = layer.in_channels * 9
        layer.weights[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=layer.weights.shape)
        layer.bias[...] = 0
    model._version += 1


# ---- model file I/O ----


def save_model(model: MssrModel, path) -> None:
    """Write the model in the documented binary format (parameters as f32)."""
    parts = [MODEL_MAGIC]
    parts.append(
        struct.pack(
            "<5H", MODEL_FORMAT_VERSION, model.long_depth, model.short_depth, model.recon_depth, model.width
        )
    )
    for layer in model.layers():
        parts.append(struct.pack("<2H", layer.out_channels, layer.in_channels))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def _expected_layer_shapes(long_depth, short_depth, recon_depth, width, in_channels=1):
    shapes = [(width, in_channels)] + [(width, width)] * (long_depth - 1)
    shapes += [(width, width)] * long_depth
    shapes += [(width, width)] * (recon_depth - 1) + [(in_channels, width)]
    return shapes


def load_model(path, dtype=np.float32) -> MssrModel:
    """Read a model file; validates magic, version, layer shapes, and length."""
    with open(path, "rb") as f:
        blob = f.read()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise ModelFormatError(f"truncated model file: needed {n} bytes for {what} at offset {pos}, "
                                   f"file has {len(blob)} bytes")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    magic = take(4, "magic")
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r} at offset 0, expected {MODEL_MAGIC!r}")
    version, long_depth, short_depth, recon_depth, width = struct.unpack("<5H", take(10, "header"))
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version} at offset 4")
    if not (1 <= short_depth < long_depth) or recon_depth < 1 or width < 1:
        raise ModelFormatError(
            f"invalid hyperparameters in header: long={long_depth} short={short_depth} "
            f"recon={recon_depth} width={width}"
        )

    expected = _expected_layer_shapes(long_depth, short_depth, recon_depth, width)
    model = MssrModel(long_depth, short_depth, recon_depth, width, in_channels=1, dtype=dtype)
    for i, layer in enumerate(model.layers()):
        shape_offset = pos
        out_ch, in_ch = struct.unpack("<2H", take(4, f"layer {i} shape"))
        if (out_ch, in_ch) != expected[i]:
            raise ModelFormatError(
                f"layer {i} shape ({out_ch}, {in_ch}) at offset {shape_offset} does not match "
                f"header-derived shape {expected[i]}"
            )
        w = np.frombuffer(take(out_ch * in_ch * 9 * 4, f"layer {i} weights"), dtype="<f4")
        b = np.frombuffer(take(out_ch * 4, f"layer {i} bias"), dtype="<f4")
        layer.weights[...] = w.reshape(out_ch, in_ch, 3, 3)
        layer.bias[...] = b
    if pos != len(blob):
        raise ModelFormatError(f"trailing data: file has {len(blob)} bytes, format ends at offset {pos}")
    return model
