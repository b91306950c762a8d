"""Feed-forward / convolutional network: build, init, forward, gradients.

A network is an immutable stack of layer specs plus parameter arrays.  The
final layer must carry the softmax activation; `forward` returns both the
pre-softmax logits and the softmax probabilities.  Gradients with respect
to parameters and inputs are hand backpropagated.
"""

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import layers as L
from .layers import LayerSpec, ShapeMismatchError

CHECKPOINT_VERSION = 1

_DTYPES = {"single": np.float32, "double": np.float64}

# floor for log arguments in the cross-entropy; reaching it is flagged
LOG_FLOOR = 1e-30


class NumericOverflowError(ArithmeticError):
    """A forward pass produced non-finite intermediates."""


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


@dataclass
class Network:
    specs: tuple
    weights: list
    biases: list
    precision: str = "double"
    input_shape: tuple = ()

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    @property
    def n_inputs(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def n_outputs(self) -> int:
        return self.layer_shapes[-1][0]

    @property
    def layer_shapes(self) -> list:
        shapes = []
        shape = self.input_shape
        for spec in self.specs:
            shape = spec.output_shape(shape)
            shapes.append(shape)
        return shapes

    def copy(self) -> "Network":
        return Network(
            self.specs,
            [w.copy() if w is not None else None for w in self.weights],
            [b.copy() if b is not None else None for b in self.biases],
            self.precision,
            self.input_shape,
        )


def build_network(
    specs: Sequence[LayerSpec],
    precision: str = "double",
    input_shape: Optional[tuple] = None,
) -> Network:
    """Allocate a zero-initialized network and validate shape composition.

    input_shape is required for networks whose first layer is not dense
    (e.g. (28, 28, 1) for image inputs); for a dense first layer it
    defaults to that layer's in_units.
    """
    specs = tuple(specs)
    if not specs:
        raise ValueError("empty layer stack")
    if precision not in _DTYPES:
        raise ValueError(f"unknown precision {precision!r}")
    if input_shape is None:
        if specs[0].kind != "dense":
            raise ValueError("input_shape required when the first layer is not dense")
        input_shape = (specs[0].in_units,)
    input_shape = tuple(int(s) for s in input_shape)

    for i, spec in enumerate(specs):
        if spec.activation == "softmax" and i != len(specs) - 1:
            raise ValueError(f"softmax activation on non-final layer {i}")
    if specs[-1].activation != "softmax":
        raise ValueError("final layer must use softmax activation")

    dtype = _DTYPES[precision]
    weights, biases = [], []
    shape = input_shape
    for i, spec in enumerate(specs):
        try:
            out_shape = spec.output_shape(shape)
        except ShapeMismatchError as exc:
            raise ShapeMismatchError(f"layers {i - 1} -> {i}: {exc}") from exc
        wshape, bshape = spec.param_shapes(shape)
        weights.append(np.zeros(wshape, dtype=dtype) if wshape else None)
        biases.append(np.zeros(bshape, dtype=dtype) if bshape else None)
        shape = out_shape
    if len(shape) != 1:
        raise ShapeMismatchError("network output must be a flat vector (missing flatten?)")
    return Network(specs, weights, biases, precision, input_shape)


def init_he_normal(network: Network, seed: int) -> Network:
    """He-normal weights (Normal(0, 2/fan_in)), zero biases, seeded."""
    rng = np.random.Generator(np.random.Philox(key=seed & ((1 << 64) - 1)))
    net = network.copy()
    for i, spec in enumerate(net.specs):
        if net.weights[i] is None:
            continue
        std = np.sqrt(2.0 / spec.fan_in())
        net.weights[i] = rng.normal(0.0, std, size=net.weights[i].shape).astype(net.dtype)
        net.biases[i] = np.zeros_like(net.biases[i])
    return net


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(network, x):
    x = np.asarray(x, dtype=network.dtype)
    single = x.shape == network.input_shape or (
        x.ndim == 1 and x.shape == (network.n_inputs,)
    )
    if single:
        x = x[None]
    if x.ndim == 2 and len(network.input_shape) == 3:
        x = x.reshape((-1,) + network.input_shape)
    if x.shape[1:] != network.input_shape:
        raise ShapeMismatchError(
            f"input shape {x.shape[1:]} does not match network input {network.input_shape}"
        )
    return x, single


def _run_layers(network, x, dropout_mask=None, mask_layer=None, want_caches=False):
    caches = []
    out = x
    for i, spec in enumerate(network.specs):
        w = network.weights[i]
        if dropout_mask is not None and i == mask_layer:
            w = w * dropout_mask
        if spec.kind == "dense":
            z, cache = L.dense_forward(out, w, network.biases[i])
        elif spec.kind == "conv2d":
            z, cache = L.conv2d_forward(out, w, network.biases[i], spec.stride, spec.padding)
        elif spec.kind == "maxpool2d":
            z, cache = L.maxpool2d_forward(out, spec.pool_size, spec.stride)
        else:  # flatten
            z, cache = out.reshape(out.shape[0], -1), out.shape
        act = spec.activation if spec.activation != "softmax" else "none"
        out = L.apply_activation(act, z)
        if want_caches:
            caches.append((z, cache))
    return out, caches


def forward(
    network: Network,
    x: np.ndarray,
    train_mode: bool = False,
    dropout_mask: Optional[np.ndarray] = None,
    mask_layer: Optional[int] = None,
):
    """Evaluate the network.  Returns (logits, probs).

    Accepts a single point or a batch; single-point inputs get
    single-point outputs.  dropout_mask may only be supplied in train
    mode and is entry-wise multiplied into the weight matrix of
    mask_layer.
    """
    if dropout_mask is not None and not train_mode:
        raise ValueError("dropout mask supplied outside train mode")
    xb, single = _as_batch(network, x)
    logits, _ = _run_layers(network, xb, dropout_mask, mask_layer)
    if not np.all(np.isfinite(logits)):
        raise NumericOverflowError("non-finite logits in forward pass")
    probs = softmax(logits)
    if single:
        return logits[0], probs[0]
    return logits, probs


def predict(network: Network, x: np.ndarray) -> set:
    """All argmax labels (0-based) at x; a tie returns the full tie set."""
    _, probs = forward(network, x)
    m = probs.max()
    return set(int(j) for j in np.flatnonzero(probs == m))


def predict_batch(network: Network, x: np.ndarray) -> np.ndarray:
    """Resolved labels for a batch: smallest index of the argmax set."""
    _, probs = forward(network, x)
    return np.argmax(probs, axis=-1)


def resolve_label(label_set: set) -> int:
    return min(label_set)


def _cross_entropy(probs, labels):
    """Per-sample -log p[label], floored at LOG_FLOOR.  Returns (loss, clamped)."""
    p = probs[np.arange(len(labels)), labels]
    clamped = bool(np.any(p < LOG_FLOOR))
    return -np.log(np.maximum(p, LOG_FLOOR)), clamped


def backprop(
    network: Network,
    x: np.ndarray,
    y_onehot: np.ndarray,
    dropout_mask: Optional[np.ndarray] = None,
    mask_layer: Optional[int] = None,
):
    """Mean cross-entropy over the batch and all gradients.

    Returns (loss, dweights, dbiases, dx, clamped).  Gradients are of the
    mean loss; dx has the batch shape of x.
    """
    xb, single = _as_batch(network, x)
    y = np.asarray(y_onehot, dtype=network.dtype)
    if y.ndim == 1:
        y = y[None]
    out, caches = _run_layers(network, xb, dropout_mask, mask_layer, want_caches=True)
    probs = softmax(out)
    labels = np.argmax(y, axis=-1)
    losses, clamped = _cross_entropy(probs, labels)
    b = len(losses)

    dweights = [None] * len(network.specs)
    dbiases = [None] * len(network.specs)
    dout = (probs - y) / b  # fused softmax + cross-entropy gradient
    for i in range(len(network.specs) - 1, -1, -1):
        spec = network.specs[i]
        z, cache = caches[i]
        act = spec.activation if spec.activation != "softmax" else "none"
        dz = L.activation_backward(act, z, dout)
        if spec.kind == "dense":
            w = network.weights[i]
            if dropout_mask is not None and i == mask_layer:
                w = w * dropout_mask
            dout, dw, db = L.dense_backward(dz, cache, w)
            if dropout_mask is not None and i == mask_layer:
                dw = dw * dropout_mask
            dweights[i], dbiases[i] = dw, db
        elif spec.kind == "conv2d":
            in_shape = cache[1]  # padded shape; need original below
            prev_shape = xb.shape[1:] if i == 0 else network.layer_shapes[i - 1]
            dout, dw, db = L.conv2d_backward(
                dz, cache, network.weights[i], spec.stride, spec.padding, prev_shape
            )
            dweights[i], dbiases[i] = dw, db
        elif spec.kind == "maxpool2d":
            dout = L.maxpool2d_backward(dz, cache, spec.pool_size, spec.stride)
        else:  # flatten
            dout = dz.reshape(cache)
    dx = dout[0] if single else dout
    return float(losses.mean()), dweights, dbiases, dx, clamped


def loss_and_input_grad(network: Network, x: np.ndarray, y_onehot: np.ndarray):
    """Cross-entropy loss and its exact gradient with respect to the input.

    Dropout is never applied here.  Returns (loss, grad, meta) where meta
    flags probability clamping at the log floor.
    """
    loss, _, _, dx, clamped = backprop(network, x, y_onehot)
    return loss, dx, {"clamped": clamped}


def input_grad_batch(network: Network, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Batched input gradient of the per-sample cross-entropy at given labels."""
    xb, _ = _as_batch(network, x)
    y = np.zeros((len(xb), network.n_outputs), dtype=network.dtype)
    y[np.arange(len(xb)), labels] = 1.0
    _, _, _, dx, _ = backprop(network, xb, y)
    return dx * len(xb)  # undo the 1/B of the mean loss


# --- checkpointing ---

def checkpoint_save(network: Network, path) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "precision": network.precision,
        "input_shape": list(network.input_shape),
        "specs": [_spec_to_dict(s) for s in network.specs],
        "weights": [w.tolist() if w is not None else None for w in network.weights],
        "biases": [b.tolist() if b is not None else None for b in network.biases],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def checkpoint_load(path) -> Network:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint file: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CheckpointError("malformed checkpoint file: missing format_version")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {doc['format_version']} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    try:
        specs = [LayerSpec(**d) for d in doc["specs"]]
        net = build_network(specs, doc["precision"], tuple(doc["input_shape"]))
        for i, (w, b) in enumerate(zip(doc["weights"], doc["biases"])):
            if w is not None:
                arr = np.asarray(w, dtype=net.dtype)
                if arr.shape != net.weights[i].shape:
                    raise CheckpointError(
                        f"layer {i} weight shape {arr.shape} != {net.weights[i].shape}"
                    )
                net.weights[i] = arr
                net.biases[i] = np.asarray(b, dtype=net.dtype)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"malformed checkpoint file: {exc}") from exc
    if not all(np.all(np.isfinite(w)) for w in net.weights if w is not None):
        raise CheckpointError("non-finite parameters in checkpoint")
    return net


def _spec_to_dict(spec: LayerSpec) -> dict:
    d = {"kind": spec.kind, "activation": spec.activation}
    if spec.kind == "dense":
        d.update(in_units=spec.in_units, out_units=spec.out_units)
    elif spec.kind == "conv2d":
        d.update(
            in_channels=spec.in_channels,
            out_channels=spec.out_channels,
            kernel_size=spec.kernel_size,
            stride=spec.stride,
            padding=spec.padding,
        )
    elif spec.kind == "maxpool2d":
        d.update(pool_size=spec.pool_size, stride=spec.stride)
    return d


def final_hidden_dense_index(network: Network) -> int:
    """Index of the dense layer feeding the output layer (dropout target)."""
    trainable = [i for i, s in enumerate(network.specs) if s.kind in ("dense", "conv2d")]
    if len(trainable) < 2:
        raise ValueError("network has no hidden layer")
    idx = trainable[-2]
    if network.specs[idx].kind != "dense":
        raise ValueError("final hidden layer is not dense; dropout unsupported here")
    return idx
