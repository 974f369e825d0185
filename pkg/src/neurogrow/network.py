"""Layers, forward/backward passes and checkpoint I/O.

A :class:`Network` is an ordered list of growable hidden layers (dense or
conv2d) followed by a dense classifier without activation. Conv outputs are
flattened in (C, H, W) order when they feed a dense layer, so channels added
at the end of a conv layer map to columns added at the end of its successor.
"""

import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, ConfigError, DataError, DimensionError, UsageError
from .similarity import LayerSnapshot
from .tensor import DTYPE, col2im, conv_output_size, im2col

ACTIVATIONS = ("relu", "none")
CHECKPOINT_FORMAT = "neurogrow-checkpoint"
CHECKPOINT_VERSION = 1


def _check_activation(activation):
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")


@dataclass(eq=False)
class DenseLayer:
    weights: np.ndarray  # (C_out, C_in)
    bias: np.ndarray  # (C_out,)
    activation: str = "relu"

    kind = "dense"

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=DTYPE)
        self.bias = np.ascontiguousarray(self.bias, dtype=DTYPE)
        _check_activation(self.activation)
        if self.weights.ndim != 2 or min(self.weights.shape) < 1:
            raise DimensionError(f"dense weights must be (C_out>=1, C_in>=1), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(f"bias shape {self.bias.shape} does not match C_out={self.weights.shape[0]}")

    @property
    def out_features(self):
        return self.weights.shape[0]

    @property
    def in_features(self):
        return self.weights.shape[1]

    def output_shape(self, input_shape):
        fan_in = int(np.prod(input_shape))
        if fan_in != self.in_features:
            raise DimensionError(f"dense layer expects {self.in_features} inputs, got shape {tuple(input_shape)}")
        return (self.out_features,)

    def forward(self, x):
        x2 = x.reshape(x.shape[0], -1)
        if x2.shape[1] != self.in_features:
            raise DimensionError(f"dense layer expects {self.in_features} inputs, got {x.shape}")
        z = x2 @ self.weights.T + self.bias
        return z, {"x": x2, "x_shape": x.shape}

    def backward(self, dz, rec):
        dw = dz.T @ rec["x"]
        db = dz.sum(axis=0)
        dx = (dz @ self.weights).reshape(rec["x_shape"])
        return dx, dw, db

    def spec(self):
        return {"type": "dense", "in": self.in_features, "out": self.out_features,
                "activation": self.activation}


@dataclass(eq=False)
class Conv2dLayer:
    weights: np.ndarray  # (C_out, C_in, kh, kw)
    bias: np.ndarray  # (C_out,)
    stride: int = 1
    pad: int = 0
    activation: str = "relu"

    kind = "conv"

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=DTYPE)
        self.bias = np.ascontiguousarray(self.bias, dtype=DTYPE)
        _check_activation(self.activation)
        if self.weights.ndim != 4 or min(self.weights.shape) < 1:
            raise DimensionError(f"conv weights must be (C_out, C_in, kh, kw) with extents >= 1, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(f"bias shape {self.bias.shape} does not match C_out={self.weights.shape[0]}")
        if self.stride < 1 or self.pad < 0:
            raise ConfigError(f"conv stride must be >= 1 and pad >= 0, got stride={self.stride} pad={self.pad}")

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def kernel(self):
        return self.weights.shape[2:]

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[0] != self.in_channels:
            raise DimensionError(f"conv layer expects ({self.in_channels}, H, W) input, got {tuple(input_shape)}")
        kh, kw = self.kernel
        _, h, w = input_shape
        return (self.out_channels, conv_output_size(h, kh, self.stride, self.pad),
                conv_output_size(w, kw, self.stride, self.pad))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise DimensionError(f"conv layer expects (N, {self.in_channels}, H, W), got {x.shape}")
        n = x.shape[0]
        kh, kw = self.kernel
        _, oh, ow = self.output_shape(x.shape[1:])
        cols = im2col(x, kh, kw, self.stride, self.pad)
        z = cols @ self.weights.reshape(self.out_channels, -1).T + self.bias
        z = z.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(z), {"cols": cols, "x_shape": x.shape}

    def backward(self, dz, rec):
        dz_mat = dz.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        dw = (dz_mat.T @ rec["cols"]).reshape(self.weights.shape)
        db = dz_mat.sum(axis=0)
        dcols = dz_mat @ self.weights.reshape(self.out_channels, -1)
        kh, kw = self.kernel
        dx = col2im(dcols, rec["x_shape"], kh, kw, self.stride, self.pad)
        return dx, dw, db

    def spec(self):
        kh, kw = self.kernel
        return {"type": "conv", "in": self.in_channels, "out": self.out_channels,
                "kh": kh, "kw": kw, "stride": self.stride, "pad": self.pad,
                "activation": self.activation}


class Network:
    """Hidden layers plus a dense classifier.

    ``version`` is bumped on every in-place mutation so a forward cache can be
    recognised as stale. ``snapshots`` maps layer index to the weight sum
    captured at the most recent growth event.
    """

    def __init__(self, input_shape, layers, classifier):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.layers = list(layers)
        self.classifier = classifier
        self.snapshots = {}
        self.version = 0
        if classifier.activation != "none":
            raise ConfigError("classifier activation must be 'none'")
        self.shapes()  # validates the chain

    @property
    def num_classes(self):
        return self.classifier.out_features

    def all_layers(self):
        return [*self.layers, self.classifier]

    def layer(self, index):
        layers = self.all_layers()
        if not 0 <= index < len(layers):
            raise UsageError(f"layer index {index} out of range for a network with {len(layers)} layers")
        return layers[index]

    def shapes(self):
        """Per-layer (input_shape, output_shape), excluding the batch axis."""
        out = []
        shape = self.input_shape
        for layer in self.all_layers():
            nxt = layer.output_shape(shape)
            out.append((shape, nxt))
            shape = nxt
        return out

    def widths(self):
        return [layer.weights.shape[0] for layer in self.layers]

    def parameters(self):
        """Flat list of parameter arrays in a fixed order (weights, bias per layer)."""
        params = []
        for layer in self.all_layers():
            params.extend((layer.weights, layer.bias))
        return params

    def param_count(self):
        return int(sum(p.size for p in self.parameters()))

    def touch(self):
        self.version += 1

    def copy(self):
        layers = [_copy_layer(layer) for layer in self.layers]
        net = Network(self.input_shape, layers, _copy_layer(self.classifier))
        net.snapshots = {k: LayerSnapshot(v.weight_sum_previous) for k, v in self.snapshots.items()}
        return net


def _copy_layer(layer):
    if isinstance(layer, Conv2dLayer):
        return Conv2dLayer(layer.weights.copy(), layer.bias.copy(), layer.stride, layer.pad, layer.activation)
    return DenseLayer(layer.weights.copy(), layer.bias.copy(), layer.activation)


@dataclass
class ForwardCache:
    version: int
    layer_shapes: list
    records: list = field(default_factory=list)


def forward(net, x):
    """Run the network on a batch; returns ``(logits, cache)``."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[1:] != net.input_shape:
        raise DimensionError(f"input batch shape {x.shape} does not match network input {net.input_shape}")
    cache = ForwardCache(net.version, [layer.weights.shape for layer in net.all_layers()])
    h = x
    for layer in net.all_layers():
        z, rec = layer.forward(h)
        if layer.activation == "relu":
            rec["mask"] = z > 0
            h = z * rec["mask"]
        else:
            h = z
        cache.records.append(rec)
    return h, cache


def backward(net, cache, grad_logits):
    """Gradients of a scalar loss w.r.t. every parameter, ordered like ``net.parameters()``."""
    shapes = [layer.weights.shape for layer in net.all_layers()]
    if cache.version != net.version or cache.layer_shapes != shapes:
        raise UsageError("forward cache is stale: the network changed after the forward pass")
    grads = []
    g = np.asarray(grad_logits, dtype=DTYPE)
    for layer, rec in zip(reversed(net.all_layers()), reversed(cache.records)):
        if layer.activation == "relu":
            g = g * rec["mask"]
        g, dw, db = layer.backward(g, rec)
        grads.append(db)
        grads.append(dw)
    grads.reverse()
    return grads


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=DTYPE)
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_z[:, None]
    idx = np.arange(n)
    loss = -log_p[idx, labels].mean()
    grad = np.exp(log_p)
    grad[idx, labels] -= 1.0
    return float(loss), grad / n


def neuron_matrix(layer):
    """(C_out, fan_in) view of a layer's weights; conv filters are flattened per output channel."""
    return layer.weights.reshape(layer.weights.shape[0], -1)


def set_neuron_matrix(net, index, matrix):
    layer = net.layer(index)
    matrix = np.asarray(matrix, dtype=DTYPE)
    if matrix.shape != neuron_matrix(layer).shape:
        raise DimensionError(f"neuron matrix {matrix.shape} does not fit layer weights {layer.weights.shape}")
    layer.weights = np.ascontiguousarray(matrix.reshape(layer.weights.shape))
    net.touch()


def he_normal(rng, shape, fan_in, scale=1.0):
    return rng.normal(0.0, scale * np.sqrt(2.0 / fan_in), size=shape)


def build_network(input_shape, hidden, num_classes, rng):
    """Build a network from declarative hidden-layer specs.

    Each spec is a dict: ``{"type": "dense", "width": 16}`` or
    ``{"type": "conv", "channels": 8, "kernel": 3, "stride": 1, "pad": 1}``;
    an optional ``"activation"`` defaults to relu. Weights are He-normal,
    biases zero.
    """
    shape = tuple(input_shape)
    layers = []
    for spec in hidden:
        activation = spec.get("activation", "relu")
        if spec["type"] == "dense":
            fan_in = int(np.prod(shape))
            width = int(spec["width"])
            layer = DenseLayer(he_normal(rng, (width, fan_in), fan_in), np.zeros(width), activation)
        elif spec["type"] == "conv":
            if len(shape) != 3:
                raise ConfigError("conv layers must precede all dense layers and need (C, H, W) input")
            k = int(spec.get("kernel", 3))
            ch = int(spec["channels"])
            fan_in = shape[0] * k * k
            layer = Conv2dLayer(he_normal(rng, (ch, shape[0], k, k), fan_in), np.zeros(ch),
                                int(spec.get("stride", 1)), int(spec.get("pad", 0)), activation)
        else:
            raise ConfigError(f"unknown layer type {spec['type']!r}")
        shape = layer.output_shape(shape)
        layers.append(layer)
    fan_in = int(np.prod(shape))
    classifier = DenseLayer(he_normal(rng, (num_classes, fan_in), fan_in), np.zeros(num_classes), "none")
    return Network(input_shape, layers, classifier)


def save_checkpoint(net, path):
    """Write ``net`` to ``path`` as a zip of a JSON header plus raw little-endian float64 blobs."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_shape": list(net.input_shape),
        "layers": [layer.spec() for layer in net.all_layers()],
        "snapshots": {str(k): v.weight_sum_previous.hex() for k, v in sorted(net.snapshots.items())},
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(_zinfo("header.json"), json.dumps(meta, indent=1, sort_keys=True))
        for i, layer in enumerate(net.all_layers()):
            zf.writestr(_zinfo(f"layer{i}.weights"), layer.weights.astype("<f8").tobytes())
            zf.writestr(_zinfo(f"layer{i}.bias"), layer.bias.astype("<f8").tobytes())


def _zinfo(name):
    # fixed timestamp keeps checkpoint bytes reproducible
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_STORED
    return info


def load_checkpoint(path):
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("header.json"))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
            if meta.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
            built = []
            for i, spec in enumerate(meta["layers"]):
                if spec["type"] == "dense":
                    shape = (spec["out"], spec["in"])
                else:
                    shape = (spec["out"], spec["in"], spec["kh"], spec["kw"])
                w = _read_blob(zf, f"layer{i}.weights", shape)
                b = _read_blob(zf, f"layer{i}.bias", (spec["out"],))
                if spec["type"] == "dense":
                    built.append(DenseLayer(w, b, spec["activation"]))
                else:
                    built.append(Conv2dLayer(w, b, spec["stride"], spec["pad"], spec["activation"]))
            net = Network(meta["input_shape"], built[:-1], built[-1])
            net.snapshots = {int(k): LayerSnapshot(float.fromhex(v)) for k, v in meta["snapshots"].items()}
            return net
    except CheckpointError:
        raise
    except (OSError, KeyError, ValueError, TypeError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc


def _read_blob(zf, name, shape):
    raw = zf.read(name)
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise CheckpointError(f"{name}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(DTYPE)
