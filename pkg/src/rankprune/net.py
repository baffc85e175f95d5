"""Minimal convolutional network with hand-derived exact gradients.

Layers: Conv2D (stride 1, zero "same" padding), ReLU, AvgPool2x2, Dense
(flattens its input), SoftmaxCrossEntropy.  A model is an ordered layer
list ending in exactly one loss layer and containing at least one Conv2D,
which is the set of weights the rank-pruning loop acts on.

forward/backward are pure functions of (model, batch); all arithmetic is
float64 and deterministic.  Models serialize to a versioned binary
container with a bit-exact round trip.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_images, check_labels
from .exceptions import CheckpointError, NumericalError

FORMAT_MAGIC = b"TRPK"
FORMAT_VERSION = 1


def _pad_same(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    top, left = (kh - 1) // 2, (kw - 1) // 2
    return np.pad(x, ((0, 0), (0, 0), (top, kh - 1 - top), (left, kw - 1 - left)))


class Conv2D:
    """2D convolution, stride 1, zero "same" padding, with bias."""

    kind = "conv2d"
    tag = 1

    def __init__(self, w: np.ndarray, b: np.ndarray):
        w = np.ascontiguousarray(w, dtype=np.float64)
        b = np.ascontiguousarray(b, dtype=np.float64)
        if w.ndim != 4 or b.shape != (w.shape[0],):
            raise ValueError(f"conv2d expects 4D weights and (n,) bias, got {w.shape}, {b.shape}")
        self.w = w
        self.b = b

    def params(self) -> list[np.ndarray]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, kh, kw = self.w.shape
        if x.shape[1] != c:
            raise ValueError(f"conv2d expects {c} input channels, got {x.shape[1]}")
        xp = _pad_same(x, kh, kw)
        h, w_ = x.shape[2], x.shape[3]
        out = np.zeros((x.shape[0], n, h, w_))
        for dy in range(kh):
            for dx in range(kw):
                patch = xp[:, :, dy : dy + h, dx : dx + w_]
                out += np.einsum("bchw,nc->bnhw", patch, self.w[:, :, dy, dx])
        return out + self.b[np.newaxis, :, np.newaxis, np.newaxis]

    def backward(self, dout: np.ndarray, x: np.ndarray):
        n, c, kh, kw = self.w.shape
        h, w_ = x.shape[2], x.shape[3]
        xp = _pad_same(x, kh, kw)
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(self.w)
        for dy in range(kh):
            for dx in range(kw):
                patch = xp[:, :, dy : dy + h, dx : dx + w_]
                dw[:, :, dy, dx] = np.einsum("bnhw,bchw->nc", dout, patch)
                dxp[:, :, dy : dy + h, dx : dx + w_] += np.einsum(
                    "bnhw,nc->bchw", dout, self.w[:, :, dy, dx]
                )
        db = dout.sum(axis=(0, 2, 3))
        top, left = (kh - 1) // 2, (kw - 1) // 2
        dx_ = dxp[:, :, top : top + h, left : left + w_]
        return dx_, [dw, db]


class ReLU:
    kind = "relu"
    tag = 2

    def params(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0)

    def backward(self, dout: np.ndarray, x: np.ndarray):
        return dout * (x > 0.0), []


class AvgPool2x2:
    kind = "avgpool2"
    tag = 3

    def params(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"avgpool2 needs even spatial dims, got {h}x{w}")
        return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(self, dout: np.ndarray, x: np.ndarray):
        dx = np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) / 4.0
        return dx, []


class Dense:
    """Fully connected layer; flattens any input to (batch, features)."""

    kind = "dense"
    tag = 4

    def __init__(self, w: np.ndarray, b: np.ndarray):
        w = np.ascontiguousarray(w, dtype=np.float64)
        b = np.ascontiguousarray(b, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError(f"dense expects 2D weights and (out,) bias, got {w.shape}, {b.shape}")
        self.w = w
        self.b = b

    def params(self) -> list[np.ndarray]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != self.w.shape[1]:
            raise ValueError(f"dense expects {self.w.shape[1]} features, got {flat.shape[1]}")
        return flat @ self.w.T + self.b

    def backward(self, dout: np.ndarray, x: np.ndarray):
        flat = x.reshape(x.shape[0], -1)
        dw = dout.T @ flat
        db = dout.sum(axis=0)
        dx = (dout @ self.w).reshape(x.shape)
        return dx, [dw, db]


class SoftmaxCrossEntropy:
    """Mean softmax cross-entropy over the batch; must close the model."""

    kind = "softmax_ce"
    tag = 5

    def params(self) -> list[np.ndarray]:
        return []

    def probs(self, logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=1, keepdims=True)
        expv = np.exp(shifted)
        return expv / expv.sum(axis=1, keepdims=True)

    def loss(self, logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
        p = self.probs(logits)
        picked = p[np.arange(labels.shape[0]), labels]
        return float(np.mean(-np.log(np.maximum(picked, 1e-300)))), p

    def dlogits(self, p: np.ndarray, labels: np.ndarray) -> np.ndarray:
        d = p.copy()
        d[np.arange(labels.shape[0]), labels] -= 1.0
        return d / labels.shape[0]


_LAYER_BY_TAG = {
    cls.tag: cls for cls in (Conv2D, ReLU, AvgPool2x2, Dense, SoftmaxCrossEntropy)
}


@dataclass
class NetworkModel:
    """Ordered layer list; the last layer is the loss."""

    layers: list
    rng_seed: int = 0

    def __post_init__(self):
        if not self.layers or not isinstance(self.layers[-1], SoftmaxCrossEntropy):
            raise ValueError("model must end with a softmax cross-entropy loss layer")
        if sum(isinstance(l, SoftmaxCrossEntropy) for l in self.layers) != 1:
            raise ValueError("model must contain exactly one loss layer")
        if not any(isinstance(l, Conv2D) for l in self.layers):
            raise ValueError("model must contain at least one conv2d layer")

    def conv_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if isinstance(l, Conv2D)]

    def param_count(self) -> int:
        return sum(p.size for l in self.layers for p in l.params())


@dataclass
class GradientSet:
    """Per-layer parameter gradients, shapes mirroring the model."""

    by_layer: list = field(default_factory=list)

    def check_finite(self, model: NetworkModel) -> None:
        for i, grads in enumerate(self.by_layer):
            for g in grads:
                if not np.all(np.isfinite(g)):
                    kind = model.layers[i].kind
                    raise NumericalError(f"non-finite gradient in layer {i} ({kind})")


def _run_forward(model: NetworkModel, x: np.ndarray) -> list[np.ndarray]:
    """Activations [input, after layer 0, ..., logits]; loss layer excluded."""
    acts = [x]
    for layer in model.layers[:-1]:
        acts.append(layer.forward(acts[-1]))
    return acts


def forward(model: NetworkModel, x, y) -> tuple[float, np.ndarray]:
    """Mean batch loss and argmax predictions (ties -> lowest class index)."""
    x = check_images(x)
    y = check_labels(y, x.shape[0])
    logits = _run_forward(model, x)[-1]
    loss, p = model.layers[-1].loss(logits, y)
    return loss, np.argmax(p, axis=1)


def backward(model: NetworkModel, x, y) -> GradientSet:
    """Exact analytic gradients of the mean batch loss for every parameter."""
    x = check_images(x)
    y = check_labels(y, x.shape[0])
    acts = _run_forward(model, x)
    loss_layer = model.layers[-1]
    _, p = loss_layer.loss(acts[-1], y)
    dout = loss_layer.dlogits(p, y)
    by_layer: list = [[] for _ in model.layers]
    for i in range(len(model.layers) - 2, -1, -1):
        dout, grads = model.layers[i].backward(dout, acts[i])
        by_layer[i] = grads
    return GradientSet(by_layer=by_layer)


def predict_proba(model: NetworkModel, images) -> np.ndarray:
    """Per-class softmax probabilities, one row per image."""
    images = check_images(images)
    logits = _run_forward(model, images)[-1]
    return model.layers[-1].probs(logits)


def evaluate(model: NetworkModel, images, labels) -> tuple[float, float]:
    """(accuracy, mean loss) over a dataset; argmax ties -> lowest index."""
    images = check_images(images)
    labels = check_labels(labels, images.shape[0])
    loss, preds = forward(model, images, labels)
    return float(np.mean(preds == labels)), loss


def tiny_conv_net(
    in_channels: int,
    num_classes: int,
    image_hw: tuple[int, int],
    seed: int,
    conv1_filters: int = 8,
    conv2_filters: int = 16,
) -> NetworkModel:
    """Conv -> ReLU -> AvgPool -> Conv -> ReLU -> AvgPool -> Dense -> loss.

    Weights use fan-in-scaled uniform init from a seeded generator; biases
    start at zero.  Spatial dims must be divisible by 4 (two pools).
    """
    h, w = image_hw
    if h % 4 or w % 4:
        raise ValueError(f"image dims must be divisible by 4, got {h}x{w}")
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        limit = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-limit, limit, size=shape)

    c1 = Conv2D(
        uniform((conv1_filters, in_channels, 3, 3), in_channels * 9),
        np.zeros(conv1_filters),
    )
    c2 = Conv2D(
        uniform((conv2_filters, conv1_filters, 3, 3), conv1_filters * 9),
        np.zeros(conv2_filters),
    )
    dense_in = conv2_filters * (h // 4) * (w // 4)
    d = Dense(uniform((num_classes, dense_in), dense_in), np.zeros(num_classes))
    layers = [c1, ReLU(), AvgPool2x2(), c2, ReLU(), AvgPool2x2(), d, SoftmaxCrossEntropy()]
    return NetworkModel(layers=layers, rng_seed=seed)


def _write_array(out: list[bytes], a: np.ndarray) -> None:
    out.append(struct.pack("<I", a.ndim))
    out.append(struct.pack(f"<{a.ndim}I", *a.shape))
    out.append(np.ascontiguousarray(a, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint file")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def array(self) -> np.ndarray:
        ndim = self.u32()
        if ndim > 8:
            raise CheckpointError(f"implausible array rank {ndim}")
        shape = struct.unpack(f"<{ndim}I", self.take(4 * ndim))
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(self.take(8 * count), dtype="<f8")
        return data.reshape(shape).astype(np.float64)


def serialize_model(model: NetworkModel) -> bytes:
    """Binary container: magic, version, layer count, then per layer a kind
    tag and its parameter arrays (dim count, dims, little-endian float64).
    """
    out: list[bytes] = [FORMAT_MAGIC, struct.pack("<II", FORMAT_VERSION, len(model.layers))]
    for layer in model.layers:
        params = layer.params()
        out.append(struct.pack("<II", layer.tag, len(params)))
        for p in params:
            _write_array(out, p)
    return b"".join(out)


def deserialize_model(buf: bytes) -> NetworkModel:
    """Inverse of :func:`serialize_model`; bit-exact round trip."""
    r = _Reader(buf)
    if r.take(4) != FORMAT_MAGIC:
        raise CheckpointError("bad magic, not a model checkpoint")
    version, n_layers = r.u32(), r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    layers = []
    for _ in range(n_layers):
        tag, n_params = r.u32(), r.u32()
        cls = _LAYER_BY_TAG.get(tag)
        if cls is None:
            raise CheckpointError(f"unknown layer tag {tag}")
        arrays = [r.array() for _ in range(n_params)]
        if cls in (Conv2D, Dense):
            if len(arrays) != 2:
                raise CheckpointError(f"layer tag {tag} expects 2 arrays, got {len(arrays)}")
            layers.append(cls(arrays[0], arrays[1]))
        else:
            if arrays:
                raise CheckpointError(f"layer tag {tag} carries no parameters")
            layers.append(cls())
    if r.pos != len(buf):
        raise CheckpointError("trailing bytes after final layer")
    try:
        return NetworkModel(layers=layers)
    except ValueError as exc:
        raise CheckpointError(f"invalid model structure: {exc}") from exc


def save_model(model: NetworkModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))


def load_model(path) -> NetworkModel:
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())
