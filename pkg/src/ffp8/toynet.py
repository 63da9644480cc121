"""Small dense/ReLU classifier used to exercise the quantization pipeline.

The network is a plain MLP over synthetic Gaussian blob data. Training is
deliberately boring: mini-batch gradient descent at a fixed learning rate,
no momentum, no schedules. Everything is seeded, so a given configuration
reproduces bit-identical weights on one platform.

Quantized inference simulates a system that stores tensors off-chip in
FFP8 but computes in FP32: weights are decoded from their codes (or round
tripped through their assigned format), the input batch and every hidden
activation pass through quantize-then-dequantize at the layer boundary,
and the final logits stay in FP32. Bias vectors stay in FP32 throughout.
"""

from dataclasses import dataclass

import numpy as np

from .analysis import tensor_stats
from .bundle import (
    DTYPE_FFP8,
    DTYPE_FP32,
    KIND_DENSE,
    Layer,
    ModelBundle,
    Tensor,
)
from .errors import BadSizes, DivergedTraining, ShapeMismatch
from .formats import FormatSpec, decode_array, encode_array

CLASS_SEPARATION = 4.0


@dataclass
class ToyDataset:
    """Standardized Gaussian blobs with a fixed 80/20 train/validation split."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    seed: int
    n_features: int
    n_classes: int
    separation: float = CLASS_SEPARATION
    noise: float = 0.25
    scale: float = 64.0


@dataclass
class ForwardTrace:
    """Per-layer tensors from one forward pass.

    inputs is the batch as consumed by the first layer (after the input
    quantize round trip when running quantized). pre_activations[i] and
    post_activations[i] belong to dense layer i; for the final layer the
    two coincide (no ReLU after the logits).
    """

    inputs: np.ndarray
    pre_activations: list
    post_activations: list


def make_dataset(n_samples: int = 1000, n_features: int = 16,
                 n_classes: int = 3, seed: int = 0,
                 separation: float = CLASS_SEPARATION,
                 noise: float = 0.25,
                 scale: float = 64.0) -> ToyDataset:
    """Balanced Gaussian blobs, standardized per feature, 80/20 split.

    The blob centers sit on one seeded ray at geometrically spaced radii
    (separation * 2**-i), so class identity is carried by magnitude along
    a shared direction, not by direction alone. Each sample adds
    isotropic Gaussian noise. Features are standardized (centered,
    unit variance) and then multiplied by `scale`, placing the data in a
    binade range far from 1.0; a codec window anchored to the data
    handles this, a fixed default window does not. Class counts differ
    by at most one; validation takes the last floor(0.2 * n_samples)
    positions of a seeded shuffle.
    """
    if n_samples < 1 or n_features < 1 or n_classes < 2:
        raise BadSizes(
            f"need n_samples >= 1, n_features >= 1, n_classes >= 2; "
            f"got {n_samples}, {n_features}, {n_classes}")
    if n_samples < n_classes:
        raise BadSizes(f"{n_samples} samples cannot cover {n_classes} classes")
    rng = np.random.default_rng(seed)
    direction = rng.normal(0.0, 1.0, n_features)
    direction /= np.linalg.norm(direction)
    radii = separation * 2.0 ** -np.arange(n_classes - 1, -1, -1, dtype=np.float64)
    centers = np.outer(radii, direction)
    base, extra = divmod(n_samples, n_classes)
    counts = [base + (1 if i < extra else 0) for i in range(n_classes)]
    labels = np.repeat(np.arange(n_classes), counts)
    x = centers[labels] + rng.normal(0.0, noise, (n_samples, n_features))
    std = x.std(axis=0)
    std[std == 0.0] = 1.0
    x = (x - x.mean(axis=0)) / std * scale
    perm = rng.permutation(n_samples)
    n_val = n_samples // 5
    train_idx, val_idx = perm[:n_samples - n_val], perm[n_samples - n_val:]
    return ToyDataset(
        x_train=x[train_idx].astype(np.float32),
        y_train=labels[train_idx].astype(np.int64),
        x_val=x[val_idx].astype(np.float32),
        y_val=labels[val_idx].astype(np.int64),
        seed=seed,
        n_features=n_features,
        n_classes=n_classes,
        separation=separation,
        noise=noise,
        scale=scale,
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train_baseline(ds: ToyDataset, widths=(32, 32), epochs: int = 80,
                   lr: float = 0.1, batch_size: int = 32,
                   seed: int = 0) -> ModelBundle:
    """Train the MLP with plain mini-batch gradient descent.

    epochs=0 returns the freshly initialized weights unchanged. Raises
    DivergedTraining as soon as the running loss stops being finite.
    """
    rng = np.random.default_rng(seed)
    dims = [ds.n_features, *widths, ds.n_classes]
    ws = [rng.normal(0.0, np.sqrt(2.0 / dims[i]), (dims[i], dims[i + 1])).astype(np.float32)
          for i in range(len(dims) - 1)]
    bs = [np.zeros(dims[i + 1], dtype=np.float32) for i in range(len(dims) - 1)]
    # One scalar input-normalization constant, stored with the model and
    # applied inside forward() after the input quantization boundary, so
    # gradient descent behaves the same regardless of the feature scale.
    in_scale = float(ds.x_train.std()) or 1.0

    x, yy = np.asarray(ds.x_train / np.float32(in_scale)), ds.y_train
    onehot = np.eye(ds.n_classes, dtype=np.float32)[yy]
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            xb, tb = x[idx], onehot[idx]
            hs = [xb]
            for li, (w, b) in enumerate(zip(ws, bs)):
                pre = hs[-1] @ w + b
                hs.append(np.maximum(pre, 0.0) if li < len(ws) - 1 else pre)
            probs = _softmax(hs[-1])
            loss = -np.log(np.clip(probs[np.arange(len(idx)), yy[idx]], 1e-30, None)).mean()
            if not np.isfinite(loss):
                raise DivergedTraining(f"loss became {loss!r}")
            grad = (probs - tb) / len(idx)
            for li in range(len(ws) - 1, -1, -1):
                gw = hs[li].T @ grad
                gb = grad.sum(axis=0)
                if li > 0:
                    grad = (grad @ ws[li].T) * (hs[li] > 0)
                ws[li] = ws[li] - lr * gw
                bs[li] = bs[li] - lr * gb
                if not np.isfinite(ws[li]).all():
                    raise DivergedTraining("weights became non-finite")

    bundle = ModelBundle()
    bundle.layers.append(Layer("input", "input"))
    for i, (w, b) in enumerate(zip(ws, bs), start=1):
        wname, bname = f"dense{i}.weight", f"dense{i}.bias"
        bundle.add_tensor(Tensor(wname, "weight", w.shape, DTYPE_FP32, w))
        bundle.add_tensor(Tensor(bname, "weight", b.shape, DTYPE_FP32, b))
        bundle.layers.append(Layer(f"dense{i}", "dense", (wname, bname)))
        if i < len(ws):
            bundle.layers.append(Layer(f"relu{i}", "relu"))
    bundle.layers.append(Layer("output", "output"))
    bundle.metadata = {
        "input_scale": repr(in_scale),
        "dataset.seed": str(ds.seed),
        "dataset.samples": str(len(ds.x_train) + len(ds.x_val)),
        "dataset.features": str(ds.n_features),
        "dataset.classes": str(ds.n_classes),
        "dataset.separation": repr(ds.separation),
        "dataset.noise": repr(ds.noise),
        "dataset.scale": repr(ds.scale),
        "train.widths": ",".join(str(w) for w in widths),
        "train.epochs": str(epochs),
        "train.lr": repr(lr),
        "train.batch_size": str(batch_size),
        "train.seed": str(seed),
    }
    return bundle


def dense_layers(model: ModelBundle) -> list:
    """The dense layers of a bundle, in network order."""
    return [l for l in model.layers if l.kind == KIND_DENSE]


def _qdq(values: np.ndarray, fmt: FormatSpec) -> np.ndarray:
    return decode_array(fmt, encode_array(fmt, values)).astype(np.float32)


def _layer_weights(model: ModelBundle, layer: Layer, assignment):
    wt = model.tensors[layer.tensors[0]]
    bt = model.tensors[layer.tensors[1]]
    if wt.dtype == DTYPE_FFP8:
        w = decode_array(wt.fmt, wt.payload).astype(np.float32)
    elif assignment is not None:
        w = _qdq(wt.payload, assignment.weight_format(layer.name))
    else:
        w = np.asarray(wt.payload, dtype=np.float32)
    return w, np.asarray(bt.payload, dtype=np.float32)  # biases stay FP32


def forward(model: ModelBundle, batch, assignment=None):
    """Run the network. Returns (logits, ForwardTrace).

    With assignment=None this is the plain FP32 pass. With an assignment,
    weights round trip through their assigned format (tensors already
    stored as FFP8 codes are just decoded), the input batch and each
    hidden activation round trip through the consuming layer's activation
    format, and the final logits are returned unquantized.

    The model's stored input_scale constant divides the batch after the
    input quantization boundary; the quantized tensor is the raw input.
    """
    layers = dense_layers(model)
    if not layers:
        raise ShapeMismatch("model has no dense layers")
    x = np.asarray(batch, dtype=np.float32)
    if x.ndim != 2:
        raise ShapeMismatch(f"batch must be 2-D, got shape {x.shape}")
    in_width = model.tensors[layers[0].tensors[0]].shape[0]
    if x.shape[1] != in_width:
        raise ShapeMismatch(f"batch width {x.shape[1]} != model input width {in_width}")

    if assignment is not None:
        x = _qdq(x, assignment.activation_format(layers[0].name))
    trace = ForwardTrace(inputs=x, pre_activations=[], post_activations=[])
    in_scale = np.float32(float(model.metadata.get("input_scale", "1.0")))
    h = x / in_scale
    for i, layer in enumerate(layers):
        w, b = _layer_weights(model, layer, assignment)
        pre = h @ w + b
        post = np.maximum(pre, 0.0) if i < len(layers) - 1 else pre
        trace.pre_activations.append(pre)
        trace.post_activations.append(post)
        if i < len(layers) - 1:
            h = post
            if assignment is not None:
                h = _qdq(h, assignment.activation_format(layers[i + 1].name))
    return trace.post_activations[-1], trace


def evaluate(model: ModelBundle, ds: ToyDataset, assignment=None) -> float:
    """Top-1 accuracy on the validation split."""
    logits, _ = forward(model, ds.x_val, assignment)
    return float((logits.argmax(axis=1) == ds.y_val).mean())


def collect_activation_stats(model: ModelBundle, batch) -> dict:
    """TensorStats of the network input and each dense layer's output.

    Keys: "input" for the raw batch, then each dense layer's name for its
    post-activation output (the logits for the final layer). Runs in FP32.
    """
    _, trace = forward(model, batch)
    out = {"input": tensor_stats(trace.inputs)}
    for layer, post in zip(dense_layers(model), trace.post_activations):
        out[layer.name] = tensor_stats(post)
    return out
