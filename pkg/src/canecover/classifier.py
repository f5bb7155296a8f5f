"""Two-class CNN distinguishing populated from depopulated cane-field photos.

A small from-scratch network with the same pipeline contract as the
large-scale original: 224x224x3 input, stacked conv + leaky-ReLU + 2x2
max-pool blocks, global average pooling, and a dense head producing two
softmax logits. Training is softmax cross-entropy with Adam, computed by
explicit backward passes, deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .images import ImageBuffer, image_from_array, normalize, resize
from .metrics import ConfusionMatrix, confusion_from_pairs
from .params_io import MAGIC_CLASSIFIER, load_params, save_params, validate_shapes
from .tensor import (
    Conv2DSpec,
    ShapeError,
    Tensor,
    adam_step,
    conv2d,
    conv2d_backward,
    init_adam_state,
    leaky_relu,
    leaky_relu_backward,
    max_pool2,
    max_pool2_backward,
    softmax,
)

# Fixed class order; argmax ties resolve toward the first entry.
CLASS_NAMES = ("poblada", "despoblada")


@dataclass(frozen=True)
class ClassifierConfig:
    input_size: int = 224
    conv_channels: tuple = (8, 16, 32)
    leaky_slope: float = 0.2
    lr: float = 0.001
    batch_size: int = 32
    epochs: int = 5

    def __post_init__(self):
        if len(self.conv_channels) < 1:
            raise ValueError("need at least one conv block")
        divisor = 2 ** len(self.conv_channels)
        if self.input_size % divisor != 0 or self.input_size < divisor:
            raise ValueError(
                f"input_size {self.input_size} must be a positive multiple of {divisor} "
                f"so every 2x2 pool halves an even dimension"
            )


@dataclass(frozen=True)
class Prediction:
    """Per-class probabilities (aligned with class_names) and argmax label."""

    probs: tuple
    label: str
    class_names: tuple = CLASS_NAMES

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "probs": {name: p for name, p in zip(self.class_names, self.probs)},
        }


def classifier_param_shapes(config: ClassifierConfig) -> dict:
    shapes = {}
    cin = 3
    for i, cout in enumerate(config.conv_channels):
        shapes[f"conv{i}.w"] = (cout, cin, 3, 3)
        shapes[f"conv{i}.b"] = (cout,)
        cin = cout
    shapes["head.w"] = (2, cin)
    shapes["head.b"] = (2,)
    return shapes


def init_classifier_params(config: ClassifierConfig, seed: int) -> dict:
    """He-initialized conv stack with a zero dense head.

    The zero head starts both logits at exactly 0, so the first gradient
    steps move straight along the pooled-feature class difference; with the
    reference learning rate and only a few epochs of budget, a random head
    would eat most of the optimization steps before predictions flip.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in classifier_param_shapes(config).items():
        if name.endswith(".b") or name == "head.w":
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return params


def save_classifier(path, params: dict):
    save_params(path, params, MAGIC_CLASSIFIER)


def load_classifier(path, config: ClassifierConfig) -> dict:
    params = load_params(path, MAGIC_CLASSIFIER)
    validate_shapes(params, classifier_param_shapes(config), "classifier")
    return params


def save_classifier_model(path, params: dict, config: ClassifierConfig):
    """Save weights plus the input size so the model file is self-describing."""
    doc = dict(params)
    doc["meta.input_size"] = np.array([float(config.input_size)])
    save_params(path, doc, MAGIC_CLASSIFIER)


def load_classifier_model(path):
    """Load a model file, reconstructing its config from the stored shapes."""
    doc = load_params(path, MAGIC_CLASSIFIER)
    input_size = int(doc.pop("meta.input_size")[0]) if "meta.input_size" in doc else 224
    channels = []
    while f"conv{len(channels)}.w" in doc:
        channels.append(doc[f"conv{len(channels)}.w"].shape[0])
    config = ClassifierConfig(input_size=input_size, conv_channels=tuple(channels))
    validate_shapes(doc, classifier_param_shapes(config), "classifier")
    return doc, config


def _conv_spec(params: dict, i: int, cin: int, cout: int) -> Conv2DSpec:
    return Conv2DSpec(
        in_channels=cin,
        out_channels=cout,
        kernel_size=3,
        stride=1,
        padding=1,
        weights=params[f"conv{i}.w"],
        bias=params[f"conv{i}.b"],
    )


def forward(image: Tensor, params: dict, config: ClassifierConfig = ClassifierConfig()) -> Tensor:
    """Logits (2,) for a single 3xSxS tensor, S = config.input_size."""
    s = config.input_size
    if image.ndim != 3 or image.shape != (3, s, s):
        raise ShapeError(
            f"classifier input must be 3x{s}x{s}, got shape {image.shape}; "
            f"resize the image to {s}x{s} first"
        )
    logits, _ = _forward_batch(image[np.newaxis], params, config)
    return logits[0]


def _forward_batch(xb: Tensor, params: dict, config: ClassifierConfig, want_cache: bool = False):
    cache = {"inputs": [], "pres": [], "acts": []} if want_cache else None
    h = xb
    cin = 3
    for i, cout in enumerate(config.conv_channels):
        spec = _conv_spec(params, i, cin, cout)
        if want_cache:
            cache["inputs"].append(h)
        pre = conv2d(h, spec)
        act = leaky_relu(pre, config.leaky_slope)
        b, c, hh, ww = act.shape
        h = max_pool2(act.reshape(b * c, hh, ww)).reshape(b, c, hh // 2, ww // 2)
        if want_cache:
            cache["pres"].append(pre)
            cache["acts"].append(act)
        cin = cout
    feats = h.mean(axis=(2, 3))  # global average pool
    logits = feats @ params["head.w"].T + params["head.b"]
    if want_cache:
        cache["gap_shape"] = h.shape
        cache["feats"] = feats
    return logits, cache


def _backward_batch(grad_logits: Tensor, params: dict, config: ClassifierConfig, cache: dict) -> dict:
    grads = {
        "head.w": grad_logits.T @ cache["feats"],
        "head.b": grad_logits.sum(axis=0),
    }
    b, c, hf, wf = cache["gap_shape"]
    g_feats = grad_logits @ params["head.w"]
    g_h = np.broadcast_to(g_feats[:, :, np.newaxis, np.newaxis] / (hf * wf), (b, c, hf, wf))
    for i in range(len(config.conv_channels) - 1, -1, -1):
        act = cache["acts"][i]
        bb, cc, hh, ww = act.shape
        g_act = max_pool2_backward(
            act.reshape(bb * cc, hh, ww), g_h.reshape(bb * cc, hh // 2, ww // 2)
        ).reshape(bb, cc, hh, ww)
        g_pre = leaky_relu_backward(cache["pres"][i], g_act, config.leaky_slope)
        cin = 3 if i == 0 else config.conv_channels[i - 1]
        spec = _conv_spec(params, i, cin, config.conv_channels[i])
        g_h, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = conv2d_backward(
            cache["inputs"][i], spec, g_pre
        )
    return grads


def _log_softmax(logits: Tensor) -> Tensor:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy_with_gradient(logits: Tensor, labels: np.ndarray):
    """Summed CE loss over the batch and d(loss)/d(logits), unnormalized."""
    logp = _log_softmax(logits)
    n = logits.shape[0]
    loss = -float(logp[np.arange(n), labels].sum())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad


# Microbatch size used inside training/evaluation so the im2col buffers of
# 224x224 inputs stay modest.
_CHUNK = 8


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def history_csv(history) -> str:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
    for e in history:
        lines.append(
            f"{e.epoch},{e.train_loss:.6f},{e.train_acc:.6f},{e.val_loss:.6f},{e.val_acc:.6f}"
        )
    return "\n".join(lines) + "\n"


def train_arrays(
    train_x: Tensor,
    train_y: np.ndarray,
    val_x: Tensor,
    val_y: np.ndarray,
    config: ClassifierConfig,
    seed: int,
):
    """Train on stacked Bx3xSxS tensors; returns (params, per-epoch history).

    Validation runs on the held-out test split after every epoch, mirroring
    the accuracy/loss learning curves of the reference experiment.
    """
    labels = set(int(y) for y in train_y)
    if len(labels) < 2:
        raise ValueError("training set contains a single class; need both")
    params = init_classifier_params(config, seed)
    state = init_adam_state(params)
    rng = np.random.default_rng(seed)
    n = train_x.shape[0]
    history = []
    t = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = train_x[idx], train_y[idx]
            batch_n = len(idx)
            grads = None
            for c0 in range(0, batch_n, _CHUNK):
                xc, yc = xb[c0 : c0 + _CHUNK], yb[c0 : c0 + _CHUNK]
                logits, cache = _forward_batch(xc, params, config, want_cache=True)
                loss, g_logits = cross_entropy_with_gradient(logits, yc)
                loss_sum += loss
                correct += int((logits.argmax(axis=1) == yc).sum())
                part = _backward_batch(g_logits / batch_n, params, config, cache)
                if grads is None:
                    grads = part
                else:
                    for name in grads:
                        grads[name] += part[name]
            t += 1
            params, state = adam_step(params, grads, state, config.lr, t=t)
        val_loss, val_acc = evaluate_loss_arrays(val_x, val_y, params, config)
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=loss_sum / n,
                train_acc=correct / n,
                val_loss=val_loss,
                val_acc=val_acc,
            )
        )
    return params, history


def evaluate_loss_arrays(x: Tensor, y: np.ndarray, params: dict, config: ClassifierConfig):
    """(mean loss, accuracy) over stacked examples, forward only."""
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty evaluation set")
    loss_sum, correct = 0.0, 0
    for c0 in range(0, n, _CHUNK):
        logits, _ = _forward_batch(x[c0 : c0 + _CHUNK], params, config)
        loss, _ = cross_entropy_with_gradient(logits, y[c0 : c0 + _CHUNK])
        loss_sum += loss
        correct += int((logits.argmax(axis=1) == y[c0 : c0 + _CHUNK]).sum())
    return loss_sum / n, correct / n


def prepare_image(image: ImageBuffer, config: ClassifierConfig) -> Tensor:
    """Resize to the network input size and normalize; grayscale is
    channel-replicated to RGB."""
    if image.channels == 1:
        image = image_from_array(np.repeat(image.pixels, 3, axis=2))
    image = resize(image, config.input_size, config.input_size)
    return normalize(image)


def predict(
    image: ImageBuffer, params: dict, config: ClassifierConfig = ClassifierConfig()
) -> Prediction:
    """Classify one image of any size; probabilities sum to 1."""
    logits = forward(prepare_image(image, config), params, config)
    probs = softmax(logits)
    label = CLASS_NAMES[int(np.argmax(probs))]
    return Prediction(probs=tuple(float(p) for p in probs), label=label)


def evaluate_arrays(
    x: Tensor, y: np.ndarray, params: dict, config: ClassifierConfig
) -> ConfusionMatrix:
    """Confusion matrix of a labeled stacked test set."""
    preds = []
    for c0 in range(0, x.shape[0], _CHUNK):
        logits, _ = _forward_batch(x[c0 : c0 + _CHUNK], params, config)
        preds.extend(CLASS_NAMES[int(i)] for i in logits.argmax(axis=1))
    truths = [CLASS_NAMES[int(i)] for i in y]
    return confusion_from_pairs(truths, preds, CLASS_NAMES)


def class_index(name: str) -> int:
    try:
        return CLASS_NAMES.index(name)
    except ValueError:
        raise ValueError(f"unknown class '{name}'; known classes: {CLASS_NAMES}") from None


def load_split_arrays(root, split, config: ClassifierConfig):
    """Load a DatasetSplit's files under ``root`` into stacked tensors.

    Returns (train_x, train_y, val_x, val_y). Labels follow CLASS_NAMES
    when the split's class names match; otherwise the split's own sorted
    order is used.
    """
    from .images import load_image

    names = [c.name for c in split.classes]
    order = list(CLASS_NAMES) if set(names) == set(CLASS_NAMES) else sorted(names)
    index = {name: i for i, name in enumerate(order)}
    sets = {"train": ([], []), "test": ([], [])}
    for cls in split.classes:
        for part, files in (("train", cls.train), ("test", cls.test)):
            xs, ys = sets[part]
            for fname in files:
                image = load_image(Path(root) / cls.name / fname)
                xs.append(prepare_image(image, config))
                ys.append(index[cls.name])
    train_x = np.stack(sets["train"][0])
    train_y = np.asarray(sets["train"][1], dtype=np.int64)
    val_x = np.stack(sets["test"][0])
    val_y = np.asarray(sets["test"][1], dtype=np.int64)
    return train_x, train_y, val_x, val_y


def train_from_split(root, split, config: ClassifierConfig, seed: int):
    """Convenience wrapper: load the split's images, then train_arrays."""
    train_x, train_y, val_x, val_y = load_split_arrays(root, split, config)
    return train_arrays(train_x, train_y, val_x, val_y, config, seed)
