"""Per-pixel skin classifier: a small fully connected network over the
measured radiance concatenated with the four fitted parameters.

The network, its backpropagation, and the optimizer are implemented
directly on numpy arrays. Weights are stored as float32 (matching the file
format); all arithmetic runs in float64 so probability sums and gradient
checks behave.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .cube import MultispectralCube
from .fitting import ParameterMaps

MAGIC = b"MSMLP"
FORMAT_VERSION = 1

HIDDEN_SIZES = (64, 64, 128, 128)
N_CLASSES = 2
SKIN_CLASS = 1


class ModelParseError(ValueError):
    """Malformed weight stream; `offset` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedVersionError(ModelParseError):
    pass


@dataclass(frozen=True)
class MlpModel:
    sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]   # each (out, in) float32
    biases: tuple[np.ndarray, ...]    # each (out,) float32
    feature_mean: np.ndarray          # (sizes[0],) float32
    feature_scale: np.ndarray         # (sizes[0],) float32, strictly positive

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ValueError("need at least one layer")
        n_layers = len(self.sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ValueError("weight/bias count must match layer count")
        frozen_w, frozen_b = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.ascontiguousarray(w, dtype=np.float32)
            b = np.ascontiguousarray(b, dtype=np.float32)
            if w.shape != (self.sizes[i + 1], self.sizes[i]):
                raise ValueError(f"layer {i} weights have shape {w.shape}, "
                                 f"expected {(self.sizes[i + 1], self.sizes[i])}")
            if b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} bias has shape {b.shape}")
            w.flags.writeable = False
            b.flags.writeable = False
            frozen_w.append(w)
            frozen_b.append(b)
        mean = np.ascontiguousarray(self.feature_mean, dtype=np.float32)
        scale = np.ascontiguousarray(self.feature_scale, dtype=np.float32)
        if mean.shape != (self.sizes[0],) or scale.shape != (self.sizes[0],):
            raise ValueError("normalization vectors must match input size")
        if np.any(scale <= 0):
            raise ValueError("feature scale must be strictly positive")
        mean.flags.writeable = False
        scale.flags.writeable = False
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "weights", tuple(frozen_w))
        object.__setattr__(self, "biases", tuple(frozen_b))
        object.__setattr__(self, "feature_mean", mean)
        object.__setattr__(self, "feature_scale", scale)

    @property
    def input_size(self) -> int:
        return self.sizes[0]


def default_sizes(n_channels: int) -> tuple[int, ...]:
    return (n_channels + 4, *HIDDEN_SIZES, N_CLASSES)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def _forward_logits(weights, biases, x: np.ndarray) -> np.ndarray:
    """Affine chain with ReLU between layers; float64 throughout."""
    h = np.asarray(x, dtype=np.float64)
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = h @ np.asarray(w, dtype=np.float64).T + np.asarray(b, dtype=np.float64)
        if i != last:
            h = _relu(h)
    return h


def _normalize(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_size:
        raise ValueError(f"feature length {x.shape[-1]} does not match "
                         f"model input {model.input_size}")
    return (x - model.feature_mean.astype(np.float64)) \
        / model.feature_scale.astype(np.float64)


def predict_proba(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities, shape (..., 2); [..., 1] is the skin class."""
    logits = _forward_logits(model.weights, model.biases, _normalize(model, x))
    return _softmax(logits)


def forward(model: MlpModel, x: np.ndarray) -> float | np.ndarray:
    """Skin probability for one feature vector or a batch."""
    p = predict_proba(model, x)[..., SKIN_CLASS]
    return float(p) if p.ndim == 0 else p


def features_from(cube: MultispectralCube, maps: ParameterMaps) -> np.ndarray:
    """Per-pixel feature rows: radiance channels then the fitted params.

    Order is fixed: l_obs[0..D-1], f_mel, f_blood, i_d, i_s.
    """
    if (maps.height, maps.width) != (cube.height, cube.width):
        raise ValueError("cube and maps dimensions disagree")
    h, w, d = cube.data.shape
    out = np.empty((h * w, d + 4))
    out[:, :d] = cube.data.reshape(h * w, d)
    out[:, d] = maps.f_mel.ravel()
    out[:, d + 1] = maps.f_blood.ravel()
    out[:, d + 2] = maps.diffuse.ravel()
    out[:, d + 3] = maps.specular.ravel()
    return out


def predict_map(model: MlpModel, cube: MultispectralCube,
                maps: ParameterMaps) -> np.ndarray:
    """Skin probability image; also stored on maps.skin_probability."""
    feats = features_from(cube, maps)
    probs = forward(model, feats).reshape(cube.height, cube.width)
    maps.skin_probability = probs
    return probs


@dataclass(frozen=True)
class LabelledPixelSet:
    features: np.ndarray  # (N, D+4)
    labels: np.ndarray    # (N,) in {0, 1}; 1 = skin

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2 or features.shape[0] == 0:
            raise ValueError("features must be a non-empty (N, D) array")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must be one per feature row")
        if not np.all(np.isin(labels, (0, 1))):
            raise ValueError("labels must be 0 (non-skin) or 1 (skin)")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    def __len__(self) -> int:
        return self.features.shape[0]

    @classmethod
    def concatenate(cls, parts: list["LabelledPixelSet"]) -> "LabelledPixelSet":
        return cls(features=np.concatenate([p.features for p in parts]),
                   labels=np.concatenate([p.labels for p in parts]))


def labelled_set_from_mask(cube: MultispectralCube, maps: ParameterMaps,
                           mask: np.ndarray) -> LabelledPixelSet:
    """Mask semantics: 255 skin, 0 non-skin, 128 ignored."""
    if mask.shape != (cube.height, cube.width):
        raise ValueError("mask dimensions disagree with cube")
    feats = features_from(cube, maps)
    flat = np.asarray(mask).ravel()
    keep = (flat == 0) | (flat == 255)
    return LabelledPixelSet(features=feats[keep],
                            labels=(flat[keep] == 255).astype(np.int64))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 50
    patience: int = 5
    validation_fraction: float = 0.1
    hidden_sizes: tuple[int, ...] = HIDDEN_SIZES

    def __post_init__(self):
        if not (0.0 <= self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("bad optimizer settings")


@dataclass(frozen=True)
class TrainResult:
    model: MlpModel
    train_losses: tuple[float, ...]     # full-set loss after each epoch
    validation_losses: tuple[float, ...]
    initial_loss: float
    train_accuracy: float
    validation_accuracy: float


def _init_params(sizes: tuple[int, ...], rng: np.random.Generator):
    """Fan-in scaled Gaussian init, suited to ReLU layers."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        std = np.sqrt(2.0 / fan_in)
        weights.append(rng.standard_normal((fan_out, fan_in)) * std)
        biases.append(np.zeros(fan_out))
    return weights, biases


def _loss_and_grads(weights, biases, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch plus gradients via backprop."""
    n = x.shape[0]
    activations = [np.asarray(x, dtype=np.float64)]
    pre = []
    h = activations[0]
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w.T + b
        pre.append(z)
        h = _relu(z) if i != last else z
        activations.append(h)
    probs = _softmax(activations[-1])
    eps = 1e-300
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        grads_w[i] = delta.T @ activations[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i]) * (pre[i - 1] > 0)
    return loss, grads_w, grads_b


class _Adam:
    def __init__(self, shapes, lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correction1) / (np.sqrt(v / correction2)
                                                + self.eps)


def _dataset_loss(weights, biases, x, y) -> float:
    loss, _, _ = _loss_and_grads(weights, biases, x, y)
    return loss


def train(data: LabelledPixelSet, config: TrainConfig | None = None,
          seed: int = 0) -> TrainResult:
    """Mini-batch training with early stopping on validation loss."""
    config = config if config is not None else TrainConfig()
    classes = np.unique(data.labels)
    if classes.size < 2:
        raise ValueError("training data must contain both classes")

    rng = np.random.default_rng(seed)
    n = len(data)
    order = rng.permutation(n)
    n_val = int(round(n * config.validation_fraction))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        raise ValueError("no training rows left after validation split")

    x_train = data.features[train_idx]
    y_train = data.labels[train_idx]
    x_val = data.features[val_idx]
    y_val = data.labels[val_idx]

    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    scale = np.where(std > 1e-12, std, 1.0)
    xn_train = (x_train - mean) / scale
    xn_val = (x_val - mean) / scale if n_val else None

    sizes = (data.features.shape[1], *config.hidden_sizes, N_CLASSES)
    weights, biases = _init_params(sizes, rng)
    opt = _Adam([w.shape for w in weights] + [b.shape for b in biases],
                config.learning_rate)

    initial_loss = _dataset_loss(weights, biases, xn_train, y_train)
    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = np.inf
    best_snapshot = None
    stale = 0
    m = xn_train.shape[0]

    for _ in range(config.max_epochs):
        perm = rng.permutation(m)
        for start in range(0, m, config.batch_size):
            batch = perm[start:start + config.batch_size]
            _, gw, gb = _loss_and_grads(weights, biases,
                                        xn_train[batch], y_train[batch])
            opt.step(weights + biases, gw + gb)
        train_losses.append(_dataset_loss(weights, biases, xn_train, y_train))
        monitored = (_dataset_loss(weights, biases, xn_val, y_val)
                     if n_val else train_losses[-1])
        val_losses.append(monitored)
        if monitored < best_val - 1e-9:
            best_val = monitored
            best_snapshot = ([w.copy() for w in weights],
                             [b.copy() for b in biases])
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    if best_snapshot is not None:
        weights, biases = best_snapshot

    model = MlpModel(
        sizes=sizes,
        weights=tuple(w.astype(np.float32) for w in weights),
        biases=tuple(b.astype(np.float32) for b in biases),
        feature_mean=mean.astype(np.float32),
        feature_scale=scale.astype(np.float32),
    )
    train_acc = float(np.mean(
        np.argmax(predict_proba(model, x_train), axis=-1) == y_train))
    val_acc = (float(np.mean(
        np.argmax(predict_proba(model, x_val), axis=-1) == y_val))
        if n_val else train_acc)
    return TrainResult(
        model=model,
        train_losses=tuple(train_losses),
        validation_losses=tuple(val_losses),
        initial_loss=initial_loss,
        train_accuracy=train_acc,
        validation_accuracy=val_acc,
    )


def save_model(model: MlpModel, dest: str | Path | BinaryIO) -> None:
    parts = [MAGIC, struct.pack("<HH", FORMAT_VERSION, len(model.weights))]
    parts.append(struct.pack(f"<{len(model.sizes)}I", *model.sizes))
    for w, b in zip(model.weights, model.biases):
        parts.append(w.astype("<f4").tobytes(order="C"))
        parts.append(b.astype("<f4").tobytes())
    parts.append(model.feature_mean.astype("<f4").tobytes())
    parts.append(model.feature_scale.astype("<f4").tobytes())
    blob = b"".join(parts)
    if isinstance(dest, (str, Path)):
        Path(dest).write_bytes(blob)
    else:
        dest.write(blob)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise ModelParseError(f"truncated stream reading {what}", self.pos)
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out


def load_model(source: str | Path | BinaryIO) -> MlpModel:
    blob = (Path(source).read_bytes() if isinstance(source, (str, Path))
            else source.read())
    r = _Reader(blob)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise ModelParseError("bad magic, expected 'MSMLP'", 0)
    version, n_layers = struct.unpack("<HH", r.take(4, "version header"))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"unsupported format version {version}", len(MAGIC))
    if n_layers < 1:
        raise ModelParseError("layer count must be >= 1", len(MAGIC) + 2)
    sizes = struct.unpack(f"<{n_layers + 1}I",
                          r.take(4 * (n_layers + 1), "layer sizes"))
    weights, biases = [], []
    for i in range(n_layers):
        out_n, in_n = sizes[i + 1], sizes[i]
        w = np.frombuffer(r.take(4 * out_n * in_n, f"layer {i} weights"),
                          dtype="<f4").reshape(out_n, in_n)
        b = np.frombuffer(r.take(4 * out_n, f"layer {i} bias"), dtype="<f4")
        weights.append(w)
        biases.append(b)
    mean = np.frombuffer(r.take(4 * sizes[0], "feature mean"), dtype="<f4")
    scale = np.frombuffer(r.take(4 * sizes[0], "feature scale"), dtype="<f4")
    if r.pos != len(blob):
        raise ModelParseError("trailing bytes after model data", r.pos)
    return MlpModel(sizes=tuple(sizes), weights=tuple(weights),
                    biases=tuple(biases), feature_mean=mean,
                    feature_scale=scale)
