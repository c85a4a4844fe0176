"""Classifiers, losses, and natural training.

Two model families: a linear classifier without bias (predicts sign(w.x),
hinge-trained) and a small fully-connected network with rectifier hidden
layers (cross-entropy). Both expose the same small surface:

  * params() / set_params()      parameter arrays in layer order
  * decision_graph(params, X)    margins or logits on the tape
  * predict(X)                   labels, plain numpy

Training is mini-batch SGD with classical momentum. The ridge term
enters the objective itself, so its gradient is exactly 2*lambda*w.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import Dataset
from .errors import DataError, FormatError, ParameterError
from .rng import RngStream

CHECKPOINT_MAGIC = b"RDM1"
CHECKPOINT_VERSION = 1


class LinearClassifier:
    """sign(w.x) on d+1 features; no bias term."""

    def __init__(self, w: np.ndarray):
        self.w = np.asarray(w, dtype=np.float64)
        if self.w.ndim != 1:
            raise ParameterError(f"weight vector must be 1-D, got shape {self.w.shape}")
        if not np.all(np.isfinite(self.w)):
            raise ParameterError("weights must be finite")

    @classmethod
    def zeros(cls, width: int) -> "LinearClassifier":
        return cls(np.zeros(width))

    def params(self) -> list[np.ndarray]:
        return [self.w]

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        (w,) = params
        self.w = np.asarray(w, dtype=np.float64)

    def decision_graph(self, params: Sequence[Tensor], X: Tensor) -> Tensor:
        (w,) = params
        return ad.matmul(X, w)

    def margins(self, X: np.ndarray) -> np.ndarray:
        return X @ self.w

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.sign(self.margins(X)).astype(np.int64)

    def targets(self, labels: np.ndarray) -> np.ndarray:
        bad = np.setdiff1d(np.unique(labels), [-1, 1])
        if bad.size:
            raise DataError(f"linear classifier expects labels in {{-1,+1}}, got {bad.tolist()}")
        return labels

    def clone(self) -> "LinearClassifier":
        return LinearClassifier(self.w.copy())

    @property
    def layer_sizes(self) -> list[int]:
        return [self.w.size]


class MlpClassifier:
    """Fully-connected net, rectifier hidden layers, linear output layer."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ParameterError("need matching, nonempty weight/bias lists")
        for i in range(len(weights) - 1):
            if weights[i].shape[1] != weights[i + 1].shape[0]:
                raise ParameterError(
                    f"layer {i} output width {weights[i].shape[1]} does not feed layer {i + 1}"
                )
        for W, b in zip(weights, biases):
            if b.shape != (W.shape[1],):
                raise ParameterError("bias width must match layer output width")
        self.weights = [np.asarray(W, dtype=np.float64) for W in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    @classmethod
    def init(cls, sizes: Sequence[int], rng: RngStream) -> "MlpClassifier":
        """He-style initialization for the given [in, hidden..., out] sizes."""
        if len(sizes) < 2:
            raise ParameterError("need at least input and output sizes")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            std = np.sqrt(2.0 / fan_in)
            weights.append(rng.normal(0.0, std, (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        return out

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        params = list(params)
        self.weights = [np.asarray(params[2 * i], dtype=np.float64) for i in range(len(self.weights))]
        self.biases = [np.asarray(params[2 * i + 1], dtype=np.float64) for i in range(len(self.biases))]

    def decision_graph(self, params: Sequence[Tensor], X: Tensor) -> Tensor:
        h = X
        n_layers = len(params) // 2
        for i in range(n_layers):
            W, b = params[2 * i], params[2 * i + 1]
            h = ad.add(ad.matmul(h, W), b)
            if i < n_layers - 1:
                h = ad.relu(h)
        return h

    def logits(self, X: np.ndarray) -> np.ndarray:
        h = X
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
        return h

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.argmax(self.logits(X), axis=1)
        if self.num_classes == 2:
            return idx * 2 - 1  # back to {-1,+1} for binary tasks
        return idx

    def targets(self, labels: np.ndarray) -> np.ndarray:
        return class_indices(labels, self.num_classes)

    def clone(self) -> "MlpClassifier":
        return MlpClassifier([W.copy() for W in self.weights], [b.copy() for b in self.biases])


def class_indices(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Map labels to [0, num_classes); binary {-1,+1} maps to {0,1}."""
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if num_classes == 2 and np.all(np.isin(uniq, [-1, 1])):
        return ((labels + 1) // 2).astype(np.int64)
    if uniq.size and (uniq.min() < 0 or uniq.max() >= num_classes):
        raise DataError(f"labels {uniq.tolist()} outside [0, {num_classes})")
    return labels.astype(np.int64)


@dataclass
class TrainConfig:
    """Mini-batch SGD settings; weight_decay is the ridge coefficient lambda."""

    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-3
    epochs: int = 10
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ParameterError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def hinge_loss_graph(w: Tensor, X: Tensor, y: np.ndarray, lam: float) -> Tensor:
    """mean(max(0, 1 - y * w.x)) + lam * ||w||^2 on the tape."""
    margins = ad.mul(ad.constant(y), ad.matmul(X, w))
    hinge = ad.mean(ad.relu(ad.add(ad.constant(1.0), ad.neg(margins))))
    return ad.add(hinge, ad.mul(ad.constant(lam), ad.tsum(ad.mul(w, w))))


def cross_entropy_graph(model: MlpClassifier, params: Sequence[Tensor], X: Tensor, y: np.ndarray) -> Tensor:
    """Mean negative log-softmax of the true class."""
    logits = model.decision_graph(params, X)
    classes = class_indices(y, model.num_classes)
    onehot = np.zeros((classes.size, model.num_classes))
    onehot[np.arange(classes.size), classes] = 1.0
    shift = ad.constant(logits.data.max(axis=1, keepdims=True))  # stabilizer, constant on the tape
    z = ad.add(logits, ad.neg(shift))
    lse = ad.tlog(ad.tsum(ad.texp(z), axis=1, keepdims=True))
    log_probs = ad.add(z, ad.neg(lse))
    return ad.neg(ad.mean(ad.tsum(ad.mul(log_probs, ad.constant(onehot)), axis=1)))


def hinge_objective(model: LinearClassifier, batch: Dataset, lam: float) -> float:
    """Soft-margin SVM objective of `model` on `batch`."""
    y = model.targets(batch.labels)
    loss = hinge_loss_graph(Tensor(model.w), Tensor(batch.features), y.astype(np.float64), lam)
    return loss.item()

def cross_entropy(model: MlpClassifier, batch: Dataset) -> float:
    """Cross-entropy of `model` on `batch`."""
    params = [Tensor(p) for p in model.params()]
    return cross_entropy_graph(model, params, Tensor(batch.features), batch.labels).item()


def batch_loss_graph(model, params: Sequence[Tensor], X: Tensor, y: np.ndarray, loss: str, lam: float) -> Tensor:
    """Dispatch to the model's training objective (ridge included)."""
    if loss == "hinge":
        if len(params) != 1:
            raise ParameterError("hinge loss applies to the linear classifier")
        return hinge_loss_graph(params[0], X, y.astype(np.float64), lam)
    if loss == "cross_entropy":
        data_term = cross_entropy_graph(model, params, X, y)
        if lam > 0:
            reg = ad.constant(0.0)
            for i in range(0, len(params), 2):  # decay weights, not biases
                reg = ad.add(reg, ad.tsum(ad.mul(params[i], params[i])))
            data_term = ad.add(data_term, ad.mul(ad.constant(lam), reg))
        return data_term
    raise ParameterError(f"unknown loss kind {loss!r}")


def default_loss_kind(model) -> str:
    return "hinge" if isinstance(model, LinearClassifier) else "cross_entropy"


# ---------------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------------


def sgd_train(model, dataset: Dataset, cfg: TrainConfig, loss: str | None = None):
    """Train in place by mini-batch SGD with momentum; returns (model, per-epoch loss trace)."""
    if dataset.n == 0:
        raise DataError("cannot train on an empty dataset")
    loss = loss or default_loss_kind(model)
    y_all = model.targets(dataset.labels)

    params = [p.copy() for p in model.params()]
    velocity = [np.zeros_like(p) for p in params]
    shuffle = RngStream(cfg.seed)
    trace: list[float] = []

    for _ in range(cfg.epochs):
        order = shuffle.permutation(dataset.n)
        epoch_losses = []
        for start in range(0, dataset.n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            leaves = [Tensor(p) for p in params]
            out = batch_loss_graph(
                model, leaves, Tensor(dataset.features[idx]), y_all[idx], loss, cfg.weight_decay
            )
            grads = ad.backward(out, leaves)
            for p, v, g in zip(params, velocity, grads):
                v *= cfg.momentum
                v += g.data
                p -= cfg.lr * v
            epoch_losses.append(out.item())
        trace.append(float(np.mean(epoch_losses)))

    model.set_params(params)
    return model, trace


def accuracy(model, dataset: Dataset) -> float:
    """Fraction of points whose prediction matches the label."""
    if dataset.n == 0:
        raise DataError("accuracy of an empty dataset is undefined")
    pred = model.predict(dataset.features)
    return float(np.mean(pred == dataset.labels))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model, path) -> None:
    """Magic 'RDM1', u16 version, u32 layer-size list, little-endian f64 parameters."""
    sizes = model.layer_sizes
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<H", CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(sizes))
    blob += struct.pack(f"<{len(sizes)}I", *sizes)
    for p in model.params():
        blob += np.ascontiguousarray(p, dtype="<f8").tobytes()
    with open(path, "wb") as f:
        f.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:4]!r}", 0)
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    (n_sizes,) = struct.unpack_from("<I", blob, 6)
    sizes = list(struct.unpack_from(f"<{n_sizes}I", blob, 10))
    offset = 10 + 4 * n_sizes

    def read_array(shape):
        nonlocal offset
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(blob):
            raise FormatError("checkpoint truncated", offset)
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset = end
        return arr.astype(np.float64)

    if len(sizes) == 1:
        model = LinearClassifier(read_array((sizes[0],)))
    else:
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(read_array((fan_in, fan_out)))
            biases.append(read_array((fan_out,)))
        model = MlpClassifier(weights, biases)
    if offset != len(blob):
        raise FormatError("trailing bytes after parameters", offset)
    return model
