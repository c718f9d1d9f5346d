"""Gongbi/Xieyi classification head over externally extracted image features.

The vision backbone is out of scope; this module consumes its output (a
feature file) and trains a small head: linear -> relu -> dropout -> linear
-> softmax, plain SGD on cross-entropy. Everything is float64 numpy and
fully deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import PaintingType

CLASS_ORDER = (PaintingType.GONGBI, PaintingType.XIEYI)
_CLASS_INDEX = {t: i for i, t in enumerate(CLASS_ORDER)}


class ClassifierError(Exception):
    pass


@dataclass(frozen=True)
class FeatureVector:
    record_id: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ClassifierError(f"{self.record_id}: feature vector must be non-empty 1-D")
        if not np.all(np.isfinite(arr)):
            raise ClassifierError(f"{self.record_id}: feature vector contains NaN/Inf")


@dataclass(frozen=True)
class HeadConfig:
    hidden_width: int = 256
    dropout_rate: float = 0.5
    learning_rate: float = 0.2
    epochs: int = 30
    seed: int = 0
    batch_size: int = 32
    weight_decay: float = 0.1  # L2 penalty applied in the update step

    def __post_init__(self) -> None:
        if self.hidden_width < 1:
            raise ClassifierError("hidden_width must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ClassifierError("dropout_rate must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ClassifierError("learning_rate must be positive")
        if self.epochs < 1:
            raise ClassifierError("epochs must be positive")
        if self.batch_size < 1:
            raise ClassifierError("batch_size must be positive")
        if self.weight_decay < 0:
            raise ClassifierError("weight_decay must be non-negative")


@dataclass
class LabeledFeatures:
    """Aligned ids, feature matrix, and integer labels (see CLASS_ORDER)."""

    ids: list[str]
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or len(self.ids) != self.x.shape[0] or self.y.shape != (self.x.shape[0],):
            raise ClassifierError("ids, x, and y must align")
        if not np.all(np.isfinite(self.x)):
            raise ClassifierError("feature matrix contains NaN/Inf")

    @classmethod
    def from_vectors(
        cls, vectors: Sequence[FeatureVector], labels: dict[str, PaintingType]
    ) -> "LabeledFeatures":
        dims = {len(v.values) for v in vectors}
        if len(dims) > 1:
            raise ClassifierError(f"inconsistent feature dimensions: {sorted(dims)}")
        ids, rows, ys = [], [], []
        for v in vectors:
            label = labels.get(v.record_id)
            if label is None:
                continue
            if label not in _CLASS_INDEX:
                raise ClassifierError(f"{v.record_id}: label must be gongbi or xieyi, got {label}")
            ids.append(v.record_id)
            rows.append(v.values)
            ys.append(_CLASS_INDEX[label])
        if not ids:
            raise ClassifierError("no labeled feature vectors")
        return cls(ids=ids, x=np.asarray(rows, dtype=np.float64), y=np.asarray(ys))

    def subset(self, keep_ids: Sequence[str]) -> "LabeledFeatures":
        index = {rid: i for i, rid in enumerate(self.ids)}
        rows = [index[rid] for rid in keep_ids if rid in index]
        return LabeledFeatures(
            ids=[self.ids[i] for i in rows], x=self.x[rows], y=self.y[rows]
        )


@dataclass
class ClassifierModel:
    w1: np.ndarray  # (D, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, 2)
    b2: np.ndarray  # (2,)
    config: HeadConfig
    metrics: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]


def split_dataset(ids: Sequence[str], ratio: float, seed: int) -> tuple[list[str], list[str]]:
    """Disjoint, exhaustive train/validation partition with |train| = round(ratio*N).

    The split depends only on the id set and the seed, not on input order.
    """
    if not ids:
        raise ClassifierError("cannot split an empty id list")
    if not 0.0 < ratio < 1.0:
        raise ClassifierError(f"ratio must be in (0, 1), got {ratio}")
    ordered = sorted(ids)
    if len(set(ordered)) != len(ordered):
        raise ClassifierError("duplicate ids in split input")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]
    n_train = int(round(ratio * len(ordered)))
    return shuffled[:n_train], shuffled[n_train:]


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward_probs(model: ClassifierModel, x: np.ndarray) -> np.ndarray:
    """Inference pass (dropout disabled); returns class probabilities."""
    h = _relu(x @ model.w1 + model.b1)
    return _softmax(h @ model.w2 + model.b2)


def loss_and_gradients(
    w1: np.ndarray,
    b1: np.ndarray,
    w2: np.ndarray,
    b2: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    dropout_mask: np.ndarray | None = None,
):
    """Mean cross-entropy and analytic gradients for one batch.

    dropout_mask, when given, is the pre-scaled inverted-dropout mask applied
    to the hidden activations (training path); None means inference path.
    """
    n = x.shape[0]
    h_pre = x @ w1 + b1
    h = _relu(h_pre)
    if dropout_mask is not None:
        h = h * dropout_mask
    logits = h @ w2 + b2
    probs = _softmax(logits)
    eps = 1e-12
    loss = -np.mean(np.log(probs[np.arange(n), y] + eps))

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    gw2 = h.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dh = dlogits @ w2.T
    if dropout_mask is not None:
        dh = dh * dropout_mask
    dh_pre = dh * (h_pre > 0)
    gw1 = x.T @ dh_pre
    gb1 = dh_pre.sum(axis=0)
    return loss, (gw1, gb1, gw2, gb2)


def train_head(
    train: LabeledFeatures, validation: LabeledFeatures, config: HeadConfig
) -> tuple[ClassifierModel, float]:
    """Train the head by mini-batch SGD; returns the model and the accuracy
    on the validation split (dropout disabled)."""
    if train.x.shape[1] != validation.x.shape[1]:
        raise ClassifierError(
            f"train/validation dimension mismatch: {train.x.shape[1]} vs {validation.x.shape[1]}"
        )
    class_counts = np.bincount(train.y, minlength=2)
    if np.any(class_counts < 2):
        raise ClassifierError(
            f"need at least 2 training examples per class, got {class_counts.tolist()}"
        )

    # canonical row order first: training is a function of (set, seed), not input order
    order = np.argsort(np.asarray(train.ids))
    x_all = train.x[order]
    y_all = train.y[order]

    d = x_all.shape[1]
    rng = np.random.default_rng(config.seed)
    w1 = rng.normal(0.0, 1.0 / d, size=(d, config.hidden_width))
    b1 = np.zeros(config.hidden_width)
    w2 = rng.normal(0.0, 1.0 / config.hidden_width, size=(config.hidden_width, 2))
    b2 = np.zeros(2)

    n = x_all.shape[0]
    keep = 1.0 - config.dropout_rate
    lr, wd = config.learning_rate, config.weight_decay
    last_loss = float("nan")
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            xb, yb = x_all[batch], y_all[batch]
            if config.dropout_rate > 0.0:
                mask = (rng.random((xb.shape[0], config.hidden_width)) < keep) / keep
            else:
                mask = None
            loss, (gw1, gb1, gw2, gb2) = loss_and_gradients(w1, b1, w2, b2, xb, yb, mask)
            w1 -= lr * (gw1 + wd * w1)
            b1 -= lr * gb1
            w2 -= lr * (gw2 + wd * w2)
            b2 -= lr * gb2
            last_loss = loss

    model = ClassifierModel(w1=w1, b1=b1, w2=w2, b2=b2, config=config)
    val_acc = accuracy(model, validation)
    model.metrics = {"validation_accuracy": val_acc, "final_train_loss": float(last_loss)}
    return model, val_acc


def accuracy(model: ClassifierModel, data: LabeledFeatures) -> float:
    probs = forward_probs(model, data.x)
    predicted = np.argmax(probs, axis=1)  # argmax takes the first on ties
    return float(np.mean(predicted == data.y))


def classify(model: ClassifierModel, feature: FeatureVector) -> tuple[PaintingType, float]:
    """Returns (argmax class, its softmax probability). Equal logits break
    toward the first class in CLASS_ORDER."""
    values = np.asarray(feature.values, dtype=np.float64)
    if values.shape[0] != model.input_dim:
        raise ClassifierError(
            f"{feature.record_id}: dimension {values.shape[0]} != model dimension {model.input_dim}"
        )
    probs = forward_probs(model, values[None, :])[0]
    idx = int(np.argmax(probs))
    return CLASS_ORDER[idx], float(probs[idx])


# -- feature / label file formats --

def load_feature_file(path: str | Path) -> list[FeatureVector]:
    """Parse the feature file: header `D=<int>`, then `record_id,<D floats>` lines."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("D="):
        raise ClassifierError(f"{path}: first line must be D=<int>")
    try:
        dim = int(lines[0][2:])
    except ValueError as exc:
        raise ClassifierError(f"{path}: bad dimension header {lines[0]!r}") from exc
    vectors = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != dim + 1:
            raise ClassifierError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
        try:
            values = tuple(float(p) for p in parts[1:])
        except ValueError as exc:
            raise ClassifierError(f"{path}:{lineno}: non-numeric value") from exc
        vectors.append(FeatureVector(record_id=parts[0], values=values))
    return vectors


def save_feature_file(path: str | Path, vectors: Sequence[FeatureVector]) -> None:
    if not vectors:
        raise ClassifierError("refusing to write an empty feature file")
    dim = len(vectors[0].values)
    lines = [f"D={dim}"]
    for v in vectors:
        if len(v.values) != dim:
            raise ClassifierError(f"{v.record_id}: dimension {len(v.values)} != {dim}")
        lines.append(v.record_id + "," + ",".join(repr(x) for x in v.values))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_labels_file(path: str | Path) -> dict[str, PaintingType]:
    labels: dict[str, PaintingType] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        record_id, _, raw = line.partition(",")
        raw = raw.strip().lower()
        if raw not in (PaintingType.GONGBI.value, PaintingType.XIEYI.value):
            raise ClassifierError(f"{path}:{lineno}: label must be gongbi|xieyi, got {raw!r}")
        labels[record_id] = PaintingType(raw)
    return labels


def save_model(model: ClassifierModel, path: str | Path) -> None:
    np.savez(
        path,
        w1=model.w1,
        b1=model.b1,
        w2=model.w2,
        b2=model.b2,
        config=np.array(
            [
                model.config.hidden_width,
                model.config.dropout_rate,
                model.config.learning_rate,
                model.config.epochs,
                model.config.seed,
                model.config.batch_size,
                model.config.weight_decay,
            ]
        ),
        validation_accuracy=np.array(model.metrics.get("validation_accuracy", float("nan"))),
    )


def load_model(path: str | Path) -> ClassifierModel:
    data = np.load(path)
    cfg = data["config"]
    config = HeadConfig(
        hidden_width=int(cfg[0]),
        dropout_rate=float(cfg[1]),
        learning_rate=float(cfg[2]),
        epochs=int(cfg[3]),
        seed=int(cfg[4]),
        batch_size=int(cfg[5]),
        weight_decay=float(cfg[6]),
    )
    return ClassifierModel(
        w1=data["w1"],
        b1=data["b1"],
        w2=data["w2"],
        b2=data["b2"],
        config=config,
        metrics={"validation_accuracy": float(data["validation_accuracy"])},
    )
