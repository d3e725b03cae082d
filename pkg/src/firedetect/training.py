"""Optimization loop, dataset splitting, and confusion-matrix metrics.

The reference training path is single-threaded and fully deterministic: a
fixed seed drives the stratified split, the per-epoch shuffles, and the
dropout masks, so identical configs reproduce bit-identical curves.

Fire is the positive class throughout (label index 0); a sample is predicted
fire when its fire-class probability is >= 0.5.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import Sample
from .errors import DatasetError, TrainingError
from .kernels import ConvParams, DenseParams
from .network import EVAL, TRAIN, Network, backward, forward, mean_cross_entropy

FIRE_LABEL = 0
DECISION_THRESHOLD = 0.5


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-4
    optimizer: str = "adam"  # "adam" or "sgd"
    seed: int = 0
    val_fraction: float = 0.3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    stop_at_train_accuracy: float | None = None  # optional early stop, off by default


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    accuracy: float
    false_positive_rate: float
    false_negative_rate: float
    recall: float
    precision: float
    f_measure: float
    degenerate: tuple[str, ...] = ()  # metrics whose denominator was zero


@dataclass
class CurvePoint:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float


CURVE_HEADER = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc")


def split_train_val(
    samples: list[Sample], val_fraction: float, seed: int
) -> tuple[list[Sample], list[Sample]]:
    """Stratified shuffled split; per class, floor((1-val_fraction)*n) goes to train.

    The two halves are disjoint and exhaustive, and membership is a pure
    function of the seed.
    """
    if not samples:
        raise DatasetError("cannot split an empty dataset")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    by_label: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        by_label.setdefault(s.label, []).append(i)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for label in sorted(by_label):
        idx = by_label[label]
        if len(idx) < 2:
            raise DatasetError(f"class {label} has fewer than 2 samples, cannot split")
        order = rng.permutation(len(idx))
        n_train = int((1.0 - val_fraction) * len(idx))
        for j in order[:n_train]:
            train_idx.append(idx[j])
        for j in order[n_train:]:
            val_idx.append(idx[j])
    return [samples[i] for i in train_idx], [samples[i] for i in val_idx]


class SgdMomentum:
    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v += g
            p -= self.lr * v


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    if config.optimizer == "sgd":
        return SgdMomentum(config.learning_rate, config.momentum)
    raise ValueError(f"unknown optimizer {config.optimizer!r}")


def _to_arrays(samples: list[Sample]) -> tuple[np.ndarray, np.ndarray]:
    images = np.stack([s.image for s in samples]).astype(np.float32)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return images, labels


def _grad_arrays(grads: list[ConvParams | DenseParams | None]) -> list[np.ndarray]:
    arrays: list[np.ndarray] = []
    for g in grads:
        if isinstance(g, ConvParams):
            arrays += [g.kernels, g.bias]
        elif isinstance(g, DenseParams):
            arrays += [g.weights, g.bias]
    return arrays


def _eval_split(net: Network, images: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(mean loss, accuracy) over a split, eval mode, chunked forward."""
    losses = []
    correct = 0
    for start in range(0, len(images), 64):
        chunk = images[start : start + 64]
        chunk_labels = labels[start : start + 64]
        probs, _ = forward(net, chunk, EVAL)
        losses.append(mean_cross_entropy(probs, chunk_labels) * len(chunk))
        pred_fire = probs[:, FIRE_LABEL] >= DECISION_THRESHOLD
        correct += int((pred_fire == (chunk_labels == FIRE_LABEL)).sum())
    return sum(losses) / len(images), correct / len(images)


def train(
    net: Network, dataset: list[Sample], config: TrainConfig
) -> tuple[Network, list[CurvePoint]]:
    """Mini-batch optimization over the train split of ``dataset``.

    Records one CurvePoint per completed epoch from eval-mode passes over
    both splits. Aborts with TrainingError on a non-finite loss, naming the
    epoch and batch.
    """
    if not dataset:
        raise DatasetError("cannot train on an empty dataset")
    train_set, val_set = split_train_val(dataset, config.val_fraction, config.seed)
    train_x, train_y = _to_arrays(train_set)
    val_x, val_y = _to_arrays(val_set)
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(config)
    params = net.param_arrays()
    curves: list[CurvePoint] = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_x))
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch_idx = order[start : start + config.batch_size]
            probs, cache = forward(net, train_x[batch_idx], TRAIN, rng)
            loss = mean_cross_entropy(probs, train_y[batch_idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = backward(net, cache, train_y[batch_idx])
            optimizer.step(params, _grad_arrays(grads))

        train_loss, train_acc = _eval_split(net, train_x, train_y)
        val_loss, val_acc = _eval_split(net, val_x, val_y)
        curves.append(CurvePoint(epoch, train_loss, val_loss, train_acc, val_acc))
        if (
            config.stop_at_train_accuracy is not None
            and train_acc >= config.stop_at_train_accuracy
        ):
            break
    return net, curves


def compute_metrics(counts: ConfusionCounts) -> MetricsReport:
    """Confusion-derived scores; zero denominators give flagged zeros."""
    if counts.total <= 0:
        raise ValueError("compute_metrics needs at least one evaluated sample")
    degenerate: list[str] = []

    def ratio(name: str, num: int, den: int) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    accuracy = (counts.tp + counts.tn) / counts.total
    precision = ratio("precision", counts.tp, counts.tp + counts.fp)
    recall = ratio("recall", counts.tp, counts.tp + counts.fn)
    fpr = ratio("false_positive_rate", counts.fp, counts.fp + counts.tn)
    fnr = ratio("false_negative_rate", counts.fn, counts.fn + counts.tp)
    if precision + recall > 0:
        f_measure = 2 * precision * recall / (precision + recall)
    else:
        degenerate.append("f_measure")
        f_measure = 0.0
    return MetricsReport(
        accuracy=accuracy,
        false_positive_rate=fpr,
        false_negative_rate=fnr,
        recall=recall,
        precision=precision,
        f_measure=f_measure,
        degenerate=tuple(degenerate),
    )


def evaluate(net: Network, samples: list[Sample]) -> tuple[ConfusionCounts, MetricsReport]:
    """Eval-mode classification of labeled samples at the 0.5 fire threshold."""
    if not samples:
        raise DatasetError("cannot evaluate an empty sample set")
    images, labels = _to_arrays(samples)
    counts = ConfusionCounts()
    for start in range(0, len(images), 64):
        probs, _ = forward(net, images[start : start + 64], EVAL)
        pred_fire = probs[:, FIRE_LABEL] >= DECISION_THRESHOLD
        actual_fire = labels[start : start + 64] == FIRE_LABEL
        counts.tp += int((pred_fire & actual_fire).sum())
        counts.fp += int((pred_fire & ~actual_fire).sum())
        counts.fn += int((~pred_fire & actual_fire).sum())
        counts.tn += int((~pred_fire & ~actual_fire).sum())
    return counts, compute_metrics(counts)


def export_curves(points: list[CurvePoint], path: str | Path) -> None:
    """One CSV row per epoch under the header epoch,train_loss,val_loss,train_acc,val_acc."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_HEADER)
        for p in points:
            writer.writerow([p.epoch, p.train_loss, p.val_loss, p.train_acc, p.val_acc])


def format_metrics(report: MetricsReport) -> str:
    """Flat key=value block with the six confusion-derived rows."""
    lines = [
        f"accuracy={report.accuracy:.6f}",
        f"false_positive_rate={report.false_positive_rate:.6f}",
        f"false_negative_rate={report.false_negative_rate:.6f}",
        f"recall={report.recall:.6f}",
        f"precision={report.precision:.6f}",
        f"f_measure={report.f_measure:.6f}",
    ]
    if report.degenerate:
        lines.append("degenerate=" + ",".join(report.degenerate))
    return "\n".join(lines)
