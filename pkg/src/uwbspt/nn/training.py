"""Mini-batch training loop with early stopping on validation loss."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .models import Model
from .optim import Adam

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 300
    patience: int = 20
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs, patience must be >= 1")


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)  # epoch, train_loss, val_loss, val_acc
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stopped_early: bool = False


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("label outside [0, num_classes)")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient with respect to probs.

    Probabilities are floored before the log so an exactly-zero output
    cannot produce an infinite loss.
    """
    if probs.shape != targets.shape:
        raise ValueError(f"shape mismatch {probs.shape} vs {targets.shape}")
    batch = probs.shape[0]
    p = np.maximum(probs, PROB_FLOOR)
    loss = float(-(targets * np.log(p)).sum() / batch)
    grad = -(targets / p) / batch
    return loss, grad.astype(probs.dtype, copy=False)


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _slice_inputs(inputs: tuple[np.ndarray, ...], idx: np.ndarray) -> tuple[np.ndarray, ...]:
    return tuple(x[idx] for x in inputs)


def predict_probs(
    model: Model, inputs: tuple[np.ndarray, ...], batch_size: int = 64
) -> np.ndarray:
    n = inputs[0].shape[0]
    chunks = []
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        chunks.append(model.forward(_slice_inputs(inputs, idx), training=False))
    return np.concatenate(chunks, axis=0)


def accuracy(model: Model, inputs: tuple[np.ndarray, ...], labels: np.ndarray) -> float:
    probs = predict_probs(model, inputs)
    return float((probs.argmax(axis=1) == np.asarray(labels)).mean())


def _snapshot(model: Model) -> list[np.ndarray]:
    return [p.value.copy() for p in model.params()]


def _restore(model: Model, values: list[np.ndarray]) -> None:
    for p, v in zip(model.params(), values):
        p.value = v.copy()
        p.grad = np.zeros_like(p.value)


def evaluate_loss(
    model: Model, inputs: tuple[np.ndarray, ...], targets: np.ndarray, batch_size: int = 64
) -> tuple[float, float]:
    """Validation loss (mean over samples) and accuracy, dropout inactive."""
    n = inputs[0].shape[0]
    total = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        probs = model.forward(_slice_inputs(inputs, idx), training=False)
        loss, _ = cross_entropy(probs, targets[idx])
        total += loss * idx.size
        correct += int((probs.argmax(axis=1) == targets[idx].argmax(axis=1)).sum())
    return total / n, correct / n


def train(
    model: Model,
    train_inputs: tuple[np.ndarray, ...],
    train_labels: np.ndarray,
    val_inputs: tuple[np.ndarray, ...],
    val_labels: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    history_path=None,
) -> TrainResult:
    """Train in place; the best-validation-loss weights are restored at exit.

    Stops once validation loss has not improved for ``cfg.patience``
    consecutive epochs.  History rows carry per-epoch mean train loss plus
    validation loss and accuracy.
    """
    num_classes = model.spec.num_classes
    y_train = one_hot(train_labels, num_classes)
    y_val = one_hot(val_labels, num_classes)
    n = train_inputs[0].shape[0]
    opt = Adam(model.params(), lr=cfg.lr)
    result = TrainResult()
    best_values = _snapshot(model)
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.shuffle:
            order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        else:
            order = np.arange(n)
        loss_sum = 0.0
        for idx in _batches(n, cfg.batch_size, order):
            probs = model.forward(_slice_inputs(train_inputs, idx), training=True)
            loss, grad = cross_entropy(probs, y_train[idx])
            model.backward(grad)
            opt.step()
            loss_sum += loss * idx.size
        val_loss, val_acc = evaluate_loss(model, val_inputs, y_val)
        result.history.append(
            {
                "epoch": epoch,
                "train_loss": loss_sum / n,
                "val_loss": val_loss,
                "val_acc": val_acc,
            }
        )
        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_values = _snapshot(model)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                result.stopped_early = True
                break

    _restore(model, best_values)
    if history_path is not None:
        write_history(result.history, history_path)
    return result


def write_history(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss", "val_acc"])
        writer.writeheader()
        for row in history:
            writer.writerow(row)
