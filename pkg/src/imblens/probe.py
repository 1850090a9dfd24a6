"""Deterministic retraining of the linear head on stored feature embeddings.

Full-batch gradient descent on mean softmax cross-entropy, in float64, with
no data shuffling: identical data, config, and seed reproduce the result
bit for bit. The returned head is the epoch with the best balanced accuracy
(on the eval split when given, else on train), so a long schedule cannot
degrade the reported classifier. A finite-difference gradient check guards
the analytic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decomposition import bac_from_predictions
from .embx import ClassifierHead, EmbeddingSet
from .errors import DimensionMismatchError, TrainingDivergedError

INITS = ("zeros", "scaled_uniform")
SCHEDULES = ("cosine", "constant")


@dataclass
class TrainConfig:
    """Hyperparameters of the full-batch descent.

    learning_rate decays with a cosine schedule down to lr_min by default;
    weight_decay applies to weights only, never the bias. class_balanced
    reweights the loss by inverse class frequency.
    """

    epochs: int = 500
    learning_rate: float = 0.1
    weight_decay: float = 1e-4
    seed: int = 0
    init: str = "zeros"
    lr_schedule: str = "cosine"
    lr_min: float = 1e-3
    class_balanced: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        if self.lr_schedule not in SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {SCHEDULES}, got {self.lr_schedule!r}")

    def rate_at(self, epoch: int) -> float:
        if self.lr_schedule == "constant" or self.epochs == 1:
            return self.learning_rate
        lo = min(self.lr_min, self.learning_rate)
        span = self.learning_rate - lo
        return lo + 0.5 * span * (1.0 + np.cos(np.pi * epoch / (self.epochs - 1)))


@dataclass
class TrainTrace:
    """Per-epoch loss and balanced accuracy, plus the selected head."""

    per_epoch_loss: list[float]
    per_epoch_bac: list[float]
    final_head: ClassifierHead
    best_epoch: int = 0
    eval_used: bool = False
    config: TrainConfig = field(default_factory=TrainConfig)


def _instance_weights(labels: np.ndarray, num_classes: int, class_balanced: bool) -> np.ndarray:
    n = labels.shape[0]
    if not class_balanced:
        return np.full(n, 1.0 / n)
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    inv = 1.0 / counts[labels]
    return inv / inv.sum()


def _loss_grad(fe, labels, w, b, inst_w):
    """Weighted softmax cross-entropy with analytic gradients, all float64."""
    z = fe @ w.T + b
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float(np.sum(inst_w * (lse - z[np.arange(z.shape[0]), labels])))
    p = np.exp(z - lse[:, None])
    p[np.arange(z.shape[0]), labels] -= 1.0
    p *= inst_w[:, None]
    return loss, p.T @ fe, p.sum(axis=0), z


def _loss_only(fe, labels, w, b, inst_w):
    z = fe @ w.T + b
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.sum(inst_w * (lse - z[np.arange(z.shape[0]), labels])))


def _init_params(cfg: TrainConfig, num_classes: int, h: int):
    b = np.zeros(num_classes, dtype=np.float64)
    if cfg.init == "zeros":
        return np.zeros((num_classes, h), dtype=np.float64), b
    rng = np.random.default_rng(cfg.seed)
    bound = 1.0 / np.sqrt(h)
    return rng.uniform(-bound, bound, size=(num_classes, h)), b


def _to_head(w: np.ndarray, b: np.ndarray) -> ClassifierHead:
    return ClassifierHead(weights=w.astype(np.float32), bias=b.astype(np.float32))


def retrain_head(
    train: EmbeddingSet, cfg: TrainConfig | None = None, eval: EmbeddingSet | None = None
) -> TrainTrace:
    """Fit a fresh linear head to the train embeddings by gradient descent.

    Each epoch records the loss and balanced accuracy of the current
    parameters, then applies one full-batch update; the trace therefore
    starts at the initial parameters. final_head is the earliest epoch with
    the highest recorded balanced accuracy. A non-finite loss, or parameters
    that no longer fit float32, aborts with the partial trace attached to
    the error.
    """
    cfg = cfg or TrainConfig()
    if eval is not None and (eval.h != train.h or eval.num_classes != train.num_classes):
        raise DimensionMismatchError(
            f"eval [H={eval.h},C={eval.num_classes}] does not match "
            f"train [H={train.h},C={train.num_classes}]"
        )
    fe = train.fe.astype(np.float64)
    labels = train.labels
    c = train.num_classes
    inst_w = _instance_weights(labels, c, cfg.class_balanced)
    w, b = _init_params(cfg, c, train.h)
    eval_fe = eval.fe.astype(np.float64) if eval is not None else None

    losses: list[float] = []
    bacs: list[float] = []
    best_bac, best_epoch, best = -1.0, 0, (w.copy(), b.copy())
    for epoch in range(cfg.epochs):
        # Parameters the result head cannot represent count as divergence;
        # checking before recording keeps the trace and selection coherent.
        with np.errstate(over="ignore", invalid="ignore"):
            representable = bool(
                np.isfinite(w.astype(np.float32)).all() and np.isfinite(b.astype(np.float32)).all()
            )
        if not representable:
            partial = TrainTrace(losses, bacs, _to_head(*best), best_epoch, eval is not None, cfg)
            raise TrainingDivergedError(f"parameters overflowed float32 at epoch {epoch}", trace=partial)
        loss, gw, gb, z = _loss_grad(fe, labels, w, b, inst_w)
        if not np.isfinite(loss):
            partial = TrainTrace(losses, bacs, _to_head(*best), best_epoch, eval is not None, cfg)
            raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}", trace=partial)
        if eval is not None:
            preds = np.argmax(eval_fe @ w.T + b, axis=1)
            bac = bac_from_predictions(eval.labels, preds, c).bac
        else:
            bac = bac_from_predictions(labels, np.argmax(z, axis=1), c).bac
        losses.append(loss)
        bacs.append(bac)
        if bac > best_bac:
            best_bac, best_epoch, best = bac, epoch, (w.copy(), b.copy())
        lr = cfg.rate_at(epoch)
        w -= lr * (gw + cfg.weight_decay * w)
        b -= lr * gb

    return TrainTrace(losses, bacs, _to_head(*best), best_epoch, eval is not None, cfg)


def gradient_check(train: EmbeddingSet, head: ClassifierHead, epsilon: float = 1e-4) -> float:
    """Max relative error of the analytic gradient vs central differences.

    Perturbs every weight entry (and every bias entry when the head has one)
    by +/- epsilon. Intended for small N; cost is two loss evaluations per
    parameter.
    """
    if head.h != train.h:
        raise DimensionMismatchError(f"head H={head.h} does not match train H={train.h}")
    fe = train.fe.astype(np.float64)
    labels = train.labels
    inst_w = _instance_weights(labels, train.num_classes, class_balanced=False)
    w = head.weights.astype(np.float64)
    b = head.bias.astype(np.float64) if head.bias is not None else np.zeros(head.num_classes)
    _, gw, gb, _ = _loss_grad(fe, labels, w, b, inst_w)

    def central(theta, grad):
        worst = 0.0
        for idx in np.ndindex(theta.shape):
            orig = theta[idx]
            theta[idx] = orig + epsilon
            hi = _loss_only(fe, labels, w, b, inst_w)
            theta[idx] = orig - epsilon
            lo = _loss_only(fe, labels, w, b, inst_w)
            theta[idx] = orig
            numeric = (hi - lo) / (2.0 * epsilon)
            analytic = grad[idx]
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
        return worst

    worst = central(w, gw)
    if head.bias is not None:
        worst = max(worst, central(b, gb))
    return worst
