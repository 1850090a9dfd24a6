"""Reconstruction of a linear head's decision pipeline from stored embeddings.

Given feature embeddings FE [N,H] and class weights W [C,H], the per-class
evidence vector of instance n for class c is the element-wise product
FE[n] * W[c]; its sum plus the class bias is the logit, and the prediction
is the argmax over class logits. Evidence rows are computed on demand; the
full [N,C,H] tensor is never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embx import ClassifierHead, EmbeddingSet
from .errors import DimensionMismatchError, EmptyInputError

_BLOCK_ROWS = 8192


@dataclass
class Decomposition:
    """Logits, predictions, and an on-demand evidence-row accessor."""

    fe: np.ndarray
    weights: np.ndarray
    bias: np.ndarray | None
    logits: np.ndarray
    predictions: np.ndarray

    @property
    def n(self) -> int:
        return self.fe.shape[0]

    @property
    def h(self) -> int:
        return self.fe.shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def head(self) -> ClassifierHead:
        return ClassifierHead(weights=self.weights, bias=self.bias)

    def ce(self, n: int, c: int) -> np.ndarray:
        """Evidence row of instance n for class c (float64, length H)."""
        return self.fe[n].astype(np.float64) * self.weights[c].astype(np.float64)

    def ce_rows(self, indices: np.ndarray, c: int) -> np.ndarray:
        """Evidence rows of the given instances for one class (len(indices) x H)."""
        return self.fe[indices].astype(np.float64) * self.weights[c].astype(np.float64)

    def bias_of(self, c) -> np.ndarray | float:
        if self.bias is None:
            return np.zeros(np.shape(c), dtype=np.float64) if np.ndim(c) else 0.0
        return self.bias.astype(np.float64)[c]


@dataclass
class ConsistencyReport:
    """Agreement between recomputed and externally exported logits."""

    max_abs_err: float
    mismatched_argmax_count: int
    tol: float

    @property
    def within_tol(self) -> bool:
        return self.max_abs_err <= self.tol


@dataclass
class AccuracyReport:
    """Per-class recall, balanced accuracy, and the confusion matrix.

    `per_class_recall` holds NaN for classes without instances; those
    classes are listed in `absent_classes` and excluded from the BAC mean.
    """

    per_class_recall: np.ndarray
    bac: float
    overall_accuracy: float
    confusion: np.ndarray
    absent_classes: list[int] = field(default_factory=list)


def decompose(es: EmbeddingSet, head: ClassifierHead) -> Decomposition:
    """Compute logits and predictions for an embedding set under a head.

    Logits are accumulated in float64 so that the on-demand evidence rows
    sum back to them to within float noise. Ties in the argmax resolve to
    the lowest class index.
    """
    if es.h != head.h:
        raise DimensionMismatchError(f"embedding H={es.h} does not match head H={head.h}")
    if es.num_classes != head.num_classes:
        raise DimensionMismatchError(
            f"embedding num_classes={es.num_classes} does not match head C={head.num_classes}"
        )
    n = es.n
    w64 = head.weights.astype(np.float64).T  # [H, C]
    logits = np.empty((n, head.num_classes), dtype=np.float64)
    for start in range(0, n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, n)
        logits[start:stop] = es.fe[start:stop].astype(np.float64) @ w64
    if head.bias is not None:
        logits += head.bias.astype(np.float64)
    predictions = np.argmax(logits, axis=1).astype(np.int64)
    return Decomposition(
        fe=es.fe, weights=head.weights, bias=head.bias, logits=logits, predictions=predictions
    )


def check_exported_logits(d: Decomposition, exported: np.ndarray, tol: float = 1e-4) -> ConsistencyReport:
    """Compare recomputed logits against an exporter's logits tensor."""
    exported = np.asarray(exported, dtype=np.float64)
    if exported.shape != d.logits.shape:
        raise DimensionMismatchError(
            f"exported logits shape {exported.shape} does not match computed {d.logits.shape}"
        )
    max_abs_err = float(np.max(np.abs(d.logits - exported))) if exported.size else 0.0
    exported_pred = np.argmax(exported, axis=1)
    mismatches = int(np.count_nonzero(exported_pred != d.predictions))
    return ConsistencyReport(max_abs_err=max_abs_err, mismatched_argmax_count=mismatches, tol=tol)


def bac_from_predictions(labels: np.ndarray, predictions: np.ndarray, num_classes: int) -> AccuracyReport:
    """Accuracy metrics from raw label/prediction vectors."""
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.size == 0:
        raise EmptyInputError("cannot compute accuracy over zero instances")
    if labels.shape != predictions.shape:
        raise DimensionMismatchError(
            f"labels shape {labels.shape} does not match predictions shape {predictions.shape}"
        )
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    counts = confusion.sum(axis=1)
    recall = np.full(num_classes, np.nan)
    present = counts > 0
    recall[present] = np.diag(confusion)[present] / counts[present]
    absent = np.flatnonzero(~present).tolist()
    bac = float(np.mean(recall[present]))
    overall = float(np.trace(confusion) / labels.size)
    return AccuracyReport(
        per_class_recall=recall,
        bac=bac,
        overall_accuracy=overall,
        confusion=confusion,
        absent_classes=absent,
    )


def accuracy(d: Decomposition, labels: np.ndarray) -> AccuracyReport:
    """Accuracy metrics of a decomposition's predictions against labels.

    Balanced accuracy is the mean of per-class recall over classes that
    actually have instances; absent classes are flagged, not counted as 0.
    """
    return bac_from_predictions(labels, d.predictions, d.num_classes)
