"""Train/test divergence of per-class mean features, split by outcome.

Test instances of a class are partitioned into true positives and false
positives (false negatives are carried along for completeness). Each
partition's mean vector is compared against the train split's per-class mean
in the same space: per-class L2 norms of the differences, plus one aggregate
Frobenius norm over the stacked difference rows per partition kind. A second
diagnostic measures how much the most frequent top-K feature identities of
train and test partitions agree. Correct predictions stay near the train
means; false positives drift far from them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decomposition import Decomposition
from .embx import EmbeddingSet
from .errors import DimensionMismatchError
from .topk import SPACES, _scan

RANKINGS = ("topk", "activation")


@dataclass
class OutcomePartition:
    """One class's test instances split by prediction outcome."""

    class_index: int
    tp_indices: np.ndarray
    fp_indices: np.ndarray
    fn_indices: np.ndarray


@dataclass
class DivergenceReport:
    """Mean-vector divergences and identity overlaps between train and test."""

    space: str
    fb_train_tp: float | None
    fb_train_fp: float | None
    per_class_fb: dict[int, tuple[float | None, float | None]]
    overlap_tp: float | None = None
    overlap_fp: float | None = None
    per_class_overlap: dict[int, tuple[float | None, float | None]] = field(default_factory=dict)
    counts: dict[int, dict[str, int]] = field(default_factory=dict)
    excluded_tp: list[int] = field(default_factory=list)
    excluded_fp: list[int] = field(default_factory=list)


def partition_outcomes(
    labels: np.ndarray, predictions: np.ndarray, num_classes: int | None = None
) -> list[OutcomePartition]:
    """Per class: true-positive, false-positive, and false-negative indices.

    Emits one partition per class index, including classes where some sets
    are empty; emptiness is visible in the index arrays themselves.
    """
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape or labels.ndim != 1:
        raise DimensionMismatchError(
            f"labels {labels.shape} and predictions {predictions.shape} must be equal-length vectors"
        )
    if num_classes is None:
        num_classes = int(max(labels.max(initial=-1), predictions.max(initial=-1))) + 1
    out = []
    for c in range(num_classes):
        is_label = labels == c
        is_pred = predictions == c
        out.append(
            OutcomePartition(
                class_index=c,
                tp_indices=np.flatnonzero(is_label & is_pred),
                fp_indices=np.flatnonzero(~is_label & is_pred),
                fn_indices=np.flatnonzero(is_label & ~is_pred),
            )
        )
    return out


def _space_rows(fe: np.ndarray, weights: np.ndarray, rows: np.ndarray, c: int, space: str):
    """Vectors of the given instances in the chosen space, as float64.

    In ce space every instance is projected through class c's own weight row,
    so train and partition means are compared on the same axis system.
    """
    block = fe[rows].astype(np.float64)
    if space == "ce":
        return block * weights.astype(np.float64)[c]
    return block


def _mean_or_none(fe, weights, rows, c, space):
    if rows.size == 0:
        return None
    return _space_rows(fe, weights, rows, c, space).mean(axis=0)


def frobenius_divergence(
    train: EmbeddingSet, test: EmbeddingSet, d_test: Decomposition, space: str = "fe"
) -> DivergenceReport:
    """Norms of per-class mean differences between train and test partitions.

    per_class_fb maps class -> (tp norm, fp norm); an entry is None when the
    train group or the partition is empty, and such classes are listed in
    excluded_tp / excluded_fp. The aggregates stack the available difference
    rows into a matrix and take its Frobenius norm; with no rows at all the
    aggregate is None rather than 0.
    """
    if space not in SPACES:
        raise ValueError(f"space must be one of {SPACES}, got {space!r}")
    if train.h != test.h or train.num_classes != test.num_classes:
        raise DimensionMismatchError(
            f"train [H={train.h},C={train.num_classes}] does not match "
            f"test [H={test.h},C={test.num_classes}]"
        )
    if test.n != d_test.n or test.h != d_test.h:
        raise DimensionMismatchError("test set does not match its decomposition")

    parts = partition_outcomes(test.labels, d_test.predictions, test.num_classes)
    per_class: dict[int, tuple[float | None, float | None]] = {}
    counts: dict[int, dict[str, int]] = {}
    diff_tp, diff_fp = [], []
    excluded_tp, excluded_fp = [], []
    for part in parts:
        c = part.class_index
        counts[c] = {
            "train": int(np.count_nonzero(train.labels == c)),
            "tp": int(part.tp_indices.size),
            "fp": int(part.fp_indices.size),
            "fn": int(part.fn_indices.size),
        }
        mu_train = _mean_or_none(train.fe, d_test.weights, np.flatnonzero(train.labels == c), c, space)
        mu_tp = _mean_or_none(test.fe, d_test.weights, part.tp_indices, c, space)
        mu_fp = _mean_or_none(test.fe, d_test.weights, part.fp_indices, c, space)

        norm_tp = norm_fp = None
        if mu_train is not None and mu_tp is not None:
            diff_tp.append(mu_train - mu_tp)
            norm_tp = float(np.linalg.norm(diff_tp[-1]))
        else:
            excluded_tp.append(c)
        if mu_train is not None and mu_fp is not None:
            diff_fp.append(mu_train - mu_fp)
            norm_fp = float(np.linalg.norm(diff_fp[-1]))
        else:
            excluded_fp.append(c)
        per_class[c] = (norm_tp, norm_fp)

    return DivergenceReport(
        space=space,
        fb_train_tp=float(np.linalg.norm(np.stack(diff_tp))) if diff_tp else None,
        fb_train_fp=float(np.linalg.norm(np.stack(diff_fp))) if diff_fp else None,
        per_class_fb=per_class,
        counts=counts,
        excluded_tp=excluded_tp,
        excluded_fp=excluded_fp,
    )


def _top_identity_set(
    d: Decomposition, rows: np.ndarray, member_ids: np.ndarray, top_m: int, rank_by: str
) -> frozenset[int]:
    """The top_m identities by frequency within a group of instances.

    Frequency is membership in per-instance top-K sets (rank_by="topk") or
    strictly-positive activity (rank_by="activation"). All H identities
    participate in the ranking; count ties resolve to the lower identity, so
    identical groups always produce identical sets.
    """
    if rank_by == "topk":
        freq = np.bincount(member_ids[rows].ravel(), minlength=d.h)
    else:
        freq = (d.fe[rows] > 0).sum(axis=0)
    identities = np.arange(d.h)
    ranked = identities[np.lexsort((identities, -freq))]
    return frozenset(int(i) for i in ranked[:top_m])


def identity_overlap(
    train: EmbeddingSet,
    test: EmbeddingSet,
    d_train: Decomposition,
    d_test: Decomposition,
    space: str = "fe",
    top_m: int = 10,
    k: int = 7,
    rank_by: str = "topk",
) -> tuple[float | None, float | None, dict[int, tuple[float | None, float | None]]]:
    """Agreement of most-frequent top-K identities between train and test.

    Per class, the top_m most frequent identities are computed over the
    train group (true label) and over each test partition; the overlap is
    |intersection| / top_m. Aggregates average over classes whose partition
    and train group are both non-empty; classes excluded on both sides make
    the aggregate None.
    """
    if space not in SPACES:
        raise ValueError(f"space must be one of {SPACES}, got {space!r}")
    if rank_by not in RANKINGS:
        raise ValueError(f"rank_by must be one of {RANKINGS}, got {rank_by!r}")
    if train.h != test.h or train.num_classes != test.num_classes:
        raise DimensionMismatchError("train and test shapes do not match")
    if not 1 <= top_m <= train.h:
        raise ValueError(f"top_m must be in [1, H={train.h}], got {top_m}")
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")

    members_train = members_test = None
    if rank_by == "topk":
        _, _, members_train, _, _ = _scan(d_train, [1], space, "magnitude", member_k=k)
        _, _, members_test, _, _ = _scan(d_test, [1], space, "magnitude", member_k=k)

    parts = partition_outcomes(test.labels, d_test.predictions, test.num_classes)
    per_class: dict[int, tuple[float | None, float | None]] = {}
    vals_tp, vals_fp = [], []
    for part in parts:
        c = part.class_index
        train_rows = np.flatnonzero(train.labels == c)
        ov_tp = ov_fp = None
        if train_rows.size:
            base = _top_identity_set(d_train, train_rows, members_train, top_m, rank_by)
            if part.tp_indices.size:
                got = _top_identity_set(d_test, part.tp_indices, members_test, top_m, rank_by)
                ov_tp = len(base & got) / top_m
                vals_tp.append(ov_tp)
            if part.fp_indices.size:
                got = _top_identity_set(d_test, part.fp_indices, members_test, top_m, rank_by)
                ov_fp = len(base & got) / top_m
                vals_fp.append(ov_fp)
        per_class[c] = (ov_tp, ov_fp)

    agg_tp = float(np.mean(vals_tp)) if vals_tp else None
    agg_fp = float(np.mean(vals_fp)) if vals_fp else None
    return agg_tp, agg_fp, per_class


def divergence_report(
    train: EmbeddingSet,
    test: EmbeddingSet,
    d_train: Decomposition,
    d_test: Decomposition,
    space: str = "fe",
    top_m: int = 10,
    k: int = 7,
    rank_by: str = "topk",
) -> DivergenceReport:
    """Full divergence diagnostics: Frobenius norms plus identity overlaps."""
    report = frobenius_divergence(train, test, d_test, space)
    ov_tp, ov_fp, per_class = identity_overlap(
        train, test, d_train, d_test, space, top_m=top_m, k=k, rank_by=rank_by
    )
    report.overlap_tp = ov_tp
    report.overlap_fp = ov_fp
    report.per_class_overlap = per_class
    return report
