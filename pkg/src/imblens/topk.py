"""Top-K feature relevance: how many ranked evidence entries a prediction needs.

For each instance the reference class is its prediction and the adversary is
the class with the next-largest logit. Ranking the reference class's evidence
row (or the raw feature embedding) in descending order, an instance is
"covered" at K when the top-K sum plus the reference bias strictly exceeds
the adversary logit. Class-level aggregates over these per-instance sets
quantify how concentrated or diverse each class's relevant features are:
coverage ratios per K, the most frequent member identities, the union count
of identities a class needs, and the fractional contribution of each ranked
entry to its logit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decomposition import Decomposition
from .errors import DimensionMismatchError, EmptyInputError

SPACES = ("ce", "fe")
FE_MODES = ("magnitude", "ce_aligned")
GROUPINGS = ("predicted", "true")

_BLOCK_ROWS = 4096


@dataclass
class InstanceTopK:
    """Ranked evidence of one instance against its strongest adversary."""

    instance: int
    reference_class: int
    adversary_class: int
    adversary_logit: float
    k_indices: list[int]
    k_values: list[float]
    covered: bool


@dataclass
class TopKReport:
    """Class-level top-K aggregates for one space and one grouping."""

    space: str
    k_values: list[int]
    overall_coverage: dict[int, float]
    per_class_coverage: dict[tuple[int, int], float]
    class_members: dict[int, list[tuple[int, float]]]
    union_count: dict[int, int]
    minimal_k: np.ndarray
    group_by: str = "predicted"
    member_k: int = 7
    empty_classes: list[int] = field(default_factory=list)


@dataclass
class ContributionReport:
    """Mean fractional logit contribution of each evidence rank, per class."""

    k: int
    per_class: dict[int, np.ndarray]
    largest: dict[int, float]
    excluded: dict[int, int]
    group_by: str = "predicted"


def _require_adversary(d: Decomposition):
    if d.num_classes < 2:
        raise DimensionMismatchError("top-K analysis needs at least 2 classes to form an adversary")


def _validate(space: str, fe_mode: str, group_by: str):
    if space not in SPACES:
        raise ValueError(f"space must be one of {SPACES}, got {space!r}")
    if fe_mode not in FE_MODES:
        raise ValueError(f"fe_mode must be one of {FE_MODES}, got {fe_mode!r}")
    if group_by not in GROUPINGS:
        raise ValueError(f"group_by must be one of {GROUPINGS}, got {group_by!r}")


def _adversaries(logits: np.ndarray, predictions: np.ndarray):
    """Strongest non-reference class per instance; ties to the lowest index."""
    masked = logits.copy()
    masked[np.arange(logits.shape[0]), predictions] = -np.inf
    adversary = np.argmax(masked, axis=1).astype(np.int64)
    lg_a = logits[np.arange(logits.shape[0]), adversary]
    return adversary, lg_a


def _ranked_block(d: Decomposition, rows: np.ndarray, space: str, fe_mode: str):
    """Descending-sorted identities and values for a block of instances.

    Ties sort toward the lower identity (stable sort over negated values).
    In fe space the default ranks raw fe magnitudes; ce_aligned instead keeps
    the identity order of the reference class's evidence ranking and reads
    off the fe values underneath it.
    """
    fe = d.fe[rows].astype(np.float64)
    ce = fe * d.weights.astype(np.float64)[d.predictions[rows]]
    rank_src = ce if (space == "ce" or fe_mode == "ce_aligned") else fe
    order = np.argsort(-rank_src, axis=1, kind="stable")
    values = np.take_along_axis(ce if space == "ce" else fe, order, axis=1)
    return order, values


def instance_topk(
    d: Decomposition, n: int, k: int, space: str = "ce", fe_mode: str = "magnitude"
) -> InstanceTopK:
    """Top-K ranking of a single instance and its covered flag.

    Coverage uses a strict inequality: the top-K sum plus the reference bias
    must exceed the adversary logit, so exact ties count as not covered.
    K is clamped to H.
    """
    _require_adversary(d)
    _validate(space, fe_mode, "predicted")
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if not 0 <= n < d.n:
        raise IndexError(f"instance {n} out of range for N={d.n}")
    rows = np.array([n])
    order, values = _ranked_block(d, rows, space, fe_mode)
    adversary, lg_a = _adversaries(d.logits[rows], d.predictions[rows])
    k_eff = min(k, d.h)
    ref = int(d.predictions[n])
    # Sequential prefix sum, bit-identical to the blockwise coverage scan.
    top_sum = float(np.cumsum(values[0, :k_eff])[-1]) + float(d.bias_of(ref))
    return InstanceTopK(
        instance=n,
        reference_class=ref,
        adversary_class=int(adversary[0]),
        adversary_logit=float(lg_a[0]),
        k_indices=order[0, :k_eff].tolist(),
        k_values=values[0, :k_eff].tolist(),
        covered=bool(top_sum > lg_a[0]),
    )


def _scan(d: Decomposition, k_values: list[int], space: str, fe_mode: str, member_k: int):
    """One blockwise pass: covered flags per requested K, minimal_k, member ids."""
    n, h = d.n, d.h
    ks_eff = [min(k, h) for k in k_values]
    member_k_eff = min(member_k, h)
    covered = np.zeros((n, len(k_values)), dtype=bool)
    minimal_k = np.empty(n, dtype=np.int64)
    member_ids = np.empty((n, member_k_eff), dtype=np.int64)
    adversary, lg_a = _adversaries(d.logits, d.predictions)
    bias_ref = np.asarray(d.bias_of(d.predictions), dtype=np.float64)

    for start in range(0, n, _BLOCK_ROWS):
        rows = np.arange(start, min(start + _BLOCK_ROWS, n))
        order, values = _ranked_block(d, rows, space, fe_mode)
        sums = np.cumsum(values, axis=1) + bias_ref[rows, None]
        exceeds = sums > lg_a[rows, None]
        for j, k_eff in enumerate(ks_eff):
            covered[rows, j] = exceeds[:, k_eff - 1]
        first = np.argmax(exceeds, axis=1)
        minimal_k[rows] = np.where(exceeds.any(axis=1), first + 1, h + 1)
        member_ids[rows] = order[:, :member_k_eff]
    return covered, minimal_k, member_ids, adversary, lg_a


def _group_of(d: Decomposition, labels: np.ndarray, group_by: str) -> np.ndarray:
    if group_by == "predicted":
        return d.predictions
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (d.n,):
        raise DimensionMismatchError(f"labels must be [N={d.n}], got {labels.shape}")
    return labels


def _members_from_ids(ids: np.ndarray, h: int, top_m: int) -> list[tuple[int, float]]:
    counts = np.bincount(ids.ravel(), minlength=h)
    active = np.flatnonzero(counts)
    # Sort by count descending, identity ascending.
    ranked = active[np.lexsort((active, -counts[active]))][:top_m]
    group_size = ids.shape[0]
    return [(int(i), float(counts[i] / group_size)) for i in ranked]


def coverage_ratios(
    d: Decomposition,
    labels: np.ndarray,
    k_values: list[int],
    space: str = "ce",
    group_by: str = "predicted",
    fe_mode: str = "magnitude",
    top_m: int = 10,
    member_k: int = 7,
) -> TopKReport:
    """Overall and per-class top-K coverage, plus member and union summaries.

    `overall_coverage[K]` is the fraction of all instances covered at K;
    `per_class_coverage[(c, K)]` restricts to instances grouped into class c
    (by predicted label by default). Classes without instances are listed in
    `empty_classes` and omitted from the maps rather than reported as 0.
    Member lists and union counts are computed at `member_k`.
    """
    _require_adversary(d)
    _validate(space, fe_mode, group_by)
    if not k_values or any(k < 1 for k in k_values):
        raise ValueError(f"k_values must be non-empty with every K >= 1, got {k_values}")
    if d.n == 0:
        raise EmptyInputError("no instances")

    group = _group_of(d, labels, group_by)
    covered, minimal_k, member_ids, _, _ = _scan(d, list(k_values), space, fe_mode, member_k)

    overall = {int(k): float(covered[:, j].mean()) for j, k in enumerate(k_values)}
    per_class: dict[tuple[int, int], float] = {}
    class_members: dict[int, list[tuple[int, float]]] = {}
    union_count: dict[int, int] = {}
    empty: list[int] = []
    for c in range(d.num_classes):
        in_class = group == c
        if not in_class.any():
            empty.append(c)
            continue
        for j, k in enumerate(k_values):
            per_class[(c, int(k))] = float(covered[in_class, j].mean())
        class_members[c] = _members_from_ids(member_ids[in_class], d.h, top_m)
        union_count[c] = int(np.unique(member_ids[in_class]).size)

    return TopKReport(
        space=space,
        k_values=[int(k) for k in k_values],
        overall_coverage=overall,
        per_class_coverage=per_class,
        class_members=class_members,
        union_count=union_count,
        minimal_k=minimal_k,
        group_by=group_by,
        member_k=member_k,
        empty_classes=empty,
    )


def class_members(
    d: Decomposition,
    labels: np.ndarray,
    k: int,
    space: str = "ce",
    top_m: int = 10,
    group_by: str = "predicted",
    fe_mode: str = "magnitude",
) -> dict[int, list[tuple[int, float]]]:
    """Most frequent top-K identities per class with occurrence ratios.

    Tallies each feature identity's membership in per-instance top-K sets
    within a class and returns the `top_m` identities by count (count ties
    resolve to the lower identity). The ratio divides by the class size.
    """
    _require_adversary(d)
    _validate(space, fe_mode, group_by)
    if k < 1 or top_m < 1:
        raise ValueError(f"K and top_m must be >= 1, got K={k}, top_m={top_m}")
    group = _group_of(d, labels, group_by)
    _, _, member_ids, _, _ = _scan(d, [1], space, fe_mode, member_k=k)
    out: dict[int, list[tuple[int, float]]] = {}
    for c in range(d.num_classes):
        in_class = group == c
        if in_class.any():
            out[c] = _members_from_ids(member_ids[in_class], d.h, top_m)
    return out


def union_counts(
    d: Decomposition,
    labels: np.ndarray,
    k: int,
    space: str = "ce",
    group_by: str = "predicted",
    fe_mode: str = "magnitude",
) -> dict[int, int]:
    """Cardinality of the union of per-instance top-K identity sets, per class."""
    _require_adversary(d)
    _validate(space, fe_mode, group_by)
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    group = _group_of(d, labels, group_by)
    _, _, member_ids, _, _ = _scan(d, [1], space, fe_mode, member_k=k)
    out: dict[int, int] = {}
    for c in range(d.num_classes):
        in_class = group == c
        if in_class.any():
            out[c] = int(np.unique(member_ids[in_class]).size)
    return out


def logit_contributions(
    d: Decomposition, labels: np.ndarray, k: int, group_by: str = "predicted"
) -> ContributionReport:
    """Mean fraction of the reference logit carried by each evidence rank.

    For every instance the reference class's evidence row is sorted
    descending and each of the first K entries is divided by the reference
    logit. Instances with a non-positive reference logit have no meaningful
    fraction; they are excluded and counted per class.
    """
    _require_adversary(d)
    _validate("ce", "magnitude", group_by)
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    group = _group_of(d, labels, group_by)
    k_eff = min(k, d.h)
    lg_r = d.logits[np.arange(d.n), d.predictions]

    fractions = np.empty((d.n, k_eff), dtype=np.float64)
    for start in range(0, d.n, _BLOCK_ROWS):
        rows = np.arange(start, min(start + _BLOCK_ROWS, d.n))
        _, values = _ranked_block(d, rows, "ce", "magnitude")
        with np.errstate(divide="ignore", invalid="ignore"):
            fractions[rows] = values[:, :k_eff] / lg_r[rows, None]

    usable = lg_r > 0
    per_class: dict[int, np.ndarray] = {}
    largest: dict[int, float] = {}
    excluded: dict[int, int] = {}
    for c in range(d.num_classes):
        in_class = group == c
        if not in_class.any():
            continue
        excluded[c] = int(np.count_nonzero(in_class & ~usable))
        keep = in_class & usable
        if keep.any():
            mean = fractions[keep].mean(axis=0)
            per_class[c] = mean
            largest[c] = float(mean[0])
    return ContributionReport(k=k_eff, per_class=per_class, largest=largest, excluded=excluded, group_by=group_by)
