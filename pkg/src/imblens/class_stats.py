"""Per-class feature statistics and classifier-weight summaries.

Class profiles average each feature identity over the instances grouped into
a class: raw embedding means, the class's own evidence-row means, and how
often each identity is active. Weight summaries rank each class's weight row
by absolute value. The largest-mean-evidence ratio compares the majority
class's strongest feature against the average of the other classes' strongest
features; under imbalance that ratio drifts well above 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import Decomposition
from .embx import ClassifierHead, EmbeddingSet
from .errors import DimensionMismatchError, EmptyInputError

GROUPINGS = ("predicted", "true")


@dataclass
class ClassProfile:
    """Mean feature statistics of one class's instance group."""

    class_index: int
    mean_fe: np.ndarray
    mean_ce: np.ndarray
    fe_frequency: np.ndarray
    count: int


@dataclass
class WeightSummary:
    """One class's weight row ranked by absolute value."""

    class_index: int
    top_weights: list[tuple[int, float]]
    top10_abs_sum: float
    max_abs_weight: float


@dataclass
class RatioReport:
    """Majority-vs-rest comparison of the largest per-class mean evidence.

    ratio is others_avg / majority_max, or None when majority_max is zero.
    """

    majority_class: int
    majority_max: float
    others_avg: float
    ratio: float | None


def majority_class_of(es: EmbeddingSet) -> int:
    """Class with the most instances; ties resolve to the lowest index."""
    counts = es.class_counts()
    if counts.sum() == 0:
        raise EmptyInputError("no instances")
    return int(np.argmax(counts))


def class_profiles(
    es: EmbeddingSet,
    d: Decomposition,
    group_by: str = "true",
    activity_eps: float = 0.0,
) -> list[ClassProfile]:
    """Mean fe, own-class mean evidence, and activity frequency per class.

    mean_ce averages fe * W[c] over the instances grouped into class c, i.e.
    each class's evidence for itself. fe_frequency[h] is the fraction of the
    group with fe[h] strictly above activity_eps (post-ReLU activity; the
    epsilon exists for exports with denormal noise). Classes without
    instances are omitted; output is ordered by class index.
    """
    if group_by not in GROUPINGS:
        raise ValueError(f"group_by must be one of {GROUPINGS}, got {group_by!r}")
    if es.n != d.n or es.h != d.h:
        raise DimensionMismatchError(
            f"embedding set [{es.n},{es.h}] does not match decomposition [{d.n},{d.h}]"
        )
    group = es.labels if group_by == "true" else d.predictions
    fe64 = d.fe.astype(np.float64)
    w64 = d.weights.astype(np.float64)
    profiles = []
    for c in range(d.num_classes):
        rows = np.flatnonzero(group == c)
        if rows.size == 0:
            continue
        class_fe = fe64[rows]
        mean_fe = class_fe.mean(axis=0)
        profiles.append(
            ClassProfile(
                class_index=c,
                mean_fe=mean_fe,
                mean_ce=(class_fe * w64[c]).mean(axis=0),
                fe_frequency=(class_fe > activity_eps).mean(axis=0),
                count=int(rows.size),
            )
        )
    return profiles


def weight_summaries(head: ClassifierHead, top_m: int = 10) -> list[WeightSummary]:
    """Per class, |weight| entries sorted descending with their identities.

    top10_abs_sum always sums the 10 largest |weight| entries (all of them
    when H < 10) regardless of top_m. Ties rank the lower identity first.
    """
    if top_m < 1:
        raise ValueError(f"top_m must be >= 1, got {top_m}")
    absw = np.abs(head.weights.astype(np.float64))
    out = []
    for c in range(head.num_classes):
        order = np.argsort(-absw[c], kind="stable")
        ranked = [(int(i), float(absw[c, i])) for i in order[: min(top_m, head.h)]]
        out.append(
            WeightSummary(
                class_index=c,
                top_weights=ranked,
                top10_abs_sum=float(absw[c, order[: min(10, head.h)]].sum()),
                max_abs_weight=float(absw[c, order[0]]),
            )
        )
    return out


def largest_mean_ce_ratio(profiles: list[ClassProfile], majority_class: int) -> RatioReport:
    """How much larger the other classes' peak mean evidence is than the majority's.

    majority_max is the majority class's largest mean_ce entry; others_avg
    averages the other profiles' largest entries; ratio divides them. A zero
    majority_max makes the ratio undefined, reported as None.
    """
    if len(profiles) < 2:
        raise DimensionMismatchError("ratio needs at least 2 class profiles")
    by_class = {p.class_index: p for p in profiles}
    if majority_class not in by_class:
        raise ValueError(f"majority class {majority_class} has no profile")
    majority_max = float(by_class[majority_class].mean_ce.max())
    others = [float(p.mean_ce.max()) for p in profiles if p.class_index != majority_class]
    others_avg = float(np.mean(others))
    ratio = None if majority_max == 0.0 else others_avg / majority_max
    return RatioReport(
        majority_class=majority_class,
        majority_max=majority_max,
        others_avg=others_avg,
        ratio=ratio,
    )
