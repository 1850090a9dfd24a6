"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np

from imblens import ClassifierHead, Decomposition, EmbeddingSet, decompose


def sparse_rows(active_sets, h):
    """Indicator rows: 1.0 at the listed identities, 0 elsewhere."""
    fe = np.zeros((len(active_sets), h), dtype=np.float32)
    for r, active in enumerate(active_sets):
        fe[r, list(active)] = 1.0
    return fe


def make_setup(fe, weights, labels=None, bias=None, num_classes=None, split="other", logits=None):
    """Build (EmbeddingSet, ClassifierHead, Decomposition) from raw arrays."""
    fe = np.asarray(fe, dtype=np.float32)
    weights = np.asarray(weights, dtype=np.float32)
    if labels is None:
        labels = np.zeros(fe.shape[0], dtype=np.int64)
    if num_classes is None:
        num_classes = weights.shape[0]
    es = EmbeddingSet(
        fe=fe,
        labels=np.asarray(labels, dtype=np.int64),
        num_classes=num_classes,
        split=split,
        logits=logits,
    )
    head = ClassifierHead(weights=weights, bias=None if bias is None else np.asarray(bias, dtype=np.float32))
    return es, head, decompose(es, head)


def rand_setup(rng: np.random.Generator, n: int, h: int, c: int, with_bias: bool = True):
    """Random setup matching the oracle-equivalence recipe: fe in [0,4), weights in (-1,1)."""
    fe = rng.uniform(0.0, 4.0, size=(n, h)).astype(np.float32)
    weights = rng.uniform(-1.0, 1.0, size=(c, h)).astype(np.float32)
    bias = rng.uniform(-0.5, 0.5, size=c).astype(np.float32) if with_bias else None
    labels = rng.integers(0, c, size=n)
    return make_setup(fe, weights, labels=labels, bias=bias)


def perfect_setup(rng: np.random.Generator, per_class: int, c: int, block: int = 4, split="other"):
    """A setup whose head classifies every instance correctly.

    Each class owns a block of `block` identities; its instances activate
    only that block with values in [0.5, 2), and the weight rows are block
    indicators, so the own-class logit is positive while all others are 0.
    """
    h = c * block
    n = per_class * c
    fe = np.zeros((n, h), dtype=np.float32)
    labels = np.repeat(np.arange(c), per_class)
    for i, y in enumerate(labels):
        fe[i, y * block : (y + 1) * block] = rng.uniform(0.5, 2.0, size=block)
    weights = np.zeros((c, h), dtype=np.float32)
    for y in range(c):
        weights[y, y * block : (y + 1) * block] = 1.0
    return make_setup(fe, weights, labels=labels, split=split)


def separable_setup(per_class: int = 50):
    """Two linearly separable classes on orthogonal axes."""
    fe = np.zeros((2 * per_class, 2), dtype=np.float32)
    fe[:per_class, 0] = 1.0
    fe[per_class:, 1] = 1.0
    labels = np.array([0] * per_class + [1] * per_class, dtype=np.int64)
    return EmbeddingSet(fe=fe, labels=labels, num_classes=2)
