"""Dissect linear classifier heads through their latent feature embeddings.

The public API re-exports the main types and operations of the submodules.
Attribute access is lazy so that `imblens.cli` can cap BLAS thread pools
before the numeric stack is first imported.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # embx
    "EmbeddingSet": ".embx",
    "ClassifierHead": ".embx",
    "EmbxManifest": ".embx",
    "TensorDecl": ".embx",
    "read_embx": ".embx",
    "write_embx": ".embx",
    "load_embedding_set": ".embx",
    "load_classifier_head": ".embx",
    "file_sha256": ".embx",
    # decomposition
    "Decomposition": ".decomposition",
    "ConsistencyReport": ".decomposition",
    "AccuracyReport": ".decomposition",
    "decompose": ".decomposition",
    "check_exported_logits": ".decomposition",
    "bac_from_predictions": ".decomposition",
    "accuracy": ".decomposition",
    # topk
    "InstanceTopK": ".topk",
    "TopKReport": ".topk",
    "ContributionReport": ".topk",
    "instance_topk": ".topk",
    "coverage_ratios": ".topk",
    "class_members": ".topk",
    "union_counts": ".topk",
    "logit_contributions": ".topk",
    # class_stats
    "ClassProfile": ".class_stats",
    "WeightSummary": ".class_stats",
    "RatioReport": ".class_stats",
    "class_profiles": ".class_stats",
    "weight_summaries": ".class_stats",
    "largest_mean_ce_ratio": ".class_stats",
    "majority_class_of": ".class_stats",
    # divergence
    "OutcomePartition": ".divergence",
    "DivergenceReport": ".divergence",
    "partition_outcomes": ".divergence",
    "frobenius_divergence": ".divergence",
    "identity_overlap": ".divergence",
    "divergence_report": ".divergence",
    # probe
    "TrainConfig": ".probe",
    "TrainTrace": ".probe",
    "retrain_head": ".probe",
    "gradient_check": ".probe",
}

__all__ = sorted(_EXPORTS) + ["errors", "__version__"]


def __getattr__(name: str):
    if name in _EXPORTS:
        module = importlib.import_module(_EXPORTS[name], __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return __all__
