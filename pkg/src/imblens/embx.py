"""EMBX v1: a neutral on-disk container for embeddings and classifier weights.

An EMBX directory holds a `manifest.json` plus one raw binary file per tensor
(row-major, little-endian, dtypes f32/i64 only). Any training framework can
emit it with a few lines of code, and the analysis side can load it without
framework dependencies.

Two object kinds live in this container:
  - embedding sets: `fe` [N,H] f32 with `labels` [N] i64, optional `logits`
    [N,C] f32
  - classifier heads: `weights` [C,H] f32, optional `bias` [C] f32
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IoFailureError,
    LabelOutOfRangeError,
    MalformedManifestError,
    MissingManifestError,
    NegativeFEError,
    NonFinitePayloadError,
    ShapeMismatchError,
)

FORMAT_VERSION = "embx-1"
MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "test", "other")

_DTYPES = {"f32": np.dtype("<f4"), "i64": np.dtype("<i8")}


@dataclass
class TensorDecl:
    """One tensor entry of a manifest."""

    name: str
    file: str
    dtype: str
    shape: list[int]
    layout: str = "row-major"
    byte_order: str = "little-endian"

    def nbytes(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n * _DTYPES[self.dtype].itemsize


@dataclass
class EmbxManifest:
    """Parsed and validated manifest.json."""

    format_version: str
    tensors: list[TensorDecl]
    metadata: dict[str, str] = field(default_factory=dict)

    def tensor(self, name: str) -> TensorDecl | None:
        for decl in self.tensors:
            if decl.name == name:
                return decl
        return None


@dataclass
class EmbeddingSet:
    """N instances of H-dimensional post-threshold feature embeddings.

    `fe` is stored as float32 (the wire dtype) and must be non-negative;
    `labels` are int64 class indices below `num_classes`. `logits` is an
    optional [N, C] float32 matrix exported alongside the embeddings.
    `allow_signed` downgrades the non-negativity invariant to a warning,
    for heads whose extractor does not end in a ReLU-style threshold.
    """

    fe: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "other"
    logits: np.ndarray | None = None
    allow_signed: bool = False

    def __post_init__(self):
        self.fe = np.ascontiguousarray(self.fe, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.fe.ndim != 2 or self.fe.shape[0] < 1 or self.fe.shape[1] < 1:
            raise ShapeMismatchError(f"fe must be [N,H] with N,H >= 1, got {self.fe.shape}")
        if self.labels.shape != (self.fe.shape[0],):
            raise ShapeMismatchError(
                f"labels must be [N={self.fe.shape[0]}], got {self.labels.shape}"
            )
        if self.num_classes < 1:
            raise MalformedManifestError(f"num_classes must be positive, got {self.num_classes}")
        if self.split not in SPLITS:
            raise MalformedManifestError(f"split must be one of {SPLITS}, got {self.split!r}")
        if not np.isfinite(self.fe).all():
            raise NonFinitePayloadError("fe contains NaN or Inf")
        if (self.fe < 0).any():
            if not self.allow_signed:
                raise NegativeFEError(
                    "fe contains negative entries; embeddings must be post-threshold "
                    "(pass allow_signed_fe to downgrade to a warning)"
                )
            warnings.warn("fe contains negative entries; continuing (allow_signed set)", stacklevel=3)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelOutOfRangeError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )
        if self.logits is not None:
            self.logits = np.ascontiguousarray(self.logits, dtype=np.float32)
            if self.logits.shape != (self.n, self.num_classes):
                raise ShapeMismatchError(
                    f"logits must be [N,C]=({self.n},{self.num_classes}), got {self.logits.shape}"
                )
            if not np.isfinite(self.logits).all():
                raise NonFinitePayloadError("logits contain NaN or Inf")

    @property
    def n(self) -> int:
        return self.fe.shape[0]

    @property
    def h(self) -> int:
        return self.fe.shape[1]

    def class_counts(self) -> np.ndarray:
        """Instance count per class, length num_classes."""
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass
class ClassifierHead:
    """Final linear layer: weight matrix [C, H] and optional bias [C]."""

    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float32)
        if self.weights.ndim != 2 or self.weights.shape[0] < 1 or self.weights.shape[1] < 1:
            raise ShapeMismatchError(f"weights must be [C,H] with C,H >= 1, got {self.weights.shape}")
        if not np.isfinite(self.weights).all():
            raise NonFinitePayloadError("weights contain NaN or Inf")
        if self.bias is not None:
            self.bias = np.ascontiguousarray(self.bias, dtype=np.float32)
            if self.bias.shape != (self.num_classes,):
                raise ShapeMismatchError(
                    f"bias must be [C={self.num_classes}], got {self.bias.shape}"
                )
            if not np.isfinite(self.bias).all():
                raise NonFinitePayloadError("bias contains NaN or Inf")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def h(self) -> int:
        return self.weights.shape[1]


def _parse_manifest(path: str) -> EmbxManifest:
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        raise MissingManifestError(f"no {MANIFEST_NAME} in {path}")
    try:
        with open(manifest_path, encoding="utf-8") as f:
            raw = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedManifestError(f"{manifest_path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise MalformedManifestError(f"{manifest_path}: top level must be an object")
    if raw.get("format_version") != FORMAT_VERSION:
        raise MalformedManifestError(
            f"format_version must be {FORMAT_VERSION!r}, got {raw.get('format_version')!r}"
        )
    tensors_raw = raw.get("tensors")
    if not isinstance(tensors_raw, list) or not tensors_raw:
        raise MalformedManifestError("manifest must declare a non-empty tensors list")

    tensors = []
    for entry in tensors_raw:
        if not isinstance(entry, dict):
            raise MalformedManifestError("tensor declarations must be objects")
        missing = {"name", "file", "dtype", "shape"} - entry.keys()
        if missing:
            raise MalformedManifestError(f"tensor declaration missing keys: {sorted(missing)}")
        if entry["dtype"] not in _DTYPES:
            raise MalformedManifestError(f"dtype must be one of {sorted(_DTYPES)}, got {entry['dtype']!r}")
        shape = entry["shape"]
        if (
            not isinstance(shape, list)
            or not shape
            or not all(isinstance(s, int) and s > 0 for s in shape)
        ):
            raise MalformedManifestError(f"shape must be a list of positive integers, got {shape!r}")
        if entry.get("layout", "row-major") != "row-major":
            raise MalformedManifestError(f"layout must be 'row-major', got {entry.get('layout')!r}")
        if entry.get("byte_order", "little-endian") != "little-endian":
            raise MalformedManifestError(
                f"byte_order must be 'little-endian', got {entry.get('byte_order')!r}"
            )
        file_rel = entry["file"]
        if not isinstance(file_rel, str) or os.path.isabs(file_rel) or ".." in file_rel.split("/"):
            raise MalformedManifestError(f"tensor file must be a relative path, got {file_rel!r}")
        tensors.append(
            TensorDecl(name=entry["name"], file=file_rel, dtype=entry["dtype"], shape=list(shape))
        )

    names = [t.name for t in tensors]
    if len(set(names)) != len(names):
        raise MalformedManifestError(f"tensor names must be unique, got {names}")

    metadata = raw.get("metadata", {})
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise MalformedManifestError("metadata must be a string-to-string map")
    if "num_classes" in metadata:
        try:
            nc = int(metadata["num_classes"])
        except ValueError:
            nc = -1
        if nc < 1:
            raise MalformedManifestError(
                f"metadata num_classes must be a positive integer, got {metadata['num_classes']!r}"
            )
    return EmbxManifest(format_version=FORMAT_VERSION, tensors=tensors, metadata=dict(metadata))


def _load_tensor(path: str, decl: TensorDecl) -> np.ndarray:
    file_path = os.path.join(path, decl.file)
    if not os.path.isfile(file_path):
        raise MalformedManifestError(f"declared tensor file missing: {file_path}")
    actual = os.path.getsize(file_path)
    if actual != decl.nbytes():
        raise ShapeMismatchError(
            f"{decl.name}: file holds {actual} bytes but shape {decl.shape} "
            f"({decl.dtype}) requires {decl.nbytes()}"
        )
    arr = np.fromfile(file_path, dtype=_DTYPES[decl.dtype]).reshape(decl.shape)
    if decl.dtype == "f32" and not np.isfinite(arr).all():
        raise NonFinitePayloadError(f"{decl.name}: payload contains NaN or Inf")
    return arr


def read_embx(path: str, allow_signed_fe: bool = False):
    """Load an EMBX directory.

    Returns (manifest, obj) where obj is an EmbeddingSet or a ClassifierHead
    depending on the tensors present. With `allow_signed_fe`, negative fe
    entries are downgraded from a hard error to a warning (for heads that do
    not end in a ReLU-style threshold).
    """
    manifest = _parse_manifest(path)
    names = {t.name for t in manifest.tensors}

    if "fe" in names and "weights" in names:
        raise MalformedManifestError("directory declares both 'fe' and 'weights'; kinds are exclusive")

    if "fe" in names:
        if "labels" not in names:
            raise MalformedManifestError("embedding set requires a 'labels' tensor")
        fe_decl = manifest.tensor("fe")
        labels_decl = manifest.tensor("labels")
        if fe_decl.dtype != "f32" or len(fe_decl.shape) != 2:
            raise MalformedManifestError(f"'fe' must be a 2-d f32 tensor, got {fe_decl.dtype} {fe_decl.shape}")
        if labels_decl.dtype != "i64" or len(labels_decl.shape) != 1:
            raise MalformedManifestError(
                f"'labels' must be a 1-d i64 tensor, got {labels_decl.dtype} {labels_decl.shape}"
            )
        fe = _load_tensor(path, fe_decl)
        labels = _load_tensor(path, labels_decl)
        if labels.shape[0] != fe.shape[0]:
            raise ShapeMismatchError(
                f"labels length {labels.shape[0]} does not match fe rows {fe.shape[0]}"
            )
        logits = None
        if "logits" in names:
            logits_decl = manifest.tensor("logits")
            if logits_decl.dtype != "f32" or len(logits_decl.shape) != 2:
                raise MalformedManifestError(
                    f"'logits' must be a 2-d f32 tensor, got {logits_decl.dtype} {logits_decl.shape}"
                )
            logits = _load_tensor(path, logits_decl)

        num_classes = _resolve_num_classes(manifest, labels, logits)
        split = manifest.metadata.get("split", "other")
        if split not in SPLITS:
            raise MalformedManifestError(f"metadata split must be one of {SPLITS}, got {split!r}")

        es = EmbeddingSet(
            fe=fe,
            labels=labels,
            num_classes=num_classes,
            split=split,
            logits=logits,
            allow_signed=allow_signed_fe,
        )
        return manifest, es

    if "weights" in names:
        w_decl = manifest.tensor("weights")
        if w_decl.dtype != "f32" or len(w_decl.shape) != 2:
            raise MalformedManifestError(
                f"'weights' must be a 2-d f32 tensor, got {w_decl.dtype} {w_decl.shape}"
            )
        weights = _load_tensor(path, w_decl)
        bias = None
        if "bias" in names:
            b_decl = manifest.tensor("bias")
            if b_decl.dtype != "f32" or len(b_decl.shape) != 1:
                raise MalformedManifestError(
                    f"'bias' must be a 1-d f32 tensor, got {b_decl.dtype} {b_decl.shape}"
                )
            bias = _load_tensor(path, b_decl)
            if bias.shape[0] != weights.shape[0]:
                raise ShapeMismatchError(
                    f"bias length {bias.shape[0]} does not match weight rows {weights.shape[0]}"
                )
        if "num_classes" in manifest.metadata and int(manifest.metadata["num_classes"]) != weights.shape[0]:
            raise ShapeMismatchError(
                f"metadata num_classes={manifest.metadata['num_classes']} disagrees with "
                f"weight rows {weights.shape[0]}"
            )
        return manifest, ClassifierHead(weights=weights, bias=bias)

    raise MalformedManifestError(
        f"directory declares neither an embedding set ('fe'+'labels') nor a head ('weights'): {sorted(names)}"
    )


def _resolve_num_classes(manifest: EmbxManifest, labels: np.ndarray, logits: np.ndarray | None) -> int:
    if "num_classes" in manifest.metadata:
        num_classes = int(manifest.metadata["num_classes"])
        if logits is not None and logits.shape[1] != num_classes:
            raise ShapeMismatchError(
                f"logits width {logits.shape[1]} disagrees with metadata num_classes={num_classes}"
            )
        return num_classes
    if logits is not None:
        return logits.shape[1]
    if labels.size and labels.min() < 0:
        raise LabelOutOfRangeError(f"labels contain negative entries (min {labels.min()})")
    return int(labels.max()) + 1 if labels.size else 1


def write_embx(obj, path: str, extra_metadata: dict[str, str] | None = None) -> str:
    """Write an EmbeddingSet or ClassifierHead as an EMBX directory.

    Payload bytes are the object's float32/int64 buffers verbatim, so
    read_embx(write_embx(obj)) reproduces the object bit-exactly.
    """
    tensors: list[tuple[TensorDecl, np.ndarray]] = []
    metadata: dict[str, str] = {}
    if isinstance(obj, EmbeddingSet):
        tensors.append((TensorDecl("fe", "fe.bin", "f32", list(obj.fe.shape)), obj.fe))
        tensors.append((TensorDecl("labels", "labels.bin", "i64", list(obj.labels.shape)), obj.labels))
        if obj.logits is not None:
            tensors.append((TensorDecl("logits", "logits.bin", "f32", list(obj.logits.shape)), obj.logits))
        metadata["split"] = obj.split
        metadata["num_classes"] = str(obj.num_classes)
    elif isinstance(obj, ClassifierHead):
        tensors.append((TensorDecl("weights", "weights.bin", "f32", list(obj.weights.shape)), obj.weights))
        if obj.bias is not None:
            tensors.append((TensorDecl("bias", "bias.bin", "f32", list(obj.bias.shape)), obj.bias))
        metadata["num_classes"] = str(obj.num_classes)
    else:
        raise TypeError(f"cannot write object of type {type(obj).__name__}")

    if extra_metadata:
        metadata.update({str(k): str(v) for k, v in extra_metadata.items()})

    manifest = {
        "format_version": FORMAT_VERSION,
        "tensors": [
            {
                "name": d.name,
                "file": d.file,
                "dtype": d.dtype,
                "shape": d.shape,
                "layout": d.layout,
                "byte_order": d.byte_order,
            }
            for d, _ in tensors
        ],
        "metadata": metadata,
    }
    try:
        os.makedirs(path, exist_ok=True)
        for decl, arr in tensors:
            wire = np.ascontiguousarray(arr, dtype=_DTYPES[decl.dtype])
            with open(os.path.join(path, decl.file), "wb") as f:
                f.write(wire.tobytes())
        with open(os.path.join(path, MANIFEST_NAME), "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2)
            f.write("\n")
    except OSError as exc:
        raise IoFailureError(f"failed writing EMBX directory {path}: {exc}") from exc
    return path


def load_embedding_set(path: str, allow_signed_fe: bool = False) -> EmbeddingSet:
    """read_embx, asserting the directory holds an embedding set."""
    _, obj = read_embx(path, allow_signed_fe=allow_signed_fe)
    if not isinstance(obj, EmbeddingSet):
        raise MalformedManifestError(f"{path} holds a classifier head, expected an embedding set")
    return obj


def load_classifier_head(path: str) -> ClassifierHead:
    """read_embx, asserting the directory holds a classifier head."""
    _, obj = read_embx(path)
    if not isinstance(obj, ClassifierHead):
        raise MalformedManifestError(f"{path} holds an embedding set, expected a classifier head")
    return obj


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
