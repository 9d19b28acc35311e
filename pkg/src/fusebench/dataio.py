"""Feature/label file formats, train/val splitting, synthetic data.

FEAT byte layout (little-endian throughout):

    bytes 0-3    magic b"FEAT"
    bytes 4-7    version u32 (= 1)
    bytes 8-11   n u32
    bytes 12-15  d u32
    then         n*d float32, row-major
    then         n u32 sample ids (optional on read; ids 0..n-1 assumed
                 when the block is absent; always written)

Label CSV: header line ``id,labels``; each row ``ID,<space-separated
0-based class indices>``; an empty label field is a valid empty label
set.  Prediction files reuse the same schema.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .linalg import Rng, matmul

__all__ = [
    "FormatError",
    "AlignmentError",
    "FeatureTable",
    "LabelMatrix",
    "SplitSpec",
    "Bundle",
    "read_features",
    "write_features",
    "read_labels",
    "write_labels",
    "split",
    "synth_generate",
]

FEAT_MAGIC = b"FEAT"
FEAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Malformed feature or label file."""


class AlignmentError(ValueError):
    """Sample ids disagree across tables that must describe the same rows."""


@dataclass
class FeatureTable:
    """Embedding matrix (n x d float32) plus per-row sample ids."""

    ids: np.ndarray       # (n,) non-negative ints
    features: np.ndarray  # (n, d) float32

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.uint32)
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if len(self.ids) != self.features.shape[0]:
            raise ValueError("ids length does not match the number of feature rows")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("sample ids must be unique")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("feature values must be finite")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, rows: np.ndarray) -> "FeatureTable":
        return FeatureTable(self.ids[rows], self.features[rows])


@dataclass
class LabelMatrix:
    """Multi-hot target matrix (n x K float32 of exact 0/1) plus ids."""

    ids: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.uint32)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float32)
        if self.targets.ndim != 2:
            raise ValueError(f"targets must be 2-D, got shape {self.targets.shape}")
        if len(self.ids) != self.targets.shape[0]:
            raise ValueError("ids length does not match the number of target rows")
        if not np.all((self.targets == 0.0) | (self.targets == 1.0)):
            raise ValueError("targets must contain only 0 and 1")

    @property
    def n(self) -> int:
        return self.targets.shape[0]

    @property
    def num_classes(self) -> int:
        return self.targets.shape[1]

    def take(self, rows: np.ndarray) -> "LabelMatrix":
        return LabelMatrix(self.ids[rows], self.targets[rows])

    def to_sets(self) -> list[set[int]]:
        return [set(np.flatnonzero(row).tolist()) for row in self.targets]


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic train/validation split: size of train plus seed."""

    n_train: int
    seed: int


@dataclass
class Bundle:
    """Aligned modality tables plus labels (features[0]=image, [1]=text)."""

    features: tuple[FeatureTable, ...]
    labels: LabelMatrix

    @property
    def n(self) -> int:
        return self.labels.n


def read_features(path) -> FeatureTable:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated header: file has {len(data)} bytes at offset 0")
    magic, version, n, d = _HEADER.unpack_from(data, 0)
    if magic != FEAT_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0")
    if version != FEAT_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if n < 1 or d < 1:
        raise FormatError(f"header declares empty table n={n}, d={d} at offset 8")
    payload = 4 * n * d
    want_no_ids = _HEADER.size + payload
    want_with_ids = want_no_ids + 4 * n
    if len(data) not in (want_no_ids, want_with_ids):
        raise FormatError(
            f"truncated payload: expected {want_no_ids} or {want_with_ids} bytes, "
            f"got {len(data)} (payload starts at offset {_HEADER.size})"
        )
    feats = np.frombuffer(data, dtype="<f4", count=n * d, offset=_HEADER.size)
    finite = np.isfinite(feats)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise FormatError(f"non-finite value at offset {_HEADER.size + 4 * bad}")
    feats = feats.reshape(n, d)
    if len(data) == want_with_ids:
        ids = np.frombuffer(data, dtype="<u4", count=n, offset=want_no_ids)
    else:
        ids = np.arange(n, dtype=np.uint32)
    return FeatureTable(ids.copy(), feats.copy())


def write_features(table: FeatureTable, path) -> None:
    if not np.all(np.isfinite(table.features)):
        raise ValueError("refusing to write non-finite feature values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEAT_MAGIC, FEAT_VERSION, table.n, table.dim))
        fh.write(np.ascontiguousarray(table.features, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(table.ids, dtype="<u4").tobytes())


def read_labels(path, num_classes: int) -> LabelMatrix:
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "id,labels":
        raise FormatError("label file must start with the header line 'id,labels'")
    ids, rows = [], []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        head, sep, tail = line.partition(",")
        if not sep:
            raise FormatError(f"row {lineno}: expected 'id,labels', got {line!r}")
        try:
            sample_id = int(head)
        except ValueError:
            raise FormatError(f"row {lineno}: bad sample id {head!r}") from None
        if sample_id < 0:
            raise FormatError(f"row {lineno}: sample id must be non-negative")
        if sample_id in seen:
            raise FormatError(f"row {lineno}: duplicate id {sample_id}")
        seen.add(sample_id)
        row = np.zeros(num_classes, dtype=np.float32)
        for token in tail.split():
            try:
                k = int(token)
            except ValueError:
                raise FormatError(f"row {lineno}: bad class index {token!r}") from None
            if not 0 <= k < num_classes:
                raise IndexError(
                    f"row {lineno}: class index {k} out of range [0, {num_classes})"
                )
            row[k] = 1.0
        ids.append(sample_id)
        rows.append(row)
    if not rows:
        raise FormatError("label file holds no rows")
    return LabelMatrix(np.array(ids, dtype=np.uint32), np.stack(rows))


def write_labels(ids, label_sets, path) -> None:
    """Write label/prediction rows in the label CSV schema."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,labels\n")
        for sample_id, labels in zip(ids, label_sets):
            fh.write(f"{int(sample_id)},{' '.join(str(int(k)) for k in sorted(labels))}\n")


def _check_alignment(features, labels) -> None:
    for table in features:
        if table.n != labels.n or not np.array_equal(table.ids, labels.ids):
            raise AlignmentError("feature table ids do not match label ids")


def split(features, labels: LabelMatrix, spec: SplitSpec) -> tuple[Bundle, Bundle]:
    """Seeded row permutation; first n_train rows become the train bundle."""
    features = tuple(features)
    _check_alignment(features, labels)
    n = labels.n
    if not 0 < spec.n_train <= n:
        raise ValueError(f"n_train must lie in (0, {n}], got {spec.n_train}")
    perm = Rng(spec.seed).permutation(n)
    train_rows, val_rows = perm[: spec.n_train], perm[spec.n_train :]
    train = Bundle(tuple(t.take(train_rows) for t in features), labels.take(train_rows))
    val = Bundle(tuple(t.take(val_rows) for t in features), labels.take(val_rows))
    return train, val


def synth_generate(n: int, d_per_modality: int, num_classes: int, noise_std: float,
                   seed: int) -> tuple[FeatureTable, FeatureTable, LabelMatrix]:
    """Complementary-modality synthetic dataset.

    Labels are independent Bernoulli(0.3).  Modality A linearly encodes
    classes 0..K/2-1 (amplitude 2 along orthonormal directions) plus
    N(0, noise_std^2) noise; modality B encodes classes K/2..K-1 the same
    way.  By construction neither modality carries any information about
    the other half's classes.
    """
    if num_classes % 2 != 0:
        raise ValueError(f"num_classes must be even, got {num_classes}")
    if num_classes < 2 or n < 1:
        raise ValueError("need num_classes >= 2 and n >= 1")
    half = num_classes // 2
    if d_per_modality < half:
        raise ValueError(f"d_per_modality must be >= {half}, got {d_per_modality}")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")

    rng_labels, rng_enc, rng_noise = Rng(seed).spawn(3)
    targets = (rng_labels.uniform(n, num_classes) < 0.3).astype(np.float32)

    tables = []
    for lo in (0, half):
        # Unit-norm Gaussian encoding rows, amplitude 2, so every class in
        # the half carries the same signal-to-noise ratio.
        rows = rng_enc.normal(half, d_per_modality).astype(np.float64)
        norms = np.sqrt((rows * rows).sum(axis=1, keepdims=True))
        encoding = (2.0 * rows / norms).astype(np.float32)
        signal = matmul(targets[:, lo : lo + half], encoding)
        noise = rng_noise.normal(n, d_per_modality, 0.0, noise_std)
        tables.append(FeatureTable(np.arange(n, dtype=np.uint32), signal + noise))
    img, txt = tables
    labels = LabelMatrix(np.arange(n, dtype=np.uint32), targets)
    return img, txt, labels
