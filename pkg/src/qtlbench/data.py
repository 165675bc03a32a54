"""Feature bundles: binary serialization, splits, subsetting, synthesis.

The QTLB byte layout is the file-level contract with external feature
exporters: header (magic "QTLB", u16 version, u16 flags, u32 feature dim,
u32 class count, u64 record count), then per record the features as
little-endian float32, a u16 label, and optionally float32 teacher logits.
Feature values are kept float32-representable in memory so files round-trip
bit-exactly.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    CorruptionError,
    DataError,
    FormatError,
    ShapeError,
)

QTLB_MAGIC = b"QTLB"
QTLB_VERSION = 1
_HEADER = struct.Struct("<4sHHIIQ")
FLAG_TEACHER_LOGITS = 0x0001


@dataclass
class FeatureBundle:
    feature_dim: int
    num_classes: int
    features: np.ndarray            # (N, D) float64
    labels: np.ndarray              # (N,) int64
    teacher_logits: np.ndarray | None = None  # (N, C) float64
    provenance: str = ""            # in-memory tag, not serialized

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(-1, self.feature_dim)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"{self.features.shape[0]} feature rows vs {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError("labels outside [0, num_classes)")
        if self.teacher_logits is not None:
            self.teacher_logits = np.asarray(self.teacher_logits, dtype=float)
            if self.teacher_logits.shape != (self.labels.shape[0], self.num_classes):
                raise ShapeError(
                    f"teacher logits shape {self.teacher_logits.shape}, expected "
                    f"({self.labels.shape[0]}, {self.num_classes})"
                )

    @property
    def n_records(self) -> int:
        return int(self.labels.shape[0])

    def take(self, indices: np.ndarray, provenance: str | None = None) -> "FeatureBundle":
        idx = np.asarray(indices, dtype=np.int64)
        logits = None if self.teacher_logits is None else self.teacher_logits[idx]
        return FeatureBundle(
            self.feature_dim, self.num_classes, self.features[idx],
            self.labels[idx], logits,
            self.provenance if provenance is None else provenance,
        )

    def data_equal(self, other: "FeatureBundle") -> bool:
        """Bit-exact payload comparison; the provenance tag is ignored."""
        if (self.feature_dim, self.num_classes) != (other.feature_dim, other.num_classes):
            return False
        if (self.teacher_logits is None) != (other.teacher_logits is None):
            return False
        same = (np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))
        if same and self.teacher_logits is not None:
            same = np.array_equal(self.teacher_logits, other.teacher_logits)
        return same


def _record_dtype(feature_dim: int, num_classes: int, with_logits: bool) -> np.dtype:
    fields = [("features", "<f4", (feature_dim,)), ("label", "<u2")]
    if with_logits:
        fields.append(("logits", "<f4", (num_classes,)))
    return np.dtype(fields)


def encode_bundle(bundle: FeatureBundle) -> bytes:
    if bundle.num_classes > 0xFFFF:
        raise FormatError("label field is u16; num_classes exceeds 65535")
    with_logits = bundle.teacher_logits is not None
    flags = FLAG_TEACHER_LOGITS if with_logits else 0
    header = _HEADER.pack(QTLB_MAGIC, QTLB_VERSION, flags,
                          bundle.feature_dim, bundle.num_classes, bundle.n_records)
    rec = np.zeros(bundle.n_records,
                   dtype=_record_dtype(bundle.feature_dim, bundle.num_classes, with_logits))
    rec["features"] = bundle.features.astype(np.float32)
    rec["label"] = bundle.labels.astype(np.uint16)
    if with_logits:
        rec["logits"] = bundle.teacher_logits.astype(np.float32)
    return header + rec.tobytes()


def decode_bundle(data: bytes, provenance: str = "") -> FeatureBundle:
    if len(data) < _HEADER.size:
        raise CorruptionError(f"payload of {len(data)} bytes is shorter than the header")
    magic, version, flags, dim, classes, count = _HEADER.unpack_from(data)
    if magic != QTLB_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != QTLB_VERSION:
        raise FormatError(f"unsupported format version {version}")
    with_logits = bool(flags & FLAG_TEACHER_LOGITS)
    dtype = _record_dtype(dim, classes, with_logits)
    expected = _HEADER.size + count * dtype.itemsize
    if len(data) != expected:
        raise CorruptionError(
            f"expected {expected} bytes for {count} records, got {len(data)}"
        )
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=_HEADER.size)
    labels = rec["label"].astype(np.int64)
    if labels.size and labels.max() >= classes:
        raise CorruptionError("record label outside the declared class range")
    logits = rec["logits"].astype(np.float64) if with_logits else None
    return FeatureBundle(dim, classes, rec["features"].astype(np.float64),
                         labels, logits, provenance)


def save_bundle(bundle: FeatureBundle, path: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(encode_bundle(bundle))
    os.replace(tmp, path)


def load_bundle(path: str) -> FeatureBundle:
    with open(path, "rb") as fh:
        return decode_bundle(fh.read(), provenance=os.path.basename(path))


def balanced_subset(bundle: FeatureBundle, total: int, seed: int) -> FeatureBundle:
    """Exactly total/num_classes records per class, seeded shuffle within class."""
    c = bundle.num_classes
    if total <= 0 or total % c != 0:
        raise DataError(f"total {total} is not a positive multiple of {c} classes")
    quota = total // c
    counts = {cls: int(np.sum(bundle.labels == cls)) for cls in range(c)}
    short = {cls: n for cls, n in counts.items() if n < quota}
    if short:
        raise DataError(f"need {quota} records per class, have {short} (per-class counts)")
    rng = np.random.default_rng(seed)
    picked = []
    for cls in range(c):
        idx = np.flatnonzero(bundle.labels == cls)
        picked.append(rng.permutation(idx)[:quota])
    order = np.sort(np.concatenate(picked))
    return bundle.take(order, provenance=f"{bundle.provenance}|balanced{total}")


def synthesize_features(num_classes: int, feature_dim: int, per_class: int,
                        class_separation: float, seed: int,
                        with_teacher_logits: bool = True) -> FeatureBundle:
    """Gaussian blobs around seeded unit-direction means scaled by the separation.

    Teacher logits, when requested, are separation-scaled negative squared
    distances to the class means, so a softmax over them is an oracle teacher.
    """
    if num_classes < 1 or feature_dim < 1 or per_class < 1:
        raise ConfigurationError("num_classes, feature_dim, per_class must be positive")
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(num_classes, feature_dim))
    means = class_separation * raw / np.linalg.norm(raw, axis=1, keepdims=True)
    features = np.empty((num_classes * per_class, feature_dim))
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    for cls in range(num_classes):
        block = slice(cls * per_class, (cls + 1) * per_class)
        features[block] = means[cls] + rng.normal(size=(per_class, feature_dim))
        labels[block] = cls
    features = features.astype(np.float32).astype(np.float64)
    logits = None
    if with_teacher_logits:
        d2 = ((features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        logits = (-class_separation * d2).astype(np.float32).astype(np.float64)
    return FeatureBundle(feature_dim, num_classes, features, labels, logits,
                         provenance=f"synthetic(sep={class_separation},seed={seed})")


@dataclass(frozen=True)
class SplitManifest:
    train_indices: tuple[int, ...]
    eval_indices: tuple[int, ...]
    seed: int

    def __post_init__(self):
        train = tuple(sorted(int(i) for i in self.train_indices))
        evals = tuple(sorted(int(i) for i in self.eval_indices))
        if len(set(train)) != len(train) or len(set(evals)) != len(evals):
            raise DataError("duplicate indices in split manifest")
        if set(train) & set(evals):
            raise DataError("train and eval indices overlap")
        if (train and train[0] < 0) or (evals and evals[0] < 0):
            raise DataError("negative index in split manifest")
        object.__setattr__(self, "train_indices", train)
        object.__setattr__(self, "eval_indices", evals)


def split_assign(bundle: FeatureBundle, eval_fraction: float, seed: int) -> SplitManifest:
    """Stratified train/eval assignment; eval quota is round(fraction * class size)."""
    if not 0.0 < eval_fraction < 1.0:
        raise ConfigurationError(f"eval_fraction must be in (0, 1), got {eval_fraction}")
    rng = np.random.default_rng(seed)
    train, evals = [], []
    for cls in range(bundle.num_classes):
        idx = np.flatnonzero(bundle.labels == cls)
        if idx.size and idx.size < 2:
            raise DataError(f"class {cls} has {idx.size} record(s); need at least 2")
        if not idx.size:
            continue
        k_eval = round(eval_fraction * idx.size)
        perm = rng.permutation(idx)
        evals.extend(int(i) for i in perm[:k_eval])
        train.extend(int(i) for i in perm[k_eval:])
    return SplitManifest(tuple(train), tuple(evals), seed)


def save_manifest(manifest: SplitManifest, path: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(f"seed={manifest.seed}\n")
        fh.write("train=" + " ".join(str(i) for i in manifest.train_indices) + "\n")
        fh.write("eval=" + " ".join(str(i) for i in manifest.eval_indices) + "\n")
    os.replace(tmp, path)


def load_manifest(path: str) -> SplitManifest:
    values: dict[str, str] = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    try:
        seed = int(values["seed"])
        train = tuple(int(i) for i in values["train"].split()) if values["train"] else ()
        evals = tuple(int(i) for i in values["eval"].split()) if values["eval"] else ()
    except KeyError as exc:
        raise FormatError(f"manifest missing field {exc}") from exc
    return SplitManifest(train, evals, seed)
