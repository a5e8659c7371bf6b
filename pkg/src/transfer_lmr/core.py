"""Dataset model, binary dataset I/O and seeded random streams."""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"FTLM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQIII")


class DatasetError(ValueError):
    """Raised when a dataset file or in-memory dataset violates the format."""

    error_id = "dataset_invalid"

    def __init__(self, message: str, field: str):
        super().__init__(f"{message} [field={field}]")
        self.field = field


class HeaderError(DatasetError):
    error_id = "malformed_header"


class DimensionError(DatasetError):
    error_id = "dimension_mismatch"


class NonFiniteError(DatasetError):
    error_id = "non_finite"


class LabelRangeError(DatasetError):
    error_id = "label_out_of_range"


class CountMismatchError(DatasetError):
    error_id = "count_mismatch"


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """N samples of T x D features with integer labels in [0, C)."""

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    class_counts: np.ndarray = field(default=None)

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.asarray(self.labels)
        names = tuple(str(n) for n in self.class_names)
        if feats.ndim != 3:
            raise DimensionError(f"features must be N x T x D, got shape {feats.shape}", "features")
        n, t, d = feats.shape
        if t < 1 or d < 1:
            raise DimensionError(f"T and D must be >= 1, got T={t} D={d}", "features")
        if labels.shape != (n,):
            raise DimensionError(f"expected {n} labels, got shape {labels.shape}", "labels")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            raise DimensionError("labels must be integers", "labels")
        labels = labels.astype(np.int64)
        c = len(names)
        if c < 1:
            raise DimensionError("at least one class name is required", "class_names")
        if labels.size and (labels.min() < 0 or labels.max() >= c):
            bad = int(labels[(labels < 0) | (labels >= c)][0])
            raise LabelRangeError(f"label out of range: {bad} not in [0, {c})", "labels")
        if not np.isfinite(feats).all():
            raise NonFiniteError("features contain non-finite values", "features")
        counts = np.bincount(labels, minlength=c).astype(np.int64)
        if self.class_counts is not None:
            given = np.asarray(self.class_counts, dtype=np.int64)
            if given.shape != (c,) or not np.array_equal(given, counts):
                raise CountMismatchError(
                    f"class_counts {given.tolist()} disagree with labels {counts.tolist()}",
                    "class_counts",
                )
        for arr in (feats, labels, counts):
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "class_counts", counts)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        n, t, d = self.features.shape
        return n, t, d, len(self.class_names)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def __eq__(self, other):
        if not isinstance(other, FeatureDataset):
            return NotImplemented
        return (
            self.class_names == other.class_names
            and np.array_equal(self.labels, other.labels)
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
        )

    def subset(self, idx) -> FeatureDataset:
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureDataset(self.features[idx], self.labels[idx], self.class_names)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def dataset_bytes(ds: FeatureDataset) -> bytes:
    n, t, d, c = ds.dims
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, n, t, d, c)]
    for name in ds.class_names:
        encoded = name.encode("utf-8")
        if b"\x00" in encoded:
            raise DatasetError("class names may not contain NUL", "class_names")
        parts.append(encoded + b"\x00")
    parts.append(ds.labels.astype("<u4").tobytes())
    parts.append(ds.features.astype("<f4").tobytes(order="C"))
    return b"".join(parts)


def save_dataset(ds: FeatureDataset, path, provenance: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dataset_bytes(ds))
    n, t, d, c = ds.dims
    meta = {
        "format": "FTLM",
        "version": FORMAT_VERSION,
        "dims": {"N": n, "T": t, "D": d, "C": c},
        "class_names": list(ds.class_names),
        "class_counts": ds.class_counts.tolist(),
        "provenance": provenance or {},
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def parse_dataset(buf: bytes) -> FeatureDataset:
    if len(buf) < _HEADER.size:
        raise HeaderError("file shorter than header", "header")
    magic, version, n, t, d, c = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise HeaderError(f"bad magic {magic!r}", "magic")
    if version != FORMAT_VERSION:
        raise HeaderError(f"unsupported version {version}", "version")
    if t < 1 or d < 1:
        raise DimensionError(f"T and D must be >= 1, got T={t} D={d}", "T" if t < 1 else "D")
    if c < 1:
        raise DimensionError("C must be >= 1", "C")
    pos = _HEADER.size
    names = []
    for _ in range(c):
        end = buf.find(b"\x00", pos)
        if end < 0:
            raise HeaderError("unterminated class name", "class_names")
        try:
            names.append(buf[pos:end].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise HeaderError(f"class name is not UTF-8: {exc}", "class_names") from None
        pos = end + 1
    expected = pos + 4 * n + 4 * n * t * d
    if len(buf) != expected:
        raise DimensionError(
            f"payload is {len(buf)} bytes, dims imply {expected}", "N" if len(buf) < expected else "payload"
        )
    labels = np.frombuffer(buf, dtype="<u4", count=n, offset=pos).astype(np.int64)
    pos += 4 * n
    feats = np.frombuffer(buf, dtype="<f4", count=n * t * d, offset=pos).reshape(n, t, d)
    return FeatureDataset(feats.astype(np.float32), labels, names)


def load_dataset(path) -> FeatureDataset:
    """Read a dataset file and validate it, cross-checking the sidecar counts if present."""
    path = Path(path)
    ds = parse_dataset(path.read_bytes())
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        counts = meta.get("class_counts")
        if counts is not None and list(counts) != ds.class_counts.tolist():
            raise CountMismatchError(
                f"sidecar class_counts {counts} disagree with labels {ds.class_counts.tolist()}",
                "class_counts",
            )
    return ds


def one_hot(y, num_classes: int) -> np.ndarray:
    """One-hot rows for a class id or an array of class ids."""
    y = np.asarray(y)
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ValueError(f"class id out of range for C={num_classes}")
    return np.eye(num_classes)[y]


def rng_stream(seed: int, *path) -> np.random.Generator:
    """Independent generator for a named component under a master seed.

    The same (seed, path) always yields the same stream; distinct paths give
    statistically independent streams.
    """
    key = tuple(
        p if isinstance(p, int) else zlib.crc32(str(p).encode("utf-8")) for p in path
    )
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
