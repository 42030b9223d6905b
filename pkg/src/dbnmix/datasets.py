"""Synthetic long-tailed datasets, long-tail truncation, and file I/O.

Class-size profiles follow the exponential construction
N_k = round(n_max * mu^(-k / (K-1))), so the produced max/min count ratio
matches the imbalance ratio mu up to rounding. Classes are grouped by
training count: Many (> 100), Medium (20..100), Few (< 20).
"""

from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ParseError, SpecError

BINARY_MAGIC = b"LTDS"
BINARY_VERSION = 1

MANY_THRESHOLD = 100   # count > 100
FEW_THRESHOLD = 20     # count < 20


class Group(enum.Enum):
    MANY = "many"
    MEDIUM = "medium"
    FEW = "few"


def group_for_count(count: int) -> Group:
    if count > MANY_THRESHOLD:
        return Group.MANY
    if count < FEW_THRESHOLD:
        return Group.FEW
    return Group.MEDIUM


@dataclass(frozen=True)
class LongTailSpec:
    """Declarative class-size profile: exponential decay or explicit counts."""

    num_classes: int
    n_max: int = 0
    imbalance_ratio: float = 1.0
    explicit_counts: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.num_classes < 1:
            raise SpecError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.explicit_counts is not None:
            if len(self.explicit_counts) != self.num_classes:
                raise SpecError("explicit_counts length must equal num_classes")
            if any(c < 1 for c in self.explicit_counts):
                raise SpecError("explicit_counts must all be >= 1")
            return
        if self.n_max < 1:
            raise SpecError(f"n_max must be >= 1, got {self.n_max}")
        if self.imbalance_ratio < 1.0:
            raise SpecError(
                f"imbalance_ratio must be >= 1, got {self.imbalance_ratio}")
        if self.num_classes > 1 and int(np.rint(self.n_max / self.imbalance_ratio)) < 1:
            raise SpecError(
                f"smallest class count rounds to zero for n_max={self.n_max}, "
                f"imbalance_ratio={self.imbalance_ratio}")

    def class_counts(self) -> np.ndarray:
        if self.explicit_counts is not None:
            return np.asarray(self.explicit_counts, dtype=np.int64)
        k = np.arange(self.num_classes, dtype=np.float64)
        if self.num_classes == 1:
            decay = np.ones(1)
        else:
            decay = self.imbalance_ratio ** (-k / (self.num_classes - 1))
        counts = np.rint(self.n_max * decay).astype(np.int64)
        if np.any(counts < 1):
            raise SpecError("class-size profile produced an empty class")
        return counts


@dataclass
class Dataset:
    """Feature matrix, integer labels, per-class counts, and group assignment."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    class_counts: np.ndarray = field(init=False)
    group_of_class: list[Group] = field(init=False)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise SpecError(f"features must be 2-d, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise SpecError("labels length must match the number of feature rows")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise SpecError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{self.labels.min()}, {self.labels.max()}]")
        self.class_counts = np.bincount(self.labels, minlength=self.num_classes).astype(np.int64)
        self.group_of_class = [group_for_count(int(c)) for c in self.class_counts]

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def one_hot_labels(self) -> np.ndarray:
        y = np.zeros((self.num_samples, self.num_classes))
        y[np.arange(self.num_samples), self.labels] = 1.0
        return y


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    y = np.zeros((labels.shape[0], num_classes))
    y[np.arange(labels.shape[0]), labels] = 1.0
    return y


# Half-moon geometry: class 0 on the upper unit half-circle at the origin,
# class 1 on the lower unit half-circle offset by (1, 0.5).
def _moon_points(angles: np.ndarray, cls: int) -> np.ndarray:
    if cls == 0:
        return np.column_stack([np.cos(angles), np.sin(angles)])
    return np.column_stack([1.0 - np.cos(angles), 0.5 - np.sin(angles)])


def make_half_moons(n_majority: int, imbalance_ratio: float, noise_sd: float,
                    seed: int) -> Dataset:
    """Two interleaved half-circle clouds; class 1 holds the minority."""
    if imbalance_ratio < 1.0:
        raise SpecError(f"imbalance_ratio must be >= 1, got {imbalance_ratio}")
    if noise_sd < 0.0:
        raise SpecError(f"noise_sd must be >= 0, got {noise_sd}")
    if n_majority < 1:
        raise SpecError(f"n_majority must be >= 1, got {n_majority}")
    n_minority = int(np.rint(n_majority / imbalance_ratio))
    if n_minority < 1:
        raise SpecError(
            f"minority count rounds to zero for n_majority={n_majority}, "
            f"imbalance_ratio={imbalance_ratio}")
    rng = np.random.default_rng(seed)
    parts, labels = [], []
    for cls, n in ((0, n_majority), (1, n_minority)):
        angles = rng.uniform(0.0, np.pi, size=n)
        pts = _moon_points(angles, cls)
        if noise_sd > 0.0:
            pts = pts + rng.normal(0.0, noise_sd, size=pts.shape)
        parts.append(pts)
        labels.append(np.full(n, cls, dtype=np.int64))
    features = np.concatenate(parts)
    labels = np.concatenate(labels)
    order = rng.permutation(features.shape[0])
    return Dataset(features[order], labels[order], num_classes=2)


def gaussian_centers(num_classes: int, dim: int, class_sep: float) -> np.ndarray:
    """Deterministic class centers.

    dim >= num_classes: scaled orthogonal simplex, every pair of centers
    exactly class_sep apart. dim == 1: a line at spacing class_sep.
    Otherwise: evenly spaced on a circle with adjacent centers class_sep
    apart."""
    centers = np.zeros((num_classes, dim))
    if num_classes == 1:
        return centers
    if dim >= num_classes:
        scale = class_sep / np.sqrt(2.0)
        centers[np.arange(num_classes), np.arange(num_classes)] = scale
        return centers
    if dim == 1:
        centers[:, 0] = (np.arange(num_classes) - (num_classes - 1) / 2.0) * class_sep
        return centers
    radius = class_sep / (2.0 * np.sin(np.pi / num_classes))
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def make_gaussian_longtail(spec: LongTailSpec, dim: int, class_sep: float,
                           seed: int) -> Dataset:
    """Isotropic unit-variance Gaussian per class, exactly N_k points each."""
    if dim < 1:
        raise SpecError(f"dim must be >= 1, got {dim}")
    counts = spec.class_counts()
    centers = gaussian_centers(spec.num_classes, dim, class_sep)
    rng = np.random.default_rng(seed)
    parts, labels = [], []
    for k, n in enumerate(counts):
        parts.append(centers[k] + rng.normal(size=(int(n), dim)))
        labels.append(np.full(int(n), k, dtype=np.int64))
    features = np.concatenate(parts)
    labels = np.concatenate(labels)
    order = rng.permutation(features.shape[0])
    return Dataset(features[order], labels[order], num_classes=spec.num_classes)


def truncate_to_longtail(dataset: Dataset, spec: LongTailSpec, seed: int) -> Dataset:
    """Keep a uniformly random N_k-subset of each class, then reshuffle."""
    if spec.num_classes != dataset.num_classes:
        raise SpecError(
            f"spec has {spec.num_classes} classes but dataset has {dataset.num_classes}")
    counts = spec.class_counts()
    rng = np.random.default_rng(seed)
    keep = []
    for k, want in enumerate(counts):
        idx = np.flatnonzero(dataset.labels == k)
        if idx.size < want:
            raise CapacityError(
                f"class {k} has {idx.size} samples, {int(want)} requested")
        keep.append(rng.choice(idx, size=int(want), replace=False))
    keep = np.concatenate(keep)
    keep = keep[rng.permutation(keep.size)]
    return Dataset(dataset.features[keep], dataset.labels[keep],
                   num_classes=dataset.num_classes)


def save_dataset(dataset: Dataset, path, fmt: str = "csv") -> None:
    if fmt == "csv":
        _save_csv(dataset, path)
    elif fmt == "binary":
        _save_binary(dataset, path)
    else:
        raise ParseError(f"unknown dataset format {fmt!r}")


def load_dataset(path, fmt: str = "csv", num_classes: int | None = None) -> Dataset:
    """Read a dataset file; counts and groups are recomputed from the labels."""
    if fmt == "csv":
        return _load_csv(path, num_classes)
    if fmt == "binary":
        return _load_binary(path, num_classes)
    raise ParseError(f"unknown dataset format {fmt!r}")


def _save_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{d}" for d in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            # repr round-trips float64 exactly
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def _load_csv(path, num_classes: int | None) -> Dataset:
    features, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[-1] != "label":
            raise ParseError(f"{path}: line 1: expected header 'f0,...,label'")
        dim = len(header) - 1
        if header[:dim] != [f"f{d}" for d in range(dim)]:
            raise ParseError(f"{path}: line 1: malformed header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 1:
                raise ParseError(
                    f"{path}: line {lineno}: expected {dim + 1} fields, got {len(row)}")
            try:
                features.append([float(v) for v in row[:dim]])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            try:
                label = int(row[dim])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: bad label {row[dim]!r}") from exc
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise ParseError(
                    f"{path}: line {lineno}: label {label} out of range")
            labels.append(label)
    if not labels:
        raise ParseError(f"{path}: no data rows")
    labels = np.asarray(labels, dtype=np.int64)
    k = num_classes if num_classes is not None else int(labels.max()) + 1
    return Dataset(np.asarray(features), labels, num_classes=k)


def _save_binary(dataset: Dataset, path) -> None:
    counts = dataset.class_counts.astype("<u4")
    feats = np.ascontiguousarray(dataset.features, dtype="<f8")
    labels = dataset.labels.astype("<u4")
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<H", BINARY_VERSION))
        fh.write(struct.pack("<III", dataset.num_classes, dataset.num_samples,
                             dataset.dim))
        fh.write(counts.tobytes())
        fh.write(feats.tobytes())
        fh.write(labels.tobytes())


def _load_binary(path, num_classes: int | None) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != BINARY_MAGIC:
        raise ParseError(f"{path}: bad magic bytes {blob[:4]!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != BINARY_VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    k, n, d = struct.unpack_from("<III", blob, 6)
    offset = 18
    expected = offset + 4 * k + 8 * n * d + 4 * n
    if len(blob) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, got {len(blob)}")
    counts = np.frombuffer(blob, dtype="<u4", count=k, offset=offset).astype(np.int64)
    offset += 4 * k
    feats = np.frombuffer(blob, dtype="<f8", count=n * d, offset=offset).reshape(n, d)
    offset += 8 * n * d
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=offset).astype(np.int64)
    if num_classes is not None and k != num_classes:
        raise ParseError(f"{path}: file has {k} classes, expected {num_classes}")
    if labels.size and labels.max() >= k:
        raise ParseError(f"{path}: label {labels.max()} out of range for {k} classes")
    ds = Dataset(feats.copy(), labels, num_classes=int(k))
    if not np.array_equal(ds.class_counts, counts):
        raise ParseError(f"{path}: stored class counts disagree with labels")
    return ds
