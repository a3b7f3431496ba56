"""Synthetic Gaussian-blob datasets, splits, and the DCW1 dataset file."""

from dataclasses import dataclass
import struct

import numpy as np

from ._io import Reader, atomic_write
from .errors import ConfigError, DataError, DimensionError, FormatError, LabelRangeError

DATASET_MAGIC = b"DCW1"
DATASET_VERSION = 1
SINGLE_LABEL, MULTI_LABEL = 0, 1


@dataclass
class LabeledDataset:
    """Feature rows with class ids ``(N,)`` or multi-hot labels ``(N, C)``."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if self.features.ndim != 2:
            raise DimensionError(f"features must be 2-D, got {self.features.shape}")
        n = self.features.shape[0]
        if self.class_count <= 0:
            raise ConfigError(f"class count must be positive, got {self.class_count}")
        if labels.ndim == 1:
            if labels.shape[0] != n:
                raise DimensionError(f"{n} rows but {labels.shape[0]} labels")
            if n and (labels.min() < 0 or labels.max() >= self.class_count):
                raise LabelRangeError(
                    f"label id {labels.max() if labels.max() >= self.class_count else labels.min()}"
                    f" outside [0, {self.class_count})"
                )
            self.labels = labels.astype(np.int64)
        elif labels.ndim == 2:
            if labels.shape != (n, self.class_count):
                raise DimensionError(f"multi-hot shape {labels.shape} != {(n, self.class_count)}")
            if np.any((labels != 0) & (labels != 1)):
                raise LabelRangeError("multi-hot entries must be 0 or 1")
            if n and not np.all(labels.any(axis=1)):
                raise LabelRangeError("multi-hot row with no set bit")
            self.labels = labels.astype(np.uint8)
        else:
            raise DimensionError(f"labels must be 1-D or 2-D, got {labels.shape}")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def multilabel(self):
        return self.labels.ndim == 2

    @property
    def label_mode(self):
        return MULTI_LABEL if self.multilabel else SINGLE_LABEL

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.intp)
        return LabeledDataset(self.features[rows], self.labels[rows], self.class_count)

    def class_sizes(self):
        if self.multilabel:
            return self.labels.sum(axis=0).astype(np.int64)
        return np.bincount(self.labels, minlength=self.class_count)


def _class_means(rng, class_count, dim, spread):
    # isotropic directions scaled onto the sphere of radius 10 * spread
    v = rng.standard_normal((class_count, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return 10.0 * spread * v


def gen_blobs(class_count, per_class, dim, spread=1.0, seed=0):
    """``class_count`` isotropic Gaussian clusters with std ``spread``."""
    if class_count <= 0 or per_class <= 0 or dim <= 0:
        raise ConfigError("class count, per-class count and dim must be positive")
    if not spread > 0:
        raise ConfigError(f"spread must be positive, got {spread}")
    rng = np.random.default_rng(seed)
    means = _class_means(rng, class_count, dim, spread)
    labels = np.repeat(np.arange(class_count), per_class)
    x = means[labels] + spread * rng.standard_normal((labels.size, dim))
    return LabeledDataset(x, labels, class_count)


def gen_multilabel_blobs(class_count, per_combo, dim, combos, spread=1.0, seed=0):
    """One Gaussian cluster per label combination, centred at the mean of its classes."""
    if class_count <= 0 or per_combo <= 0 or dim <= 0:
        raise ConfigError("class count, per-combo count and dim must be positive")
    if not spread > 0:
        raise ConfigError(f"spread must be positive, got {spread}")
    combos = [sorted(set(int(c) for c in combo)) for combo in combos]
    if not combos:
        raise ConfigError("need at least one label combination")
    for combo in combos:
        if not combo:
            raise ConfigError("empty label combination")
        if combo[0] < 0 or combo[-1] >= class_count:
            raise LabelRangeError(f"combination {combo} outside [0, {class_count})")
    rng = np.random.default_rng(seed)
    means = _class_means(rng, class_count, dim, spread)
    hot = np.zeros((len(combos), class_count), dtype=np.uint8)
    for i, combo in enumerate(combos):
        hot[i, combo] = 1
    cluster_means = (hot @ means) / hot.sum(axis=1, keepdims=True)
    which = np.repeat(np.arange(len(combos)), per_combo)
    x = cluster_means[which] + spread * rng.standard_normal((which.size, dim))
    return LabeledDataset(x, hot[which], class_count)


@dataclass
class SplitSpec:
    """Query/train selection.  Per-class counts apply to single-label data only."""

    query_per_class: int = None
    query_count: int = None
    train_per_class: int = None
    train_count: int = None
    group2: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("query_per_class", "query_count", "train_per_class", "train_count"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be nonnegative, got {v}")
        if self.query_per_class is not None and self.query_count is not None:
            raise ConfigError("give query_per_class or query_count, not both")
        if self.train_per_class is not None and self.train_count is not None:
            raise ConfigError("give train_per_class or train_count, not both")
        if self.group2 and self.train_per_class is None and self.train_count is None:
            raise ConfigError("group II split needs a training subset size")


def _pick(rng, pool, count, what):
    if count > pool.size:
        raise ConfigError(f"{what}: asked for {count} of {pool.size} samples")
    return np.sort(rng.permutation(pool)[:count])


def _pick_per_class(rng, data, pool, per_class, what):
    if data.multilabel:
        raise ConfigError(f"{what}: per-class counts need single-label data")
    chosen = []
    for c in range(data.class_count):
        members = pool[data.labels[pool] == c]
        chosen.append(_pick(rng, members, per_class, f"{what} class {c}"))
    return np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, np.intp)


def split_indices(data, spec):
    """Row indices ``(train, query, database)`` for a dataset."""
    rng = np.random.default_rng(spec.seed)
    everything = np.arange(len(data))
    if spec.query_per_class is not None:
        query = _pick_per_class(rng, data, everything, spec.query_per_class, "query")
    else:
        query = _pick(rng, everything, spec.query_count or 0, "query")
    database = np.setdiff1d(everything, query)
    if spec.train_per_class is not None:
        train = _pick_per_class(rng, data, database, spec.train_per_class, "train")
    elif spec.train_count is not None:
        train = _pick(rng, database, spec.train_count, "train")
    else:
        train = database.copy()
    return train, query, database


def split(data, spec):
    """Split into ``(train, query, database)`` datasets; train never overlaps query."""
    train, query, database = split_indices(data, spec)
    return data.subset(train), data.subset(query), data.subset(database)


def dataset_to_bytes(data):
    n, d = data.features.shape
    parts = [DATASET_MAGIC,
             struct.pack("<IIIIB", DATASET_VERSION, n, d, data.class_count, data.label_mode),
             np.ascontiguousarray(data.features, dtype="<f8").tobytes()]
    if data.multilabel:
        parts.append(np.packbits(data.labels.astype(bool), axis=1, bitorder="little").tobytes())
    else:
        parts.append(data.labels.astype("<u4").tobytes())
    return b"".join(parts)


def dataset_from_bytes(buf, what="dataset"):
    r = Reader(buf, what)
    r.expect_magic(DATASET_MAGIC)
    r.expect_version({DATASET_VERSION})
    n, d, c, mode = r.unpack("IIIB")
    if mode not in (SINGLE_LABEL, MULTI_LABEL):
        raise FormatError(f"{what}: unknown label mode {mode}")
    if c == 0:
        raise LabelRangeError(f"{what}: zero classes")
    x = np.frombuffer(r.take(8 * n * d), dtype="<f8").reshape(n, d).astype(np.float64)
    if mode == SINGLE_LABEL:
        labels = np.frombuffer(r.take(4 * n), dtype="<u4").astype(np.int64)
        if n and labels.max() >= c:
            raise LabelRangeError(f"{what}: label id {labels.max()} >= class count {c}")
    else:
        nb = (c + 7) // 8
        packed = np.frombuffer(r.take(nb * n), dtype=np.uint8).reshape(n, nb)
        labels = np.unpackbits(packed, axis=1, count=c, bitorder="little") if n else \
            np.zeros((0, c), np.uint8)
        if n and np.any(np.unpackbits(packed, axis=1, bitorder="little")[:, c:]):
            raise LabelRangeError(f"{what}: multi-hot bit set beyond class count {c}")
    r.finish()
    return LabeledDataset(x, labels, c)


def write_dataset(path, data):
    atomic_write(path, dataset_to_bytes(data))


def read_dataset(path):
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read(), what=str(path))
