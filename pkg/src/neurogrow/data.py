"""Datasets: IDX and CSV loaders, a two-spirals generator, and seeded batching."""

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParseError
from .tensor import DTYPE

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    inputs: np.ndarray  # (N, features) or (N, C, H, W)
    labels: np.ndarray  # (N,) int64
    class_count: int
    mean: np.ndarray = None
    std: np.ndarray = None
    label_ids: dict = None

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=DTYPE)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if len(self.inputs) < 1:
            raise DataError("dataset is empty")
        if self.labels.shape != (len(self.inputs),):
            raise DataError(f"{len(self.inputs)} inputs but labels of shape {self.labels.shape}")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise DataError(f"labels must lie in [0, {self.class_count})")

    def __len__(self):
        return len(self.labels)

    @property
    def input_shape(self):
        return self.inputs.shape[1:]

    @property
    def normalized(self):
        return self.mean is not None

    def subset(self, idx):
        return Dataset(self.inputs[idx], self.labels[idx], self.class_count, self.mean, self.std, self.label_ids)


def feature_stats(x):
    """Per-feature mean and std; zero std is replaced by 1 so constant features map to 0."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def standardize(ds, stats=None):
    """Z-normalize ``ds`` with ``stats`` (or its own statistics); refuses to normalize twice."""
    if ds.normalized:
        raise DataError("dataset is already normalized")
    mean, std = stats if stats is not None else feature_stats(ds.inputs)
    return Dataset((ds.inputs - mean) / std, ds.labels, ds.class_count, mean, std, ds.label_ids)


def _read_exact(buf, offset, n, what):
    if len(buf) - offset < n:
        raise ParseError(f"{what}: truncated, expected {n} bytes at offset {offset} but only {len(buf) - offset} remain")
    return buf[offset:offset + n]


def read_idx(path, expected_magic):
    with open(path, "rb") as f:
        buf = f.read()
    header = _read_exact(buf, 0, 4, path)
    (magic,) = struct.unpack(">I", header)
    if magic != expected_magic:
        raise ParseError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", _read_exact(buf, 4, 4 * ndim, path))
    offset = 4 + 4 * ndim
    expected = int(np.prod(dims))
    payload = buf[offset:]
    if len(payload) != expected:
        raise ParseError(f"{path}: payload has {len(payload)} bytes, expected {expected} for dims {dims}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def write_idx(path, array):
    """Write a uint8 array in IDX format (images if rank 3, labels if rank 1)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def load_idx(images_path, labels_path, class_count=None, limit=None):
    """Load an IDX image/label pair as (N, 1, H, W) inputs scaled to [0, 1]."""
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if len(images) != len(labels):
        raise ParseError(f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    k = class_count if class_count is not None else int(labels.max()) + 1
    x = images.astype(DTYPE)[:, None, :, :] / 255.0
    return Dataset(x, labels.astype(np.int64), k)


def load_csv(path, label_column, stats=None, label_ids=None):
    """Load a numeric CSV with a header row.

    Labels map to dense ids in first-appearance order (or through
    ``label_ids`` for a test split). Features are z-normalized with ``stats``
    when given, otherwise with this file's own statistics.
    """
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows[0]
    if label_column not in header:
        raise ParseError(f"{path}: no column named {label_column!r} in header {header}")
    li = header.index(label_column)
    ids = dict(label_ids) if label_ids is not None else {}
    feats, labels = [], []
    for rownum, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}: row {rownum} has {len(row)} cells, header has {len(header)}")
        try:
            feats.append([float(c) for j, c in enumerate(row) if j != li])
        except ValueError as exc:
            raise ParseError(f"{path}: row {rownum}: non-numeric feature ({exc})") from None
        key = row[li]
        if key not in ids:
            if label_ids is not None:
                raise DataError(f"{path}: row {rownum}: label {key!r} not seen in training data")
            ids[key] = len(ids)
        labels.append(ids[key])
    if not feats:
        raise ParseError(f"{path}: no data rows")
    ds = Dataset(np.array(feats, dtype=DTYPE), np.array(labels), len(ids), label_ids=ids)
    return standardize(ds, stats)


def make_two_spirals(n_per_class, noise_std=0.0, seed=0, turns=1.5):
    """Two interleaved spirals on r = theta; class 1 is class 0 rotated by pi.

    Point k of class 0 sits at angle ``theta_k = pi/2 + 2*pi*turns*k/n``
    (before noise), i.e. at ``(theta cos theta, theta sin theta)``.
    """
    if n_per_class < 1:
        raise DataError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = np.random.default_rng(seed)
    theta = spiral_angles(n_per_class, turns)
    arm = np.stack([theta * np.cos(theta), theta * np.sin(theta)], axis=1)
    x = np.concatenate([arm, -arm])
    x = x + rng.normal(0.0, noise_std, size=x.shape) if noise_std > 0 else x
    y = np.repeat([0, 1], n_per_class)
    return Dataset(x, y, 2)


def spiral_angles(n, turns=1.5):
    return math.pi / 2 + 2 * math.pi * turns * np.arange(n) / n


def train_test_split(ds, test_fraction, seed):
    if not 0 < test_fraction < 1:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_test = max(1, int(round(test_fraction * len(ds))))
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def batches(ds, batch_size, epoch_seed):
    """Yield ``(inputs, labels)`` over a seeded permutation; the last batch may be short."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    perm = np.random.default_rng(epoch_seed).permutation(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = perm[start:start + batch_size]
        yield ds.inputs[idx], ds.labels[idx]
