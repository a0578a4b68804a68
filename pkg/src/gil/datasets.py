"""Tabular / sequence datasets with missing entries, loaders and batch samplers.

Missing entries are stored as NaN in ``values``; the observation mask
(1 = observed) and the placeholder-filled inputs are derived from that.
"""

import csv
import gzip
import math
import struct
import warnings
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

DEFAULT_MISSING_TOKENS = ("", "NaN", "NA")
IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049


class DataLoadError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    m: np.ndarray
    x_filled: np.ndarray
    y: int


@dataclass(frozen=True)
class SequenceSample:
    steps: list  # (x_t, m_t, x_filled_t) triples
    y: int

    @property
    def horizon(self):
        return len(self.steps)


def _observed_column_means(values):
    observed = ~np.isnan(values)
    counts = observed.sum(axis=0)
    sums = np.where(observed, values, 0.0).sum(axis=0)
    means = np.zeros(values.shape[1])
    np.divide(sums, counts, out=means, where=counts > 0)
    return means, counts


@dataclass(frozen=True, eq=False)
class Dataset:
    """Tabular dataset: one row per sample.

    ``truth`` holds the complete values when missingness was simulated, so
    imputation error can be measured; it is None for natively incomplete data.
    """

    values: np.ndarray
    labels: np.ndarray
    num_classes: int
    placeholder: float = 0.0
    truth: Optional[np.ndarray] = None
    feature_names: tuple = ()

    def __post_init__(self):
        if self.values.ndim != 2 or len(self.values) != len(self.labels):
            raise ValueError("values must be (n, d) with one label per row")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        return Sample(self.values[i], self.mask[i], self.filled[i], int(self.labels[i]))

    @property
    def d(self):
        return self.values.shape[1]

    @property
    def is_sequence(self):
        return False

    @cached_property
    def mask(self):
        return (~np.isnan(self.values)).astype(np.float64)

    @cached_property
    def filled(self):
        return np.where(np.isnan(self.values), self.placeholder, self.values)

    @cached_property
    def column_means(self):
        return _observed_column_means(self.values)[0]

    def subset(self, idx):
        idx = np.asarray(idx)
        return replace(
            self,
            values=self.values[idx],
            labels=self.labels[idx],
            truth=None if self.truth is None else self.truth[idx],
        )

    def with_values(self, values, truth=None):
        return replace(self, values=values, truth=self.truth if truth is None else truth)


@dataclass(frozen=True, eq=False)
class SequenceDataset:
    """Variable-length sequences, each a (T_j, d) array with NaN for missing."""

    sequences: list
    labels: np.ndarray
    num_classes: int
    placeholder: float = 0.0
    truth: Optional[list] = None
    feature_names: tuple = ()

    def __post_init__(self):
        if len(self.sequences) != len(self.labels):
            raise ValueError("one label per sequence required")
        dims = {s.shape[1] for s in self.sequences}
        if len(dims) > 1 or any(len(s) < 1 for s in self.sequences):
            raise ValueError("sequences must share d and have horizon >= 1")

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        x = self.sequences[i]
        m, f = self.mask[i], self.filled[i]
        return SequenceSample([(x[t], m[t], f[t]) for t in range(len(x))], int(self.labels[i]))

    @property
    def d(self):
        return self.sequences[0].shape[1]

    @property
    def is_sequence(self):
        return True

    @cached_property
    def mask(self):
        return [(~np.isnan(s)).astype(np.float64) for s in self.sequences]

    @cached_property
    def filled(self):
        return [np.where(np.isnan(s), self.placeholder, s) for s in self.sequences]

    @cached_property
    def column_means(self):
        return _observed_column_means(np.concatenate(self.sequences))[0]

    def subset(self, idx):
        idx = [int(i) for i in idx]
        return replace(
            self,
            sequences=[self.sequences[i] for i in idx],
            labels=self.labels[np.asarray(idx, dtype=np.int64)],
            truth=None if self.truth is None else [self.truth[i] for i in idx],
        )

    def with_values(self, sequences, truth=None):
        return replace(self, sequences=sequences, truth=self.truth if truth is None else truth)


def _parse_labels(raw):
    try:
        labels = np.array([int(v) for v in raw], dtype=np.int64)
        classes = int(labels.max()) + 1 if len(labels) else 0
        return labels, classes
    except ValueError:
        names = sorted(set(raw))
        lookup = {name: i for i, name in enumerate(names)}
        return np.array([lookup[v] for v in raw], dtype=np.int64), len(names)


def load_csv(path, label_column, missing_tokens=DEFAULT_MISSING_TOKENS, placeholder=0.0,
             standardize=False):
    """Read a headered CSV; cells matching ``missing_tokens`` become missing."""
    path = Path(path)
    missing_tokens = set(missing_tokens)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataLoadError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataLoadError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
        feature_cols = [i for i in range(len(header)) if i != label_idx]
        rows, raw_labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataLoadError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            raw_labels.append(row[label_idx].strip())
            vals = []
            for i in feature_cols:
                cell = row[i].strip()
                if cell in missing_tokens:
                    vals.append(math.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataLoadError(
                        f"{path}: row {lineno}, column {header[i]!r}: cannot parse {cell!r}"
                    ) from None
            rows.append(vals)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_cols))
    labels, num_classes = _parse_labels(raw_labels)
    _, counts = _observed_column_means(values)
    for j in np.flatnonzero(counts == 0):
        warnings.warn(f"{path}: column {header[feature_cols[j]]!r} has no observed values; mean set to 0")
    if standardize:
        values = standardize_columns(values)
    return Dataset(values, labels, max(num_classes, 2), placeholder,
                   feature_names=tuple(header[i] for i in feature_cols))


def standardize_columns(values):
    """(v - mean) / std per column over observed entries; NaN preserved."""
    means, counts = _observed_column_means(values)
    centred = values - means
    var = np.zeros(values.shape[1])
    sq = np.where(np.isnan(centred), 0.0, centred ** 2).sum(axis=0)
    np.divide(sq, counts, out=var, where=counts > 0)
    std = np.sqrt(var)
    std[std == 0] = 1.0
    return centred / std


def _open_maybe_gz(path):
    path = Path(path)
    with path.open("rb") as f:
        head = f.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else path.open("rb")


def _read_idx(path, magic, header_ints):
    with _open_maybe_gz(path) as f:
        blob = f.read()
    need = 4 * header_ints
    if len(blob) < need:
        raise DataLoadError(f"{path}: truncated header")
    header = struct.unpack(">" + "I" * header_ints, blob[:need])
    if header[0] != magic:
        raise DataLoadError(f"{path}: magic number {header[0]:#010x}, expected {magic:#010x}")
    size = int(np.prod(header[1:]))
    body = np.frombuffer(blob, dtype=np.uint8, offset=need)
    if body.size < size:
        raise DataLoadError(f"{path}: truncated, {body.size} of {size} bytes present")
    return header[1:], body[:size]


def load_mnist_idx(images_path, labels_path, limit=None, placeholder=0.0):
    """Load IDX image/label files (optionally gzipped); pixels scaled by 1/255."""
    (n_img, rows, cols), pixels = _read_idx(images_path, IDX_IMAGES_MAGIC, 4)
    (n_lab,), labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 2)
    if n_img != n_lab:
        raise DataLoadError(f"image count {n_img} != label count {n_lab}")
    images = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return Dataset(images, labels, 10, placeholder, truth=images.copy())


def split(ds, test_fraction, seed):
    """Seeded shuffled partition into (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")
    n = len(ds)
    order = np.random.default_rng(seed).permutation(n)
    n_test = int(round(n * test_fraction))
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))


def batch_iter(n, batch_size, seed, epochs=None):
    """Yield index arrays of ``batch_size``; reshuffled each epoch, last partial batch dropped."""
    n = n if isinstance(n, int) else len(n)
    if batch_size < 1 or batch_size > n:
        raise ConfigError(f"batch_size {batch_size} invalid for {n} samples")
    rng = np.random.default_rng(seed)
    epoch = 0
    while epochs is None or epoch < epochs:
        order = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield order[start:start + batch_size]
        epoch += 1


def balanced_batch_iter(ds, batch_size, seed, epochs=None):
    """Binary batches laid out as [b/2 label-1 | b/2 label-0]."""
    if ds.num_classes != 2 or batch_size % 2:
        raise ConfigError("balanced batches need binary labels and an even batch size")
    labels = np.asarray(ds.labels)
    pos, neg = np.flatnonzero(labels == 1), np.flatnonzero(labels == 0)
    half = batch_size // 2
    per_epoch = min(len(pos), len(neg)) // half
    if per_epoch == 0:
        raise ConfigError(f"not enough samples of each class for batch_size {batch_size}")
    rng = np.random.default_rng(seed)
    epoch = 0
    while epochs is None or epoch < epochs:
        p, q = rng.permutation(pos), rng.permutation(neg)
        for k in range(per_epoch):
            yield np.concatenate([p[k * half:(k + 1) * half], q[k * half:(k + 1) * half]])
        epoch += 1


@dataclass(frozen=True)
class SyntheticSpec:
    """Label-dependent missingness task (think bacterial vs viral test panels).

    Features in the first half are missing more often for label 1, the second
    half more often for label 0; ``mask_signal`` is the shift in missing
    probability.  Observed values are ``offset + value_signal * (2y - 1) + noise``.
    """

    n: int = 2000
    d: int = 20
    mask_signal: float = 0.3
    value_signal: float = 0.17
    offset: float = 2.0
    seed: int = 0


def synthetic_missing_probs(spec, labels):
    sign = np.where(np.arange(spec.d) < spec.d // 2, 1.0, -1.0)
    direction = 2.0 * np.asarray(labels)[:, None] - 1.0
    return 0.5 * (1.0 + spec.mask_signal * sign[None, :] * direction)


def synthetic_mnar(spec=None, **kwargs):
    spec = spec or SyntheticSpec(**kwargs)
    rng = np.random.default_rng(spec.seed)
    labels = rng.integers(0, 2, size=spec.n)
    direction = 2.0 * labels[:, None] - 1.0
    truth = spec.offset + spec.value_signal * direction + rng.standard_normal((spec.n, spec.d))
    missing = rng.random((spec.n, spec.d)) < synthetic_missing_probs(spec, labels)
    values = np.where(missing, np.nan, truth)
    return Dataset(values, labels.astype(np.int64), 2, 0.0, truth=truth)


def synthetic_sequences(n=200, d=6, min_len=3, max_len=8, mask_signal=0.3, value_signal=0.3,
                        offset=2.0, seed=0):
    """Sequence analogue of :func:`synthetic_mnar` for LSTM experiments."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    spec = SyntheticSpec(n=1, d=d, mask_signal=mask_signal)
    seqs, truths = [], []
    for y in labels:
        T = int(rng.integers(min_len, max_len + 1))
        truth = offset + value_signal * (2.0 * y - 1.0) + rng.standard_normal((T, d))
        p = synthetic_missing_probs(spec, np.full(T, y))
        seqs.append(np.where(rng.random((T, d)) < p, np.nan, truth))
        truths.append(truth)
    return SequenceDataset(seqs, labels.astype(np.int64), 2, 0.0, truth=truths)
