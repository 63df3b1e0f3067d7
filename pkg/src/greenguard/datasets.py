"""Labeled flow datasets: CSV I/O, outlier fencing, min-max scaling, stratified splits."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write
from .errors import (
    ClassTooSmall,
    DimensionMismatch,
    EmptyAfterFilter,
    EmptyFile,
    MissingColumn,
    NonNumericCell,
)
from .schema import FEATURE_NAMES, AttackClass, normalize_name

DEFAULT_LABEL_COLUMN = "label"

# CICIoT2023 exports one column per TCP flag instead of a single flag total.
_CICIOT_FLAG_COLUMNS = (
    "fin_flag_number", "syn_flag_number", "rst_flag_number", "psh_flag_number",
    "ack_flag_number", "ece_flag_number", "cwr_flag_number",
)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Immutable table of feature rows, one ``AttackClass`` per row."""

    feature_names: tuple
    X: np.ndarray
    labels: tuple

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        if X.ndim != 2:
            X = X.reshape(len(self.labels), len(self.feature_names))
        if X.shape[1] != len(self.feature_names):
            raise DimensionMismatch(
                f"rows have {X.shape[1]} values, schema has {len(self.feature_names)} names"
            )
        if X.shape[0] != len(self.labels):
            raise DimensionMismatch(f"{X.shape[0]} rows but {len(self.labels)} labels")
        if not np.all(np.isfinite(X)):
            raise ValueError("dataset contains non-finite values")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and self.labels == other.labels
            and np.array_equal(self.X, other.X)
        )

    @property
    def rows(self):
        return self.X

    @property
    def attack_mask(self):
        return np.array([lab.is_attack for lab in self.labels], dtype=bool)

    @property
    def benign_mask(self):
        return ~self.attack_mask

    def subset(self, index):
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return LabeledDataset(
            self.feature_names, self.X[index], tuple(self.labels[i] for i in index)
        )

    def class_counts(self):
        counts = {}
        for lab in self.labels:
            counts[lab] = counts.get(lab, 0) + 1
        return counts


def load_csv(path, schema=FEATURE_NAMES, label_column=DEFAULT_LABEL_COLUMN):
    """Read a labeled feature CSV.

    Header names are matched after normalization (case, spaces, hyphens), so the
    published CICIoT2023 headers such as ``"Protocol Type"`` or ``"Tot sum"`` line
    up with the schema. Extra columns are ignored and feature order follows
    ``schema``. When ``flag_number`` is absent but the per-flag CICIoT2023 columns
    are present, it is derived as their sum.
    """
    X, labels = _read_rows(path, schema, label_column)
    return LabeledDataset(tuple(schema), X, labels)


def load_rows(path, schema=FEATURE_NAMES):
    """Read feature rows from a CSV that may lack a label column."""
    return _read_rows(path, schema, None)[0]


def _read_rows(path, schema, label_column):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: no header row") from None
        index = {}
        for i, name in enumerate(header):
            index.setdefault(normalize_name(name), i)

        label_at = None
        if label_column is not None:
            label_key = normalize_name(label_column)
            if label_key not in index:
                raise MissingColumn(label_column)
            label_at = index[label_key]
        sources = []
        for name in schema:
            key = normalize_name(name)
            if key in index:
                sources.append((name, [index[key]]))
            elif key == "flag_number" and all(c in index for c in _CICIOT_FLAG_COLUMNS):
                sources.append((name, [index[c] for c in _CICIOT_FLAG_COLUMNS]))
            else:
                raise MissingColumn(name)

        rows, labels = [], []
        for rowno, record in enumerate(reader, start=1):
            if not record:
                continue
            values = []
            for name, cols in sources:
                total = 0.0
                for c in cols:
                    cell = record[c] if c < len(record) else ""
                    try:
                        v = float(cell)
                    except ValueError:
                        raise NonNumericCell(rowno, name, cell) from None
                    if not math.isfinite(v):
                        raise NonNumericCell(rowno, name, cell)
                    total += v
                values.append(total)
            rows.append(values)
            if label_at is not None:
                labels.append(AttackClass.parse(record[label_at]))

    if not rows:
        raise EmptyFile(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), tuple(labels)


def write_csv(ds, path, label_column=DEFAULT_LABEL_COLUMN):
    """Write ``ds`` so that :func:`load_csv` reads back bit-identical values."""
    with atomic_write(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*ds.feature_names, label_column])
        for row, lab in zip(ds.X, ds.labels):
            writer.writerow([*(repr(float(v)) for v in row), lab.value])


def outlier_fences(X, k=1.5):
    """Tukey fences ``[Q1 - k*IQR, Q3 + k*IQR]`` per column."""
    q1, q3 = np.percentile(X, [25, 75], axis=0)
    iqr = q3 - q1
    return q1 - k * iqr, q3 + k * iqr


def filter_outliers(ds, k=1.5, columns=None):
    """Drop benign rows lying outside the benign Tukey fences on any feature.

    Fences are recomputed on the survivors until nothing more is removed, which
    makes the filter idempotent. Attack rows are always kept.

    Args:
        ds: dataset to filter.
        k: fence multiplier, > 0.
        columns: optional subset of feature names to fence on (default: all).
    """
    if k <= 0:
        raise ValueError("k must be positive")
    cols = (
        np.arange(len(ds.feature_names))
        if columns is None
        else np.array([ds.feature_names.index(c) for c in columns], dtype=int)
    )
    keep = np.ones(len(ds), dtype=bool)
    benign = ds.benign_mask
    if not benign.any():
        return ds
    while True:
        active = keep & benign
        if not active.any():
            raise EmptyAfterFilter("outlier filter removed every benign row")
        sub = ds.X[active][:, cols]
        lo, hi = outlier_fences(sub, k)
        inside = np.all((ds.X[:, cols] >= lo) & (ds.X[:, cols] <= hi), axis=1)
        new_keep = keep & (inside | ~benign)
        if np.array_equal(new_keep, keep):
            break
        keep = new_keep
    if keep.all():
        return ds
    return ds.subset(keep)


@dataclass(frozen=True, eq=False)
class NormalizationParams:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("min/max arrays must be 1-D and equal length")
        if np.any(lo > hi):
            raise ValueError("normalization min exceeds max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def __len__(self):
        return len(self.min)

    def __eq__(self, other):
        if not isinstance(other, NormalizationParams):
            return NotImplemented
        return np.array_equal(self.min, other.min) and np.array_equal(self.max, other.max)

    def to_dict(self):
        return {"min": [float(v) for v in self.min], "max": [float(v) for v in self.max]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["min"], dtype=np.float64), np.array(d["max"], dtype=np.float64))


def fit_normalizer(data):
    """Per-feature min/max over ``data`` (a ``LabeledDataset`` or a 2-D array)."""
    X = data.X if isinstance(data, LabeledDataset) else np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty 2-D array to fit a normalizer")
    return NormalizationParams(X.min(axis=0), X.max(axis=0))


def apply_normalizer(params, v):
    """Min-max scale a vector or a row matrix. Constant features map to 0.0."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != len(params):
        raise DimensionMismatch(f"expected {len(params)} features, got {v.shape[-1]}")
    span = params.max - params.min
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (v - params.min) / safe, 0.0)


def normalize_dataset(params, ds):
    return LabeledDataset(ds.feature_names, apply_normalizer(params, ds.X), ds.labels)


def _allocate(counts, fraction):
    """Per-class train sizes summing to round(fraction * total), each in [1, n-1]."""
    total = sum(counts)
    target = int(math.floor(fraction * total + 0.5))
    quotas = [fraction * n for n in counts]
    alloc = [min(max(int(math.floor(q)), 1), n - 1) for q, n in zip(quotas, counts)]
    order = sorted(range(len(counts)), key=lambda i: (-(quotas[i] - math.floor(quotas[i])), i))
    diff = target - sum(alloc)
    while diff != 0:
        moved = False
        for i in order if diff > 0 else reversed(order):
            if diff > 0 and alloc[i] < counts[i] - 1:
                alloc[i] += 1
                diff -= 1
                moved = True
            elif diff < 0 and alloc[i] > 1:
                alloc[i] -= 1
                diff += 1
                moved = True
            if diff == 0:
                break
        if not moved:
            break
    return alloc


def split(ds, train_fraction=0.75, seed=0):
    """Stratified, seeded train/test partition; both parts keep file order."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    by_class = {}
    for i, lab in enumerate(ds.labels):
        by_class.setdefault(lab, []).append(i)
    classes = [c for c in AttackClass if c in by_class]
    small = [c.value for c in classes if len(by_class[c]) < 2]
    if small:
        raise ClassTooSmall(f"classes with fewer than 2 rows: {', '.join(small)}")

    rng = np.random.default_rng(seed)
    alloc = _allocate([len(by_class[c]) for c in classes], train_fraction)
    train_idx = []
    for c, n_train in zip(classes, alloc):
        idx = np.array(by_class[c])
        train_idx.extend(idx[rng.permutation(len(idx))[:n_train]].tolist())
    mask = np.zeros(len(ds), dtype=bool)
    mask[train_idx] = True
    return ds.subset(mask), ds.subset(~mask)
