"""Immutable dataset representation shared by every stage of the pipeline.

Labels follow the loan-outcome convention: 1 is a fully paid loan (the
"good", majority class) and 0 is a default (the minority class). Class 1 is
the positive class for every metric.

Quartiles use linear interpolation between closest ranks, i.e. position
``(n - 1) * p`` in the sorted column (numpy's default "linear" method). The
outlier filter depends on this choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import EmptyClass, IndexOutOfRange, UnknownColumn

POSITIVE = 1
NEGATIVE = 0

NUMERIC = "numeric"
BINARY = "binary"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = NUMERIC


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[Column, ...]
    target_name: str = "label"

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate column names: {dupes}")
        for c in self.columns:
            if c.kind not in (NUMERIC, BINARY):
                raise ValueError(f"column {c.name!r} has unknown kind {c.kind!r}")

    @classmethod
    def numeric(cls, names: Sequence[str], target_name: str = "label") -> FeatureSchema:
        return cls(tuple(Column(n) for n in names), target_name)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise UnknownColumn(f"no column named {name!r}")

    def __len__(self) -> int:
        return len(self.columns)


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus binary labels.

    ``row_ids`` tracks provenance: source rows keep their original id through
    every selection, synthetic rows carry ``-1``.
    """

    schema: FeatureSchema
    X: NDArray[np.float64]
    y: NDArray[np.int64]
    row_ids: NDArray[np.int64] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, len(self.schema))
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        y = np.asarray(self.y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        if X.shape[1] != len(self.schema):
            raise ValueError(
                f"schema has {len(self.schema)} columns, matrix has {X.shape[1]}"
            )
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if not np.isfinite(X).all():
            raise ValueError("feature matrix contains non-finite values")
        ids = (
            np.arange(X.shape[0], dtype=np.int64)
            if self.row_ids is None
            else np.asarray(self.row_ids, dtype=np.int64)
        )
        if ids.shape != y.shape:
            raise ValueError("row_ids length must match labels")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y.astype(np.int64)))
        object.__setattr__(self, "row_ids", _frozen(ids))

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n_samples

    def column(self, name: str) -> NDArray[np.float64]:
        return self.X[:, self.schema.index(name)]

    def with_rows(self, X, y, row_ids) -> Dataset:
        return Dataset(self.schema, X, y, row_ids)

    def equals(self, other: Dataset) -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.row_ids, other.row_ids)
        )


@dataclass(frozen=True)
class ColumnStats:
    q1: float
    q3: float
    min: float
    max: float
    mean: float


@dataclass(frozen=True)
class ClassCounts:
    n_majority: int
    n_minority: int
    imbalance_ratio: float

    def to_dict(self) -> dict:
        return {
            "n_majority": self.n_majority,
            "n_minority": self.n_minority,
            "imbalance_ratio": self.imbalance_ratio,
        }


def class_counts(dataset: Dataset) -> ClassCounts:
    """Majority/minority counts and their ratio (majority / minority)."""
    n1 = int(np.count_nonzero(dataset.y == POSITIVE))
    n0 = dataset.n_samples - n1
    if n0 == 0 or n1 == 0:
        raise EmptyClass(f"class counts are {{0: {n0}, 1: {n1}}}; both classes required")
    hi, lo = max(n0, n1), min(n0, n1)
    return ClassCounts(hi, lo, hi / lo)


def label_counts(y) -> tuple[int, int]:
    """Return (count of label 0, count of label 1)."""
    y = np.asarray(y)
    n1 = int(np.count_nonzero(y == POSITIVE))
    return y.size - n1, n1


def column_stats(dataset: Dataset, column: str) -> ColumnStats:
    values = dataset.column(column)
    return stats_of(values)


def stats_of(values) -> ColumnStats:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot summarise an empty column")
    q1, q3 = np.quantile(v, [0.25, 0.75], method="linear")
    return ColumnStats(float(q1), float(q3), float(v.min()), float(v.max()), float(v.mean()))


def select_rows(dataset: Dataset, indices: Sequence[int]) -> Dataset:
    """New dataset whose row ``i`` is source row ``indices[i]``; duplicates allowed."""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    n = dataset.n_samples
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        bad = idx[(idx < 0) | (idx >= n)][0]
        raise IndexOutOfRange(f"row index {bad} outside [0, {n})")
    return Dataset(dataset.schema, dataset.X[idx], dataset.y[idx], dataset.row_ids[idx])


def concat_rows(dataset: Dataset, X_extra, y_extra) -> Dataset:
    """Append synthetic rows (provenance id -1) to ``dataset``."""
    X_extra = np.asarray(X_extra, dtype=np.float64).reshape(-1, dataset.n_features)
    y_extra = np.asarray(y_extra, dtype=np.int64).reshape(-1)
    return Dataset(
        dataset.schema,
        np.vstack([dataset.X, X_extra]),
        np.concatenate([dataset.y, y_extra]),
        np.concatenate([dataset.row_ids, np.full(y_extra.size, -1, dtype=np.int64)]),
    )
