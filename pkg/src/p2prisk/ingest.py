"""Loan CSV ingestion and feature engineering.

The stages run in a fixed order:

    filter/label -> drop leakage -> drop missing -> derive ratios
    -> remove outliers -> log transform -> one-hot -> split -> min-max

``prepare`` runs everything up to and including one-hot encoding. Splitting
and min-max scaling are per-repetition operations: the scaler is fitted on
the training split and applied unchanged (unclipped) to the test split.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .data_model import (
    BINARY,
    NUMERIC,
    Column,
    ColumnStats,
    Dataset,
    FeatureSchema,
    label_counts,
    select_rows,
    stats_of,
)
from .errors import (
    ConfigError,
    ConstantColumn,
    EmptyResult,
    NoTerminalLoans,
    NonPositiveIncome,
    NonPositiveInstallment,
    ParseError,
    TooFewSamples,
    UnknownColumn,
)

log = logging.getLogger(__name__)

MISSING_MARKERS = frozenset({"", "na", "n/a", "null"})

# Lending Club names for: LC grade, interest rate, issue date, outstanding
# principal, total payment, total received principal, total received interest,
# total late fees received, recoveries, post charge-off collection fee, last
# payment date, last payment amount, funded amount.
DEFAULT_LEAKS = (
    "grade",
    "int_rate",
    "issue_d",
    "out_prncp",
    "total_pymnt",
    "total_rec_prncp",
    "total_rec_int",
    "total_rec_late_fee",
    "recoveries",
    "collection_recovery_fee",
    "last_pymnt_d",
    "last_pymnt_amnt",
    "funded_amnt",
)

FULLY_PAID = frozenset({"fully paid"})
DEFAULTED = frozenset({"charged off", "default"})
IN_PROGRESS = frozenset(
    {
        "current",
        "issued",
        "in grace period",
        "late (16-30 days)",
        "late (31-120 days)",
    }
)

INCOME_TO_PAYMENT = "income_to_payment"
REVOLVING_TO_INCOME = "revolving_to_income"
NEW_DTI = "new_dti"


# ---------------------------------------------------------------- raw table


@dataclass(frozen=True, eq=False)
class RawTable:
    """Text cells by column, with a parallel missing-cell mask.

    ``labels`` is attached once loan statuses have been mapped to classes and
    is kept aligned through every later row filter.
    """

    columns: tuple[str, ...]
    cells: dict[str, NDArray[np.object_]]
    missing: dict[str, NDArray[np.bool_]]
    labels: NDArray[np.int64] | None = None

    @property
    def n_rows(self) -> int:
        if not self.columns:
            return 0 if self.labels is None else len(self.labels)
        return len(self.cells[self.columns[0]])

    def take(self, mask_or_idx) -> RawTable:
        cells = {c: self.cells[c][mask_or_idx] for c in self.columns}
        missing = {c: self.missing[c][mask_or_idx] for c in self.columns}
        labels = None if self.labels is None else self.labels[mask_or_idx]
        return RawTable(self.columns, cells, missing, labels)

    def without(self, names: Iterable[str]) -> RawTable:
        drop = set(names)
        cols = tuple(c for c in self.columns if c not in drop)
        return RawTable(
            cols,
            {c: self.cells[c] for c in cols},
            {c: self.missing[c] for c in cols},
            self.labels,
        )


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_MARKERS


def load_csv(path, schema_hint: Sequence[str] | None = None) -> RawTable:
    """Parse a headed, comma-separated UTF-8 file into a :class:`RawTable`.

    ``schema_hint`` optionally names columns that must be present.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path} is empty", row=1) from None
        except (csv.Error, UnicodeDecodeError) as exc:
            raise ParseError(f"{path}: {exc}", row=1) from exc
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise ParseError(f"duplicate column names {dupes}", row=1)
        rows = []
        try:
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ParseError(
                        f"row {lineno} has {len(row)} cells, header has {len(header)}",
                        row=lineno,
                        column=min(len(row), len(header)) + 1,
                    )
                rows.append(row)
        except (csv.Error, UnicodeDecodeError) as exc:
            raise ParseError(f"{path}: {exc}", row=reader.line_num) from exc

    cells, missing = {}, {}
    for j, name in enumerate(header):
        col = np.empty(len(rows), dtype=object)
        col[:] = [r[j] for r in rows]
        cells[name] = col
        missing[name] = np.fromiter((_is_missing(v) for v in col), dtype=bool, count=len(rows))
    if schema_hint:
        absent = [c for c in schema_hint if c not in cells]
        if absent:
            raise UnknownColumn(f"{path} lacks required columns {absent}")
    return RawTable(tuple(header), cells, missing)


def filter_and_label(raw: RawTable, status_column: str = "loan_status") -> RawTable:
    """Keep terminal loans and attach labels (fully paid = 1, default = 0)."""
    if status_column not in raw.cells:
        raise UnknownColumn(f"status column {status_column!r} not found")
    status = np.array([str(s).strip().lower() for s in raw.cells[status_column]], dtype=object)
    good = np.isin(status, list(FULLY_PAID))
    bad = np.isin(status, list(DEFAULTED))
    live = np.isin(status, list(IN_PROGRESS))
    unknown = ~(good | bad | live)
    if unknown.any():
        log.warning("dropped %d rows with unrecognised loan status", int(unknown.sum()))
    if live.any():
        log.info("dropped %d in-progress loans", int(live.sum()))
    keep = good | bad
    if not keep.any():
        raise NoTerminalLoans("no fully paid or defaulted loans remain after filtering")
    out = raw.take(keep).without([status_column])
    return replace(out, labels=good[keep].astype(np.int64))


def drop_leakage(raw: RawTable, leaks: Iterable[str] = DEFAULT_LEAKS) -> RawTable:
    leaks = list(leaks)
    absent = [c for c in leaks if c not in raw.cells]
    if absent:
        log.warning("leakage columns not present: %s", ", ".join(absent))
    return raw.without(leaks)


def drop_missing(raw: RawTable, max_missing_fraction: float = 0.30) -> RawTable:
    """Drop sparse columns first, then every row that still has a gap."""
    n = raw.n_rows
    sparse = [
        c for c in raw.columns if n and raw.missing[c].mean() > max_missing_fraction
    ]
    if sparse:
        log.info("dropped %d columns over %.0f%% missing", len(sparse), 100 * max_missing_fraction)
    out = raw.without(sparse)
    if not out.columns:
        raise EmptyResult("every column exceeded the missing-value threshold")
    any_missing = np.zeros(n, dtype=bool)
    for c in out.columns:
        any_missing |= out.missing[c]
    out = out.take(~any_missing)
    if out.n_rows == 0:
        raise EmptyResult("no rows survive missing-value removal")
    return out


# ------------------------------------------------------- numeric transforms


def iqr_bounds(stats: ColumnStats) -> tuple[float, float]:
    spread = stats.q3 - stats.q1
    return stats.q1 - 1.5 * spread, stats.q3 + 1.5 * spread


def remove_outliers(dataset: Dataset, columns: Iterable[str]) -> Dataset:
    """Drop rows falling strictly outside the IQR fences of any listed column.

    Fences are computed once, on the data as given (no iteration), and the
    interval is closed.
    """
    keep = np.ones(dataset.n_samples, dtype=bool)
    for name in columns:
        values = dataset.column(name)
        lo, hi = iqr_bounds(stats_of(values))
        keep &= (values >= lo) & (values <= hi)
    if not keep.any():
        raise EmptyResult("outlier removal left no rows")
    if not keep.all():
        log.info("outlier removal dropped %d rows", int((~keep).sum()))
    return select_rows(dataset, np.flatnonzero(keep))


@dataclass(frozen=True)
class NormalizationParams:
    x_min: float
    x_max: float


def minmax_fit_transform(train_column) -> tuple[NormalizationParams, NDArray[np.float64]]:
    v = np.asarray(train_column, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if not hi > lo:
        raise ConstantColumn(f"column is constant ({lo}); cannot min-max scale")
    params = NormalizationParams(lo, hi)
    return params, minmax_apply(params, v)


def minmax_apply(params: NormalizationParams, value):
    """Scale with training parameters. Test values are not clipped."""
    return (np.asarray(value, dtype=np.float64) - params.x_min) / (params.x_max - params.x_min)


@dataclass(frozen=True)
class Scaler:
    """Per-column min-max parameters fitted on a training split."""

    columns: tuple[str, ...]
    params: tuple[NormalizationParams, ...]
    dropped: tuple[str, ...] = ()

    @classmethod
    def fit(cls, train: Dataset) -> Scaler:
        cols, params, dropped = [], [], []
        for j, name in enumerate(train.schema.names):
            try:
                p, _ = minmax_fit_transform(train.X[:, j])
            except ConstantColumn:
                dropped.append(name)
                continue
            cols.append(name)
            params.append(p)
        if dropped:
            log.warning("dropped %d constant training columns: %s", len(dropped), ", ".join(dropped))
        if not cols:
            raise ConstantColumn("every training column is constant")
        return cls(tuple(cols), tuple(params), tuple(dropped))

    def transform(self, dataset: Dataset) -> Dataset:
        idx = [dataset.schema.index(c) for c in self.columns]
        X = np.column_stack(
            [minmax_apply(p, dataset.X[:, j]) for p, j in zip(self.params, idx)]
        )
        schema = FeatureSchema(
            tuple(dataset.schema.columns[j] for j in idx), dataset.schema.target_name
        )
        return Dataset(schema, X, dataset.y, dataset.row_ids)


def log_transform(values) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Natural log of the strictly positive entries.

    Returns ``(logged, keep)`` where ``logged`` holds only the kept entries;
    non-positive entries are reported through ``keep`` so the caller can drop
    those rows.
    """
    v = np.asarray(values, dtype=np.float64)
    keep = v > 0
    if not keep.all():
        log.warning("log transform: %d non-positive values dropped", int((~keep).sum()))
    return np.log(v[keep]), keep


def log_transform_columns(dataset: Dataset, columns: Iterable[str]) -> Dataset:
    columns = list(columns)
    keep = np.ones(dataset.n_samples, dtype=bool)
    for name in columns:
        keep &= dataset.column(name) > 0
    if not keep.any():
        raise EmptyResult("log transform left no rows")
    if not keep.all():
        log.warning("log transform dropped %d rows with non-positive values", int((~keep).sum()))
    X = dataset.X[keep].copy()
    for name in columns:
        j = dataset.schema.index(name)
        X[:, j] = np.log(X[:, j])
    return Dataset(dataset.schema, X, dataset.y[keep], dataset.row_ids[keep])


def one_hot(
    name: str, values: Sequence[str], categories: Sequence[str] | None = None
) -> tuple[list[str], NDArray[np.float64], list[str]]:
    """Indicator columns ``<name>_<category>``.

    Categories default to the sorted distinct values. Values outside a given
    category list encode as an all-zero row.
    """
    vals = np.array([str(v).strip() for v in values], dtype=object)
    cats = sorted(set(vals.tolist())) if categories is None else [str(c) for c in categories]
    M = np.zeros((len(vals), len(cats)), dtype=np.float64)
    for j, c in enumerate(cats):
        M[:, j] = vals == c
    unseen = int((M.sum(axis=1) == 0).sum())
    if unseen:
        log.warning("%s: %d rows with unseen categories encoded as all zeros", name, unseen)
    return [f"{name}_{c}" for c in cats], M, cats


def derive_ratios(dti, annual_income, installment, revolving_balance, dti_is_percent: bool = True):
    """Income-to-payment, revolving-to-income and new DTI.

    Works elementwise on scalars or arrays. ``dti`` is the Lending Club value,
    divided by 100 first when ``dti_is_percent``.
    """
    income = np.asarray(annual_income, dtype=np.float64)
    inst = np.asarray(installment, dtype=np.float64)
    if np.any(income <= 0):
        raise NonPositiveIncome("annual income must be positive")
    if np.any(inst <= 0):
        raise NonPositiveInstallment("installment must be positive")
    dti_fraction = np.asarray(dti, dtype=np.float64) / (100.0 if dti_is_percent else 1.0)
    monthly = income / 12.0
    income_to_payment = monthly / inst
    revolving_to_income = np.asarray(revolving_balance, dtype=np.float64) / monthly
    nmra = dti_fraction * monthly + inst
    new_dti = nmra / monthly
    if np.ndim(new_dti) == 0:
        return float(income_to_payment), float(revolving_to_income), float(new_dti)
    return income_to_payment, revolving_to_income, new_dti


@dataclass(frozen=True)
class CorrelationRow:
    attribute: str
    correlation: float


def correlation_with_target(dataset: Dataset) -> list[CorrelationRow]:
    """Pearson (point-biserial) correlation of each column with the label."""
    y = dataset.y.astype(np.float64)
    yc = y - y.mean()
    ys = math.sqrt(float(yc @ yc))
    rows = []
    for j, name in enumerate(dataset.schema.names):
        xc = dataset.X[:, j] - dataset.X[:, j].mean()
        xs = math.sqrt(float(xc @ xc))
        r = 0.0 if xs == 0 or ys == 0 else float(xc @ yc) / (xs * ys)
        rows.append(CorrelationRow(name, max(-1.0, min(1.0, r))))
    rows.sort(key=lambda r: -abs(r.correlation))
    return rows


def train_test_split(
    dataset: Dataset, train_fraction: float = 0.7, seed=None
) -> tuple[Dataset, Dataset]:
    """Stratified split: each class is partitioned independently."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n0, n1 = label_counts(dataset.y)
    if min(n0, n1) < 2:
        raise TooFewSamples(f"need at least 2 rows per class, have {{0: {n0}, 1: {n1}}}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in (0, 1):
        members = np.flatnonzero(dataset.y == label)
        members = members[rng.permutation(members.size)]
        n_train = int(math.floor(train_fraction * members.size + 0.5))
        n_train = min(max(n_train, 1), members.size - 1)
        train_idx.append(members[:n_train])
        test_idx.append(members[n_train:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return select_rows(dataset, train), select_rows(dataset, test)


def split_and_scale(dataset: Dataset, train_fraction: float = 0.7, seed=None):
    """Stratified split followed by min-max scaling fitted on the train side."""
    train, test = train_test_split(dataset, train_fraction, seed)
    scaler = Scaler.fit(train)
    return scaler.transform(train), scaler.transform(test), scaler


# ------------------------------------------------------------- the pipeline


@dataclass
class PipelineConfig:
    """Column mapping and knobs for :func:`prepare`. Loaded from JSON."""

    status_column: str = "loan_status"
    annual_income: str = "annual_inc"
    dti: str = "dti"
    installment: str = "installment"
    revolving_balance: str = "revol_bal"
    categorical: list[str] = field(
        default_factory=lambda: ["term", "home_ownership", "verification_status", "purpose"]
    )
    leaks: list[str] = field(default_factory=lambda: list(DEFAULT_LEAKS))
    extra_drop: list[str] = field(default_factory=list)
    max_missing_fraction: float = 0.30
    dti_is_percent: bool = True
    outlier_columns: list[str] = field(
        default_factory=lambda: [
            "annual_inc",
            "dti",
            "revol_bal",
            INCOME_TO_PAYMENT,
            REVOLVING_TO_INCOME,
            NEW_DTI,
        ]
    )
    log_columns: list[str] = field(
        default_factory=lambda: ["annual_inc", INCOME_TO_PAYMENT, REVOLVING_TO_INCOME]
    )
    emp_length_column: str | None = "emp_length"

    @classmethod
    def from_dict(cls, data: dict) -> PipelineConfig:
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown pipeline config keys: {unknown}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> PipelineConfig:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data.get("pipeline", data))

    def to_dict(self) -> dict:
        return asdict(self)


_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _parse_numeric(values: NDArray[np.object_]) -> NDArray[np.float64] | None:
    out = np.empty(len(values), dtype=np.float64)
    for i, v in enumerate(values):
        s = str(v).strip().rstrip("%").replace(",", "").strip()
        if not _NUMBER.match(s):
            return None
        out[i] = float(s)
    return out


def parse_emp_length(value: str) -> float:
    """'< 1 year' -> 0, '10+ years' -> 10, '3 years' -> 3."""
    s = str(value).strip().lower()
    if s.startswith("<"):
        return 0.0
    m = re.search(r"\d+", s)
    if m is None:
        raise ValueError(f"unrecognised employment length {value!r}")
    return float(min(int(m.group()), 10))


@dataclass
class PrepareResult:
    dataset: Dataset
    correlations: list[CorrelationRow]
    log: dict


def prepare(raw: RawTable, config: PipelineConfig | None = None) -> PrepareResult:
    """Run the feature-engineering stages from raw rows to a numeric dataset."""
    cfg = config or PipelineConfig()
    audit: dict = {"rows_loaded": raw.n_rows}

    table = filter_and_label(raw, cfg.status_column)
    n0, n1 = label_counts(table.labels)
    audit["after_status_filter"] = {"rows": table.n_rows, "default": n0, "fully_paid": n1}
    table = drop_leakage(table, list(cfg.leaks) + list(cfg.extra_drop))
    table = drop_missing(table, cfg.max_missing_fraction)
    audit["after_missing"] = table.n_rows

    required = [cfg.annual_income, cfg.dti, cfg.installment, cfg.revolving_balance]
    absent = [c for c in required if c not in table.cells]
    if absent:
        raise UnknownColumn(f"columns needed for derived ratios are missing: {absent}")

    numeric: dict[str, NDArray[np.float64]] = {}
    categorical: dict[str, NDArray[np.object_]] = {}
    skipped = []
    for name in table.columns:
        if name in cfg.categorical:
            categorical[name] = table.cells[name]
            continue
        if name == cfg.emp_length_column:
            try:
                numeric[name] = np.array([parse_emp_length(v) for v in table.cells[name]])
                continue
            except ValueError:
                pass
        parsed = _parse_numeric(table.cells[name])
        if parsed is None:
            skipped.append(name)
        else:
            numeric[name] = parsed
    if skipped:
        log.info("dropped %d non-numeric, non-categorical columns", len(skipped))
    audit["dropped_text_columns"] = skipped
    for name in required:
        if name not in numeric:
            raise ParseError(f"column {name!r} is not numeric")

    # cleaning: ratio features need positive income and installment
    ok = (numeric[cfg.annual_income] > 0) & (numeric[cfg.installment] > 0)
    if not ok.all():
        log.warning("dropped %d rows with non-positive income or installment", int((~ok).sum()))
    if not ok.any():
        raise EmptyResult("no rows with positive income and installment")
    numeric = {k: v[ok] for k, v in numeric.items()}
    categorical = {k: v[ok] for k, v in categorical.items()}
    labels = table.labels[ok]

    itp, rti, ndti = derive_ratios(
        numeric[cfg.dti],
        numeric[cfg.annual_income],
        numeric[cfg.installment],
        numeric[cfg.revolving_balance],
        cfg.dti_is_percent,
    )
    numeric[INCOME_TO_PAYMENT] = itp
    numeric[REVOLVING_TO_INCOME] = rti
    numeric[NEW_DTI] = ndti

    names = list(numeric)
    ds = Dataset(FeatureSchema.numeric(names), np.column_stack([numeric[n] for n in names]), labels)
    ds = remove_outliers(ds, [c for c in cfg.outlier_columns if c in numeric])
    audit["after_outliers"] = ds.n_samples
    ds = log_transform_columns(ds, [c for c in cfg.log_columns if c in numeric])
    audit["after_log"] = ds.n_samples

    # row_ids still index the pre-outlier arrays, so categoricals align through them
    blocks = [ds.X]
    columns = list(ds.schema.columns)
    for name, values in categorical.items():
        cols, M, cats = one_hot(name, values[ds.row_ids])
        blocks.append(M)
        columns.extend(Column(c, BINARY) for c in cols)
        audit.setdefault("categories", {})[name] = cats
    final = Dataset(FeatureSchema(tuple(columns)), np.hstack(blocks), ds.y)
    n0, n1 = label_counts(final.y)
    audit["final"] = {
        "rows": final.n_samples,
        "features": final.n_features,
        "default": n0,
        "fully_paid": n1,
        "default_pct": 100.0 * n0 / final.n_samples,
        "imbalance_ratio": (max(n0, n1) / min(n0, n1)) if min(n0, n1) else None,
    }
    return PrepareResult(final, correlation_with_target(final), audit)


# ------------------------------------------------------------------- output


def write_dataset_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(dataset.schema.names + [dataset.schema.target_name])
        for row, label in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def read_dataset_csv(path, label_column: str = "label") -> Dataset:
    """Read a numeric CSV with a 0/1 label column (as written by ``prepare``)."""
    raw = load_csv(path)
    if label_column not in raw.cells:
        raise UnknownColumn(f"{path} has no {label_column!r} column")
    names = [c for c in raw.columns if c != label_column]
    cols = []
    kinds = []
    for name in names:
        if raw.missing[name].any():
            raise ParseError(f"column {name!r} has missing values", column=name)
        parsed = _parse_numeric(raw.cells[name])
        if parsed is None:
            raise ParseError(f"column {name!r} is not numeric", column=name)
        cols.append(parsed)
        kinds.append(BINARY if np.isin(parsed, (0.0, 1.0)).all() else NUMERIC)
    labels = _parse_numeric(raw.cells[label_column])
    if labels is None or not np.isin(labels, (0.0, 1.0)).all():
        raise ParseError(f"{label_column!r} must contain only 0 and 1", column=label_column)
    X = np.column_stack(cols) if cols else np.zeros((len(labels), 0))
    schema = FeatureSchema(tuple(Column(n, k) for n, k in zip(names, kinds)), label_column)
    return Dataset(schema, X, labels.astype(np.int64))


def write_correlations_csv(rows: Sequence[CorrelationRow], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["attribute", "correlation"])
        for r in rows:
            w.writerow([r.attribute, f"{r.correlation:.6f}"])
