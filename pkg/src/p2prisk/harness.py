"""Classifier x resampler experiment grid with repetition-averaged metrics.

Every repetition draws a fresh stratified split, scales it with min-max
parameters fitted on the training side, and then, for every combination,
resamples the training split only, fits the classifier and scores the
untouched test split. Seeds for every cell are derived from the master seed
with :class:`numpy.random.SeedSequence`, so a run is reproducible bit for bit
regardless of how many worker threads execute it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import classifiers as clf_mod
from . import resampling
from .classifiers import CLASSIFIERS, ForestParams, LogisticConfig, train_classifier
from .data_model import Dataset, FeatureSchema, label_counts
from .errors import ConfigError, InvalidSpec, P2PRiskError, UndefinedMetric
from .ingest import read_dataset_csv, split_and_scale
from .metrics import METRIC_NAMES, TABLE_HEADER, MetricsReport, evaluate
from .resampling import METHODS, ResamplePlan

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SPLIT_STREAM = 0


# ------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 5460
    imbalance_ratio: float = 4.46
    n_features: int = 10
    class_separation: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.imbalance_ratio < 1:
            raise InvalidSpec(f"imbalance_ratio must be >= 1, got {self.imbalance_ratio}")
        if self.class_separation < 0:
            raise InvalidSpec("class_separation must be >= 0")
        if self.n_features < 1:
            raise InvalidSpec("n_features must be >= 1")
        n_min, n_maj = self.class_sizes()
        if n_min < 1 or n_maj < 1:
            raise InvalidSpec(f"{self.n_samples} samples cannot hold both classes at this ratio")

    def class_sizes(self) -> tuple[int, int]:
        """(minority, majority) counts."""
        n_min = int(math.floor(self.n_samples / (1.0 + self.imbalance_ratio) + 0.5))
        return n_min, self.n_samples - n_min


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Two unit-variance Gaussian clouds, means ``class_separation`` apart.

    The mean difference lies along the all-ones direction; label 1 is the
    majority class. Rows are shuffled.
    """
    n_min, n_maj = spec.class_sizes()
    rng = np.random.default_rng(spec.seed)
    d = spec.n_features
    shift = (spec.class_separation / 2.0) * np.ones(d) / math.sqrt(d)
    X = rng.standard_normal((spec.n_samples, d))
    y = np.r_[np.ones(n_maj, dtype=np.int64), np.zeros(n_min, dtype=np.int64)]
    X += np.where(y[:, None] == 1, shift, -shift)
    order = rng.permutation(spec.n_samples)
    return Dataset(FeatureSchema.numeric([f"x{i}" for i in range(d)]), X[order], y[order])


# ---------------------------------------------------------------- config


def _default_classifier_params() -> dict[str, dict]:
    return {
        "logistic": asdict(LogisticConfig()),
        "lda": {"lam": 1e-6},
        "forest": asdict(ForestParams()),
    }


_RESAMPLE_KEYS = ("k_smote", "k_enn", "beta", "iht_estimator", "iht_cv_folds", "adasyn_strict")


def _default_resample() -> dict[str, Any]:
    plan = ResamplePlan()
    return {k: getattr(plan, k) for k in _RESAMPLE_KEYS}


@dataclass
class ExperimentConfig:
    classifiers: list[str] = field(default_factory=lambda: list(CLASSIFIERS))
    resamplers: list[str] = field(default_factory=lambda: list(METHODS))
    repetitions: int = 20
    train_fraction: float = 0.7
    master_seed: int = 0
    threshold: float = 0.5
    classifier_params: dict[str, dict] = field(default_factory=_default_classifier_params)
    resample: dict[str, Any] = field(default_factory=_default_resample)
    data: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if not self.classifiers or not self.resamplers:
            raise ConfigError("select at least one classifier and one resampler")
        bad = [c for c in self.classifiers if c not in CLASSIFIERS]
        if bad:
            raise ConfigError(f"unknown classifiers {bad}; choose from {list(CLASSIFIERS)}")
        bad = [r for r in self.resamplers if r not in METHODS]
        if bad:
            raise ConfigError(f"unknown resamplers {bad}; choose from {list(METHODS)}")
        if len(set(self.classifiers)) != len(self.classifiers) or len(set(self.resamplers)) != len(
            self.resamplers
        ):
            raise ConfigError("classifier and resampler lists must not repeat entries")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        params = _default_classifier_params()
        for name, block in (self.classifier_params or {}).items():
            if name not in params:
                raise ConfigError(f"classifier_params has unknown classifier {name!r}")
            params[name] = {**params[name], **block}
        self.classifier_params = params
        unknown = set(self.resample or {}) - set(_RESAMPLE_KEYS)
        if unknown:
            raise ConfigError(f"unknown resample keys {sorted(unknown)}")
        self.resample = {**_default_resample(), **(self.resample or {})}
        self.plan_for("none", 0)  # validates resample values

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        data = dict(data)
        data.pop("pipeline", None)
        data.pop("split", None)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc

    def plan_for(self, method: str, seed: int) -> ResamplePlan:
        return ResamplePlan(method=method, seed=seed, **self.resample)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = "stratified, fresh per repetition; min-max fitted on train"
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def derive_seed(master_seed: int, repetition: int, stream: int) -> int:
    """64-bit seed for one (repetition, stream) cell of the grid.

    Stream 0 is the split; resamplers and classifier/resampler pairs get
    distinct positive stream ids (see :func:`stream_ids`).
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=(repetition, stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream_ids(config: ExperimentConfig) -> dict[tuple[str, str], int]:
    """Stable stream id per resampler (``("", r)``) and per pair ``(c, r)``.

    Ids come from the canonical method orderings, so adding or removing a
    combination never changes the seeds of the others.
    """
    ids = {}
    for j, r in enumerate(METHODS):
        ids[("", r)] = 1 + j
        for i, c in enumerate(CLASSIFIERS):
            ids[(c, r)] = 100 + 10 * j + i
    return ids


# ------------------------------------------------------------------- grid


@dataclass
class ResultRow:
    classifier: str
    resampler: str
    metrics: MetricsReport | None
    metrics_std: dict[str, float]
    repetitions_used: int
    undefined_runs: int
    fingerprint: str

    @property
    def label(self) -> str:
        return f"{clf_mod.SHORT_NAMES[self.classifier]}-{resampling.SHORT_NAMES[self.resampler]}"

    def to_dict(self) -> dict:
        return {
            "classifier": self.classifier,
            "resampler": self.resampler,
            "label": self.label,
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "metrics_std": self.metrics_std,
            "repetitions_used": self.repetitions_used,
            "undefined_runs": self.undefined_runs,
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ResultRow:
        m = d.get("metrics")
        return cls(
            d["classifier"],
            d["resampler"],
            None if m is None else MetricsReport(**m),
            dict(d.get("metrics_std", {})),
            d["repetitions_used"],
            d["undefined_runs"],
            d.get("fingerprint", ""),
        )


@dataclass
class RunRecord:
    """One evaluated cell, kept for auditing."""

    repetition: int
    classifier: str
    resampler: str
    metrics: MetricsReport | None
    train_ids: frozenset[int] = field(repr=False, default=frozenset())
    test_ids: frozenset[int] = field(repr=False, default=frozenset())


@dataclass
class GridResult:
    rows: list[ResultRow]
    runs: list[RunRecord]
    audit: list[dict]
    config: ExperimentConfig
    dataset_summary: dict

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "fingerprint": self.config.fingerprint(),
            "config": self.config.to_dict(),
            "dataset": self.dataset_summary,
            "rows": [r.to_dict() for r in self.rows],
        }


def _tag(exc: P2PRiskError, combo: str) -> P2PRiskError:
    exc.combination = combo
    if exc.args:
        exc.args = (f"[{combo}] {exc.args[0]}",) + exc.args[1:]
    return exc


def _run_repetition(config: ExperimentConfig, dataset: Dataset, rep: int, keep_ids: bool):
    ids = stream_ids(config)
    seed = config.master_seed
    train, test, _ = split_and_scale(
        dataset, config.train_fraction, derive_seed(seed, rep, SPLIT_STREAM)
    )
    test_ids = frozenset(test.row_ids.tolist()) if keep_ids else frozenset()
    runs, audit = [], []
    for res in config.resamplers:
        rs_seed = derive_seed(seed, rep, ids[("", res)])
        try:
            balanced, report = resampling.resample(train, config.plan_for(res, rs_seed))
        except P2PRiskError as exc:
            raise _tag(exc, f"rep {rep}, resampler {res}") from None
        audit.append({"repetition": rep, "resampler": res, "seed": rs_seed, **report.to_dict()})
        seen = (
            frozenset(balanced.row_ids[balanced.row_ids >= 0].tolist()) if keep_ids else frozenset()
        )
        for clf in config.classifiers:
            combo = f"{clf}/{res}"
            c_seed = derive_seed(seed, rep, ids[(clf, res)]) % (2**63)
            try:
                model = train_classifier(clf, balanced, config.classifier_params[clf], c_seed)
                scores = model.predict_proba(test.X)
                try:
                    m = evaluate(scores, test.y, config.threshold)
                except UndefinedMetric:
                    log.warning("rep %d %s: undefined metrics, excluded from means", rep, combo)
                    m = None
            except UndefinedMetric:
                m = None
            except P2PRiskError as exc:
                raise _tag(exc, f"rep {rep}, {combo}") from None
            runs.append(RunRecord(rep, clf, res, m, seen, test_ids))
    return runs, audit


def run_grid(
    config: ExperimentConfig, dataset: Dataset, threads: int = 1, keep_ids: bool = False
) -> GridResult:
    """Run every classifier x resampler combination for every repetition.

    Rows come back sorted by descending mean G-mean.
    """
    reps = range(config.repetitions)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda r: _run_repetition(config, dataset, r, keep_ids), reps))
    else:
        parts = [_run_repetition(config, dataset, r, keep_ids) for r in reps]
    runs = [run for p in parts for run in p[0]]
    audit = [a for p in parts for a in p[1]]
    runs.sort(key=lambda r: (r.classifier, r.resampler, r.repetition))
    audit.sort(key=lambda a: (a["repetition"], METHODS.index(a["resampler"])))
    rows = aggregate(runs, config)
    n0, n1 = label_counts(dataset.y)
    summary = {
        "n_samples": dataset.n_samples,
        "n_features": dataset.n_features,
        "label_0": n0,
        "label_1": n1,
    }
    return GridResult(rows, runs, audit, config, summary)


def aggregate(runs: Sequence[RunRecord], config: ExperimentConfig) -> list[ResultRow]:
    """Per-combination means over repetitions with defined metrics."""
    fp = config.fingerprint()
    rows = []
    for clf in config.classifiers:
        for res in config.resamplers:
            cell = sorted(
                (r for r in runs if r.classifier == clf and r.resampler == res),
                key=lambda r: r.repetition,
            )
            defined = [r.metrics for r in cell if r.metrics is not None]
            if defined:
                table = np.array([m.values() for m in defined])
                mean = MetricsReport(*(float(v) for v in table.mean(axis=0)))
                ddof = 1 if len(defined) > 1 else 0
                std = {k: float(v) for k, v in zip(METRIC_NAMES, table.std(axis=0, ddof=ddof))}
            else:
                mean, std = None, {}
            rows.append(
                ResultRow(clf, res, mean, std, len(defined), len(cell) - len(defined), fp)
            )
    return sort_rows(rows)


def sort_rows(rows: Sequence[ResultRow]) -> list[ResultRow]:
    def key(r: ResultRow):
        g = -r.metrics.g_mean if r.metrics is not None else math.inf
        return (g, CLASSIFIERS.index(r.classifier), METHODS.index(r.resampler))

    return sorted(rows, key=key)


# ---------------------------------------------------------------- reports


def _cells(row: ResultRow) -> list[str]:
    if row.metrics is None:
        return [row.label] + ["undefined"] * 6
    return [row.label] + [f"{v:.3f}" for v in row.metrics.values()]


def render_report(rows: Sequence[ResultRow], format: str = "text") -> str:
    """Results table sorted by G-mean: ``text``, ``csv`` or ``json``."""
    rows = sort_rows(rows)
    if format == "json":
        return json.dumps([r.to_dict() for r in rows], indent=2) + "\n"
    body = [_cells(r) for r in rows]
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(TABLE_HEADER)
        w.writerows(body)
        return buf.getvalue()
    if format == "text":
        table = [list(TABLE_HEADER)] + body
        widths = [max(len(r[i]) for r in table) for i in range(len(TABLE_HEADER))]
        lines = []
        for k, r in enumerate(table):
            first = r[0].ljust(widths[0])
            rest = [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
            lines.append("  ".join([first] + rest))
            if k == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown report format {format!r}")


def write_results(result: GridResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / "results.json",
        "csv": out / "results.csv",
        "text": out / "table.txt",
        "audit": out / "resample_audit.jsonl",
    }
    paths["json"].write_text(json.dumps(result.to_json_dict(), indent=2, sort_keys=True) + "\n")
    paths["csv"].write_text(render_report(result.rows, "csv"))
    paths["text"].write_text(render_report(result.rows, "text"))
    with paths["audit"].open("w") as fh:
        for entry in result.audit:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return paths


def load_results(path) -> tuple[list[ResultRow], dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read results {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported results schema version {doc.get('schema_version')!r}")
    return [ResultRow.from_dict(r) for r in doc["rows"]], doc


def load_dataset_for(config: ExperimentConfig, data_path=None) -> Dataset:
    """Dataset named by ``--data`` or by the config's ``data`` block."""
    if data_path is not None:
        return read_dataset_csv(data_path, config.data.get("label_column", "label"))
    if "csv" in config.data:
        return read_dataset_csv(config.data["csv"], config.data.get("label_column", "label"))
    if "synthetic" in config.data:
        try:
            spec = SyntheticSpec(**config.data["synthetic"])
        except TypeError as exc:
            raise ConfigError(f"bad synthetic spec: {exc}") from exc
        return generate_synthetic(spec)
    raise ConfigError("no data: pass --data or set data.csv / data.synthetic in the config")
