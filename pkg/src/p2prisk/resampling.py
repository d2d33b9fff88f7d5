"""Training-set resamplers: RUS, ROS, SMOTE, ADASYN, IHT, SMOTE-Tomek, SMOTE-ENN.

Each resampler takes a training :class:`Dataset` and returns the resampled
dataset with a :class:`ResampleReport`. All randomness comes from the seed
passed in, so identical inputs give bit-identical outputs. Balancing targets
an exact 1:1 class ratio.

Majority and minority are decided by count; on a tie, label 1 is treated as
the majority.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import NDArray

from .data_model import ClassCounts, Dataset, class_counts, concat_rows, select_rows
from .errors import ConfigError, EmptyClass, MinorityTooSmall
from .neighbors import NeighborIndex

log = logging.getLogger(__name__)

METHODS = ("none", "rus", "ros", "smote", "adasyn", "iht", "smote_tomek", "smote_enn")
SHORT_NAMES = {
    "none": "none",
    "rus": "RUS",
    "ros": "ROS",
    "smote": "SMOTE",
    "adasyn": "ADASYN",
    "iht": "IHT",
    "smote_tomek": "SMOTE-Tomek",
    "smote_enn": "SMOTE-ENN",
}


@dataclass(frozen=True)
class ResamplePlan:
    method: str = "none"
    k_smote: int = 5
    k_enn: int = 3
    beta: float = 1.0
    iht_estimator: str = "forest"
    iht_cv_folds: int = 5
    adasyn_strict: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown resampler {self.method!r}; choose from {METHODS}")
        if self.k_smote < 1 or self.k_enn < 1:
            raise ConfigError("neighbour counts must be at least 1")
        if not 0 < self.beta <= 1:
            raise ConfigError(f"beta must be in (0, 1], got {self.beta}")
        if self.iht_estimator not in ("logistic", "forest"):
            raise ConfigError(f"iht_estimator must be 'logistic' or 'forest'")
        if self.iht_cv_folds < 2:
            raise ConfigError("iht_cv_folds must be at least 2")


@dataclass(frozen=True)
class ResampleReport:
    method: str
    before: ClassCounts
    after: ClassCounts | None
    n_synthetic: int
    n_removed: int
    after_labels: tuple[int, int] = (0, 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["after_labels"] = {"0": self.after_labels[0], "1": self.after_labels[1]}
        return d


def _roles(y: NDArray[np.int64]) -> tuple[int, int]:
    """(majority label, minority label)."""
    n1 = int(np.count_nonzero(y == 1))
    n0 = y.size - n1
    if n0 == 0 or n1 == 0:
        raise EmptyClass(f"both classes required, have {{0: {n0}, 1: {n1}}}")
    return (1, 0) if n1 >= n0 else (0, 1)


def _report(method, before_ds, after_ds, n_synthetic, n_removed) -> ResampleReport:
    n1 = int(np.count_nonzero(after_ds.y == 1))
    n0 = after_ds.n_samples - n1
    try:
        after = class_counts(after_ds)
    except EmptyClass:
        after = None
    return ResampleReport(method, class_counts(before_ds), after, n_synthetic, n_removed, (n0, n1))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


# ------------------------------------------------------------------ random


def rus(train: Dataset, seed=0) -> tuple[Dataset, ResampleReport]:
    """Drop majority rows uniformly without replacement down to the minority count."""
    maj, mino = _roles(train.y)
    rng = _rng(seed)
    maj_idx = np.flatnonzero(train.y == maj)
    min_idx = np.flatnonzero(train.y == mino)
    kept = rng.choice(maj_idx, size=min_idx.size, replace=False)
    rows = np.concatenate([kept, min_idx])
    rows = rows[rng.permutation(rows.size)]
    out = select_rows(train, rows)
    return out, _report("rus", train, out, 0, maj_idx.size - min_idx.size)


def ros(train: Dataset, seed=0) -> tuple[Dataset, ResampleReport]:
    """Duplicate minority rows, sampled with replacement, up to the majority count."""
    maj, mino = _roles(train.y)
    rng = _rng(seed)
    n_maj = int(np.count_nonzero(train.y == maj))
    min_idx = np.flatnonzero(train.y == mino)
    extra = rng.choice(min_idx, size=n_maj - min_idx.size, replace=True)
    out = select_rows(train, np.concatenate([np.arange(train.n_samples), extra]))
    return out, _report("ros", train, out, extra.size, 0)


# -------------------------------------------------------------- synthetic


def _interpolate(points, base, neighbour_table, rng) -> NDArray[np.float64]:
    """x + u * (x_nn - x) for each base index, nn drawn uniformly from its row."""
    k = neighbour_table.shape[1]
    pick = rng.integers(0, k, size=base.size)
    nn = neighbour_table[base, pick]
    u = rng.random(base.size)
    return points[base] + u[:, None] * (points[nn] - points[base])


def _minority_neighbours(points: NDArray[np.float64], k: int) -> NDArray[np.int64]:
    idx, _ = NeighborIndex(points).all_neighbors(k)
    return idx


def smote_points(minority: NDArray[np.float64], n_new: int, k: int, rng) -> tuple[NDArray, NDArray, NDArray]:
    """Generate ``n_new`` SMOTE points from a minority point set.

    Base points cycle through the minority set in order. Returns the new
    points together with the base and neighbour indices used for each.
    """
    table = _minority_neighbours(minority, k)
    base = np.arange(n_new) % minority.shape[0]
    pick = rng.integers(0, k, size=n_new)
    nn = table[base, pick]
    u = rng.random(n_new)
    pts = minority[base] + u[:, None] * (minority[nn] - minority[base])
    return pts, base, nn


def smote(train: Dataset, k: int = 5, seed=0) -> tuple[Dataset, ResampleReport]:
    """Add synthetic minority rows until the classes are level.

    Falls back to random over-sampling (with a warning) when the minority
    class has k or fewer members.
    """
    maj, mino = _roles(train.y)
    min_idx = np.flatnonzero(train.y == mino)
    n_new = int(np.count_nonzero(train.y == maj)) - min_idx.size
    if min_idx.size < k + 1:
        log.warning(
            "SMOTE needs more than k=%d minority rows, have %d; using random over-sampling",
            k,
            min_idx.size,
        )
        out, rep = ros(train, seed)
        return out, ResampleReport("smote", rep.before, rep.after, rep.n_synthetic, 0, rep.after_labels)
    if n_new == 0:
        return train, _report("smote", train, train, 0, 0)
    pts, _, _ = smote_points(train.X[min_idx], n_new, k, _rng(seed))
    out = concat_rows(train, pts, np.full(n_new, mino))
    return out, _report("smote", train, out, n_new, 0)


def _round_half_up(x: NDArray[np.float64]) -> NDArray[np.int64]:
    return np.floor(x + 0.5).astype(np.int64)


def adasyn_allocation(
    train: Dataset, k: int = 5, beta: float = 1.0, strict: bool = False
) -> tuple[NDArray[np.float64], NDArray[np.int64], int]:
    """Per-minority-point difficulty ratios and synthetic counts.

    Returns ``(r, g, G)``: ``r[i]`` is the fraction of majority rows among the
    k nearest neighbours (over all rows) of the i-th minority row, ``g`` the
    rounded per-point allocation and ``G`` the total budget.
    """
    maj, mino = _roles(train.y)
    min_idx = np.flatnonzero(train.y == mino)
    n_maj = train.n_samples - min_idx.size
    G = int(math.floor(beta * (n_maj - min_idx.size)))
    idx, _ = NeighborIndex(train.X).query_many(train.X[min_idx], k, exclude=min_idx)
    r = (train.y[idx] == maj).sum(axis=1) / k
    total = r.sum()
    if total == 0:
        return r, np.zeros(min_idx.size, dtype=np.int64), G
    share = r / total
    g = _round_half_up(share * G)
    if strict:
        g = _adjust_to_total(g, share, G)
    return r, g, G


def _adjust_to_total(g, share, G):
    g = g.copy()
    order = np.argsort(-share, kind="stable")
    diff = G - int(g.sum())
    i = 0
    while diff != 0:
        j = order[i % order.size]
        if diff > 0:
            g[j] += 1
            diff -= 1
        elif g[j] > 0:
            g[j] -= 1
            diff += 1
        i += 1
    return g


def adasyn(
    train: Dataset, k: int = 5, beta: float = 1.0, seed=0, strict: bool = False
) -> tuple[Dataset, ResampleReport]:
    """Adaptive synthetic sampling.

    Minority rows whose neighbourhoods hold more majority rows receive more
    synthetic points; each synthetic point interpolates towards one of the
    row's k nearest minority neighbours, as in SMOTE.
    """
    maj, mino = _roles(train.y)
    min_idx = np.flatnonzero(train.y == mino)
    if min_idx.size < k + 1:
        raise MinorityTooSmall(f"ADASYN needs more than k={k} minority rows, have {min_idx.size}")
    r, g, G = adasyn_allocation(train, k, beta, strict)
    if r.sum() == 0:
        log.warning("ADASYN: no minority row has a majority neighbour; falling back to SMOTE")
        out, rep = smote(train, k, seed)
        return out, ResampleReport("adasyn", rep.before, rep.after, rep.n_synthetic, 0, rep.after_labels)
    minority = train.X[min_idx]
    table = _minority_neighbours(minority, k)
    base = np.repeat(np.arange(min_idx.size), g)
    pts = _interpolate(minority, base, table, _rng(seed))
    out = concat_rows(train, pts, np.full(base.size, mino))
    return out, _report("adasyn", train, out, int(base.size), 0)


# -------------------------------------------------------------- IHT


def _stratified_folds(y: NDArray[np.int64], n_folds: int, rng) -> NDArray[np.int64]:
    fold = np.empty(y.size, dtype=np.int64)
    for label in (0, 1):
        members = np.flatnonzero(y == label)
        members = members[rng.permutation(members.size)]
        fold[members] = np.arange(members.size) % n_folds
    return fold


def out_of_fold_true_class_proba(train: Dataset, plan: ResamplePlan) -> NDArray[np.float64]:
    """Cross-validated probability each row's own label receives."""
    from .classifiers import ForestParams, LogisticConfig, train_forest, train_logistic

    rng = _rng(plan.seed)
    n0 = int(np.count_nonzero(train.y == 0))
    n_folds = max(2, min(plan.iht_cv_folds, n0, train.n_samples - n0))
    fold = _stratified_folds(train.y, n_folds, rng)
    fold_seeds = rng.integers(0, 2**31 - 1, size=n_folds)
    p1 = np.empty(train.n_samples)
    for f in range(n_folds):
        held = fold == f
        fit = select_rows(train, np.flatnonzero(~held))
        if plan.iht_estimator == "forest":
            model = train_forest(fit, ForestParams(), int(fold_seeds[f]))
        else:
            model = train_logistic(fit, LogisticConfig())
        p1[held] = model.predict_proba(train.X[held])
    return np.where(train.y == 1, p1, 1.0 - p1)


def iht(train: Dataset, plan: ResamplePlan | None = None) -> tuple[Dataset, ResampleReport]:
    """Instance hardness threshold under-sampling.

    Keeps every minority row and the majority rows whose out-of-fold
    probability of their true class is highest; ties go to the lower row
    index. The count cutoff lands exactly on a 1:1 ratio.
    """
    plan = plan or ResamplePlan("iht")
    maj, mino = _roles(train.y)
    proba = out_of_fold_true_class_proba(train, plan)
    maj_idx = np.flatnonzero(train.y == maj)
    min_idx = np.flatnonzero(train.y == mino)
    # sort by descending probability, then ascending index
    order = np.lexsort((maj_idx, -proba[maj_idx]))
    kept = np.sort(maj_idx[order[: min_idx.size]])
    rows = np.sort(np.concatenate([kept, min_idx]))
    out = select_rows(train, rows)
    return out, _report("iht", train, out, 0, maj_idx.size - kept.size)


# ---------------------------------------------------------- cleaning rules


def tomek_links(dataset: Dataset) -> set[tuple[int, int]]:
    """Opposite-label pairs ``(i, j)``, ``i < j``, that are mutual nearest neighbours."""
    if dataset.n_samples < 2 or np.unique(dataset.y).size < 2:
        return set()
    nn, _ = NeighborIndex(dataset.X).all_neighbors(1)
    nn = nn[:, 0]
    i = np.arange(dataset.n_samples)
    mutual = (nn[nn] == i) & (dataset.y != dataset.y[nn]) & (i < nn)
    return {(int(a), int(nn[a])) for a in np.flatnonzero(mutual)}


def enn_mask(dataset: Dataset, k: int = 3) -> NDArray[np.bool_]:
    """True for rows to keep under edited nearest neighbours.

    A row is removed when a strict majority of its k nearest neighbours
    carries the other label. Neighbours are computed once on the full set.
    """
    k = min(k, dataset.n_samples - 1)
    if k < 1:
        return np.ones(dataset.n_samples, dtype=bool)
    nn, _ = NeighborIndex(dataset.X).all_neighbors(k)
    disagree = (dataset.y[nn] != dataset.y[:, None]).sum(axis=1)
    return ~(2 * disagree > k)


def smote_tomek(train: Dataset, plan: ResamplePlan | None = None) -> tuple[Dataset, ResampleReport]:
    """SMOTE, then a single pass removing both members of every Tomek link."""
    plan = plan or ResamplePlan("smote_tomek")
    over, rep = smote(train, plan.k_smote, plan.seed)
    links = tomek_links(over)
    drop = np.zeros(over.n_samples, dtype=bool)
    for a, b in links:
        drop[[a, b]] = True
    out = select_rows(over, np.flatnonzero(~drop))
    return out, _report("smote_tomek", train, out, rep.n_synthetic, int(drop.sum()))


def smote_enn(train: Dataset, plan: ResamplePlan | None = None) -> tuple[Dataset, ResampleReport]:
    """SMOTE, then edited nearest neighbours applied to both classes."""
    plan = plan or ResamplePlan("smote_enn")
    over, rep = smote(train, plan.k_smote, plan.seed)
    keep = enn_mask(over, plan.k_enn)
    out = select_rows(over, np.flatnonzero(keep))
    return out, _report("smote_enn", train, out, rep.n_synthetic, int((~keep).sum()))


def resample(train: Dataset, plan: ResamplePlan) -> tuple[Dataset, ResampleReport]:
    m = plan.method
    if m == "none":
        return train, _report("none", train, train, 0, 0)
    if m == "rus":
        return rus(train, plan.seed)
    if m == "ros":
        return ros(train, plan.seed)
    if m == "smote":
        return smote(train, plan.k_smote, plan.seed)
    if m == "adasyn":
        return adasyn(train, plan.k_smote, plan.beta, plan.seed, plan.adasyn_strict)
    if m == "iht":
        return iht(train, plan)
    if m == "smote_tomek":
        return smote_tomek(train, plan)
    return smote_enn(train, plan)
