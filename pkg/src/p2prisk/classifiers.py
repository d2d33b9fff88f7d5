"""Logistic regression, linear discriminant analysis and random forest.

Every model exposes ``predict_proba(X)`` giving the probability of class 1
(fully paid) and ``predict(X, threshold=0.5)`` which labels a row 1 when its
score is at least the threshold. Class weights are uniform throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit, log_expit

from . import _tree
from .data_model import Dataset, label_counts
from .errors import ConfigError, DegenerateData, DimensionMismatch, SingularCovariance

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class Prediction:
    score: float
    label: int


def _as_matrix(X, n_features: int) -> NDArray[np.float64]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != n_features:
        raise DimensionMismatch(f"model expects {n_features} features, got {X.shape[1]}")
    return X


class _Model:
    kind = ""
    n_features: int

    def predict_proba(self, X) -> NDArray[np.float64]:
        raise NotImplementedError

    def predict(self, X, threshold: float = DEFAULT_THRESHOLD) -> NDArray[np.int64]:
        return (self.predict_proba(X) >= threshold).astype(np.int64)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_dict(self) -> dict:
        raise NotImplementedError


def predict_proba(model: _Model, row) -> float:
    return float(model.predict_proba(np.asarray(row, dtype=np.float64).reshape(1, -1))[0])


def predict(model: _Model, row, threshold: float = DEFAULT_THRESHOLD) -> Prediction:
    score = predict_proba(model, row)
    return Prediction(score, int(score >= threshold))


def _check_two_classes(train: Dataset, minimum: int) -> None:
    n0, n1 = label_counts(train.y)
    if min(n0, n1) < minimum:
        raise DegenerateData(
            f"need at least {minimum} samples per class, have {{0: {n0}, 1: {n1}}}"
        )


# ----------------------------------------------------------------- logistic


@dataclass(frozen=True)
class LogisticConfig:
    max_iter: int = 200
    tol: float = 1e-6
    l2: float = 0.0


def log_likelihood(beta0: float, beta, X, y, l2: float = 0.0) -> float:
    """Penalised Bernoulli log-likelihood; the intercept is not penalised."""
    beta = np.asarray(beta, dtype=np.float64)
    z = beta0 + np.asarray(X, dtype=np.float64) @ beta
    y = np.asarray(y, dtype=np.float64)
    ll = float(np.sum(y * log_expit(z) + (1.0 - y) * log_expit(-z)))
    return ll - 0.5 * l2 * float(beta @ beta)


def log_likelihood_grad(beta0: float, beta, X, y, l2: float = 0.0) -> tuple[float, NDArray]:
    beta = np.asarray(beta, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    resid = np.asarray(y, dtype=np.float64) - expit(beta0 + X @ beta)
    return float(resid.sum()), X.T @ resid - l2 * beta


@dataclass(frozen=True)
class LogisticModel(_Model):
    beta0: float
    beta: NDArray[np.float64]
    iterations: int = 0
    grad_norm: float = 0.0
    converged: bool = True
    kind = "logistic"

    @property
    def n_features(self) -> int:
        return self.beta.shape[0]

    def decision_function(self, X) -> NDArray[np.float64]:
        return self.beta0 + _as_matrix(X, self.n_features) @ self.beta

    def predict_proba(self, X) -> NDArray[np.float64]:
        return expit(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "beta0": self.beta0,
            "beta": self.beta.tolist(),
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
        }


def train_logistic(train: Dataset, config: LogisticConfig = LogisticConfig()) -> LogisticModel:
    """Maximum-likelihood fit by Newton-Raphson (IRLS) with step halving.

    Stops when the gradient max-norm drops below ``tol`` or after
    ``max_iter`` iterations; the latter is reported, not raised.
    """
    _check_two_classes(train, 2)
    X = np.column_stack([np.ones(train.n_samples), train.X])
    y = train.y.astype(np.float64)
    d = X.shape[1]
    penalty = np.full(d, config.l2)
    penalty[0] = 0.0
    w = np.zeros(d)

    def objective(w):
        return log_likelihood(w[0], w[1:], train.X, y, config.l2)

    def gradient(w):
        g0, g = log_likelihood_grad(w[0], w[1:], train.X, y, config.l2)
        return np.concatenate([[g0], g])

    current = objective(w)
    g = gradient(w)
    it = 0
    while it < config.max_iter and np.max(np.abs(g)) >= config.tol:
        it += 1
        p = expit(X @ w)
        weights = p * (1.0 - p)
        H = (X * weights[:, None]).T @ X + np.diag(penalty)
        try:
            step = np.linalg.solve(H, g)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            candidate = w + t * step
            value = objective(candidate)
            if value >= current:
                break
            t *= 0.5
        else:
            break
        w, current = candidate, value
        g = gradient(w)
    gn = float(np.max(np.abs(g)))
    return LogisticModel(float(w[0]), w[1:].copy(), it, gn, gn < config.tol)


# ---------------------------------------------------------------------- LDA


@dataclass(frozen=True)
class LdaModel(_Model):
    mean0: NDArray[np.float64]
    mean1: NDArray[np.float64]
    pooled_covariance: NDArray[np.float64]
    priors: tuple[float, float]
    lam: float
    kind = "lda"

    @property
    def n_features(self) -> int:
        return self.mean0.shape[0]

    @property
    def _coef(self) -> tuple[NDArray[np.float64], float]:
        cov = self.pooled_covariance + self.lam * np.eye(self.n_features)
        w = np.linalg.solve(cov, self.mean1 - self.mean0)
        b = -0.5 * float((self.mean1 + self.mean0) @ w) + math.log(self.priors[1] / self.priors[0])
        return w, b

    def decision_function(self, X) -> NDArray[np.float64]:
        w, b = self._coef
        return _as_matrix(X, self.n_features) @ w + b

    def predict_proba(self, X) -> NDArray[np.float64]:
        return expit(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mean0": self.mean0.tolist(),
            "mean1": self.mean1.tolist(),
            "pooled_covariance": self.pooled_covariance.tolist(),
            "priors": list(self.priors),
            "lambda": self.lam,
        }


def train_lda(train: Dataset, lam: float = 1e-6) -> LdaModel:
    """Equal-covariance Gaussian discriminant with empirical priors.

    The pooled covariance is regularised as ``S + lam * I``; if that is not
    positive definite, ``lam`` is raised tenfold up to 1e-2.
    """
    _check_two_classes(train, 2)
    X0 = train.X[train.y == 0]
    X1 = train.X[train.y == 1]
    m0, m1 = X0.mean(axis=0), X1.mean(axis=0)
    r0, r1 = X0 - m0, X1 - m1
    S = (r0.T @ r0 + r1.T @ r1) / (train.n_samples - 2)
    S = 0.5 * (S + S.T)
    d = train.n_features
    current = lam
    while True:
        try:
            L = np.linalg.cholesky(S + current * np.eye(d))
            # reject numerically singular factors too
            if np.min(np.diag(L)) > 0 and np.isfinite(L).all():
                break
        except np.linalg.LinAlgError:
            pass
        if current >= 1e-2:
            raise SingularCovariance(f"pooled covariance singular even with lambda={current:g}")
        current = min(max(current * 10, 1e-12), 1e-2)
    n = train.n_samples
    priors = (X0.shape[0] / n, X1.shape[0] / n)
    return LdaModel(m0, m1, S, priors, current)


# ------------------------------------------------------------------- forest


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_features: int | None = None
    min_leaf: int = 1
    max_depth: int | None = None

    def resolved_max_features(self, d: int) -> int:
        if self.max_features is None:
            return max(1, math.ceil(math.sqrt(d)))
        return max(1, min(self.max_features, d))


@dataclass(frozen=True)
class Tree:
    feature: NDArray[np.int64]
    threshold: NDArray[np.float64]
    left: NDArray[np.int64]
    right: NDArray[np.int64]
    label: NDArray[np.int64]

    def apply(self, X) -> NDArray[np.int64]:
        return _tree.apply(X, self.feature, self.threshold, self.left, self.right, self.label)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "label")}


@dataclass(frozen=True)
class ForestModel(_Model):
    trees: tuple[Tree, ...]
    n_features: int
    params: ForestParams = field(default_factory=ForestParams)
    seed: int = 0
    kind = "forest"

    def votes(self, X) -> NDArray[np.int64]:
        X = np.ascontiguousarray(_as_matrix(X, self.n_features))
        total = np.zeros(X.shape[0], dtype=np.int64)
        for t in self.trees:
            total += t.apply(X)
        return total

    def predict_proba(self, X) -> NDArray[np.float64]:
        return self.votes(X) / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_features": self.n_features,
            "params": asdict(self.params),
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }


def train_forest(train: Dataset, params: ForestParams = ForestParams(), seed=0) -> ForestModel:
    """Bagged Gini trees; each split looks at ``max_features`` random features.

    Tree ``t`` draws its bootstrap sample and its split randomness from a
    stream derived from ``(seed, t)``, so results depend only on the seed and
    the data.
    """
    if train.n_samples == 0:
        raise DegenerateData("cannot grow a forest on an empty training set")
    if params.n_trees < 1:
        raise ConfigError("n_trees must be at least 1")
    X = np.ascontiguousarray(train.X)
    y = np.ascontiguousarray(train.y, dtype=np.int64)
    n, d = X.shape
    mtry = params.resolved_max_features(d)
    depth = -1 if params.max_depth is None else params.max_depth
    trees = []
    for child in np.random.SeedSequence(seed).spawn(params.n_trees):
        rng = np.random.default_rng(child)
        sample = rng.integers(0, n, size=n)
        tree_seed = int(rng.integers(0, 2**31 - 1))
        trees.append(Tree(*_tree.grow(X, y, sample, mtry, params.min_leaf, depth, tree_seed)))
    return ForestModel(tuple(trees), d, params, seed if isinstance(seed, int) else 0)


# ------------------------------------------------------------ serialization


def model_from_dict(data: dict[str, Any]) -> _Model:
    kind = data.get("kind")
    if kind == "logistic":
        return LogisticModel(
            data["beta0"],
            np.asarray(data["beta"], dtype=np.float64),
            data.get("iterations", 0),
            data.get("grad_norm", 0.0),
            data.get("converged", True),
        )
    if kind == "lda":
        return LdaModel(
            np.asarray(data["mean0"]),
            np.asarray(data["mean1"]),
            np.asarray(data["pooled_covariance"]),
            tuple(data["priors"]),
            data["lambda"],
        )
    if kind == "forest":
        trees = tuple(
            Tree(
                np.asarray(t["feature"], dtype=np.int64),
                np.asarray(t["threshold"], dtype=np.float64),
                np.asarray(t["left"], dtype=np.int64),
                np.asarray(t["right"], dtype=np.int64),
                np.asarray(t["label"], dtype=np.int64),
            )
            for t in data["trees"]
        )
        return ForestModel(trees, data["n_features"], ForestParams(**data["params"]), data["seed"])
    raise ValueError(f"unknown model kind {kind!r}")


CLASSIFIERS = ("logistic", "lda", "forest")
SHORT_NAMES = {"logistic": "LR", "lda": "LDA", "forest": "RF"}


def train_classifier(name: str, train: Dataset, params: dict | None = None, seed=0) -> _Model:
    """Dispatch by classifier name with a plain-dict parameter block."""
    params = dict(params or {})
    try:
        if name == "logistic":
            return train_logistic(train, LogisticConfig(**params))
        if name == "lda":
            return train_lda(train, **params)
        if name == "forest":
            return train_forest(train, ForestParams(**params), seed)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from exc
    raise ConfigError(f"unknown classifier {name!r}; choose from {CLASSIFIERS}")
