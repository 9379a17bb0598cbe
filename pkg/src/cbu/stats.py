"""Rollout-budget bootstrap, logistic-regression probes, rank correlation."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import ArgumentError, ConvergenceError
from .metrics import UndefinedMetric

log = logging.getLogger(__name__)

BOOTSTRAP_NS = (4, 8, 16, 32, 64)
BOOTSTRAP_RESAMPLES = 200
CBU_SCALE = (0.0, 1.0)
JUDGE_SCALE = (0.0, 10.0)


# -- bootstrap --------------------------------------------------------------
@dataclass(frozen=True)
class RolloutPool:
    unit_scores: np.ndarray
    scale: tuple = CBU_SCALE

    def __post_init__(self):
        arr = np.asarray(self.unit_scores, dtype=np.float64)
        lo, hi = self.scale
        if hi <= lo:
            raise ArgumentError(f"empty scale {self.scale}")
        if arr.ndim != 1 or arr.size == 0:
            raise ArgumentError("unit_scores must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(arr)) or arr.min() < lo or arr.max() > hi:
            raise ArgumentError(f"unit scores must lie in [{lo}, {hi}]")
        object.__setattr__(self, "unit_scores", arr)


@dataclass(frozen=True)
class CurvePoint:
    n: int
    mean_normalized_error: float
    resamples: int


@dataclass(frozen=True)
class ErrorCurve:
    points: tuple
    replacement: bool = True
    seed: Optional[int] = None

    def errors(self) -> np.ndarray:
        return np.array([p.mean_normalized_error for p in self.points])

    def to_dict(self) -> dict:
        return {
            "replacement": self.replacement,
            "seed": self.seed,
            "points": [{"n": p.n, "mean_normalized_error": p.mean_normalized_error, "resamples": p.resamples}
                       for p in self.points],
        }


def bootstrap_error(pool: RolloutPool, n_values: Sequence[int] = BOOTSTRAP_NS, resamples: int = BOOTSTRAP_RESAMPLES,
                    replacement: bool = True, seed: Optional[int] = 0) -> ErrorCurve:
    """Mean range-normalised |mean of n resampled units - mean of the full pool|."""
    if resamples < 1:
        raise ArgumentError("resamples must be >= 1")
    n_values = [int(n) for n in n_values]
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ArgumentError("n values must be strictly increasing")
    units = pool.unit_scores
    size = units.size
    if any(n < 1 for n in n_values):
        raise ArgumentError("n must be >= 1")
    if not replacement and n_values and n_values[-1] > size:
        raise ArgumentError(f"n={n_values[-1]} exceeds pool size {size} without replacement")

    reference = units.mean()
    span = pool.scale[1] - pool.scale[0]
    rng = np.random.default_rng(seed)
    points = []
    for n in n_values:
        if replacement:
            idx = rng.integers(0, size, size=(resamples, n))
        else:
            idx = rng.permuted(np.tile(np.arange(size), (resamples, 1)), axis=1)[:, :n]
        err = kernels.resample_errors(units, idx, reference, span)
        points.append(CurvePoint(n, float(err.mean()), resamples))
    return ErrorCurve(tuple(points), replacement, seed)


# -- logistic probe ---------------------------------------------------------
def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def probe_objective(theta, X, y, regularization):
    """Mean NLL plus ``regularization/2 * |theta|^2`` and its gradient.

    ``theta`` is ``[weights..., bias]``; ``X`` should already be standardised.
    The bias is penalised too, which keeps the optimum unique even on
    separable data.
    """
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * regularization * theta @ theta
    r = _sigmoid(z) - y
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ r / len(y)
    grad[-1] = r.mean()
    grad += regularization * theta
    return loss, grad


def _hessian(theta, X, regularization):
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    p = _sigmoid(Xa @ theta)
    H = (Xa * (p * (1 - p))[:, None]).T @ Xa / X.shape[0]
    H[np.diag_indices_from(H)] += regularization
    return H


@dataclass
class ProbeModel:
    feature_names: list
    weights: np.ndarray
    bias: float
    regularization: float
    mean: np.ndarray
    scale: np.ndarray
    loss_history: list = field(default_factory=list)
    iterations: int = 0

    def decision(self, X) -> np.ndarray:
        X = _as_matrix(X, len(self.weights))
        return ((X - self.mean) / self.scale) @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.decision(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "regularization": self.regularization,
            "mean": [float(m) for m in self.mean],
            "scale": [float(s) for s in self.scale],
            "iterations": self.iterations,
        }


def _as_matrix(X, d=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ArgumentError("features must be a 2-D matrix")
    if d is not None and X.shape[1] != d:
        raise ArgumentError(f"expected {d} feature column(s), got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ArgumentError("features must be finite")
    return X


def _as_labels(y, m) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != m:
        raise ArgumentError(f"{m} feature rows but {y.shape[0]} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ArgumentError("labels must be 0/1")
    return y


def fit_probe(features, labels, regularization: float = 1e-4, feature_names=None, tol: float = 1e-8,
              max_iter: int = 200) -> ProbeModel:
    """Regularised logistic regression by damped Newton with a gradient-step fallback."""
    X = _as_matrix(features)
    y = _as_labels(labels, X.shape[0])
    if regularization < 0:
        raise ArgumentError("regularization must be >= 0")
    if y.min() == y.max():
        raise ArgumentError("need at least one sample of each class")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Xs = (X - mean) / scale

    theta = np.zeros(X.shape[1] + 1)
    loss, grad = probe_objective(theta, Xs, y, regularization)
    history = [loss]
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(grad) <= tol:
            it -= 1
            break
        try:
            step = -np.linalg.solve(_hessian(theta, Xs, regularization), grad)
            if not np.all(np.isfinite(step)) or step @ grad >= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = -grad
        t = 1.0
        while True:
            cand = theta + t * step
            new_loss, new_grad = probe_objective(cand, Xs, y, regularization)
            if new_loss <= loss + 1e-4 * t * (step @ grad):
                break
            t *= 0.5
            if t < 1e-12:
                break
        if new_loss > loss:
            # no descent possible at float precision
            break
        theta, loss, grad = cand, new_loss, new_grad
        history.append(loss)
    gnorm = float(np.linalg.norm(grad))
    if gnorm > tol and gnorm > 1e-6:
        raise ConvergenceError(f"probe did not converge (|grad| = {gnorm:.3g})",
                               {"iterations": it, "grad_norm": gnorm, "loss": float(loss)})
    if gnorm > tol:
        log.info("probe stopped at |grad| = %.3g (float precision floor)", gnorm)
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
    return ProbeModel(names, theta[:-1].copy(), float(theta[-1]), regularization, mean, scale, history, it)


Protocol = Union[str, tuple]


def _parse_protocol(protocol: Protocol) -> Optional[int]:
    """None for in-sample, k for k-fold."""
    if protocol == "in_sample":
        return None
    if isinstance(protocol, tuple) and protocol[0] == "k_fold":
        k = int(protocol[1])
    elif isinstance(protocol, str) and protocol.startswith("k_fold"):
        k = int(protocol.partition(":")[2] or 5)
    else:
        raise ArgumentError(f"unknown probe protocol {protocol!r}")
    if k < 2:
        raise ArgumentError("k_fold needs k >= 2")
    return k


def stratified_folds(y, k: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    parts = [[] for _ in range(k)]
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == cls))
        for i, chunk in enumerate(np.array_split(idx, k)):
            parts[i].append(chunk)
    return [np.sort(np.concatenate(p)) for p in parts]


def probe_accuracy(model: ProbeModel, features, labels, protocol: Protocol = "k_fold:5", seed: int = 0) -> float:
    """Accuracy at threshold 0.5; k-fold refits on each training split with the model's settings."""
    X = _as_matrix(features, len(model.weights))
    y = _as_labels(labels, X.shape[0])
    k = _parse_protocol(protocol)
    if k is None:
        return float(np.mean(model.predict(X) == y))
    correct = 0
    for test in stratified_folds(y, k, seed):
        train = np.setdiff1d(np.arange(len(y)), test)
        fold = fit_probe(X[train], y[train], model.regularization, model.feature_names)
        correct += int(np.sum(fold.predict(X[test]) == y[test]))
    return correct / len(y)


# -- rank correlation -------------------------------------------------------
def spearman(scores_a, scores_b) -> float:
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ArgumentError("spearman needs two 1-D sequences of equal length")
    if a.size < 2:
        raise ArgumentError("spearman needs at least two observations")
    ra = kernels.average_ranks(a)
    rb = kernels.average_ranks(b)
    da, db = ra - ra.mean(), rb - rb.mean()
    va, vb = da @ da, db @ db
    if va == 0 or vb == 0:
        raise UndefinedMetric("zero rank variance")
    rho = (da @ db) / np.sqrt(va * vb)
    return float(min(1.0, max(-1.0, rho)))


def prompt_sensitivity(scores_by_template: Mapping[str, Mapping[str, float]]) -> dict:
    """Pairwise Spearman between the candidate rankings induced by each judge template."""
    out = {}
    for x, y in itertools.combinations(sorted(scores_by_template), 2):
        common = sorted(set(scores_by_template[x]) & set(scores_by_template[y]))
        try:
            rho = spearman([scores_by_template[x][c] for c in common], [scores_by_template[y][c] for c in common])
        except (UndefinedMetric, ArgumentError) as exc:
            out[f"{x}~{y}"] = {"rho": None, "reason": str(exc), "n": len(common)}
        else:
            out[f"{x}~{y}"] = {"rho": rho, "n": len(common)}
    return out
