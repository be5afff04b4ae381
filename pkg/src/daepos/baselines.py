"""Reference classifiers: brute-force k-NN and an SMO-trained SVM.

Both are plain numpy. The SVM is one-vs-rest over binary C-SVC problems
solved with sequential minimal optimisation using maximal-violating-pair
working-set selection (no shrinking).
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_KNN_GRID = [{"k": k} for k in (1, 3, 5, 7, 9, 11, 13, 15)]
DEFAULT_SVM_GRID = [
    {"C": c, "gamma": g, "kernel": "rbf"}
    for c, g in itertools.product((0.1, 1.0, 10.0, 100.0), (0.01, 0.1, 1.0, 10.0))
]

_QUERY_CHUNK = 128


def _labels(y) -> np.ndarray:
    y = np.asarray(y).ravel()
    if y.size and not np.issubdtype(y.dtype, np.integer):
        raise TypeError("labels must be integer class indices")
    return y.astype(np.int64)


# ---------------------------------------------------------------------------
# k-NN


@dataclass(frozen=True)
class KnnModel:
    k: int
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    distance: str = "euclidean"


def knn_fit(X, y, k: int = 1, n_classes: Optional[int] = None) -> KnnModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = _labels(y)
    if X.shape[0] == 0:
        raise ValueError("k-NN needs at least one training sample")
    if X.shape[0] != y.size:
        raise ValueError("X and y have different lengths")
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be a positive odd integer, got {k}")
    if k > X.shape[0]:
        raise ValueError(f"k={k} exceeds the {X.shape[0]} training samples")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    return KnnModel(k, X, y, n_classes)


def _knn_votes(model: KnnModel, Q: np.ndarray) -> np.ndarray:
    out = np.empty(Q.shape[0], dtype=np.int64)
    for start in range(0, Q.shape[0], _QUERY_CHUNK):
        q = Q[start:start + _QUERY_CHUNK]
        d = np.sum((model.X[None, :, :] - q[:, None, :]) ** 2, axis=2)
        # stable sort: equal distances keep training-set order
        nearest = np.argsort(d, axis=1, kind="stable")[:, :model.k]
        for r, idx in enumerate(nearest):
            votes = np.bincount(model.y[idx], minlength=model.n_classes)
            out[start + r] = int(np.argmax(votes))
    return out


def knn_predict(model: KnnModel, x) -> int:
    """Majority label of the ``k`` nearest training points (ties go to the lower label)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != model.X.shape[1]:
        raise ValueError("knn_predict takes a single feature vector")
    return int(_knn_votes(model, x[None, :])[0])


def knn_predict_batch(model: KnnModel, X) -> np.ndarray:
    return _knn_votes(model, np.atleast_2d(np.asarray(X, dtype=np.float64)))


# ---------------------------------------------------------------------------
# SVM


def kernel_matrix(A, B, kernel: str = "rbf", gamma: float = 1.0) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")


class _KernelColumns:
    """Kernel columns for the training set: a full matrix when small, else a bounded memo."""

    def __init__(self, X, kernel, gamma, full_limit=4000, cache_columns=2000):
        self.X, self.kernel, self.gamma = X, kernel, gamma
        n = X.shape[0]
        self.full = kernel_matrix(X, X, kernel, gamma) if n <= full_limit else None
        if kernel == "rbf":
            self.diag = np.ones(n)
        else:
            self.diag = (X * X).sum(1)
        self._memo: dict = {}
        self._limit = cache_columns

    def __getitem__(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[:, i]
        col = self._memo.get(i)
        if col is None:
            if len(self._memo) >= self._limit:
                self._memo.pop(next(iter(self._memo)))
            col = kernel_matrix(self.X, self.X[i:i + 1], self.kernel, self.gamma)[:, 0]
            self._memo[i] = col
        return col


@dataclass
class BinarySolution:
    alpha: np.ndarray
    rho: float
    kkt_gap: float
    iterations: int
    objective: list = field(default_factory=list)


def smo_binary(
    K: _KernelColumns,
    y: np.ndarray,
    C: float,
    tol: float = 1e-3,
    max_iter: Optional[int] = None,
    record_objective: bool = False,
) -> BinarySolution:
    """Solve ``min 1/2 a'Qa - sum(a)`` s.t. ``y'a = 0, 0 <= a <= C`` with ``Q = yy' * K``.

    Stops once the maximal KKT violation ``m(a) - M(a)`` drops to ``tol``.
    """
    n = y.size
    yf = y.astype(np.float64)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient Qa - e
    max_iter = max_iter if max_iter is not None else max(100_000, 100 * n)
    objective = []
    it = 0
    gap = math.inf
    while True:
        up = ((yf > 0) & (alpha < C)) | ((yf < 0) & (alpha > 0))
        low = ((yf > 0) & (alpha > 0)) | ((yf < 0) & (alpha < C))
        score = -yf * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[j]
        if record_objective:
            objective.append(0.5 * float(alpha @ (G - 1.0)))
        if gap <= tol or it >= max_iter:
            break
        Ki, Kj = K[i], K[j]
        eta = K.diag[i] + K.diag[j] - 2.0 * Ki[j]
        step = gap / (eta if eta > 1e-12 else 1e-12)
        bound_i = C - alpha[i] if yf[i] > 0 else alpha[i]
        bound_j = alpha[j] if yf[j] > 0 else C - alpha[j]
        step = min(step, bound_i, bound_j)
        alpha[i] += yf[i] * step
        alpha[j] -= yf[j] * step
        # snap to the box to keep the index sets exact
        for t in (i, j):
            if alpha[t] < 1e-12 * C:
                alpha[t] = 0.0
            elif alpha[t] > C * (1 - 1e-12):
                alpha[t] = C
        G += yf * step * (Ki - Kj)
        it += 1
    if it >= max_iter:
        log.warning("SMO hit max_iter=%d with KKT gap %.3g > tol %.3g", max_iter, gap, tol)

    yG = yf * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        at_ub = alpha >= C
        ub_set = (at_ub & (yf < 0)) | (~at_ub & (yf > 0))
        lb_set = ~ub_set
        ub = yG[ub_set].min() if ub_set.any() else math.inf
        lb = yG[lb_set].max() if lb_set.any() else -math.inf
        rho = float((ub + lb) / 2) if math.isfinite(ub + lb) else 0.0
    return BinarySolution(alpha, rho, float(gap), it, objective)


@dataclass(frozen=True)
class SvmModel:
    """One-vs-rest SVM: per class, dual coefficients ``alpha * y`` and offset ``rho``."""

    X: np.ndarray  # support vectors (union over classes)
    coef: np.ndarray  # (n_classes, n_sv)
    rho: np.ndarray  # (n_classes,)
    kernel: str
    gamma: float
    C: float
    kkt_gaps: tuple
    n_classes: int


def svm_fit(
    X,
    y,
    C: float = 1.0,
    kernel: str = "rbf",
    gamma: float = 1.0,
    tol: float = 1e-3,
    n_classes: Optional[int] = None,
    return_solutions: bool = False,
):
    """One-vs-rest SVMs, each solved by SMO until the KKT gap is at most ``tol``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = _labels(y)
    if X.shape[0] != y.size:
        raise ValueError("X and y have different lengths")
    if C <= 0:
        raise ValueError("C must be positive")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("SVM training needs at least two classes")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes

    K = _KernelColumns(X, kernel, gamma)
    coef = np.zeros((n_classes, X.shape[0]))
    rho = np.full(n_classes, np.inf)  # classes absent from training never win
    sols = []
    gaps = []
    for c in range(n_classes):
        if c not in classes:
            sols.append(None)
            continue
        yy = np.where(y == c, 1, -1)
        sol = smo_binary(K, yy, C, tol, record_objective=return_solutions)
        coef[c] = sol.alpha * yy
        rho[c] = sol.rho
        gaps.append(sol.kkt_gap)
        sols.append(sol)

    sv = np.flatnonzero(np.any(coef != 0, axis=0))
    model = SvmModel(X[sv], coef[:, sv], rho, kernel, gamma, C, tuple(gaps), n_classes)
    if return_solutions:
        return model, sols
    return model


def svm_decision(model: SvmModel, X) -> np.ndarray:
    """Per-class decision values, shape ``(m, n_classes)``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.empty((X.shape[0], model.n_classes))
    for start in range(0, X.shape[0], 1024):
        Kx = kernel_matrix(X[start:start + 1024], model.X, model.kernel, model.gamma)
        out[start:start + 1024] = Kx @ model.coef.T - model.rho
    return out


def decide(values) -> np.ndarray:
    """Argmax over decision values; ties go to the smaller class index."""
    return np.argmax(np.atleast_2d(values), axis=1)


def svm_predict(model: SvmModel, x) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("svm_predict takes a single feature vector")
    return int(decide(svm_decision(model, x))[0])


def svm_predict_batch(model: SvmModel, X) -> np.ndarray:
    return decide(svm_decision(model, X))


# ---------------------------------------------------------------------------
# uniform entry points and grid search


def fit(family: str, params: Mapping, X, y, n_classes: Optional[int] = None):
    if family == "knn":
        return knn_fit(X, y, int(params["k"]), n_classes)
    if family == "svm":
        return svm_fit(
            X, y,
            C=float(params["C"]),
            kernel=params.get("kernel", "rbf"),
            gamma=float(params.get("gamma", 1.0)),
            tol=float(params.get("tol", 1e-3)),
            n_classes=n_classes,
        )
    raise ValueError(f"unknown baseline family {family!r}")


def predict_batch(model, X) -> np.ndarray:
    if isinstance(model, KnnModel):
        return knn_predict_batch(model, X)
    if isinstance(model, SvmModel):
        return svm_predict_batch(model, X)
    raise TypeError(f"not a baseline model: {type(model).__name__}")


def stratified_folds(y, folds: int, seed: int) -> np.ndarray:
    """Fold index per sample; each class is spread round-robin over a seeded permutation."""
    y = _labels(y)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    counts = np.bincount(y)
    short = [c for c in np.flatnonzero(counts) if counts[c] < folds]
    if short:
        raise ValueError(f"classes {short} have fewer than {folds} samples; cannot stratify")
    rng = np.random.default_rng(seed)
    assign = np.empty(y.size, dtype=np.int64)
    for c in np.flatnonzero(counts):
        idx = np.flatnonzero(y == c)
        assign[idx[rng.permutation(idx.size)]] = np.arange(idx.size) % folds
    return assign


@dataclass
class GridSearchReport:
    family: str
    cells: list
    mean_accuracy: list
    fold_accuracy: list
    chosen: int
    folds: int
    seed: int

    @property
    def best_params(self) -> dict:
        return dict(self.cells[self.chosen])

    def to_csv(self) -> str:
        keys = sorted({k for cell in self.cells for k in cell})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys + ["mean_cv_accuracy", "chosen"])
        for i, (cell, acc) in enumerate(zip(self.cells, self.mean_accuracy)):
            w.writerow([cell.get(k, "") for k in keys] + [repr(float(acc)), int(i == self.chosen)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "folds": self.folds,
            "seed": self.seed,
            "cells": self.cells,
            "mean_cv_accuracy": [float(a) for a in self.mean_accuracy],
            "chosen": self.best_params,
        }


def grid_search_cv(
    family: str,
    grid: Optional[Sequence[Mapping]] = None,
    folds: int = 5,
    X=None,
    y=None,
    seed: int = 0,
    n_classes: Optional[int] = None,
):
    """Stratified k-fold CV over ``grid``; refits the best cell on all of ``X``.

    Returns ``(report, model)``. Ties in mean accuracy go to the earlier cell.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = _labels(y)
    if grid is None:
        grid = DEFAULT_KNN_GRID if family == "knn" else DEFAULT_SVM_GRID
    grid = [dict(cell) for cell in grid]
    if not grid:
        raise ValueError("empty parameter grid")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    assign = stratified_folds(y, folds, seed)

    fold_acc = []
    for cell in grid:
        accs = []
        for f in range(folds):
            tr, te = assign != f, assign == f
            model = fit(family, cell, X[tr], y[tr], n_classes)
            accs.append(float(np.mean(predict_batch(model, X[te]) == y[te])))
        fold_acc.append(accs)
        log.debug("%s %s -> %.4f", family, json.dumps(cell, sort_keys=True), np.mean(accs))
    means = [float(np.mean(a)) for a in fold_acc]
    chosen = int(np.argmax(means))
    report = GridSearchReport(family, grid, means, fold_acc, chosen, folds, seed)
    return report, fit(family, grid[chosen], X, y, n_classes)
