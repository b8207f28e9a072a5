"""Test-error estimation and hypothesis selection under covariate shift.

The test-error estimator imputes each unlabeled test point's loss with
the loss of its nearest validation point, which reweights validation
losses toward the test covariate law.  The same device applied to a
training set gives a shift-aware empirical risk for selecting among a
finite list of candidate predictors.

Test rows never expose responses to these estimators; synthetic scenarios
keep hidden labels solely for oracle comparisons in tests and demos.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .nn_index import NNIndex, PointSet


@dataclass(frozen=True)
class Predictor:
    """A deterministic prediction function with a display label."""

    fn: Callable[[np.ndarray], np.ndarray]
    label: str

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0], -1)


@dataclass(frozen=True)
class Loss:
    """Nonnegative per-row loss between predictions and responses."""

    kind: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, pred: np.ndarray, y: np.ndarray) -> np.ndarray:
        pred = np.asarray(pred, dtype=float)
        y = np.asarray(y, dtype=float)
        if pred.ndim == 1:
            pred = pred.reshape(-1, 1)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        out = np.asarray(self.fn(pred, y), dtype=float).reshape(pred.shape[0])
        if np.any(out < 0):
            raise ValueError(f"{self.kind} loss produced a negative value")
        return out

    @staticmethod
    def squared_error() -> "Loss":
        return Loss(kind="squared_error", fn=lambda p, y: ((p - y) ** 2).sum(axis=1))

    @staticmethod
    def misclassification() -> "Loss":
        return Loss(kind="misclassification", fn=lambda p, y: (p != y).any(axis=1).astype(float))


LOSSES = {"squared_error": Loss.squared_error, "misclassification": Loss.misclassification}


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train / validation / test index sets."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        groups = []
        for name in ("train", "validation", "test"):
            idx = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, idx)
            groups.append(set(idx.tolist()))
        if groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2]:
            raise ValueError("train, validation, and test index sets must be disjoint")


@dataclass(frozen=True)
class RiskEstimate:
    """A scalar risk value and the split sizes that produced it."""

    value: float
    kind: str
    n_validation: int = 0
    n_test: int = 0
    n_train: int = 0
    label: str = ""


def estimate_test_error(val_covariates, val_losses, test_covariates,
                        tie_seed: int = 0) -> RiskEstimate:
    """Mean validation loss pulled to the test points by nearest neighbor.

    Each test point contributes the loss of its nearest validation point,
    so the value is the nearest-donor functional with the validation set
    as the observed population.
    """
    val_X = PointSet(val_covariates)
    losses = np.asarray(val_losses, dtype=float).reshape(-1)
    if losses.shape[0] != val_X.n:
        raise ValueError("need exactly one loss per validation row")
    test_X = np.asarray(test_covariates, dtype=float)
    if test_X.ndim == 1:
        test_X = test_X.reshape(-1, 1)
    if test_X.shape[0] < 1:
        raise ValueError("test set is empty")
    index = NNIndex(val_X, tie_seed=tie_seed)
    assigned = index.nearest(test_X)
    return RiskEstimate(
        value=float(losses[assigned].mean()),
        kind="nn_test_error",
        n_validation=val_X.n,
        n_test=test_X.shape[0],
    )


def one_nn_empirical_risk(train_covariates, train_responses, test_covariates,
                          predictor: Predictor, loss: Loss,
                          tie_seed: int = 0) -> RiskEstimate:
    """Training loss reweighted by nearest-neighbor pulls from the test set."""
    train_X = PointSet(train_covariates)
    train_Y = np.asarray(train_responses, dtype=float)
    if train_Y.ndim == 1:
        train_Y = train_Y.reshape(-1, 1)
    if train_Y.shape[0] != train_X.n:
        raise ValueError("need one response row per training row")
    test_X = np.asarray(test_covariates, dtype=float)
    if test_X.ndim == 1:
        test_X = test_X.reshape(-1, 1)
    if test_X.shape[0] < 1:
        raise ValueError("test set is empty")
    per_row = loss(predictor(train_X.points), train_Y)
    index = NNIndex(train_X, tie_seed=tie_seed)
    assigned = index.nearest(test_X)
    return RiskEstimate(
        value=float(per_row[assigned].mean()),
        kind="one_nn_risk",
        n_train=train_X.n,
        n_test=test_X.shape[0],
        label=predictor.label,
    )


def empirical_risk(train_covariates, train_responses, predictor: Predictor,
                   loss: Loss) -> float:
    """Plain unweighted training risk, for comparison against the 1NN form."""
    X = np.asarray(train_covariates, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    Y = np.asarray(train_responses, dtype=float)
    return float(loss(predictor(X), Y).mean())


def select_hypothesis(hypotheses: Sequence[Predictor], train_covariates,
                      train_responses, test_covariates, loss: Loss,
                      tie_seed: int = 0) -> tuple[Predictor, list[RiskEstimate]]:
    """Arg-min of the 1NN empirical risk over a finite candidate list.

    Exact risk ties resolve to the earliest hypothesis in list order, so
    evaluation order cannot change the winner.
    """
    hypotheses = list(hypotheses)
    if not hypotheses:
        raise ValueError("hypothesis list is empty")
    risks = [
        one_nn_empirical_risk(train_covariates, train_responses, test_covariates,
                              h, loss, tie_seed=tie_seed)
        for h in hypotheses
    ]
    best = min(range(len(risks)), key=lambda i: (risks[i].value, i))
    return hypotheses[best], risks


def cross_validated_error(covariates, responses, test_covariates,
                          predictor_factory: Callable[[np.ndarray, np.ndarray], Predictor],
                          loss: Loss, folds: int, tie_seed: int = 0) -> RiskEstimate:
    """Average the 1NN test-error estimate over fold rotations.

    Rows are assigned to folds round-robin by index.  Each rotation fits
    on the other folds, scores the held-out fold, and pulls those losses
    to the fixed test covariates; the rotation estimates are averaged.
    """
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    Y = np.asarray(responses, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    n = X.shape[0]
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > n:
        raise ValueError(f"cannot make {folds} folds from {n} rows")
    fold_of = np.arange(n) % folds
    estimates = []
    for k in range(folds):
        held = fold_of == k
        predictor = predictor_factory(X[~held], Y[~held])
        losses = loss(predictor(X[held]), Y[held])
        estimates.append(estimate_test_error(X[held], losses, test_covariates,
                                             tie_seed=tie_seed).value)
    return RiskEstimate(
        value=float(np.mean(estimates)),
        kind="nn_test_error",
        n_validation=n,
        n_test=np.asarray(test_covariates).shape[0],
        label=f"{folds}-fold",
    )


# ---------------------------------------------------------------------------
# Built-in predictors for demos


def constant_predictor(c: float, label: str | None = None) -> Predictor:
    return Predictor(fn=lambda X: np.full(X.shape[0], float(c)), label=label or f"const={c:g}")


def fit_ridge(X, Y, alpha: float = 1e-3, label: str = "ridge") -> Predictor:
    """Closed-form ridge regression with an intercept column."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    design = np.column_stack([np.ones(X.shape[0]), X])
    gram = design.T @ design + alpha * np.eye(design.shape[1])
    coef = np.linalg.solve(gram, design.T @ Y)

    def predict(Xq: np.ndarray) -> np.ndarray:
        return np.column_stack([np.ones(Xq.shape[0]), Xq]) @ coef

    return Predictor(fn=predict, label=label)


def ridge_factory(alpha: float = 1e-3) -> Callable[[np.ndarray, np.ndarray], Predictor]:
    def factory(X, Y):
        if np.asarray(X).shape[0] < 2:
            raise ValueError("fold too small to fit the ridge predictor")
        return fit_ridge(X, Y, alpha=alpha)

    return factory
