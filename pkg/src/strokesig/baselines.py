"""Shallow comparison classifiers: Gaussian naive Bayes, kNN, logistic regression.

Parameter settings follow the comparison setup this pipeline reproduces:
k = 5 Euclidean neighbors, and logistic regression penalized by
(1/cost) * 0.5 * ||w||^2 with cost 1.00. Naive Bayes uses per-feature
Gaussian likelihoods with class priors from relative frequency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyModel, MissingClass, NonConvergence

VARIANCE_FLOOR = 1e-9


# --- Gaussian naive Bayes -------------------------------------------------------


@dataclass(frozen=True)
class GnbModel:
    classes: np.ndarray          # (c,)
    priors: np.ndarray           # (c,)
    means: np.ndarray            # (c, d)
    variances: np.ndarray        # (c, d), floored at VARIANCE_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "variances", np.maximum(self.variances, VARIANCE_FLOOR))


def gnb_fit(features: np.ndarray, labels: Sequence[int]) -> GnbModel:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    if classes.size < 2:
        raise MissingClass(f"need at least 2 classes, got labels {classes.tolist()}")
    priors = np.array([(y == c).mean() for c in classes])
    means = np.stack([x[y == c].mean(axis=0) for c in classes])
    variances = np.stack([x[y == c].var(axis=0) for c in classes])
    return GnbModel(classes, priors, means, variances)


def gnb_predict(model: GnbModel, x: Sequence[float]) -> tuple[int, np.ndarray]:
    """Argmax-posterior class and the posterior distribution over classes."""
    v = np.asarray(x, dtype=np.float64)
    log_joint = np.log(model.priors) - 0.5 * np.sum(
        np.log(2.0 * np.pi * model.variances)
        + (v - model.means) ** 2 / model.variances,
        axis=1,
    )
    log_joint -= log_joint.max()
    posterior = np.exp(log_joint)
    posterior /= posterior.sum()
    best = int(np.argmax(posterior))
    return int(model.classes[best]), posterior


# --- k nearest neighbors -----------------------------------------------------------


@dataclass(frozen=True)
class KnnModel:
    train_x: np.ndarray
    train_y: np.ndarray
    k: int = 5

    def __post_init__(self):
        if self.k > len(self.train_y):
            raise ValueError(f"k={self.k} exceeds training size {len(self.train_y)}")


def knn_fit(features: np.ndarray, labels: Sequence[int], k: int = 5) -> KnnModel:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(y) == 0:
        raise EmptyModel("kNN needs at least one training vector")
    return KnnModel(x, y, k)


def knn_predict(model: KnnModel, x: Sequence[float]) -> int:
    """Majority label among the k nearest by Euclidean distance.

    Distance ties rank the lower training index first; vote ties go to the
    nearest neighbor's label.
    """
    if len(model.train_y) == 0:
        raise EmptyModel("kNN model holds no training vectors")
    v = np.asarray(x, dtype=np.float64)
    d2 = np.sum((model.train_x - v) ** 2, axis=1)
    order = np.argsort(d2, kind="stable")[: model.k]
    votes = model.train_y[order]
    counts = np.bincount(votes)
    winners = np.flatnonzero(counts == counts.max())
    if winners.size == 1:
        return int(winners[0])
    return int(votes[0])


# --- L2 logistic regression -----------------------------------------------------------


@dataclass(frozen=True)
class LogRegModel:
    weights: np.ndarray
    bias: float
    l2_cost: float = 1.0
    iterations: int = 0
    gradient_norm: float = field(default=np.inf)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logreg_objective(
    weights: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray, l2_cost: float
) -> float:
    """Mean logistic loss plus (1/cost) * 0.5 * ||w||^2 (bias unpenalized)."""
    z = x @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return loss + 0.5 / l2_cost * float(weights @ weights)


def _logreg_gradient(weights, bias, x, y, l2_cost):
    p = _sigmoid(x @ weights + bias)
    residual = p - y
    grad_w = x.T @ residual / len(y) + weights / l2_cost
    grad_b = float(residual.mean())
    return grad_w, grad_b


def logreg_fit(
    features: np.ndarray,
    labels: Sequence[int],
    l2_cost: float = 1.0,
    tol: float = 1e-6,
    max_iter: int = 10000,
    init: tuple[np.ndarray, float] | None = None,
) -> LogRegModel:
    """Gradient descent with backtracking line search from zero initialization.

    Stops when the full gradient norm drops to ``tol``; raises
    NonConvergence (carrying the final gradient norm) at the iteration cap.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if np.unique(y).size < 2:
        raise MissingClass("logistic regression needs both classes in training data")
    if init is None:
        w = np.zeros(x.shape[1])
        b = 0.0
    else:
        w = np.asarray(init[0], dtype=np.float64).copy()
        b = float(init[1])

    step = 1.0
    loss = logreg_objective(w, b, x, y, l2_cost)
    for it in range(1, max_iter + 1):
        grad_w, grad_b = _logreg_gradient(w, b, x, y, l2_cost)
        gnorm2 = float(grad_w @ grad_w) + grad_b * grad_b
        gnorm = np.sqrt(gnorm2)
        if gnorm <= tol:
            return LogRegModel(w, b, l2_cost, iterations=it - 1, gradient_norm=gnorm)
        step = min(step * 2.0, 1e6)
        while True:
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            loss_new = logreg_objective(w_new, b_new, x, y, l2_cost)
            if loss_new <= loss - 1e-4 * step * gnorm2:
                break
            step *= 0.5
            if step < 1e-18:
                break
        w, b, loss = w_new, b_new, loss_new
    grad_w, grad_b = _logreg_gradient(w, b, x, y, l2_cost)
    gnorm = float(np.sqrt(grad_w @ grad_w + grad_b * grad_b))
    if gnorm <= tol:
        return LogRegModel(w, b, l2_cost, iterations=max_iter, gradient_norm=gnorm)
    raise NonConvergence(
        f"gradient norm {gnorm:.3e} > {tol:g} after {max_iter} iterations", gnorm
    )


def logreg_predict(model: LogRegModel, x: Sequence[float]) -> tuple[int, float]:
    """Predicted class and the probability of class 1."""
    p = float(_sigmoid(np.atleast_1d(np.asarray(x, dtype=np.float64) @ model.weights + model.bias))[0])
    return (1 if p >= 0.5 else 0), p
