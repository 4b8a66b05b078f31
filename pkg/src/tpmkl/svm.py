"""Soft-margin SVM trained in the dual on a precomputed kernel.

The solver is a pairwise working-set method (SMO): every step picks the
maximal violating pair, first index on ties, and moves it analytically.
It stops once the absolute duality gap is below ``tol``, which implies the
relative bound ``tol * (1 + |primal|)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProblemError, KernelError, ShapeError
from .kernels import min_eig_ratio

TAU = 1e-12
_EPS_START = 1e-3
_EPS_FLOOR = 1e-15


@dataclass(frozen=True, eq=False)
class SvmModel:
    alpha: np.ndarray
    bias: float
    labels: np.ndarray
    C_reg: float
    class_id: int = 1
    gap: float = 0.0
    iterations: int = 0

    @property
    def coef(self) -> np.ndarray:
        """``alpha * labels``: the per-sample weights of the decision function."""
        return self.alpha * self.labels

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > 0)


def dual_objective(alpha, K, y) -> float:
    u = alpha * y
    return float(alpha.sum() - 0.5 * u @ K @ u)


def primal_objective(alpha, bias, K, y, C_reg) -> float:
    u = alpha * y
    out = K @ u
    hinge = np.maximum(0.0, 1.0 - y * (out + bias))
    return float(0.5 * u @ out + C_reg * hinge.sum())


def duality_gap(model: SvmModel, K) -> float:
    y = model.labels
    return (primal_objective(model.alpha, model.bias, K, y, model.C_reg)
            - dual_objective(model.alpha, K, y))


def _check_kernel(K):
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeError(f"kernel must be square, got {K.shape}")
    scale = np.max(np.abs(K)) if K.size else 0.0
    if np.max(np.abs(K - K.T), initial=0.0) > 1e-12 * max(scale, 1.0):
        raise KernelError("kernel matrix is not symmetric")
    if min_eig_ratio(K) < -1e-8:
        raise KernelError(f"kernel matrix is not PSD (min/max eigenvalue {min_eig_ratio(K):.3g})")
    return K


def _bias(alpha, grad, y, C_reg) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < C_reg)
    if free.any():
        return float(-yg[free].mean())
    at_zero = alpha == 0
    lower = (at_zero & (y > 0)) | (~at_zero & (y < 0))
    upper = ~lower
    lb = np.max(-yg[lower]) if lower.any() else None
    ub = np.min(-yg[upper]) if upper.any() else None
    if lb is None:
        return float(ub)
    if ub is None:
        return float(lb)
    return float(0.5 * (lb + ub))


def solve_binary(K, y, C_reg=1.0, tol=1e-6, class_id=1, max_iter=None, callback=None):
    """Train a binary SVM on the precomputed kernel ``K``.

    ``y`` holds +/-1 labels. ``callback(alpha, dual)`` is invoked after
    every pair update, which is only useful for tests.
    """
    y = np.asarray(y, dtype=np.float64)
    K = _check_kernel(K)
    n = K.shape[0]
    if y.shape != (n,) or not np.all(np.abs(y) == 1):
        raise ShapeError("labels must be a +/-1 vector matching the kernel")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateProblemError(f"class {class_id}: both positive and negative samples are required")
    if not C_reg > 0 or not tol > 0:
        raise ValueError("C_reg and tol must be positive")
    if max_iter is None:
        max_iter = max(100_000, 200 * n)

    Q = K * np.outer(y, y)
    diag = np.diag(K).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    eps = _EPS_START
    gap = np.inf
    while True:
        while it < max_iter:
            # maximal violating pair over the feasible directions
            up = np.where(y > 0, alpha < C_reg, alpha > 0)
            low = np.where(y > 0, alpha > 0, alpha < C_reg)
            score = -y * grad
            if not up.any() or not low.any():
                break
            i = int(np.argmax(np.where(up, score, -np.inf)))
            j = int(np.argmin(np.where(low, score, np.inf)))
            viol = score[i] - score[j]
            if viol <= eps:
                break
            curv = diag[i] + diag[j] - 2.0 * K[i, j]
            t = viol / max(curv, TAU)
            cap_i = C_reg - alpha[i] if y[i] > 0 else alpha[i]
            cap_j = alpha[j] if y[j] > 0 else C_reg - alpha[j]
            t = min(t, cap_i, cap_j)
            old_i, old_j = alpha[i], alpha[j]
            alpha[i] += y[i] * t
            alpha[j] -= y[j] * t
            # snap to the box so membership tests stay exact
            if t == cap_i:
                alpha[i] = C_reg if y[i] > 0 else 0.0
            if t == cap_j:
                alpha[j] = 0.0 if y[j] > 0 else C_reg
            grad += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
            it += 1
            if callback is not None:
                callback(alpha.copy(), float(-0.5 * alpha @ (grad - 1.0)))
        bias = _bias(alpha, grad, y, C_reg)
        primal = primal_objective(alpha, bias, K, y, C_reg)
        gap = primal - dual_objective(alpha, K, y)
        if gap <= tol or eps <= _EPS_FLOOR or it >= max_iter:
            break
        eps *= 0.1
        # refresh the gradient to shed accumulated rounding
        grad = Q @ alpha - 1.0
    return SvmModel(alpha, bias, y, float(C_reg), int(class_id), float(gap), it)


def decision(model: SvmModel, k_row) -> float:
    k_row = np.asarray(k_row, dtype=np.float64)
    if k_row.shape != model.alpha.shape:
        raise ShapeError(f"kernel row has length {k_row.size}, model expects {model.alpha.size}")
    return float(model.coef @ k_row + model.bias)


def decision_matrix(models, k_rows) -> np.ndarray:
    """Decision values of every model for every row, shape ``(m, n_models)``."""
    k_rows = np.atleast_2d(np.asarray(k_rows, dtype=np.float64))
    W = np.column_stack([m.coef for m in models])
    if k_rows.shape[1] != W.shape[0]:
        raise ShapeError(f"kernel rows have length {k_rows.shape[1]}, models expect {W.shape[0]}")
    b = np.array([m.bias for m in models])
    return k_rows @ W + b


def train_one_vs_rest(K, labels, C_reg=1.0, tol=1e-6, classes=None):
    """One binary SVM per class; class ``c`` is +1, every other class -1."""
    labels = np.asarray(labels)
    if classes is None:
        classes = range(1, int(labels.max()) + 1)
    K = _check_kernel(K)
    models = []
    for c in classes:
        pos = labels == c
        if not pos.any():
            raise DegenerateProblemError(f"class {c} has no training samples")
        if pos.all():
            raise DegenerateProblemError(f"class {c} is the only class in the training set")
        y = np.where(pos, 1.0, -1.0)
        models.append(solve_binary(K, y, C_reg, tol, class_id=int(c)))
    return models


def argmax_classes(scores, class_ids) -> np.ndarray:
    """Row-wise arg max; ties go to the smallest class id."""
    class_ids = np.asarray(class_ids)
    order = np.argsort(class_ids, kind="stable")
    scores = np.asarray(scores)[:, order]
    return class_ids[order][np.argmax(scores, axis=1)]


def predict(models, k_rows) -> np.ndarray:
    return argmax_classes(decision_matrix(models, k_rows), [m.class_id for m in models])
