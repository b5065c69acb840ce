"""Soft-margin RBF support vector machine trained with SMO.

The solver follows the LIBSVM decomposition: each step picks the maximal
violating pair using second-order information, solves the two-variable
subproblem analytically and updates the gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TAU = 1e-12


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray  # label-signed multipliers, |alpha| <= c
    bias: float
    gamma: float
    c: float
    iterations: int = 0

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if len(self.alphas) == 0:
            return np.full(len(x), self.bias)
        return rbf_kernel(x, self.support_vectors, self.gamma) @ self.alphas + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.where(self.decision_function(x) >= 0, 1, -1)


def smo_solve(
    k: np.ndarray, y: np.ndarray, c: float, tol: float = 1e-3, max_passes: int = 10_000
) -> tuple[np.ndarray, float, int]:
    """Solve the SVM dual for a precomputed kernel.

    Returns ``(alpha, bias, iterations)`` with decision
    ``f(x) = sum_i alpha_i y_i K(x_i, x) + bias``. ``max_passes`` bounds the
    work at that many sweeps' worth of pair updates.
    """
    n = len(y)
    y = y.astype(float)
    q = (y[:, None] * y[None, :]) * k
    qd = np.diag(k).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)
    max_iter = max_passes * max(n, 1)
    it = 0
    while it < max_iter:
        upper = alpha >= c
        lower = alpha <= 0
        # I_up: can move toward increasing y*alpha
        in_up = np.where(y > 0, ~upper, ~lower)
        in_low = np.where(y > 0, ~lower, ~upper)
        score = -y * grad
        if not in_up.any() or not in_low.any():
            break
        up_scores = np.where(in_up, score, -np.inf)
        i = int(np.argmax(up_scores))
        g_max = up_scores[i]
        low_scores = np.where(in_low, score, np.inf)
        g_min = low_scores.min()
        if g_max - g_min < tol:
            break
        b = g_max - score
        quad = qd[i] + qd - 2.0 * y[i] * y * q[i]
        quad = np.where(quad > 0, quad, TAU)
        cand = in_low & (b > 0)
        obj = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(obj))
        if not np.isfinite(obj[j]):
            break
        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad_coef = qd[i] + qd[j] + 2 * q[i, j]
            quad_coef = quad_coef if quad_coef > 0 else TAU
            delta = (-grad[i] - grad[j]) / quad_coef
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = c - diff
            elif alpha[j] > c:
                alpha[j] = c
                alpha[i] = c + diff
        else:
            quad_coef = qd[i] + qd[j] - 2 * q[i, j]
            quad_coef = quad_coef if quad_coef > 0 else TAU
            delta = (grad[i] - grad[j]) / quad_coef
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > c:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = total - c
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = total - c
            else:
                if alpha[j] < 0:
                    alpha[j] = 0
                    alpha[i] = total
                if alpha[i] < 0:
                    alpha[i] = 0
                    alpha[j] = total
        grad += q[i] * (alpha[i] - old_i) + q[j] * (alpha[j] - old_j)
        it += 1
    return alpha, -_rho(alpha, grad, y, c), it


def _rho(alpha: np.ndarray, grad: np.ndarray, y: np.ndarray, c: float) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        return float(yg[free].mean())
    at_upper, at_lower = alpha >= c, alpha <= 0
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if np.isinf(ub) or np.isinf(lb):
        return float(ub if np.isfinite(ub) else lb if np.isfinite(lb) else 0.0)
    return float((ub + lb) / 2)


def fit_svm(
    x: np.ndarray, y: np.ndarray, c: float = 1.0, gamma: float | None = None,
    tol: float = 1e-3, max_passes: int = 10_000,
) -> SvmModel:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    gamma = gamma if gamma is not None else 1.0 / x.shape[1]
    k = rbf_kernel(x, x, gamma)
    alpha, bias, it = smo_solve(k, y, c, tol, max_passes)
    sv = alpha > 0
    return SvmModel(x[sv], (alpha * y)[sv], bias, gamma, c, it)
