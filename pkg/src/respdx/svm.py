"""Gaussian-kernel SVM trained by SMO with maximal-violating-pair selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError

FINE = "fine"
COARSE = "coarse"


def kernel_scale(preset: str, d: int) -> float:
    if preset == FINE:
        return math.sqrt(d) / 4.0
    if preset == COARSE:
        return 4.0 * math.sqrt(d)
    raise InvalidSpecError(f"unknown kernel preset {preset!r}")


def gaussian_kernel(u: np.ndarray, v: np.ndarray, scale: float) -> np.ndarray:
    sq = (np.sum(u * u, axis=1)[:, None] + np.sum(v * v, axis=1)[None, :] - 2.0 * u @ v.T)
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * scale * scale))


@dataclass
class SmoResult:
    alpha: np.ndarray
    b: float
    iterations: int
    kkt_gap: float  # max violation m(alpha) - M(alpha) at exit
    dual_objective: float  # sum(alpha) - 0.5 alpha' Q alpha (to be maximised)


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3,
              max_iter: int = 100_000) -> SmoResult:
    """Solve max sum(a) - 1/2 a'Qa, 0 <= a <= C, y'a = 0 with Q = yy' * K.

    ``y`` must be +-1. Works on the minimisation form f = 1/2 a'Qa - e'a with
    gradient G; the working pair is the maximal KKT violator.
    """
    if C <= 0:
        raise InvalidSpecError("box constraint C must be > 0")
    y = np.asarray(y, dtype=float)
    n = y.size
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.diag(K)
    it = 0
    gap = math.inf
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        score = -y * G
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[j]
        if not (up.any() and low.any()) or gap <= tol:
            break
        eta = max(diag[i] + diag[j] - 2.0 * K[i, j], 1e-12)
        lam = gap / eta
        lam = min(lam, C - alpha[i] if y[i] > 0 else alpha[i])
        lam = min(lam, alpha[j] if y[j] > 0 else C - alpha[j])
        alpha[i] += y[i] * lam
        alpha[j] -= y[j] * lam
        # snap to bounds to keep the active sets clean
        for t in (i, j):
            if alpha[t] < 1e-14 * C:
                alpha[t] = 0.0
            elif alpha[t] > C * (1 - 1e-14):
                alpha[t] = C
        G += lam * y * (K[:, i] - K[:, j])
        it += 1

    free = (alpha > 0) & (alpha < C)
    yg = y * G
    if free.any():
        rho = float(np.mean(yg[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        hi = np.min(yg[up]) if up.any() else 0.0
        lo = np.max(yg[low]) if low.any() else 0.0
        rho = float((hi + lo) / 2.0)
    Q = np.outer(y, y) * K
    dual = float(alpha.sum() - 0.5 * alpha @ Q @ alpha)
    return SmoResult(alpha, -rho, it, float(gap), dual)


def kkt_violations(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, b: float, C: float) -> np.ndarray:
    """Per-point KKT residual of y_i f(x_i) against the box state of alpha_i."""
    f = K @ (alpha * y) + b
    margin = y * f
    tol = 1e-9 * C
    res = np.zeros_like(alpha)
    at0 = alpha <= tol
    atC = alpha >= C - tol
    mid = ~(at0 | atC)
    res[at0] = np.maximum(0.0, 1.0 - margin[at0])
    res[atC] = np.maximum(0.0, margin[atC] - 1.0)
    res[mid] = np.abs(margin[mid] - 1.0)
    return res


def duality_gap(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, b: float, C: float) -> tuple[float, float]:
    """(primal - dual, dual) for the soft-margin problem at (alpha, b)."""
    Q = np.outer(y, y) * K
    w2 = float(alpha @ Q @ alpha)
    f = K @ (alpha * y) + b
    primal = 0.5 * w2 + C * float(np.sum(np.maximum(0.0, 1.0 - y * f)))
    dual = float(alpha.sum()) - 0.5 * w2
    return primal - dual, dual
