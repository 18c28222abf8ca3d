"""Fuzzy c-means clustering and conversion of clusters to Gaussian antecedents."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fuzzy_core import Gaussian

SIGMA_MIN_FRACTION = 1e-6


@dataclass(frozen=True)
class FcmConfig:
    c: int = 3
    m: float = 2.0
    tol: float = 1e-5
    max_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.c < 2:
            raise ValueError("FCM needs at least 2 clusters")
        if not self.m > 1:
            raise ValueError("fuzziness exponent m must exceed 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass
class FcmResult:
    centers: np.ndarray
    U: np.ndarray
    m: float = 2.0
    objective_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _distances(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return np.sqrt(((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2))


def update_memberships(X: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    """u_ik = 1 / sum_j (d_ik / d_ij)^(2/(m-1)); points sitting on a centre belong to it."""
    d = _distances(X, centers)
    U = np.empty_like(d)
    on_center = d == 0.0
    hit = on_center.any(axis=1)
    if hit.any():
        U[hit] = on_center[hit] / on_center[hit].sum(axis=1, keepdims=True)
    rest = ~hit
    if rest.any():
        # Scale by the row minimum so every ratio is >= 1 and nothing overflows.
        dr = d[rest] / d[rest].min(axis=1, keepdims=True)
        w = dr ** (-2.0 / (m - 1.0))
        U[rest] = w / w.sum(axis=1, keepdims=True)
    return U


def update_centers(X: np.ndarray, U: np.ndarray, m: float) -> np.ndarray:
    Um = U**m
    return (Um.T @ X) / Um.sum(axis=0)[:, None]


def objective(X: np.ndarray, centers: np.ndarray, U: np.ndarray, m: float) -> float:
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return float(np.sum(U**m * d2))


def fcm_cluster(data, config: FcmConfig = FcmConfig(), init_centers=None) -> FcmResult:
    """Alternate membership and centre updates until max |dU| < tol.

    Initial centres are ``c`` distinct data points drawn with ``config.seed``
    unless ``init_centers`` is given.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n <= config.c:
        raise ValueError(f"FCM needs more points than clusters (n={n}, c={config.c})")
    distinct = np.unique(X, axis=0)
    if len(distinct) < config.c:
        raise ValueError(
            f"only {len(distinct)} distinct points for {config.c} clusters; data is degenerate"
        )

    if init_centers is None:
        rng = np.random.default_rng(config.seed)
        centers = distinct[np.sort(rng.choice(len(distinct), size=config.c, replace=False))]
    else:
        centers = np.asarray(init_centers, dtype=float).reshape(config.c, X.shape[1])

    U = update_memberships(X, centers, config.m)
    centers = update_centers(X, U, config.m)
    history = [objective(X, centers, U, config.m)]
    converged = False
    it = 1
    while it < config.max_iter:
        U_new = update_memberships(X, centers, config.m)
        centers = update_centers(X, U_new, config.m)
        history.append(objective(X, centers, U_new, config.m))
        delta = np.max(np.abs(U_new - U))
        U = U_new
        it += 1
        if delta < config.tol:
            converged = True
            break
    return FcmResult(centers, U, config.m, history, it, converged)


def clusters_to_mfs(result: FcmResult, data) -> list[list[Gaussian]]:
    """One Gaussian per cluster per input dimension.

    The width is the U^m-weighted spread of the data around the centre,
    floored at a millionth of the feature range. Returned as ``[cluster][dim]``.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Um = np.asarray(result.U, dtype=float) ** result.m
    centers = np.atleast_2d(np.asarray(result.centers, dtype=float))
    span = X.max(axis=0) - X.min(axis=0)
    # Constant features have no range; fall back to an absolute floor.
    sigma_min = np.where(span > 0, SIGMA_MIN_FRACTION * span, SIGMA_MIN_FRACTION)
    out = []
    for k in range(centers.shape[0]):
        w = Um[:, k]
        var = (w[:, None] * (X - centers[k]) ** 2).sum(axis=0) / w.sum()
        sig = np.maximum(np.sqrt(var), sigma_min)
        out.append([Gaussian(float(centers[k, j]), float(sig[j]), float(sigma_min[j]))
                    for j in range(X.shape[1])])
    return out
