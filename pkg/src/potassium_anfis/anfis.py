"""Hybrid learning for grid-partition ANFIS and FCM-initialised ANFIS.

Each epoch solves the consequents by batch linear least squares with the
antecedents frozen, then takes one gradient-descent step on the antecedent
parameters with the consequents frozen.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .fcm import FcmConfig, clusters_to_mfs, fcm_cluster
from .fuzzy_core import (
    Inference,
    TskModel,
    TskRule,
    forward,
    grid_model,
    with_consequents,
)

log = logging.getLogger(__name__)

Variant = Literal["conventional", "fcm_anfis"]
VARIANTS: tuple[str, ...] = ("conventional", "fcm_anfis")

RIDGE_SCALE = 1e-8
DIVERGENCE_FACTOR = 10.0


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    variant: Variant = "fcm_anfis"
    mfs_per_dim: int = 5
    clusters: int = 3
    fcm: FcmConfig = field(default_factory=FcmConfig)
    phase_split: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "fcm_anfis" and not 0 < self.phase_split < self.epochs:
            raise ValueError("phase_split must lie strictly between 0 and epochs")

    def fcm_config(self) -> FcmConfig:
        return FcmConfig(c=self.clusters, m=self.fcm.m, tol=self.fcm.tol,
                         max_iter=self.phase_split, seed=self.seed)


@dataclass
class TrainHistory:
    train_rmse: list[float] = field(default_factory=list)
    val_rmse: list[float] = field(default_factory=list)
    rejected_steps: int = 0
    regularized_solves: int = 0
    fcm_iterations: Optional[int] = None

    def __len__(self):
        return len(self.train_rmse)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_rmse", "val_rmse"])
        for i, tr in enumerate(self.train_rmse):
            va = repr(self.val_rmse[i]) if i < len(self.val_rmse) else ""
            w.writerow([i + 1, repr(tr), va])
        return buf.getvalue()


def _rmse(model: TskModel, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.sqrt(np.mean((forward(model, X).y - y) ** 2)))


def design_matrix(normalized: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Row i is [nbar_i1*(1, x_i), ..., nbar_iR*(1, x_i)]."""
    n = X.shape[0]
    ext = np.hstack([np.ones((n, 1)), X])
    return (normalized[:, :, None] * ext[:, None, :]).reshape(n, -1)


def solve_consequents(model: TskModel, X, y) -> tuple[TskModel, float, bool]:
    """Least-squares consequents for fixed antecedents.

    Returns the updated model, its training RMSE and whether the design matrix
    was rank deficient (in which case a small ridge term was added).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    inf = forward(model, X)
    Phi = design_matrix(inf.normalized, X)
    p = Phi.shape[1]
    theta, _, rank, _ = np.linalg.lstsq(Phi, y, rcond=None)
    regularized = rank < p
    if regularized:
        lam = RIDGE_SCALE * max(np.trace(Phi.T @ Phi) / p, np.finfo(float).tiny)
        A = np.vstack([Phi, np.sqrt(lam) * np.eye(p)])
        b = np.concatenate([y, np.zeros(p)])
        theta = np.linalg.lstsq(A, b, rcond=None)[0]
    new = with_consequents(model, theta.reshape(model.n_rules, model.input_dim + 1))
    return new, _rmse(new, X, y), bool(regularized)


def antecedent_gradient(model: TskModel, X, y) -> list[list[np.ndarray]]:
    """dE/dp for E = 0.5 * sum (yhat - y)^2, as ``[rule][dim] -> param vector``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, D = X.shape
    inf = forward(model, X)
    total = inf.firing.sum(axis=1)
    live = ~inf.zero_firing
    safe_total = np.where(live, total, 1.0)
    err = inf.y - y
    # dE/dw_r per sample; samples served by the zero-firing fallback contribute nothing.
    dE_dw = np.where(live[:, None], err[:, None] * (inf.consequents - inf.y[:, None]) / safe_total[:, None], 0.0)

    grads = []
    for r, rule in enumerate(model.rules):
        per_dim = []
        mu = np.stack([mf(X[:, j]) for j, mf in enumerate(rule.antecedents)], axis=1)
        for j, mf in enumerate(rule.antecedents):
            others = np.prod(np.delete(mu, j, axis=1), axis=1) if D > 1 else np.ones(n)
            dmu = mf.grad(X[:, j])
            per_dim.append((dE_dw[:, r] * others) @ dmu)
        grads.append(per_dim)
    return grads


def antecedent_gradient_step(model: TskModel, X, y, lr: float) -> tuple[TskModel, bool]:
    """One descent step on every antecedent parameter.

    Non-finite gradient components are zeroed; the flag reports whether that
    happened. Trapezoid ordering and Gaussian width floors are restored by the
    membership functions themselves.
    """
    grads = antecedent_gradient(model, X, y)
    bad = False
    rules = []
    for rule, g_rule in zip(model.rules, grads):
        mfs = []
        for mf, g in zip(rule.antecedents, g_rule):
            finite = np.isfinite(g)
            if not finite.all():
                bad = True
                g = np.where(finite, g, 0.0)
            mfs.append(mf.with_params(mf.params - lr * g) if lr else mf)
        rules.append(TskRule(tuple(mfs), rule.weights, rule.bias))
    return TskModel(tuple(rules), model.input_names, model.t_norm), bad


def initial_model(X: np.ndarray, config: TrainConfig, input_names) -> tuple[TskModel, Optional[int]]:
    if config.variant == "conventional":
        ranges = list(zip(X.min(axis=0), X.max(axis=0)))
        return grid_model(ranges, config.mfs_per_dim, input_names), None
    res = fcm_cluster(X, config.fcm_config())
    mfs = clusters_to_mfs(res, X)
    D = X.shape[1]
    rules = tuple(TskRule(tuple(cl), (0.0,) * D, 0.0) for cl in mfs)
    return TskModel(rules, tuple(input_names)), res.iterations


def train(
    X,
    y,
    config: TrainConfig = TrainConfig(),
    X_val=None,
    y_val=None,
    input_names: Optional[Sequence[str]] = None,
) -> tuple[TskModel, TrainHistory]:
    """Fit a first-order TSK model by hybrid learning.

    An antecedent step that raises the training error is rejected, so the
    recorded training RMSE never increases from one epoch to the next.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on sample count")
    if X.shape[0] < 3:
        raise ValueError("need at least 3 training samples")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("training data must be finite")
    names = tuple(input_names) if input_names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
    has_val = X_val is not None
    if has_val:
        X_val = np.asarray(X_val, dtype=float)
        if X_val.ndim == 1:
            X_val = X_val[:, None]
        y_val = np.asarray(y_val, dtype=float)

    hist = TrainHistory()
    model, hist.fcm_iterations = initial_model(X, config, names)

    def record(m, rmse):
        hist.train_rmse.append(rmse)
        if has_val:
            hist.val_rmse.append(_rmse(m, X_val, y_val))

    first_tuned_epoch = 1
    if config.variant == "fcm_anfis":
        model, rmse, reg = solve_consequents(model, X, y)
        hist.regularized_solves += reg
        for _ in range(config.phase_split):
            record(model, rmse)
        first_tuned_epoch = config.phase_split + 1

    initial = None if config.variant == "conventional" else hist.train_rmse[0]
    for epoch in range(first_tuned_epoch, config.epochs + 1):
        model, rmse, reg = solve_consequents(model, X, y)
        hist.regularized_solves += reg
        if initial is None:
            initial = rmse
        cand, bad = antecedent_gradient_step(model, X, y, config.lr)
        if bad:
            log.warning("epoch %d: non-finite antecedent gradient components zeroed", epoch)
        cand_rmse = _rmse(cand, X, y)
        if not np.isfinite(cand_rmse) or cand_rmse > DIVERGENCE_FACTOR * max(initial, 1e-300):
            raise TrainingDiverged(
                f"epoch {epoch}: training RMSE {cand_rmse:.6g} exceeds "
                f"{DIVERGENCE_FACTOR:g}x the initial {initial:.6g}"
            )
        if cand_rmse <= rmse:
            model, rmse = cand, cand_rmse
        else:
            hist.rejected_steps += 1
        record(model, rmse)
    return model, hist


def predict(model: TskModel, X) -> tuple[np.ndarray, Inference]:
    """Vectorised inference; the trace holds normalised firing strengths per rule."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    res = forward(model, X)
    return res.y, res
