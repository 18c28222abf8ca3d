"""Membership functions and first-order Takagi-Sugeno inference.

Models are immutable value objects; training code in :mod:`potassium_anfis.anfis`
builds new models rather than mutating existing ones, so a model can be shared
freely between readers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

# Trapezoid grid partitions form a partition of unity, so every in-range point
# carries total membership of exactly this much.
GRID_COVERAGE_FLOOR = 1.0


class MembershipFunction:
    """Base class for a single-input membership function.

    Subclasses are frozen dataclasses exposing their trainable parameters as a
    flat vector through :attr:`params` and :meth:`with_params`.
    """

    kind: str = ""

    @property
    def params(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def center(self) -> float:
        raise NotImplementedError

    def with_params(self, params: Sequence[float]) -> "MembershipFunction":
        raise NotImplementedError

    def __call__(self, x):
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        """Partial derivatives of the degree w.r.t. each parameter, shape (n, p)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": [float(p) for p in self.params]}


@dataclass(frozen=True)
class Trapezoid(MembershipFunction):
    a: float
    b: float
    c: float
    d: float
    kind = "trapezoid"

    def __post_init__(self):
        if not self.a <= self.b <= self.c <= self.d:
            raise ValueError(
                f"trapezoid corners must satisfy a <= b <= c <= d, got "
                f"({self.a}, {self.b}, {self.c}, {self.d})"
            )

    @property
    def params(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=float)

    @property
    def center(self) -> float:
        return 0.5 * (self.b + self.c)

    def with_params(self, params):
        # Restore ordering by clipping each corner against its left neighbour.
        a, b, c, d = (float(p) for p in params)
        b = max(b, a)
        c = max(c, b)
        d = max(d, c)
        return Trapezoid(a, b, c, d)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[(x >= self.b) & (x <= self.c)] = 1.0
        if self.b > self.a:
            m = (x > self.a) & (x < self.b)
            out[m] = (x[m] - self.a) / (self.b - self.a)
        if self.d > self.c:
            m = (x > self.c) & (x < self.d)
            out[m] = (self.d - x[m]) / (self.d - self.c)
        return out

    def grad(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        g = np.zeros((x.size, 4))
        # Open intervals only: derivative is taken as 0 exactly at kinks.
        if self.b > self.a:
            m = (x > self.a) & (x < self.b)
            w = self.b - self.a
            g[m, 0] = (x[m] - self.b) / w**2
            g[m, 1] = -(x[m] - self.a) / w**2
        if self.d > self.c:
            m = (x > self.c) & (x < self.d)
            w = self.d - self.c
            g[m, 2] = (self.d - x[m]) / w**2
            g[m, 3] = (x[m] - self.c) / w**2
        return g


@dataclass(frozen=True)
class Gaussian(MembershipFunction):
    mean: float
    sigma: float
    sigma_min: float = field(default=1e-12, compare=False)
    kind = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"gaussian sigma must be positive, got {self.sigma}")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.mean, self.sigma], dtype=float)

    @property
    def center(self) -> float:
        return self.mean

    def with_params(self, params):
        mean, sigma = (float(p) for p in params)
        return Gaussian(mean, max(sigma, self.sigma_min), self.sigma_min)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-((x - self.mean) ** 2) / (2.0 * self.sigma**2))

    def grad(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        mu = self(x)
        dx = x - self.mean
        return np.stack([mu * dx / self.sigma**2, mu * dx**2 / self.sigma**3], axis=1)

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["sigma_min"] = float(self.sigma_min)
        return out


def eval_mf(mf: MembershipFunction, x: float) -> float:
    return float(mf(np.asarray([x], dtype=float))[0])


def mf_from_dict(doc: dict) -> MembershipFunction:
    kind = doc["kind"]
    p = [float(v) for v in doc["params"]]
    if kind == Trapezoid.kind:
        return Trapezoid(*p)
    if kind == Gaussian.kind:
        return Gaussian(p[0], p[1], float(doc.get("sigma_min", 1e-12)))
    raise ValueError(f"unknown membership function kind {kind!r}")


@dataclass(frozen=True)
class TskRule:
    antecedents: tuple[MembershipFunction, ...]
    weights: tuple[float, ...]
    bias: float = 0.0

    def __post_init__(self):
        if len(self.antecedents) == 0:
            raise ValueError("a rule needs at least one antecedent")
        if len(self.weights) != len(self.antecedents):
            raise ValueError("one consequent weight per input dimension required")

    @property
    def center(self) -> np.ndarray:
        return np.array([mf.center for mf in self.antecedents])

    def consequent(self, X: np.ndarray) -> np.ndarray:
        return X @ np.asarray(self.weights, dtype=float) + self.bias


@dataclass(frozen=True)
class TskModel:
    rules: tuple[TskRule, ...]
    input_names: tuple[str, ...]
    t_norm: str = "product"

    def __post_init__(self):
        if not self.rules:
            raise ValueError("model needs at least one rule")
        if self.t_norm != "product":
            raise ValueError("only the product t-norm is supported")
        dims = {len(r.antecedents) for r in self.rules}
        if dims != {len(self.input_names)}:
            raise ValueError(
                f"rules have input dims {sorted(dims)}, model declares {len(self.input_names)}"
            )

    @property
    def input_dim(self) -> int:
        return len(self.input_names)

    @property
    def n_rules(self) -> int:
        return len(self.rules)

    def to_dict(self) -> dict:
        return {
            "input_names": list(self.input_names),
            "t_norm": self.t_norm,
            "rules": [
                {
                    "antecedents": [mf.to_dict() for mf in r.antecedents],
                    "weights": [float(w) for w in r.weights],
                    "bias": float(r.bias),
                }
                for r in self.rules
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TskModel":
        rules = tuple(
            TskRule(
                antecedents=tuple(mf_from_dict(m) for m in r["antecedents"]),
                weights=tuple(float(w) for w in r["weights"]),
                bias=float(r["bias"]),
            )
            for r in doc["rules"]
        )
        return cls(rules, tuple(doc["input_names"]), doc.get("t_norm", "product"))

    def to_json(self) -> str:
        # repr-based float formatting round-trips exactly.
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TskModel":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TskModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Inference:
    """Batched forward pass result; row i belongs to sample i."""

    y: np.ndarray
    firing: np.ndarray
    normalized: np.ndarray
    consequents: np.ndarray
    zero_firing: np.ndarray


def _ordered_sum(values: np.ndarray) -> np.ndarray:
    # Sorting before summing makes the result independent of rule order.
    return np.sort(values, axis=1).sum(axis=1)


def membership_tensor(model: TskModel, X: np.ndarray) -> np.ndarray:
    """Degrees of shape (n, rules, dims)."""
    n = X.shape[0]
    out = np.empty((n, model.n_rules, model.input_dim))
    for r, rule in enumerate(model.rules):
        for j, mf in enumerate(rule.antecedents):
            out[:, r, j] = mf(X[:, j])
    return out


def consequent_matrix(model: TskModel) -> np.ndarray:
    """Rows are [bias, w_1..w_D] per rule."""
    return np.array([[r.bias, *r.weights] for r in model.rules], dtype=float)


def forward(model: TskModel, X) -> Inference:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} input columns, got {X.shape[1]}")
    mu = membership_tensor(model, X)
    firing = np.prod(mu, axis=2)
    theta = consequent_matrix(model)
    f = theta[:, 0][None, :] + X @ theta[:, 1:].T
    total = _ordered_sum(firing)
    dead = ~(total > 0)
    safe_total = np.where(dead, 1.0, total)
    normalized = firing / safe_total[:, None]
    if dead.any():
        centers = np.array([r.center for r in model.rules])
        for i in np.flatnonzero(dead):
            nearest = int(np.argmin(np.sum((centers - X[i]) ** 2, axis=1)))
            normalized[i] = 0.0
            normalized[i, nearest] = 1.0
    y = _ordered_sum(normalized * f)
    return Inference(y=y, firing=firing, normalized=normalized, consequents=f, zero_firing=dead)


def infer(model: TskModel, x: Sequence[float]) -> tuple[float, np.ndarray, np.ndarray, bool]:
    """Single-sample inference: (estimate, firing, normalized, zero_firing_flag)."""
    res = forward(model, np.asarray(x, dtype=float).reshape(1, -1))
    return float(res.y[0]), res.firing[0], res.normalized[0], bool(res.zero_firing[0])


def grid_partition(input_ranges: Sequence[tuple[float, float]], mfs_per_dim: int) -> list[list[Trapezoid]]:
    """Equally spaced, 50%-overlapping trapezoids per input dimension.

    With ``m`` functions over ``[lo, hi]`` the plateau centres are spaced
    ``s = (hi - lo) / (m - 1/2)`` apart and each plateau is ``s/2`` wide, so the
    first plateau starts at ``lo`` and the last one ends at ``hi``. Adjacent
    ramps share an interval, which makes memberships sum to one everywhere in
    range. The outermost functions get an extra outward ramp of width ``s/2``.
    """
    if mfs_per_dim < 2:
        raise ValueError("mfs_per_dim must be at least 2")
    out = []
    for lo, hi in input_ranges:
        lo, hi = float(lo), float(hi)
        if not hi > lo:
            raise ValueError(f"degenerate input range [{lo}, {hi}]")
        s = (hi - lo) / (mfs_per_dim - 0.5)
        half = s / 2.0
        mfs = []
        for i in range(mfs_per_dim):
            b = lo + i * s
            c = b + half
            if i == mfs_per_dim - 1:
                c = hi
            mfs.append(Trapezoid(b - half, b, c, c + half))
        out.append(mfs)
    return out


def grid_model(input_ranges, mfs_per_dim: int, input_names: Sequence[str]) -> TskModel:
    """Cross-product rule base over a grid partition, all consequents zero."""
    per_dim = grid_partition(input_ranges, mfs_per_dim)
    if len(per_dim) != len(input_names):
        raise ValueError("one range per input name required")
    rules = tuple(
        TskRule(antecedents=tuple(combo), weights=(0.0,) * len(per_dim), bias=0.0)
        for combo in product(*per_dim)
    )
    return TskModel(rules, tuple(input_names))


def with_consequents(model: TskModel, theta: np.ndarray) -> TskModel:
    rules = tuple(
        TskRule(r.antecedents, tuple(float(w) for w in theta[i, 1:]), float(theta[i, 0]))
        for i, r in enumerate(model.rules)
    )
    return TskModel(rules, model.input_names, model.t_norm)
