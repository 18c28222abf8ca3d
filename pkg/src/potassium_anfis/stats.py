"""Rank statistics, chi-square tail probabilities, correlation and boxplot summaries."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

ALPHA = 0.05
NOTCH_CONSTANT = 1.57
WHISKER_IQR = 1.5

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 10_000


@dataclass(frozen=True)
class KwResult:
    H: float
    df: int
    p: float
    tie_correction: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BoxStats:
    n: int
    median: float
    q1: float
    q3: float
    iqr: float
    whisker_low: float
    whisker_high: float
    ci95_low: float
    ci95_high: float
    outliers: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def rank_midties(values) -> np.ndarray:
    """Ascending ranks starting at 1, tied values sharing their mean rank."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(v.size, dtype=float)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _gamma_q_series(a: float, x: float) -> float:
    # Lower regularized gamma by its power series, returned as the upper tail.
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    p = total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    return 1.0 - p


def _gamma_q_contfrac(a: float, x: float) -> float:
    # Modified Lentz evaluation of the continued fraction for Q(a, x).
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if a == int(a) and a <= 50:
        # Integer shape: finite Poisson sum, e^-x * sum_{i<a} x^i / i!.
        lx = math.log(x)
        total = sum(math.exp(-x + i * lx - math.lgamma(i + 1)) for i in range(int(a)))
        return min(1.0, total)
    if x < a + 1.0:
        return min(1.0, max(0.0, _gamma_q_series(a, x)))
    return min(1.0, max(0.0, _gamma_q_contfrac(a, x)))


def chi2_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution."""
    if df < 1 or int(df) != df:
        raise ValueError("df must be a positive integer")
    if math.isnan(x) or x < 0:
        raise ValueError(f"chi-square statistic must be non-negative, got {x}")
    if x == math.inf:
        return 0.0
    return gamma_q(df / 2.0, x / 2.0)


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> KwResult:
    """Kruskal-Wallis H with tie correction; p from the chi-square approximation."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise ValueError("Kruskal-Wallis needs at least two groups")
    for i, g in enumerate(groups):
        if g.size == 0:
            raise ValueError(f"group {i} is empty")
    pooled = np.concatenate(groups)
    N = pooled.size
    if N < 3:
        raise ValueError("Kruskal-Wallis needs at least 3 observations in total")
    ranks = rank_midties(pooled)
    mean_rank = (N + 1) / 2.0
    H = 0.0
    start = 0
    for g in groups:
        r = ranks[start : start + g.size]
        start += g.size
        H += g.size * (r.mean() - mean_rank) ** 2
    H *= 12.0 / (N * (N + 1))

    _, counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - float(np.sum(counts.astype(float) ** 3 - counts)) / (N**3 - N)
    df = len(groups) - 1
    if correction <= 0:
        # Every value tied: no rank information at all.
        return KwResult(0.0, df, 1.0, correction)
    H /= correction
    return KwResult(float(H), df, chi2_sf(float(H), df), correction)


def pearson_r(x, y) -> Optional[float]:
    """Sample correlation; None when either input has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson_r needs two 1-D arrays of equal length")
    if x.size < 2:
        raise ValueError("pearson_r needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def boxplot_stats(values, notch_constant: float = NOTCH_CONSTANT) -> BoxStats:
    """Quartiles by linear interpolation, 1.5 IQR whiskers, notch CI of the median."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("boxplot_stats needs at least one value")
    q1, med, q3 = (float(q) for q in np.quantile(v, [0.25, 0.5, 0.75], method="linear"))
    iqr = q3 - q1
    lo_fence = q1 - WHISKER_IQR * iqr
    hi_fence = q3 + WHISKER_IQR * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    half = notch_constant * iqr / math.sqrt(v.size)
    return BoxStats(
        n=int(v.size),
        median=med,
        q1=q1,
        q3=q3,
        iqr=iqr,
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        ci95_low=med - half,
        ci95_high=med + half,
        outliers=[float(o) for o in v[(v < lo_fence) | (v > hi_fence)]],
    )
