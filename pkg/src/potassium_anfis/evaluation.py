"""Cross-validation folds, regression error metrics and three-class dyskalemia metrics."""
from __future__ import annotations

import io
import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .anfis import TrainConfig, TrainHistory, TrainingDiverged, predict, train
from .fuzzy_core import TskModel
from .pipeline import LABELS, Label, label_potassium
from .stats import pearson_r

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldAssignment:
    folds: np.ndarray
    k: int
    seed: int
    stratified: bool

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.folds == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.folds != fold)

    def sizes(self) -> list[int]:
        return np.bincount(self.folds, minlength=self.k).tolist()


def kfold(labels: Sequence, k: int = 10, seed: int = 0, stratified: bool = True) -> FoldAssignment:
    """Seeded shuffle followed by round-robin fold assignment.

    With stratification each class is shuffled separately and the classes are
    dealt one after another from a single running counter, which keeps both
    per-class and overall fold sizes within one of each other.
    """
    labels = list(labels)
    n = len(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"need at least k={k} samples, got {n}")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=int)
    if stratified:
        keys = sorted({str(getattr(lab, "value", lab)) for lab in labels})
        names = [str(getattr(lab, "value", lab)) for lab in labels]
        pos = 0
        for key in keys:
            idx = np.array([i for i, nm in enumerate(names) if nm == key])
            if len(idx) < k:
                log.warning("class %s has %d samples for %d folds; some folds lack it", key, len(idx), k)
            idx = idx[rng.permutation(len(idx))]
            folds[idx] = (pos + np.arange(len(idx))) % k
            pos += len(idx)
    else:
        folds[rng.permutation(n)] = np.arange(n) % k
    return FoldAssignment(folds, k, seed, stratified)


def mape(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError("y and y_hat must have the same shape")
    if np.any(y == 0):
        raise ValueError("MAPE is undefined when an actual value is zero")
    return float(np.mean(np.abs((y_hat - y) / y)) * 100.0)


@dataclass(frozen=True)
class ErrorStats:
    error_mean: float
    error_sd: Optional[float]
    abs_error_mean: float
    abs_error_sd: Optional[float]


def error_stats(y, y_hat) -> ErrorStats:
    """Signed (y_hat - y) and absolute errors; sample SD, None when n < 2."""
    e = np.asarray(y_hat, dtype=float) - np.asarray(y, dtype=float)
    a = np.abs(e)
    n = e.size
    if n == 0:
        raise ValueError("error_stats needs at least one sample")
    sd = (lambda v: float(np.std(v, ddof=1))) if n >= 2 else (lambda v: None)
    return ErrorStats(float(e.mean()), sd(e), float(a.mean()), sd(a))


def classify_estimate(k_hat_mM: float) -> Label:
    return label_potassium(k_hat_mM)


@dataclass
class ClassMetrics:
    confusion: np.ndarray
    labels: tuple[str, ...]
    sensitivity: dict[str, Optional[float]]
    specificity: dict[str, Optional[float]]
    accuracy: float

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "confusion": self.confusion.tolist(),
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "accuracy": self.accuracy,
        }

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["actual\\predicted", *self.labels])
        for name, row in zip(self.labels, self.confusion):
            w.writerow([name, *row.tolist()])
        return buf.getvalue()


def _label_value(x) -> str:
    return x.value if isinstance(x, Label) else Label(str(x)).value


def confusion_and_metrics(actual: Sequence, predicted: Sequence) -> ClassMetrics:
    """Rows are actual, columns predicted, ordered hypo/normal/hyper.

    Sensitivity and specificity are one-vs-rest; a class with no actual
    members (or no actual non-members) gets None rather than a number.
    """
    if len(actual) != len(predicted):
        raise ValueError("actual and predicted must have equal length")
    names = tuple(lab.value for lab in LABELS)
    index = {nm: i for i, nm in enumerate(names)}
    cm = np.zeros((3, 3), dtype=int)
    for a, p in zip(actual, predicted):
        cm[index[_label_value(a)], index[_label_value(p)]] += 1
    total = int(cm.sum())
    sens, spec = {}, {}
    for i, nm in enumerate(names):
        tp = cm[i, i]
        fn = cm[i].sum() - tp
        fp = cm[:, i].sum() - tp
        tn = total - tp - fn - fp
        sens[nm] = float(tp / (tp + fn)) if tp + fn else None
        spec[nm] = float(tn / (tn + fp)) if tn + fp else None
    acc = float(np.trace(cm) / total) if total else math.nan
    return ClassMetrics(cm, names, sens, spec, acc)


@dataclass
class RegressionMetrics:
    n: int
    error_mean: float
    error_sd: Optional[float]
    abs_error_mean: float
    abs_error_sd: Optional[float]
    mape: float
    pearson_r: Optional[float]

    @classmethod
    def compute(cls, y, y_hat) -> "RegressionMetrics":
        y = np.asarray(y, dtype=float)
        y_hat = np.asarray(y_hat, dtype=float)
        es = error_stats(y, y_hat)
        r = pearson_r(y_hat, y) if y.size >= 2 else None
        return cls(int(y.size), es.error_mean, es.error_sd, es.abs_error_mean,
                   es.abs_error_sd, mape(y, y_hat), r)


@dataclass
class EvalReport:
    variant: str
    folds: list[RegressionMetrics]
    pooled: RegressionMetrics
    classification: ClassMetrics
    fold_assignment: FoldAssignment
    predictions: np.ndarray
    actual: np.ndarray
    zero_firing: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        fa = self.fold_assignment
        return {
            "variant": self.variant,
            "k": fa.k,
            "seed": fa.seed,
            "stratified": fa.stratified,
            "fold_of_sample": fa.folds.tolist(),
            "pooled": vars(self.pooled).copy(),
            "folds": [vars(m).copy() for m in self.folds],
            "classification": self.classification.to_dict(),
            "zero_firing_samples": self.zero_firing,
            "predictions": self.predictions.tolist(),
            "actual": self.actual.tolist(),
            **self.extra,
        }


def build_report(
    variant: str,
    y: np.ndarray,
    y_hat: np.ndarray,
    assignment: FoldAssignment,
    zero_firing: int = 0,
    extra: Optional[dict] = None,
) -> EvalReport:
    """Pool out-of-fold predictions and compute per-fold and pooled metrics."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    per_fold = [
        RegressionMetrics.compute(y[assignment.test_indices(f)], y_hat[assignment.test_indices(f)])
        for f in range(assignment.k)
    ]
    cls = confusion_and_metrics(
        [label_potassium(v) for v in y], [classify_estimate(v) for v in y_hat]
    )
    return EvalReport(variant, per_fold, RegressionMetrics.compute(y, y_hat), cls,
                      assignment, y_hat, y, zero_firing, extra or {})


def _pm(mean: float, sd: Optional[float], digits: int = 3) -> str:
    return f"{mean:.{digits}f}" + (f" ± {sd:.{digits}f}" if sd is not None else " ± n/a")


def comparison_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text table: error, absolute error, MAPE, r and classification per model."""
    head = f"{'Model':<14}{'Error (mM)':<20}{'Absolute error (mM)':<22}{'MAPE (%)':<10}{'r':<8}{'Acc (%)':<9}"
    lines = [head, "-" * len(head)]
    for rep in reports:
        p = rep.pooled
        r = f"{p.pearson_r:.3f}" if p.pearson_r is not None else "n/a"
        lines.append(
            f"{rep.variant:<14}{_pm(p.error_mean, p.error_sd):<20}"
            f"{_pm(p.abs_error_mean, p.abs_error_sd):<22}{p.mape:<10.2f}{r:<8}"
            f"{100 * rep.classification.accuracy:<9.2f}"
        )
    lines.append("")
    for rep in reports:
        c = rep.classification
        parts = []
        for nm in ("hypo", "hyper"):
            se, sp = c.sensitivity[nm], c.specificity[nm]
            se_s = f"{100 * se:.2f}" if se is not None else "n/a"
            sp_s = f"{100 * sp:.2f}" if sp is not None else "n/a"
            parts.append(f"{nm} sens {se_s}% spec {sp_s}%")
        lines.append(f"{rep.variant}: " + "; ".join(parts))
    return "\n".join(lines) + "\n"


@dataclass
class CvRun:
    report: EvalReport
    models: list[TskModel]
    histories: list[TrainHistory]


def cross_validate(
    X,
    y,
    assignment: FoldAssignment,
    config: TrainConfig,
    input_names: Optional[Sequence[str]] = None,
) -> CvRun:
    """Train one model per fold and evaluate on the held-out samples.

    Folds run in order; a diverging fold raises :class:`TrainingDiverged` with
    the fold index in the message.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    y_hat = np.full(y.shape, np.nan)
    models, histories = [], []
    dead = 0
    for f in range(assignment.k):
        tr, te = assignment.train_indices(f), assignment.test_indices(f)
        try:
            model, hist = train(X[tr], y[tr], config, X[te], y[te], input_names=input_names)
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"fold {f}: {exc}") from exc
        pred, trace = predict(model, X[te])
        y_hat[te] = pred
        dead += int(trace.zero_firing.sum())
        models.append(model)
        histories.append(hist)
    report = build_report(config.variant, y, y_hat, assignment, dead)
    return CvRun(report, models, histories)
