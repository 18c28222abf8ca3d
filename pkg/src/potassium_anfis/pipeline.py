"""Cohort assembly: CSV ingestion, ECG/lab joining, labelling, feature selection
and a seeded synthetic data generator shaped like the 42-patient cohort.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .stats import ALPHA, kruskal_wallis, pearson_r

log = logging.getLogger(__name__)

FEATURES: tuple[str, ...] = (
    "rr_ms",
    "pr_ms",
    "qrs_ms",
    "qt_ms",
    "qtc_ms",
    "p_axis_deg",
    "qrs_axis_deg",
    "t_axis_deg",
    "acci",
)
INTERVAL_FEATURES = ("rr_ms", "pr_ms", "qrs_ms", "qt_ms", "qtc_ms")
DISPLAY_NAMES = {
    "rr_ms": "RR interval",
    "pr_ms": "PR interval",
    "qrs_ms": "QRS duration",
    "qt_ms": "QT interval",
    "qtc_ms": "QTc interval",
    "p_axis_deg": "P axis",
    "qrs_axis_deg": "QRS axis",
    "t_axis_deg": "T axis",
    "acci": "ACCI",
}

HYPO_BELOW = 3.5
HYPER_ABOVE = 5.0
PLAUSIBLE_K = (1.0, 10.0)
DEFAULT_WINDOW_S = 300.0

# Reference cohort class sizes (hypo / normal / hyper).
COHORT_CLASS_COUNTS = (10, 27, 5)


class Label(str, Enum):
    HYPO = "hypo"
    NORMAL = "normal"
    HYPER = "hyper"


LABELS: tuple[Label, ...] = (Label.HYPO, Label.NORMAL, Label.HYPER)


def label_potassium(k_mM: float) -> Label:
    """<3.5 hypo, [3.5, 5.0] normal, >5.0 hyper."""
    k = float(k_mM)
    if not math.isfinite(k):
        raise ValueError(f"potassium value must be finite, got {k_mM!r}")
    if k < HYPO_BELOW:
        return Label.HYPO
    if k > HYPER_ABOVE:
        return Label.HYPER
    return Label.NORMAL


@dataclass(frozen=True)
class EcgRecord:
    patient_id: str
    timestamp: datetime
    rr_ms: Optional[float] = None
    pr_ms: Optional[float] = None
    qrs_ms: Optional[float] = None
    qt_ms: Optional[float] = None
    qtc_ms: Optional[float] = None
    p_axis_deg: Optional[float] = None
    qrs_axis_deg: Optional[float] = None
    t_axis_deg: Optional[float] = None
    acci: Optional[int] = None

    def __post_init__(self):
        for name in INTERVAL_FEATURES:
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("p_axis_deg", "qrs_axis_deg", "t_axis_deg"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.acci is not None and self.acci < 0:
            raise ValueError("acci must be non-negative")

    @property
    def complete(self) -> bool:
        return all(getattr(self, f) is not None for f in FEATURES)

    def features(self) -> dict[str, float]:
        return {f: getattr(self, f) for f in FEATURES}


@dataclass(frozen=True)
class LabRecord:
    patient_id: str
    timestamp: datetime
    potassium_mM: float

    def __post_init__(self):
        if not (math.isfinite(self.potassium_mM) and self.potassium_mM > 0):
            raise ValueError(f"potassium must be a positive number, got {self.potassium_mM}")


@dataclass(frozen=True)
class CohortSample:
    patient_id: str
    features: dict[str, float]
    potassium_mM: float
    label: Label
    delta_t_s: float
    ecg_time: Optional[datetime] = None
    lab_time: Optional[datetime] = None

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "ecg_time": self.ecg_time.isoformat() if self.ecg_time else None,
            "lab_time": self.lab_time.isoformat() if self.lab_time else None,
            "delta_t_s": self.delta_t_s,
            "features": {f: self.features[f] for f in FEATURES if f in self.features},
            "potassium_mM": self.potassium_mM,
            "label": self.label.value,
        }


@dataclass
class ParseIssue:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


# ---------------------------------------------------------------- CSV I/O

ECG_COLUMNS = ("patient_id", "timestamp", *FEATURES)
LAB_COLUMNS = ("patient_id", "timestamp", "potassium_mM")


def _opt_float(s: str) -> Optional[float]:
    s = s.strip()
    return None if s == "" else float(s)


def _opt_int(s: str) -> Optional[int]:
    s = s.strip()
    if s == "":
        return None
    v = float(s)
    if v != int(v):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _read_rows(path, required: Sequence[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        for row in reader:
            yield reader.line_num, row


def read_ecg_csv(path) -> tuple[list[EcgRecord], list[ParseIssue]]:
    records, issues = [], []
    for line, row in _read_rows(path, ECG_COLUMNS):
        try:
            vals = {f: _opt_float(row[f]) for f in FEATURES if f != "acci"}
            records.append(EcgRecord(
                patient_id=row["patient_id"].strip(),
                timestamp=datetime.fromisoformat(row["timestamp"].strip()),
                acci=_opt_int(row["acci"]),
                **vals,
            ))
        except (ValueError, TypeError, AttributeError) as exc:
            issues.append(ParseIssue(line, str(exc)))
    for issue in issues:
        log.warning("%s: skipped malformed ECG row, %s", path, issue)
    return records, issues


def read_lab_csv(path) -> tuple[list[LabRecord], list[ParseIssue]]:
    records, issues = [], []
    for line, row in _read_rows(path, LAB_COLUMNS):
        try:
            rec = LabRecord(
                patient_id=row["patient_id"].strip(),
                timestamp=datetime.fromisoformat(row["timestamp"].strip()),
                potassium_mM=float(row["potassium_mM"]),
            )
        except (ValueError, TypeError, AttributeError) as exc:
            issues.append(ParseIssue(line, str(exc)))
            continue
        lo, hi = PLAUSIBLE_K
        if not lo <= rec.potassium_mM <= hi:
            log.warning("%s line %d: implausible potassium %.3g mM", path, line, rec.potassium_mM)
        records.append(rec)
    for issue in issues:
        log.warning("%s: skipped malformed lab row, %s", path, issue)
    return records, issues


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def ecg_csv_text(ecgs: Iterable[EcgRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ECG_COLUMNS)
    for e in ecgs:
        w.writerow([e.patient_id, e.timestamp.isoformat(), *(_fmt(getattr(e, f)) for f in FEATURES)])
    return buf.getvalue()


def lab_csv_text(labs: Iterable[LabRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LAB_COLUMNS)
    for r in labs:
        w.writerow([r.patient_id, r.timestamp.isoformat(), _fmt(r.potassium_mM)])
    return buf.getvalue()


def cohort_csv_text(samples: Sequence[CohortSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["patient_id", "ecg_time", "lab_time", "delta_t_s", *FEATURES, "potassium_mM", "label"])
    for s in samples:
        w.writerow([
            s.patient_id,
            s.ecg_time.isoformat() if s.ecg_time else "",
            s.lab_time.isoformat() if s.lab_time else "",
            _fmt(s.delta_t_s),
            *(_fmt(s.features[f]) for f in FEATURES),
            _fmt(s.potassium_mM),
            s.label.value,
        ])
    return buf.getvalue()


def cohort_json_text(samples: Sequence[CohortSample]) -> str:
    return json.dumps([s.to_dict() for s in samples], indent=2)


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


# ---------------------------------------------------------------- cohort

def join_cohort(
    ecgs: Sequence[EcgRecord],
    labs: Sequence[LabRecord],
    window_s: float = DEFAULT_WINDOW_S,
) -> list[CohortSample]:
    """One sample per patient: the complete (ECG, lab) pair closest in time.

    Pairs farther apart than ``window_s`` seconds are ignored. Ties on |dt| go
    to the earlier lab, then the earlier ECG. Output is sorted by patient id.
    """
    if window_s < 0:
        raise ValueError("window_s must be non-negative")
    by_patient: dict[str, list[EcgRecord]] = {}
    for e in ecgs:
        if e.complete:
            by_patient.setdefault(e.patient_id, []).append(e)

    best: dict[str, tuple] = {}
    for lab in labs:
        for e in by_patient.get(lab.patient_id, ()):
            dt = (e.timestamp - lab.timestamp).total_seconds()
            if abs(dt) > window_s:
                continue
            key = (abs(dt), lab.timestamp, e.timestamp)
            cur = best.get(lab.patient_id)
            if cur is None or key < cur[0]:
                best[lab.patient_id] = (key, e, lab, dt)

    if not best:
        raise ValueError(f"empty cohort: no complete ECG within {window_s:g} s of a potassium value")
    out = []
    for pid in sorted(best):
        _, e, lab, dt = best[pid]
        out.append(CohortSample(
            patient_id=pid,
            features={f: float(v) for f, v in e.features().items()},
            potassium_mM=lab.potassium_mM,
            label=label_potassium(lab.potassium_mM),
            delta_t_s=dt,
            ecg_time=e.timestamp,
            lab_time=lab.timestamp,
        ))
    return out


def class_counts(samples: Sequence[CohortSample]) -> dict[Label, int]:
    counts = {lab: 0 for lab in LABELS}
    for s in samples:
        counts[s.label] += 1
    return counts


def feature_matrix(samples: Sequence[CohortSample], features: Sequence[str]) -> np.ndarray:
    return np.array([[s.features[f] for f in features] for s in samples], dtype=float)


def targets(samples: Sequence[CohortSample]) -> np.ndarray:
    return np.array([s.potassium_mM for s in samples], dtype=float)


# ---------------------------------------------------------------- feature selection

@dataclass(frozen=True)
class FeatureStat:
    feature: str
    H: float
    df: int
    p: float
    tie_correction: float
    significant: bool
    pearson_r: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "name": DISPLAY_NAMES.get(self.feature, self.feature),
            "H": self.H,
            "df": self.df,
            "p": self.p,
            "tie_correction": self.tie_correction,
            "significant": self.significant,
            "pearson_r": self.pearson_r,
        }


@dataclass
class FeatureReport:
    alpha: float
    groups: list[str]
    ranking: list[FeatureStat] = field(default_factory=list)

    @property
    def significant(self) -> list[str]:
        return [s.feature for s in self.ranking if s.significant]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "groups": self.groups,
            "features": [s.to_dict() for s in self.ranking],
        }


def select_features(
    samples: Sequence[CohortSample],
    alpha: float = ALPHA,
    features: Sequence[str] = FEATURES,
) -> FeatureReport:
    """Kruskal-Wallis across label groups for each feature, ranked by H."""
    groups = {lab: [s for s in samples if s.label == lab] for lab in LABELS}
    present = [lab for lab in LABELS if groups[lab]]
    for lab in LABELS:
        if not groups[lab]:
            log.warning("class %s has no samples; excluded from the Kruskal-Wallis tests", lab.value)
    if len(present) < 2:
        raise ValueError("feature selection needs at least two classes in the cohort")

    k = targets(samples)
    stats = []
    for f in features:
        res = kruskal_wallis([[s.features[f] for s in groups[lab]] for lab in present])
        sig = res.p < alpha
        r = pearson_r([s.features[f] for s in samples], k) if sig else None
        stats.append(FeatureStat(f, res.H, res.df, res.p, res.tie_correction, sig, r))
    stats.sort(key=lambda s: (-s.H, s.feature))
    return FeatureReport(alpha, [lab.value for lab in present], stats)


# ---------------------------------------------------------------- synthetic data

# Calibrated with scripts/calibrate_synthetic.py: on n=42 with SYNTH_SEED this
# gives r(T axis, K) close to 0.62.
SYNTH_T_SLOPE = 20.0
SYNTH_T_AT_NORMAL = 45.0
SYNTH_NOISE_SD = 17.0
SYNTH_SEED = 2

# Potassium grids (0.1 mM lab resolution) per class, with draw weights that
# crowd values toward the normal range as in hospital lab data.
_K_GRID = {
    Label.HYPO: np.round(np.arange(3.0, 3.45, 0.1), 1),
    Label.NORMAL: np.round(np.arange(3.5, 5.05, 0.1), 1),
    Label.HYPER: np.round(np.arange(5.1, 6.25, 0.1), 1),
}
_K_WEIGHTS = {
    Label.HYPO: np.arange(1.0, 6.0) / 15.0,
    Label.NORMAL: np.exp(-0.5 * ((_K_GRID[Label.NORMAL] - 4.1) / 0.35) ** 2),
    Label.HYPER: np.exp(-0.5 * ((_K_GRID[Label.HYPER] - 5.1) / 0.4) ** 2),
}
_K_WEIGHTS = {lab: w / w.sum() for lab, w in _K_WEIGHTS.items()}
_BASE_TIME = datetime(2010, 1, 1, 8, 0, 0)


def scaled_class_counts(n: int) -> list[int]:
    """Largest-remainder split of n in the cohort's 10/27/5 proportions."""
    total = sum(COHORT_CLASS_COUNTS)
    raw = [n * c / total for c in COHORT_CLASS_COUNTS]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(3), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def generate_synthetic(
    n: int = 42,
    noise_sd: float = SYNTH_NOISE_SD,
    seed: int = SYNTH_SEED,
) -> tuple[list[EcgRecord], list[LabRecord]]:
    """ECG and lab tables for ``n`` patients.

    T axis is affine in potassium plus Gaussian noise; the other eight features
    are label-independent noise. Each patient gets the matching ECG inside the
    join window, a second complete ECG farther away in time (still inside the
    window for half the patients) and one ECG two hours away.
    """
    if n < 10:
        raise ValueError("generate_synthetic needs n >= 10")
    rng = np.random.default_rng(seed)
    labels = []
    for lab, c in zip(LABELS, scaled_class_counts(n)):
        labels += [lab] * c
    labels = [labels[i] for i in rng.permutation(n)]

    ecgs: list[EcgRecord] = []
    labs: list[LabRecord] = []
    width = len(str(n - 1))
    for i, lab in enumerate(labels):
        pid = f"P{i:0{width}d}"
        k = float(rng.choice(_K_GRID[lab], p=_K_WEIGHTS[lab]))
        lab_time = _BASE_TIME + timedelta(days=i, seconds=int(rng.integers(0, 36000)))
        labs.append(LabRecord(pid, lab_time, k))

        t_axis = round(SYNTH_T_AT_NORMAL + SYNTH_T_SLOPE * (k - 4.2) + rng.normal(0.0, noise_sd)) + 0.0
        dt = int(rng.integers(-200, 201))
        ecgs.append(_noise_ecg(rng, pid, lab_time + timedelta(seconds=dt), t_axis))

        # Decoys: a farther ECG (inside the window for even i) and a far one.
        far_dt = int(np.sign(dt) or 1) * (abs(dt) + int(rng.integers(1, 100)))
        if i % 2:
            far_dt += int(np.sign(far_dt)) * 400
        ecgs.append(_noise_ecg(rng, pid, lab_time + timedelta(seconds=far_dt), float(rng.integers(-60, 150))))
        ecgs.append(_noise_ecg(rng, pid, lab_time + timedelta(hours=2), float(rng.integers(-60, 150))))
    return ecgs, labs


def _noise_ecg(rng, pid: str, ts: datetime, t_axis: float) -> EcgRecord:
    def pos(mean, sd):
        return float(max(1, round(rng.normal(mean, sd))))

    return EcgRecord(
        patient_id=pid,
        timestamp=ts,
        rr_ms=pos(800, 120),
        pr_ms=pos(160, 20),
        qrs_ms=pos(95, 12),
        qt_ms=pos(390, 35),
        qtc_ms=pos(440, 30),
        p_axis_deg=float(round(rng.normal(50, 20))),
        qrs_axis_deg=float(round(rng.normal(40, 35))),
        t_axis_deg=t_axis,
        acci=int(rng.poisson(4)),
    )
