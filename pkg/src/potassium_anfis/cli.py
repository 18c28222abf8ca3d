"""Batch command line: cohort, features, train-eval, predict (plus synth).

Exit codes: 0 success, 1 validation or data error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .anfis import VARIANTS, TrainConfig, TrainingDiverged, predict
from .evaluation import classify_estimate, comparison_table, cross_validate, kfold
from .fcm import FcmConfig
from .fuzzy_core import TskModel
from .pipeline import (
    DISPLAY_NAMES,
    FEATURES,
    LABELS,
    class_counts,
    cohort_csv_text,
    cohort_json_text,
    ecg_csv_text,
    feature_matrix,
    generate_synthetic,
    join_cohort,
    lab_csv_text,
    read_ecg_csv,
    read_lab_csv,
    select_features,
    targets,
    write_text,
)
from .stats import boxplot_stats

log = logging.getLogger("potassium_anfis")

EXIT_OK, EXIT_DATA, EXIT_IO = 0, 1, 2


@dataclass
class RunConfig:
    ecg: Optional[str] = None
    labs: Optional[str] = None
    out_dir: str = "out"
    window_s: float = 300.0
    alpha: float = 0.05
    variant: str = "both"
    features: str = "t_axis_deg"
    epochs: int = 200
    lr: float = 0.01
    mfs_per_dim: int = 5
    clusters: int = 3
    fcm_m: float = 2.0
    fcm_tol: float = 1e-5
    phase_split: int = 100
    k: int = 10
    stratified: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.window_s < 0:
            raise ValueError("window_s must be non-negative")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.variant not in (*VARIANTS, "both"):
            raise ValueError(f"variant must be one of {VARIANTS + ('both',)}")
        if self.k < 2:
            raise ValueError("k must be at least 2")
        for v in self.variants():
            self.train_config(v)

    def variants(self) -> list[str]:
        return list(VARIANTS) if self.variant == "both" else [self.variant]

    def train_config(self, variant: str) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            variant=variant,
            mfs_per_dim=self.mfs_per_dim,
            clusters=self.clusters,
            fcm=FcmConfig(c=self.clusters, m=self.fcm_m, tol=self.fcm_tol,
                          max_iter=self.phase_split, seed=self.seed),
            phase_split=self.phase_split,
            seed=self.seed,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    if kind == "bool":
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw.strip()


def read_config_file(path) -> dict:
    """key = value lines; [section] headers are allowed and ignored."""
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string("[__top__]\n" + text)
    out = {}
    for section in cp.sections():
        for key, raw in cp[section].items():
            key = key.replace("-", "_")
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}: unknown config key {key!r}")
            out[key] = _coerce(key, raw.strip().strip('"'))
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Outputs:
    """Writes files under the output directory and records their hashes."""

    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.written: dict[str, str] = {}

    def write(self, rel: str, text: str) -> Path:
        path = write_text(self.root / rel, text)
        self.written[rel] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return path

    def manifest(self, command: str, cfg: RunConfig, inputs: Sequence[str]) -> Path:
        doc = {
            "command": command,
            "version": __version__,
            "config": asdict(cfg),
            "inputs": {str(p): sha256_file(p) for p in inputs},
            "outputs": dict(sorted(self.written.items())),
        }
        return write_text(self.root / f"manifest_{command}.json", _dumps(doc))


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _load_cohort(cfg: RunConfig):
    if not cfg.ecg or not cfg.labs:
        raise ValueError("both --ecg and --labs are required")
    for p in (cfg.ecg, cfg.labs):
        if not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")
    ecgs, ecg_issues = read_ecg_csv(cfg.ecg)
    labs, lab_issues = read_lab_csv(cfg.labs)
    for issue in ecg_issues:
        print(f"{cfg.ecg}: {issue}", file=sys.stderr)
    for issue in lab_issues:
        print(f"{cfg.labs}: {issue}", file=sys.stderr)
    return join_cohort(ecgs, labs, cfg.window_s)


def _summary(samples) -> str:
    c = class_counts(samples)
    return f"{len(samples)} samples: " + " / ".join(f"{c[lab]} {lab.value}" for lab in LABELS)


def cmd_cohort(cfg: RunConfig) -> int:
    samples = _load_cohort(cfg)
    out = Outputs(cfg.out_dir)
    out.write("cohort.csv", cohort_csv_text(samples))
    out.write("cohort.json", cohort_json_text(samples) + "\n")
    out.manifest("cohort", cfg, [cfg.ecg, cfg.labs])
    print(_summary(samples))
    return EXIT_OK


def cmd_features(cfg: RunConfig) -> int:
    samples = _load_cohort(cfg)
    report = select_features(samples, cfg.alpha)
    box = {}
    for feat in report.significant:
        box[feat] = {
            "name": DISPLAY_NAMES[feat],
            "groups": {
                lab.value: boxplot_stats([s.features[feat] for s in samples if s.label == lab]).to_dict()
                for lab in LABELS
                if any(s.label == lab for s in samples)
            },
        }
    out = Outputs(cfg.out_dir)
    out.write("feature_report.json", _dumps(report.to_dict()))
    out.write("boxplots.json", _dumps(box))
    out.manifest("features", cfg, [cfg.ecg, cfg.labs])
    for st in report.ranking:
        flag = "*" if st.significant else " "
        r = f"  r={st.pearson_r:+.3f}" if st.pearson_r is not None else ""
        print(f"{flag} {DISPLAY_NAMES[st.feature]:<14} H={st.H:8.3f}  p={st.p:.4g}{r}")
    return EXIT_OK


def _resolve_features(cfg: RunConfig, samples) -> list[str]:
    if cfg.features == "auto":
        sig = select_features(samples, cfg.alpha).significant
        if not sig:
            raise ValueError("no feature reached significance; pass --features explicitly")
        return sig[:1]
    names = [f.strip() for f in cfg.features.split(",") if f.strip()]
    unknown = [f for f in names if f not in FEATURES]
    if unknown or not names:
        raise ValueError(f"unknown feature(s) {unknown}; choose from {list(FEATURES)}")
    return names


def cmd_train_eval(cfg: RunConfig) -> int:
    samples = _load_cohort(cfg)
    feats = _resolve_features(cfg, samples)
    X = feature_matrix(samples, feats)
    y = targets(samples)
    assignment = kfold([s.label for s in samples], cfg.k, cfg.seed, cfg.stratified)
    out = Outputs(cfg.out_dir)
    reports = []
    for variant in cfg.variants():
        run = cross_validate(X, y, assignment, cfg.train_config(variant), input_names=feats)
        run.report.extra.update({
            "features": feats,
            "patient_ids": [s.patient_id for s in samples],
            "epochs_run": [len(h) for h in run.histories],
            "rejected_antecedent_steps": [h.rejected_steps for h in run.histories],
        })
        for i, (model, hist) in enumerate(zip(run.models, run.histories)):
            out.write(f"models/{variant}/fold_{i:02d}.json", model.to_json() + "\n")
            out.write(f"history/{variant}/fold_{i:02d}.csv", hist.to_csv())
        out.write(f"report_{variant}.json", _dumps(run.report.to_dict()))
        out.write(f"confusion_{variant}.csv", run.report.classification.confusion_csv())
        reports.append(run.report)
    table = comparison_table(reports)
    out.write("comparison.txt", table)
    out.manifest("train-eval", cfg, [cfg.ecg, cfg.labs])
    print(table, end="")
    return EXIT_OK


def _parse_row(text: str) -> dict[str, float]:
    row = {}
    for part in text.split(","):
        if not part.strip():
            continue
        key, sep, val = part.partition("=")
        if not sep:
            raise ValueError(f"--row expects name=value pairs, got {part!r}")
        row[key.strip()] = float(val)
    return row


def _read_input_rows(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_predict(model_path: str, rows: list[dict], out_dir: Optional[str] = None) -> int:
    if not Path(model_path).is_file():
        raise FileNotFoundError(f"model file not found: {model_path}")
    model = TskModel.load(model_path)
    for i, row in enumerate(rows):
        missing = [name for name in model.input_names if name not in row or row[name] in ("", None)]
        if missing:
            raise ValueError(f"input row {i + 1} is missing column(s): {', '.join(missing)}")
    X = np.array([[float(r[name]) for name in model.input_names] for r in rows], dtype=float)
    y_hat, trace = predict(model, X)
    results = []
    for i in range(len(rows)):
        results.append({
            "inputs": {name: float(X[i, j]) for j, name in enumerate(model.input_names)},
            "potassium_mM": float(y_hat[i]),
            "class": classify_estimate(y_hat[i]).value,
            "zero_firing": bool(trace.zero_firing[i]),
            "rules": [
                {
                    "rule": r + 1,
                    "firing": float(trace.firing[i, r]),
                    "normalized": float(trace.normalized[i, r]),
                    "consequent_mM": float(trace.consequents[i, r]),
                }
                for r in range(model.n_rules)
            ],
        })
    for res in results:
        print(f"[K+] = {res['potassium_mM']:.3f} mM  ({res['class']})")
        for rr in res["rules"]:
            print(f"    rule {rr['rule']}: weight {rr['normalized']:.4f}  -> {rr['consequent_mM']:.4f} mM")
    if out_dir:
        out = Outputs(out_dir)
        out.write("predictions.json", _dumps(results))
    return EXIT_OK


def cmd_synth(n: int, noise_sd: float, seed: int, out_dir: str) -> int:
    ecgs, labs = generate_synthetic(n, noise_sd, seed)
    out = Outputs(out_dir)
    out.write("ecg.csv", ecg_csv_text(ecgs))
    out.write("labs.csv", lab_csv_text(labs))
    print(f"wrote {len(ecgs)} ECG rows and {len(labs)} lab rows to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="potassium-anfis", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--ecg")
        p.add_argument("--labs")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--window-s", dest="window_s", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--seed", type=int)

    run_flags(sub.add_parser("cohort", help="join ECGs to potassium values and label them"))
    run_flags(sub.add_parser("features", help="Kruskal-Wallis feature ranking and boxplot data"))

    p = sub.add_parser("train-eval", help="k-fold training and evaluation")
    run_flags(p)
    p.add_argument("--variant", choices=[*VARIANTS, "both"])
    p.add_argument("--features", help="comma-separated feature columns, or 'auto'")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--mfs-per-dim", dest="mfs_per_dim", type=int)
    p.add_argument("--clusters", type=int)
    p.add_argument("--fcm-m", dest="fcm_m", type=float)
    p.add_argument("--fcm-tol", dest="fcm_tol", type=float)
    p.add_argument("--phase-split", dest="phase_split", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--no-stratify", dest="stratified", action="store_const", const=False)

    p = sub.add_parser("predict", help="estimate potassium with a saved model")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="CSV file with one row per sample")
    src.add_argument("--row", help="name=value pairs, e.g. t_axis_deg=20")
    p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("synth", help="write a seeded synthetic ecg.csv / labs.csv pair")
    p.add_argument("--n", type=int, default=42)
    p.add_argument("--noise-sd", dest="noise_sd", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", default="data")
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in _FIELD_TYPES:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "predict":
            rows = _read_input_rows(args.input) if args.input else [_parse_row(args.row)]
            return cmd_predict(args.model, rows, args.out_dir)
        if args.command == "synth":
            from .pipeline import SYNTH_NOISE_SD, SYNTH_SEED

            return cmd_synth(
                args.n,
                SYNTH_NOISE_SD if args.noise_sd is None else args.noise_sd,
                SYNTH_SEED if args.seed is None else args.seed,
                args.out_dir,
            )
        cfg = resolve_config(args)
        handler = {"cohort": cmd_cohort, "features": cmd_features, "train-eval": cmd_train_eval}
        return handler[args.command](cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrainingDiverged as exc:
        print(f"error: training diverged, {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
