"""Run the whole batch workflow on the calibrated synthetic cohort.

Writes ecg.csv / labs.csv, then runs cohort, features and train-eval through
the CLI into OUT_DIR. With several --fold-seeds it repeats train-eval per seed
and summarises how much the pooled MAPE moves with the fold split.

    python scripts/reproduce_comparison.py --out-dir runs/synthetic
    python scripts/reproduce_comparison.py --out-dir runs/seeds --fold-seeds 0 1 2 3 4
"""
import argparse
import json
from pathlib import Path

import numpy as np

from potassium_anfis.cli import main as cli


def run(argv):
    code = cli(argv)
    if code:
        raise SystemExit(f"command failed ({code}): {' '.join(argv)}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="runs/synthetic")
    ap.add_argument("--fold-seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--epochs", type=int, default=200)
    args = ap.parse_args()

    root = Path(args.out_dir)
    data = root / "data"
    run(["synth", "--out-dir", str(data)])
    io = ["--ecg", str(data / "ecg.csv"), "--labs", str(data / "labs.csv")]
    run(["cohort", *io, "--out-dir", str(root / "cohort")])
    run(["features", *io, "--out-dir", str(root / "features")])

    mapes = {"conventional": [], "fcm_anfis": []}
    for seed in args.fold_seeds:
        out = root / f"train_eval_seed{seed}"
        run(["train-eval", *io, "--out-dir", str(out), "--seed", str(seed), "--epochs", str(args.epochs)])
        for variant in mapes:
            rep = json.loads((out / f"report_{variant}.json").read_text())
            mapes[variant].append(rep["pooled"]["mape"])

    if len(args.fold_seeds) > 1:
        print("\npooled MAPE across fold seeds")
        for variant, vals in mapes.items():
            v = np.array(vals)
            print(f"  {variant:<13} mean {v.mean():6.2f}%  min {v.min():6.2f}%  max {v.max():6.2f}%")
        wins = sum(f <= c for f, c in zip(mapes["fcm_anfis"], mapes["conventional"]))
        print(f"  fcm_anfis at or below conventional on {wins}/{len(args.fold_seeds)} seeds")


if __name__ == "__main__":
    main()
