"""Sweep the synthetic T-axis noise level and report r(T axis, K) on n=42.

Used to pick SYNTH_NOISE_SD / SYNTH_SEED in potassium_anfis.pipeline.

    python scripts/calibrate_synthetic.py --seeds 0-19 --noise 14 16 18 20
"""
import argparse

import numpy as np

from potassium_anfis import pipeline
from potassium_anfis.stats import pearson_r


def seed_range(text):
    lo, _, hi = text.partition("-")
    return range(int(lo), int(hi or lo) + 1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=42)
    ap.add_argument("--seeds", type=seed_range, default=seed_range("0-19"))
    ap.add_argument("--noise", type=float, nargs="+", default=[14.0, 16.0, 18.0, 20.0])
    ap.add_argument("--target", type=float, default=0.62)
    args = ap.parse_args()

    for sd in args.noise:
        rs = []
        for seed in args.seeds:
            ecgs, labs = pipeline.generate_synthetic(args.n, sd, seed)
            cohort = pipeline.join_cohort(ecgs, labs)
            x = pipeline.feature_matrix(cohort, ["t_axis_deg"])[:, 0]
            rs.append(pearson_r(x, pipeline.targets(cohort)))
        rs = np.array(rs)
        best = list(args.seeds)[int(np.argmin(np.abs(rs - args.target)))]
        print(f"noise_sd={sd:5.1f}  mean r={rs.mean():.3f}  sd={rs.std(ddof=1):.3f}  "
              f"closest seed={best} (r={rs[int(np.argmin(np.abs(rs - args.target)))]:.3f})")


if __name__ == "__main__":
    main()
