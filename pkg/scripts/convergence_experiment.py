"""Objective trace of the joint solver on random histogram features and on
the first frame of a synthetic sequence.

    python3 scripts/convergence_experiment.py --out runs/convergence
"""

import argparse
import csv
import time
from pathlib import Path

import numpy as np

from sgtrack import features as feat
from sgtrack import tracker as tk
from sgtrack.cli import plot_convergence
from sgtrack.dataset_io import BoundingBox, SyntheticConfig, generate_synthetic
from sgtrack.graph_learning import SolverConfig, solve_joint


def random_histograms(rng, d, n):
    X = rng.gamma(0.5, size=(d // 8, 8, n))
    X /= X.sum(axis=1, keepdims=True)
    return X.reshape(d, n)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/convergence")
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    cfg = SolverConfig()
    q = tk.init_seed_vector(feat.build_patch_grid(BoundingBox(0, 0, 32, 32)))

    traces = {}
    rows = []
    for k in range(args.instances):
        X = [random_histograms(rng, 32, 64), random_histograms(rng, 16, 64)]
        t0 = time.perf_counter()
        st = solve_joint(X, q, cfg)
        dt = time.perf_counter() - t0
        traces[f"random {k}"] = st.objective_trace
        rows.append((f"random {k}", st.iterations, st.residual_trace[-1], dt, st.r[0], st.r[1]))

    seq = generate_synthetic(SyntheticConfig(frame_count=1))
    gt = seq.groundtruth[0][0]
    grid = feat.build_patch_grid(gt)
    st = solve_joint(feat.extract_features(seq.frames[0], grid, gt), tk.init_seed_vector(grid), cfg)
    traces["synthetic frame 0"] = st.objective_trace
    rows.append(("synthetic frame 0", st.iterations, st.residual_trace[-1], float("nan"), st.r[0], st.r[1]))

    with open(out / "convergence.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "iteration", "objective"])
        for name, trace in traces.items():
            for it, v in enumerate(trace):
                w.writerow([name, it, repr(v)])
    plot_convergence({k: v for k, v in traces.items() if k in ("random 0", "random 1", "synthetic frame 0")},
                     out / "convergence.png")

    print(f"{'run':<20}{'iters':>6}{'residual':>12}{'time s':>9}{'r_rgb':>9}{'r_thermal':>11}")
    for name, it, res, dt, r0, r1 in rows:
        print(f"{name:<20}{it:>6}{res:>12.2e}{dt:>9.3f}{r0:>9.4f}{r1:>11.4f}")


if __name__ == "__main__":
    main()
