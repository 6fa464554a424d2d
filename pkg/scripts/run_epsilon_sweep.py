#!/usr/bin/env python3
"""Epsilon sensitivity on a six-node synthetic snapshot, for both feature modes.

The percentile features should show a wide plateau where TPR = mu = phi = 1;
the mean/std variant degrades much earlier because distribution tails leak
into the features.
"""

import argparse
from pathlib import Path

from edgewatch.evaluation import epsilon_sweep, write_sweep_csv
from edgewatch.ingest import DAY_SECONDS, window_flows
from edgewatch.synth import EdgeNodeSpec, SynthConfig, generate_trace


def six_node_config(seed):
    nodes = (
        EdgeNodeSpec("MIL", 15, 15.0, 1.5, 48, 1.0),
        EdgeNodeSpec("TOR", 15, 25.0, 1.5, 52, 1.0),
        EdgeNodeSpec("PAR", 15, 38.0, 1.5, 56, 1.0),
        EdgeNodeSpec("AMS", 15, 55.0, 1.5, 60, 1.0),
        EdgeNodeSpec("LON", 15, 75.0, 1.5, 64, 1.0),
        EdgeNodeSpec("FRA", 15, 95.0, 1.5, 68, 1.0),
    )
    return SynthConfig(nodes=nodes, days=7, flows_per_day=9000, rank_churn=0.1, seed=seed)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results", type=Path)
    parser.add_argument("--seed", default=7, type=int)
    parser.add_argument("--eps-step", default=0.002, type=float)
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    records, ground_truth = generate_trace(six_node_config(args.seed))
    (snapshot,) = window_flows(records, 7 * DAY_SECONDS, 7 * DAY_SECONDS)
    grid = [round(args.eps_step * k, 6) for k in range(1, int(0.2 / args.eps_step) + 1)]

    for mode in ("percentiles", "mean_std"):
        rows = epsilon_sweep(snapshot, ground_truth, grid, feature_mode=mode)
        out = args.out_dir / f"epsilon_sweep_{mode}.csv"
        write_sweep_csv(out, rows)
        perfect = [r.epsilon for r in rows if (r.tpr, r.fragmentation, r.pureness) == (1.0, 1.0, 1.0)]
        if perfect:
            print(f"{mode}: perfect recovery for eps in [{min(perfect)}, {max(perfect)}] -> {out}")
        else:
            print(f"{mode}: no eps with perfect recovery -> {out}")


if __name__ == "__main__":
    main()
