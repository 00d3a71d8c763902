"""Two-layer ReLU net on the single datapoint (x, y) = (4, 2).

The positive label keeps the net away from the trivial all-negative
solution; the certified window is (2/H0, 4/H0) and the net empirically stops
converging somewhat above it, with the kernel collapsing as neurons die.
"""

import argparse
from pathlib import Path

import numpy as np

from catapult.cli import cmd_bounds, cmd_sweep, normalize_config


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/relu_single_datapoint")
    parser.add_argument("--width", type=int, default=1024)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    grid = np.round(np.arange(0.5, 4.76, 0.25), 10).tolist()
    raw = {
        "model": {
            "family": "homogenous",
            "width": args.width,
            "a_minus": 0.0,
            "a_plus": 1.0,
            "init_seed": args.seed,
        },
        "dataset": {"kind": "toy_relu"},
        "training": {
            "eta_lambda0_grid": grid,
            "max_steps": 300_000,
            "ntk_eval_interval": 1_000_000,
        },
        "output": {"per_eta_trajectories": True},
    }
    out = Path(args.out)
    cfg = normalize_config(raw, Path.cwd())
    cmd_sweep(cfg, out)
    cmd_bounds(cfg, out)
    print(f"wrote {out}/sweep.csv and {out}/bounds.json")


if __name__ == "__main__":
    main()
