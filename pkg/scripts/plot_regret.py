#!/usr/bin/env python3
"""Static figures from run CSVs: cumulative regret per expert and the weight
trajectory. No live plotting, just files.

    python scripts/plot_regret.py out/run.csv --out out/run.png
"""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def load_run(path):
    with open(path) as handle:
        header = handle.readline().strip().split(",")
        rows = [line.strip().split(",") for line in handle if line.strip()]
    k = sum(1 for name in header if name.startswith("l_"))
    data = np.array([[float(c) if c else np.nan for c in row] for row in rows])
    t = data[:, 0]
    losses = data[:, 1:1 + k]
    weights = data[:, 1 + k:1 + 2 * k]
    regrets = data[:, 1 + 2 * k:1 + 3 * k]
    return t, losses, weights, regrets


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("run_csv")
    parser.add_argument("--out", default="run.png")
    args = parser.parse_args()

    t, _, weights, regrets = load_run(args.run_csv)
    k = weights.shape[1]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    cum = np.cumsum(regrets, axis=0)
    for i in range(k):
        ax1.plot(t, cum[:, i], label=f"expert {i + 1}")
    ax1.set_ylabel("cumulative regret")
    ax1.legend(loc="upper left", fontsize=8)
    for i in range(k):
        ax2.plot(t, weights[:, i], label=f"expert {i + 1}")
    ax2.set_ylabel("weight")
    ax2.set_xlabel("round")
    ax2.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
