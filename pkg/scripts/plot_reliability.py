#!/usr/bin/env python3
"""Plot reliability diagrams from the long-format CSVs a run emits.

Needs matplotlib (install the 'plots' extra).

Usage:
    python scripts/plot_reliability.py results/gaussian-d2-scale2/reliability_latent.csv -o latent.png
"""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("curves", help="reliability_*.csv written by an evaluate run")
    parser.add_argument("-o", "--out", default="reliability.png")
    args = parser.parse_args()

    rows = defaultdict(list)
    with open(args.curves, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            rows[row["method"]].append(
                (float(row["alpha"]), float(row["empirical"]),
                 float(row["band_lo"]), float(row["band_hi"]))
            )

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], color="grey", linestyle="--", linewidth=1)
    for method, points in sorted(rows.items()):
        points.sort()
        alpha = [p[0] for p in points]
        ax.fill_between(
            alpha, [p[2] for p in points], [p[3] for p in points], alpha=0.15
        )
        ax.plot(alpha, [p[1] for p in points], label=method)
    ax.set_xlabel("nominal level")
    ax.set_ylabel("empirical frequency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
