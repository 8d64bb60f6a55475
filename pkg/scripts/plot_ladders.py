"""Plot stub: log-log error ladders from the CSVs written by rate_ladders.py.

Reads ``mesh,error,stderr`` columns (``#`` lines are skipped) and draws each
ladder with a +/-1.96 standard error band.  Needs matplotlib, which is not
a package dependency.
"""

import argparse
import glob
import os

import numpy as np


def load(path):
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    cols = {name: data[:, i] for i, name in enumerate(header)}
    return cols["mesh"], cols["error"], cols["stderr"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csvs", nargs="*")
    ap.add_argument("--out", default="results/ladders.png")
    args = ap.parse_args()
    paths = args.csvs or sorted(glob.glob("results/*.csv"))
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for path in paths:
        h, e, se = load(path)
        keep = e > 0
        label = os.path.splitext(os.path.basename(path))[0]
        ax.loglog(h[keep], e[keep], "o-", label=label)
        lo = np.clip(e - 1.96 * se, 1e-300, None)
        ax.fill_between(h[keep], lo[keep], (e + 1.96 * se)[keep], alpha=0.2)
    ax.set_xlabel("mesh")
    ax.set_ylabel("error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print("wrote", args.out)


if __name__ == "__main__":
    main()
