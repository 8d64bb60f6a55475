"""Strong and weak error ladders on the sphere problem, written as CSVs.

    python scripts/rate_ladders.py --out results/ --paths 10000
"""

import argparse
import os

from roughmlmc import cli

RUNS = [
    ("strong_h040.csv", ["strong-rate", "--hurst", "0.4", "--max-mesh", "0.02"]),
    ("strong_h033.csv", ["strong-rate", "--hurst", "0.33", "--max-mesh", "0.01"]),
    ("weak_h040_f.csv", ["weak-rate", "--hurst", "0.4", "--functional", "f", "--max-mesh", "0.02"]),
    ("weak_h033_f.csv", ["weak-rate", "--hurst", "0.33", "--functional", "f", "--max-mesh", "0.01"]),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--paths", default="10000")
    ap.add_argument("--ladder", default="64,128,256,512,1024,2048,4096")
    ap.add_argument("--seed", default="0")
    ap.add_argument("--workers", default="1")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for name, argv in RUNS:
        target = os.path.join(args.out, name)
        argv = argv + ["--paths", args.paths, "--mesh-ladder", args.ladder, "--seed", args.seed,
                       "--workers", args.workers, "--output", target]
        print(name, flush=True)
        code = cli.main(argv)
        if code:
            raise SystemExit(code)


if __name__ == "__main__":
    main()
