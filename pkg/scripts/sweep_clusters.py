"""Image quality against the number of clusters on a four-class phantom.

    python scripts/sweep_clusters.py --seed 0 --size 128 > sweep.csv
"""

import argparse
import sys

from bfkit import pipeline
from bfkit.cli import parse_range
from bfkit.masking import foreground_mask


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--noise", type=float, default=0.0)
    ap.add_argument("--n", type=parse_range, default=list(range(2, 9)))
    args = ap.parse_args()

    case = pipeline.simulate_case(args.size, args.seed, noise=args.noise)
    mask = foreground_mask(case.corrupted)
    rows = pipeline.sweep_clusters(case.corrupted, mask, case.clean, case.labels, n_range=args.n)
    sys.stdout.write(pipeline.to_csv(rows))
    best = max(rows, key=lambda r: r["psnr"])
    print(f"best PSNR at N={best['N']} ({best['psnr']:.2f} dB)", file=sys.stderr)


if __name__ == "__main__":
    main()
