"""Measure how traffic grows with the number of parties.

Trains the same task at every party count from 2 up to --max-parties and
fits total bytes against k. The per-iteration cost of each extra party is
two ciphertext-vector exchanges, so the fit should be linear.
"""

import argparse
import json
import sys
from pathlib import Path

from vfglm import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dataset", default="synthetic_logistic_small")
    parser.add_argument("--model", choices=("lr", "pr"), default="lr")
    parser.add_argument("--max-parties", type=int, default=5)
    parser.add_argument("--iterations", type=int, default=5)
    parser.add_argument("--key-bits", type=int, default=1024,
                        choices=(256, 1024, 2048))
    parser.add_argument("--out", default="runs/comm_sweep")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    code = cli.main([
        "run", "--model", args.model, "--dataset", args.dataset,
        "--parties", str(args.max_parties), "--sweep-parties",
        "--max-iter", str(args.iterations), "--key-bits", str(args.key_bits),
        "--seed", str(args.seed), "--out", args.out,
    ])
    if code != 0:
        return code

    sweep = json.loads((Path(args.out) / "sweep.json").read_text())
    print(f"\nlinear fit over k=2..{args.max_parties}:")
    print(f"  bytes per extra party: {sweep['bytes_per_party']:,.0f}")
    print(f"  fixed base bytes:      {sweep['base_bytes']:,.0f}")
    print(f"  R^2:                   {sweep['r_squared']:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
