#!/usr/bin/env python3
"""Measure how per-iteration training time scales with graph size.

Times one training step at several node counts with the full similarity
map and with a fixed 256-node pair sample, fits log-log slopes, and
reports the informational layer-count timing ratio.
"""

import argparse

from sigil.diagnostics import PROBE_SIZES, complexity_probe, layer_scaling_probe


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--sizes", default=",".join(str(s) for s in PROBE_SIZES),
        help="comma-separated node counts",
    )
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args()
    sizes = tuple(int(s) for s in args.sizes.split(","))

    for sampled in (False, True):
        check = complexity_probe(sizes=sizes, sampled=sampled, reps=args.reps, seed=args.seed)
        print(check.line())
    print(layer_scaling_probe(seed=args.seed).line())
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
