"""Per-sample latency of aggregate -> refine -> classify on 64 x 7 x 2048 feature batches.

    python scripts/bench_latency.py --repeats 3
"""
import argparse
import json
import sys

from transfer_lmr.bench import bench_latency


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--dim", type=int, default=2048)
    ap.add_argument("--steps", type=int, default=7)
    ap.add_argument("--iterations", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=1)
    args = ap.parse_args(argv)
    for r in range(args.repeats):
        res = bench_latency(args.batch, args.dim, args.steps, iterations=args.iterations, seed=r)
        print(json.dumps(res, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
