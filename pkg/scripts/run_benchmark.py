"""Run the CE / cRT / Transfer-LMR comparison and write reports.

    python scripts/run_benchmark.py --config configs/acceptance.yaml --out runs/acceptance
"""
import argparse
import sys
from pathlib import Path

from transfer_lmr.cli import main as cli_main


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(Path(__file__).parents[1] / "configs" / "acceptance.yaml"))
    ap.add_argument("--out", default="runs/benchmark")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)
    cmd = ["compare", "--config", args.config, "--out", args.out, "--override", f"workers={args.workers}"]
    if args.seed is not None:
        cmd += ["--seed", str(args.seed)]
    return cli_main(cmd)


if __name__ == "__main__":
    sys.exit(main())
