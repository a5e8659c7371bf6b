"""Ablate the refinement block: reconstruction weight and mixing probability.

    python scripts/ablate_lmr.py --n-seeds 3
"""
import argparse
import itertools
import sys
from pathlib import Path

from transfer_lmr.config import load_config
from transfer_lmr.pipeline import run_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(Path(__file__).parents[1] / "configs" / "acceptance.yaml"))
    ap.add_argument("--w-rec", type=float, nargs="+", default=[0.0, 0.4, 0.8])
    ap.add_argument("--p-mix", type=float, nargs="+", default=[0.0, 0.5])
    ap.add_argument("--n-seeds", type=int, default=5)
    args = ap.parse_args(argv)

    print(f"{'w_rec':>6} {'p_mix':>6} {'CE C/A':>8} {'cRT C/A':>8} {'TLMR C/A':>9} {'TLMR OA':>8}")
    for w_rec, p_mix in itertools.product(args.w_rec, args.p_mix):
        cfg = load_config(args.config, [f"lmr.w_rec={w_rec}", f"lmr.p_mix={p_mix}", f"n_seeds={args.n_seeds}"])
        rep = run_experiment(cfg)
        ca = {m: 100 * rep.median(m, "avg_class_acc") for m in ("ce", "crt", "tlmr")}
        print(f"{w_rec:>6.2f} {p_mix:>6.2f} {ca['ce']:>8.2f} {ca['crt']:>8.2f} {ca['tlmr']:>9.2f} "
              f"{100 * rep.median('tlmr', 'overall_acc'):>8.2f}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
