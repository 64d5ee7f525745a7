"""Weight-law comparison on Mackey-Glass.

Runs scripts/configs/distributions.ini (four laws x ten seeds) and prints the
MSE-by-seed grid plus the per-law medians.

    python scripts/run_distributions.py [--out-dir DIR] [--threads K]
"""
import argparse
import statistics
from pathlib import Path

from esn_ensemble.config import load_config, with_overrides
from esn_ensemble.experiment import run_experiment, write_report

CONFIG = Path(__file__).resolve().parent / "configs" / "distributions.ini"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--out-dir", default=None)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    cfg = with_overrides(load_config(args.config), output_dir=args.out_dir)
    report, tracks = run_experiment(cfg, threads=args.threads)
    write_report(report, cfg.output_dir, tracks)

    labels = report.labels()
    print("seed  " + "  ".join(f"{lab:>11}" for lab in labels))
    for seed in cfg.master_seeds():
        cells = []
        for lab in labels:
            row = next(r for r in report.by_label(lab) if r.seed == seed)
            cells.append(f"{'div@%d' % row.diverged_at:>11}" if row.diverged else f"{row.mse:11.3e}")
        print(f"{seed:4d}  " + "  ".join(cells))
    for lab in labels:
        med = statistics.median(r.score for r in report.by_label(lab))
        print(f"median {lab:>11}: {med:.4g}")
    print(f"reports in {cfg.output_dir}")


if __name__ == "__main__":
    main()
