"""Bagging ensemble versus its member-0 baseline and a plain model.

Runs scripts/configs/bagging.ini and prints per-seed MSEs and signed error
reductions (positive means the ensemble is better).

    python scripts/run_bagging.py [--members M] [--repeats R] [--out-dir DIR]
"""
import argparse
import statistics
from dataclasses import replace
from pathlib import Path

from esn_ensemble.config import load_config, with_overrides
from esn_ensemble.experiment import run_experiment, write_report

CONFIG = Path(__file__).resolve().parent / "configs" / "bagging.ini"


def fmt(v, spec=".3e"):
    return "-" if v is None else format(v, spec)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--members", type=int, default=None)
    ap.add_argument("--repeats", type=int, default=None)
    ap.add_argument("--out-dir", default=None)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    cfg = with_overrides(load_config(args.config), output_dir=args.out_dir)
    if args.members is not None:
        cfg = replace(cfg, ensemble=replace(cfg.ensemble, members=args.members))
    if args.repeats is not None:
        cfg = replace(cfg, repeats=args.repeats)
    report, tracks = run_experiment(cfg, threads=args.threads)
    write_report(report, cfg.output_dir, tracks)

    kind = cfg.ensemble.kind
    single, m0, ens = (report.by_label(f"esn/{s}") for s in ("single", "member0", kind))
    print(f"seed  {'single':>10}  {'member0':>10}  {kind:>10}  {'vs m0 %':>8}  {'vs single %':>11}  kept")
    for a, b, e in zip(single, m0, ens):
        print(
            f"{e.seed:4d}  {fmt(a.mse):>10}  {fmt(b.mse):>10}  {fmt(e.mse):>10}  "
            f"{fmt(e.error_reduction, '.1f'):>8}  {fmt(e.reduction_vs_single, '.1f'):>11}  {e.members}"
        )
    red = [e.error_reduction for e in ens if e.error_reduction is not None]
    if red:
        print(f"median reduction vs member 0: {statistics.median(red):.1f}% ({sum(v > 0 for v in red)}/{len(ens)} positive)")
    print(f"reports in {cfg.output_dir}")


if __name__ == "__main__":
    main()
