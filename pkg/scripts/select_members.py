"""Forward-chaining cross validation of the ensemble size on Mackey-Glass.

    python scripts/select_members.py [--grid 1,5,10,20] [--n-res 300] [--seeds 5]
"""
import argparse

from esn_ensemble.datasets import mackey_glass
from esn_ensemble.ensemble import select_m_cv
from esn_ensemble.reservoir import EsnConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", default="1,5,10,20")
    ap.add_argument("--n-res", type=int, default=300)
    ap.add_argument("--length", type=int, default=2000)
    ap.add_argument("--folds", type=int, default=3)
    ap.add_argument("--horizon", type=int, default=100)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--kind", choices=("bagging", "perturbation"), default="bagging")
    args = ap.parse_args()

    grid = [int(v) for v in args.grid.split(",")]
    series = mackey_glass(args.length)
    print("seed  best  " + "  ".join(f"M={m:<8d}" for m in grid))
    for seed in range(args.seeds):
        cfg = EsnConfig(n_res=args.n_res, washout_len=100, master_seed=seed)
        res = select_m_cv(cfg, series, grid, args.folds, args.kind, args.horizon, on_diverged="drop")
        print(f"{seed:4d}  {res.best_m:4d}  " + "  ".join(f"{v:10.3e}" for _, v in res.curve))


if __name__ == "__main__":
    main()
