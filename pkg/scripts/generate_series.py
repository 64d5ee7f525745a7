"""Write the benchmark series used by the experiments as CSV files.

    python scripts/generate_series.py [--out-dir data] [--n 4000] [--seed 0]
"""
import argparse
from pathlib import Path

from esn_ensemble.datasets import gen_arma, gen_sine, mackey_glass, save_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="data")
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = {
        "mackey_glass": mackey_glass(args.n),
        "arma": gen_arma(args.n, False, rng=args.seed),
        "arma_trend": gen_arma(args.n, True, rng=args.seed),
        "sine": gen_sine(args.n, False),
        "sine_trend": gen_sine(args.n, True),
    }
    for name, ts in series.items():
        save_csv(out / f"{name}.csv", ts)
        v = ts.values
        print(f"{name:>13}: n={v.size} min={v.min():.4g} max={v.max():.4g}")


if __name__ == "__main__":
    main()
