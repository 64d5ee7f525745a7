"""Command line: ``esn-ens {gen,run,train,predict,report-merge}``.

Exit codes: 0 success, 1 usage or configuration error, 2 divergence when
``--strict`` is given (``predict`` always exits 2 on divergence since it has
no output to write).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from .config import load_config, with_overrides
from .datasets import MgParams, Preprocessor, PreprocessKind, gen_arma, gen_sine, load_csv, mackey_glass, save_csv
from .ensemble import BAGGING, is_manifest, load_ensemble, predict_ensemble, save_ensemble, train_bagging_ensemble, train_perturbation_ensemble
from .errors import DivergedPredictionError, DivergedStateError, EsnError, MemberError
from .experiment import load_dataset, merge_reports, prepare, read_report_csv, run_experiment, write_report
from .reservoir import Generative, Guided, init_esn, load_model, predict, save_model, train_readout

log = logging.getLogger("esn_ensemble")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master / generator seed")
    p.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--strict", action="store_true", default=argparse.SUPPRESS, help="exit 2 on divergence")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads for independent runs")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="esn-ens", description="Echo state network experiments and ensembles.", parents=[common])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a benchmark series as CSV")
    g.add_argument("generator", choices=("mg", "arma", "sine"))
    g.add_argument("--n", type=int, default=4000)
    g.add_argument("--out", help="CSV path (default: <out-dir>/<generator>.csv)")
    g.add_argument("--trend", action="store_true", help="arma/sine: add the trend term")
    g.add_argument("--burn-in", type=int, default=0, help="arma: discarded leading steps")
    mg = MgParams()
    g.add_argument("--tau", type=float, default=mg.tau)
    g.add_argument("--a-num", type=float, default=mg.a_num)
    g.add_argument("--b-lin", type=float, default=mg.b_lin)
    g.add_argument("--exponent", type=float, default=mg.exponent)
    g.add_argument("--dt", type=float, default=mg.dt)
    g.add_argument("--stride", type=int, default=mg.stride)
    g.add_argument("--history", type=float, default=mg.history)

    r = sub.add_parser("run", parents=[common], help="run an experiment config and write reports")
    r.add_argument("config")

    t = sub.add_parser("train", parents=[common], help="train a model (or ensemble) from a config")
    t.add_argument("config")
    t.add_argument("model_out")

    p = sub.add_parser("predict", parents=[common], help="predict with a saved model or ensemble manifest")
    p.add_argument("model")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--steps", type=int, help="generative mode: number of free-run steps")
    mode.add_argument("--input", help="guided mode: CSV of true inputs")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--on-diverged", choices=("fail", "drop"), default="fail", help="ensemble member policy")

    m = sub.add_parser("report-merge", parents=[common], help="merge report.csv files")
    m.add_argument("reports", nargs="+")
    return parser


def _opt(args, name, default):
    return getattr(args, name, default)


def cmd_gen(args) -> int:
    seed = _opt(args, "seed", 0)
    if args.generator == "mg":
        params = MgParams(args.tau, args.a_num, args.b_lin, args.exponent, args.dt, args.stride, args.history)
        series = mackey_glass(args.n, params)
    elif args.generator == "arma":
        series = gen_arma(args.n, args.trend, rng=seed, burn_in=args.burn_in)
    else:
        series = gen_sine(args.n, args.trend)
    out = Path(args.out) if args.out else Path(_opt(args, "out_dir", ".")) / f"{args.generator}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(out, series)
    v = series.values
    print(f"wrote {out}: n={v.size} min={v.min():.6g} max={v.max():.6g} mean={v.mean():.6g}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = with_overrides(load_config(args.config), _opt(args, "seed", None), _opt(args, "out_dir", None))
    report, tracks = run_experiment(cfg, threads=_opt(args, "threads", 1))
    written = write_report(report, cfg.output_dir, tracks)
    diverged = [r for r in report.rows if r.diverged]
    for agg in report.aggregates():
        print(f"{agg['label']}: median MSE {agg['median_mse']:.4g} ({agg['diverged']}/{agg['runs']} diverged)")
    print(f"wrote {len(written)} files to {cfg.output_dir}")
    if diverged and _opt(args, "strict", False):
        print(f"{len(diverged)} run(s) diverged", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _sidecar(model_path) -> Path:
    return Path(str(model_path) + ".preprocess")


def cmd_train(args) -> int:
    cfg = with_overrides(load_config(args.config), _opt(args, "seed", None))
    series = load_dataset(cfg)
    prep = prepare(cfg, series)
    esn = cfg.esn.with_seed(cfg.seed)
    out = Path(args.model_out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if cfg.ensemble is None:
        save_model(train_readout(init_esn(esn), prep.train), out)
    else:
        trainer = train_bagging_ensemble if cfg.ensemble.kind == BAGGING else train_perturbation_ensemble
        save_ensemble(trainer(esn, prep.train, cfg.ensemble.members, threads=_opt(args, "threads", 1)), out)
    side = _sidecar(out)
    if prep.pp is not None:
        pp = prep.pp
        side.write_text(f"kind = {pp.kind.value}\nshift = {pp.shift!r}\nscale = {pp.scale!r}\n")
    elif side.exists():
        side.unlink()
    print(f"wrote {out}")
    return EXIT_OK


def _read_sidecar(model_path) -> Preprocessor | None:
    side = _sidecar(model_path)
    if not side.exists():
        return None
    items = dict(line.split("=", 1) for line in side.read_text().splitlines() if "=" in line)
    items = {k.strip(): v.strip() for k, v in items.items()}
    return Preprocessor(PreprocessKind(items["kind"]), float(items["shift"]), float(items["scale"]))


def cmd_predict(args) -> int:
    pp = _read_sidecar(args.model)
    if args.input is not None:
        raw = load_csv(args.input)
        mode = Guided(pp.apply(raw) if pp else raw)
    else:
        mode = Generative(args.steps)
    try:
        if is_manifest(args.model):
            y = predict_ensemble(load_ensemble(args.model), mode, args.on_diverged)
        else:
            y = predict(load_model(args.model), mode)
    except (DivergedPredictionError, DivergedStateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except MemberError as exc:
        if isinstance(exc.cause, (DivergedPredictionError, DivergedStateError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        raise
    values = pp.invert(y).values if pp else y.values
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(out, values, header=["prediction"])
    print(f"wrote {out}: {values.size} predictions")
    return EXIT_OK


def cmd_report_merge(args) -> int:
    merged = merge_reports([read_report_csv(p) for p in args.reports])
    out = _opt(args, "out_dir", "merged")
    write_report(merged, out)
    print(f"merged {len(args.reports)} reports ({len(merged.rows)} rows) into {out}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "train": cmd_train, "predict": cmd_predict, "report-merge": cmd_report_merge}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except EsnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
