"""Experiment runner and metrics reports.

A run evaluates one *cell* per (label, master seed). Cells are independent;
results are merged in (label order, seed) so the files do not depend on
scheduling. ``report.csv`` holds every row at full precision, ``summary.csv``
the per-label aggregates, ``report.md`` both rendered at 4 significant figures,
and ``tracking/<label>_seed<seed>.csv`` the (step, target, prediction) traces.
"""
from __future__ import annotations

import csv
import io
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .core import TimeSeries, mae, mse, rmse, signed_error_reduction, split
from .datasets import Preprocessor, fit_preprocess, gen_arma, gen_sine, load_csv, mackey_glass
from .distributions import CANONICAL_SPECS
from .ensemble import (
    BAGGING,
    member_outputs,
    jensen_gap,
    select_m_cv,
    train_bagging_ensemble,
    train_perturbation_ensemble,
)
from .errors import DivergedPredictionError, DivergedStateError, MemberError, UsageError
from .reservoir import EsnConfig, Generative, Guided, init_esn, predict, train_readout

COLUMNS = (
    "label",
    "seed",
    "mse",
    "mae",
    "rmse",
    "diverged_at",
    "error_reduction",
    "reduction_vs_single",
    "jensen_gap",
    "members",
    "chosen_m",
)
SUMMARY_COLUMNS = ("label", "runs", "diverged", "median_mse", "mean_mse", "std_mse")


@dataclass
class Row:
    label: str
    seed: int
    mse: float | None = None
    mae: float | None = None
    rmse: float | None = None
    diverged_at: int | None = None
    error_reduction: float | None = None  # percent, vs the ensemble's member 0
    reduction_vs_single: float | None = None  # percent, vs a plain model on the full series
    jensen_gap: float | None = None
    members: int | None = None
    chosen_m: int | None = None

    @property
    def diverged(self) -> bool:
        return self.mse is None

    @property
    def score(self) -> float:
        """MSE with divergence ranked worst."""
        return math.inf if self.mse is None else self.mse


@dataclass
class CellResult:
    rows: list[Row]
    tracks: dict[str, tuple[np.ndarray, np.ndarray]]


def load_dataset(cfg: ExperimentConfig) -> TimeSeries:
    d = cfg.dataset
    if d.generator == "mg":
        return mackey_glass(d.n, d.mg)
    if d.generator == "arma":
        return gen_arma(d.n, d.trend, rng=d.seed, burn_in=d.burn_in)
    if d.generator == "sine":
        return gen_sine(d.n, d.trend)
    return load_csv(d.path)


def cell_labels(cfg: ExperimentConfig) -> list[tuple[str, EsnConfig]]:
    if not cfg.compare_distributions:
        return [("esn", cfg.esn)]
    return [(spec.label, replace(cfg.esn, w_in_spec=spec, w_spec=spec)) for spec in CANONICAL_SPECS]


@dataclass(frozen=True)
class Prepared:
    train: TimeSeries  # model scale
    inputs: TimeSeries | None  # guided inputs, model scale
    target: np.ndarray  # raw scale
    pp: Preprocessor | None

    def invert(self, y) -> np.ndarray:
        return self.pp.invert(y).values if self.pp else np.asarray(y, dtype=float)


def prepare(cfg: ExperimentConfig, series: TimeSeries) -> Prepared:
    train, test = split(series, cfg.split)
    pp = fit_preprocess(cfg.preprocess, train) if cfg.preprocess is not None else None
    model_train = pp.apply(train) if pp else train
    h = cfg.horizon
    inputs = None
    if cfg.mode == "guided":
        raw = np.concatenate([train.values[-1:], test.values[: h - 1]])
        inputs = pp.apply(raw) if pp else TimeSeries(raw)
    return Prepared(model_train, inputs, test.values[:h], pp)


def _mode(cfg: ExperimentConfig, prep: Prepared):
    return Guided(prep.inputs) if cfg.mode == "guided" else Generative(cfg.horizon)


def _metrics_row(label, seed, pred, target) -> Row:
    return Row(label, seed, mse(pred, target), mae(pred, target), rmse(pred, target))


def _single(cfg: ExperimentConfig, esn: EsnConfig, prep: Prepared, label: str, seed: int, tracks):
    try:
        model = train_readout(init_esn(esn.with_seed(seed)), prep.train)
        pred = prep.invert(predict(model, _mode(cfg, prep)))
    except DivergedPredictionError as exc:
        return Row(label, seed, diverged_at=exc.step)
    except DivergedStateError as exc:
        return Row(label, seed, diverged_at=exc.step)
    tracks[label] = (prep.target, pred)
    return _metrics_row(label, seed, pred, prep.target)


def run_cell(cfg: ExperimentConfig, series: TimeSeries, label: str, esn: EsnConfig, seed: int, threads: int = 1) -> CellResult:
    """Evaluate one (label, seed) cell; re-running it alone reproduces its rows."""
    prep = prepare(cfg, series)
    tracks: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    if cfg.ensemble is None:
        return CellResult([_single(cfg, esn, prep, label, seed, tracks)], tracks)

    ens = cfg.ensemble
    base_label, m0_label, ens_label = f"{label}/single", f"{label}/member0", f"{label}/{ens.kind}"
    single = _single(cfg, esn, prep, base_label, seed, tracks)
    cfg_seeded = esn.with_seed(seed)
    m = ens.members
    chosen = None
    if ens.m_grid:
        chosen = select_m_cv(cfg_seeded, prep.train, ens.m_grid, ens.folds, ens.kind, cfg.horizon, ens.on_diverged).best_m
        m = chosen
    trainer = train_bagging_ensemble if ens.kind == BAGGING else train_perturbation_ensemble
    member0 = Row(m0_label, seed)
    row = Row(ens_label, seed, members=m, chosen_m=chosen)
    try:
        ensemble = trainer(cfg_seeded, prep.train, m, threads=threads)
        outs = member_outputs(ensemble, _mode(cfg, prep), ens.on_diverged, threads)
    except MemberError as exc:
        row.diverged_at = getattr(exc.cause, "step", 0)
        if exc.member == 0:
            member0.diverged_at = row.diverged_at
        return CellResult([single, member0, row], tracks)
    raw_outs = replace(outs, outputs=np.vstack([prep.invert(y) for y in outs.outputs]))
    if 0 in outs.kept:
        y0 = raw_outs.outputs[outs.kept.index(0)]
        member0 = _metrics_row(m0_label, seed, y0, prep.target)
        tracks[m0_label] = (prep.target, y0)
    else:
        member0.diverged_at = outs.diverged[0]
    pred = raw_outs.combined()
    full = _metrics_row(ens_label, seed, pred, prep.target)
    row.mse, row.mae, row.rmse = full.mse, full.mae, full.rmse
    row.jensen_gap = jensen_gap(raw_outs, prep.target)
    row.members = len(outs.kept)
    # left empty against a diverged baseline
    if not member0.diverged and member0.mse > 0:
        row.error_reduction = signed_error_reduction(member0.mse, row.mse)
    if not single.diverged and single.mse > 0:
        row.reduction_vs_single = signed_error_reduction(single.mse, row.mse)
    tracks[ens_label] = (prep.target, pred)
    return CellResult([single, member0, row], tracks)


@dataclass
class MetricsReport:
    rows: list[Row]

    def labels(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.label not in seen:
                seen.append(r.label)
        return seen

    def by_label(self, label: str) -> list[Row]:
        return [r for r in self.rows if r.label == label]

    def aggregates(self) -> list[dict]:
        out = []
        for label in self.labels():
            rows = self.by_label(label)
            finite = [r.mse for r in rows if not r.diverged]
            out.append(
                {
                    "label": label,
                    "runs": len(rows),
                    "diverged": len(rows) - len(finite),
                    "median_mse": statistics.median(r.score for r in rows),
                    "mean_mse": statistics.fmean(finite) if finite else None,
                    "std_mse": statistics.stdev(finite) if len(finite) > 1 else None,
                }
            )
        return out


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> tuple[MetricsReport, dict]:
    series = load_dataset(cfg)
    cells = [(label, esn, seed) for label, esn in cell_labels(cfg) for seed in cfg.master_seeds()]

    def go(cell):
        label, esn, seed = cell
        return run_cell(cfg, series, label, esn, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(go, cells))
    else:
        results = [go(c) for c in cells]
    rows, tracks = [], {}
    for (label, _, seed), res in zip(cells, results):
        rows.extend(res.rows)
        for lab, tr in res.tracks.items():
            tracks[(lab, seed)] = tr
    order = {lab: i for i, lab in enumerate(dict.fromkeys(r.label for r in rows))}
    rows.sort(key=lambda r: (order[r.label], r.seed))
    return MetricsReport(rows), tracks


# rendering


def _full(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _sig4(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return "%.4g" % v
    return str(v)


def report_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in report.rows:
        w.writerow([_full(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def summary_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for agg in report.aggregates():
        w.writerow([_full(agg[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def report_markdown(report: MetricsReport, title: str = "MSE report") -> str:
    lines = [f"# {title}", "", "## Summary", ""]
    lines.append("| " + " | ".join(SUMMARY_COLUMNS) + " |")
    lines.append("|" + "---|" * len(SUMMARY_COLUMNS))
    for agg in report.aggregates():
        lines.append("| " + " | ".join(_sig4(agg[c]) for c in SUMMARY_COLUMNS) + " |")
    labels = report.labels()
    seeds = sorted({r.seed for r in report.rows})
    if len(labels) > 1:
        lines += ["", "## MSE by seed", "", "| seed | " + " | ".join(labels) + " |", "|" + "---|" * (len(labels) + 1)]
        for seed in seeds:
            cells = []
            for lab in labels:
                row = next((r for r in report.by_label(lab) if r.seed == seed), None)
                if row is None:
                    cells.append("-")
                elif row.diverged:
                    cells.append(f"diverged@{row.diverged_at}")
                else:
                    cells.append(_sig4(row.mse))
            lines.append(f"| {seed} | " + " | ".join(cells) + " |")
    lines += ["", "## Rows", "", "| " + " | ".join(COLUMNS) + " |", "|" + "---|" * len(COLUMNS)]
    for r in report.rows:
        lines.append("| " + " | ".join(_sig4(getattr(r, c)) for c in COLUMNS) + " |")
    return "\n".join(lines) + "\n"


def tracking_csv(target: np.ndarray, pred: np.ndarray) -> str:
    lines = ["step,target,prediction"]
    lines += ["%d,%.17g,%.17g" % (i, t, p) for i, (t, p) in enumerate(zip(target, pred))]
    return "\n".join(lines) + "\n"


def _safe(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label)


def write_report(report: MetricsReport, out_dir, tracks: dict | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"report.csv": report_csv(report), "summary.csv": summary_csv(report), "report.md": report_markdown(report)}
    written = []
    for name, text in files.items():
        (out / name).write_text(text)
        written.append(out / name)
    if tracks:
        tdir = out / "tracking"
        tdir.mkdir(exist_ok=True)
        for (label, seed), (target, pred) in sorted(tracks.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            p = tdir / f"{_safe(label)}_seed{seed}.csv"
            p.write_text(tracking_csv(target, pred))
            written.append(p)
    return written


def _parse_cell(raw: str, conv):
    return None if raw == "" else conv(raw)


def read_report_csv(path) -> MetricsReport:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise UsageError(f"{path}: not a report file (missing columns {sorted(missing)})")
        for rec in reader:
            rows.append(
                Row(
                    label=rec["label"],
                    seed=int(rec["seed"]),
                    mse=_parse_cell(rec["mse"], float),
                    mae=_parse_cell(rec["mae"], float),
                    rmse=_parse_cell(rec["rmse"], float),
                    diverged_at=_parse_cell(rec["diverged_at"], int),
                    error_reduction=_parse_cell(rec["error_reduction"], float),
                    reduction_vs_single=_parse_cell(rec["reduction_vs_single"], float),
                    jensen_gap=_parse_cell(rec["jensen_gap"], float),
                    members=_parse_cell(rec["members"], int),
                    chosen_m=_parse_cell(rec["chosen_m"], int),
                )
            )
    return MetricsReport(rows)


def merge_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Union of rows ordered by (label, seed); a duplicated (label, seed) must agree."""
    merged: dict[tuple[str, int], Row] = {}
    for rep in reports:
        for r in rep.rows:
            key = (r.label, r.seed)
            if key in merged and merged[key] != r:
                raise UsageError(f"conflicting rows for label {r.label!r}, seed {r.seed}")
            merged[key] = r
    return MetricsReport([merged[k] for k in sorted(merged)])
