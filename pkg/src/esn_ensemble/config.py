"""Experiment configuration files.

INI-style text, one section per part of the experiment. Every key is
optional; unspecified keys take the defaults below (the canonical
Mackey-Glass setup)::

    [dataset]
    generator = mg            # mg | arma | sine | csv
    n = 4000
    path =                    # csv only
    trend = false             # arma/sine
    seed = 0                  # arma noise stream
    burn_in = 0               # arma
    tau = 17
    a_num = 0.2
    b_lin = -0.1
    exponent = 10
    dt = 0.1
    stride = 10
    history = 1.2

    [preprocess]
    kind = none               # none | cubitize | standardize | unitize

    [split]
    washout = 100
    train = 2000
    test = 500

    [esn]                     # see EsnConfig.to_items for all keys
    n_res = 1000
    w_in = uniform(-0.5,0.5)
    w = uniform(-0.5,0.5)
    rho = 1.25
    alpha = 0.3               # or dynamic(lo,hi)
    beta = 1e-8

    [mode]
    kind = generative         # generative | guided
    horizon = 500

    [ensemble]
    kind = none               # none | perturbation | bagging
    members = 20
    m_grid =                  # e.g. 1,5,10,20 -> choose M by forward-chaining CV
    folds = 3
    on_diverged = fail        # fail | drop

    [experiment]
    repeats = 10
    seed = 0                  # repeat r uses master seed seed + r
    compare_distributions = false
    output_dir = out
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .core import SplitSpec
from .datasets import MgParams, PreprocessKind
from .errors import ConfigError, FormatError, UsageError
from .reservoir import EsnConfig, parse_bool

GENERATORS = ("mg", "arma", "sine", "csv")


@dataclass(frozen=True)
class DatasetSpec:
    generator: str = "mg"
    n: int = 4000
    path: str | None = None
    trend: bool = False
    seed: int = 0
    burn_in: int = 0
    mg: MgParams = field(default_factory=MgParams)


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str = "bagging"
    members: int = 20
    m_grid: tuple[int, ...] = ()
    folds: int = 3
    on_diverged: str = "fail"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    preprocess: PreprocessKind | None = None
    split: SplitSpec = field(default_factory=lambda: SplitSpec(100, 2000, 500))
    esn: EsnConfig = field(default_factory=EsnConfig)
    mode: str = "generative"
    horizon: int = 500
    ensemble: EnsembleSpec | None = None
    repeats: int = 1
    seed: int = 0
    compare_distributions: bool = False
    output_dir: str = "out"

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError(f"repeats must be at least 1, got {self.repeats}", key="experiment.repeats")
        if self.mode not in ("generative", "guided"):
            raise ConfigError(f"mode must be generative or guided, got {self.mode!r}", key="mode.kind")
        if not 1 <= self.horizon <= self.split.test_len:
            raise ConfigError(
                f"horizon {self.horizon} must lie in [1, test_len={self.split.test_len}]", key="mode.horizon"
            )
        if self.split.washout_len != self.esn.washout_len:
            raise ConfigError("split.washout and esn washout disagree", key="split.washout")

    def master_seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.repeats)]


_SECTIONS = {
    "dataset": {"generator", "n", "path", "trend", "seed", "burn_in", "tau", "a_num", "b_lin", "exponent", "dt", "stride", "history"},
    "preprocess": {"kind"},
    "split": {"washout", "train", "test"},
    "esn": set(EsnConfig().to_items()) - {"washout", "seed"},
    "mode": {"kind", "horizon"},
    "ensemble": {"kind", "members", "m_grid", "folds", "on_diverged"},
    "experiment": {"repeats", "seed", "compare_distributions", "output_dir"},
}


def _get(section, key, conv, default):
    if section is None or key not in section:
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except (ValueError, UsageError) as exc:
        raise ConfigError(f"bad value {raw!r}: {exc}", key=f"{section.name}.{key}") from None


def parse_config_text(text: str, source: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}", path=source) from None
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]", path=source, key=name)
        for key in parser[name]:
            if key not in _SECTIONS[name]:
                raise ConfigError("unknown key", path=source, key=f"{name}.{key}")
    sec = {name: parser[name] if parser.has_section(name) else None for name in _SECTIONS}

    try:
        return _build(sec)
    except ConfigError as exc:
        if source is not None and exc.path is None:
            raise ConfigError(str(exc), path=source) from None
        raise


def _build(sec) -> ExperimentConfig:
    d = sec["dataset"]
    generator = _get(d, "generator", str.lower, "mg")
    if generator not in GENERATORS:
        raise ConfigError(f"generator must be one of {GENERATORS}", key="dataset.generator")
    mg_defaults = MgParams()
    mg_kwargs = {}
    for key in ("tau", "a_num", "b_lin", "exponent", "dt", "history"):
        mg_kwargs[key] = _get(d, key, float, getattr(mg_defaults, key))
    mg_kwargs["stride"] = _get(d, "stride", int, mg_defaults.stride)
    try:
        mg = MgParams(**mg_kwargs)
    except UsageError as exc:
        raise ConfigError(str(exc), key="dataset") from None
    path = _get(d, "path", str, None) or None
    if generator == "csv" and not path:
        raise ConfigError("csv dataset needs a path", key="dataset.path")
    dataset = DatasetSpec(
        generator=generator,
        n=_get(d, "n", int, 4000),
        path=path,
        trend=_get(d, "trend", parse_bool, False),
        seed=_get(d, "seed", int, 0),
        burn_in=_get(d, "burn_in", int, 0),
        mg=mg,
    )
    if dataset.n < 1:
        raise ConfigError("n must be at least 1", key="dataset.n")

    kind = _get(sec["preprocess"], "kind", str.lower, "none")
    if kind in ("none", ""):
        preprocess = None
    else:
        try:
            preprocess = PreprocessKind(kind)
        except ValueError:
            raise ConfigError(f"unknown preprocessing {kind!r}", key="preprocess.kind") from None

    s = sec["split"]
    try:
        split = SplitSpec(_get(s, "washout", int, 100), _get(s, "train", int, 2000), _get(s, "test", int, 500))
    except UsageError as exc:
        raise ConfigError(str(exc), key="split") from None

    e = sec["experiment"]
    seed = _get(e, "seed", int, 0)
    esn_items = dict(sec["esn"]) if sec["esn"] is not None else {}
    esn_items["washout"] = str(split.washout_len)
    esn_items["seed"] = str(seed)
    try:
        esn = EsnConfig.from_items(esn_items)
    except FormatError as exc:
        raise ConfigError(str(exc), key=f"esn.{exc.key}" if exc.key else "esn") from None

    m = sec["mode"]
    mode = _get(m, "kind", str.lower, "generative")
    horizon = _get(m, "horizon", int, min(500, split.test_len))

    en = sec["ensemble"]
    ens_kind = _get(en, "kind", str.lower, "none")
    ensemble = None
    if ens_kind not in ("none", ""):
        if ens_kind not in ("perturbation", "bagging"):
            raise ConfigError(f"unknown ensemble kind {ens_kind!r}", key="ensemble.kind")
        grid = _get(en, "m_grid", lambda t: tuple(int(v) for v in t.split(",") if v.strip()), ())
        ensemble = EnsembleSpec(
            kind=ens_kind,
            members=_get(en, "members", int, 20),
            m_grid=grid,
            folds=_get(en, "folds", int, 3),
            on_diverged=_get(en, "on_diverged", str.lower, "fail"),
        )
        if ensemble.members < 1:
            raise ConfigError("members must be at least 1", key="ensemble.members")
        if any(v < 1 for v in grid):
            raise ConfigError("m_grid entries must be at least 1", key="ensemble.m_grid")
        if ensemble.folds < 2:
            raise ConfigError("folds must be at least 2", key="ensemble.folds")
        if ensemble.on_diverged not in ("fail", "drop"):
            raise ConfigError("on_diverged must be fail or drop", key="ensemble.on_diverged")

    return ExperimentConfig(
        dataset=dataset,
        preprocess=preprocess,
        split=split,
        esn=esn,
        mode=mode,
        horizon=horizon,
        ensemble=ensemble,
        repeats=_get(e, "repeats", int, 1),
        seed=seed,
        compare_distributions=_get(e, "compare_distributions", parse_bool, False),
        output_dir=_get(e, "output_dir", str, "out"),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=path) from None
    return parse_config_text(text, source=str(path))


def with_overrides(cfg: ExperimentConfig, seed: int | None = None, output_dir: str | None = None) -> ExperimentConfig:
    if seed is not None:
        cfg = replace(cfg, seed=seed, esn=cfg.esn.with_seed(seed))
    if output_dir is not None:
        cfg = replace(cfg, output_dir=output_dir)
    return cfg
