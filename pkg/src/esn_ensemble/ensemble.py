"""Ensembles of echo state networks: weight perturbation and time-ordered bagging.

Member ``m`` of an ensemble with master seed ``s`` uses the seed ``s`` itself
for ``m = 0`` and ``derive_seed(s, m)`` otherwise, so member 0 shares its
reservoir with a plain single model built from the same configuration.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import TimeSeries, mse
from .distributions import derive_seed, derive_stream
from .errors import DivergedPredictionError, EsnError, FormatError, MemberError, UsageError
from .reservoir import (
    STREAM_BOOTSTRAP,
    EsnConfig,
    EsnModel,
    Generative,
    Guided,
    fit_readout,
    harvest_states,
    init_esn,
    load_model,
    predict,
    save_model,
    train_readout,
)

PERTURBATION = "perturbation"
BAGGING = "bagging"
ON_DIVERGED = ("fail", "drop")


def member_seed(master_seed: int, member: int) -> int:
    return int(master_seed) if member == 0 else derive_seed(master_seed, member)


def member_config(config: EsnConfig, member: int) -> EsnConfig:
    return config.with_seed(member_seed(config.master_seed, member))


@dataclass(frozen=True)
class BootstrapSample:
    indices: np.ndarray
    source_len: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= self.source_len):
            raise UsageError("bootstrap indices fall outside the source range")
        if np.any(np.diff(idx) < 0):
            raise UsageError("bootstrap indices must be sorted in time order")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def unique_fraction(self) -> float:
        return np.unique(self.indices).size / self.source_len


def bootstrap_sample(rng, n_rows: int, size: int | None = None) -> BootstrapSample:
    """Draw ``size`` (default ``n_rows``) rows with replacement, sorted ascending, duplicates kept."""
    if n_rows < 1:
        raise UsageError("bootstrap needs at least one row")
    gen = rng.generator() if hasattr(rng, "generator") else rng
    idx = np.sort(gen.integers(0, n_rows, size=n_rows if size is None else size))
    return BootstrapSample(idx, n_rows)


@dataclass(frozen=True, eq=False)
class Ensemble:
    members: tuple[EsnModel, ...]
    weights: np.ndarray
    kind: str = PERTURBATION
    bootstraps: tuple[BootstrapSample, ...] | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.members) < 1:
            raise UsageError("an ensemble needs at least one member")
        if w.size != len(self.members):
            raise UsageError(f"{w.size} weights for {len(self.members)} members")
        if np.any(w < 0) or abs(math.fsum(w) - 1.0) > 1e-12:
            raise UsageError("ensemble weights must be nonnegative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def size(self) -> int:
        return len(self.members)

    def head(self, m: int) -> "Ensemble":
        """The first ``m`` members with uniform weights."""
        if not 1 <= m <= self.size:
            raise UsageError(f"cannot take {m} of {self.size} members")
        boots = None if self.bootstraps is None else self.bootstraps[:m]
        return Ensemble(self.members[:m], uniform_weights(m), self.kind, boots)


def uniform_weights(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


def _run_members(fn: Callable[[int], object], m_members: int, threads: int) -> list:
    def guarded(m):
        try:
            return fn(m)
        except EsnError as exc:
            raise MemberError(m, exc) from exc

    if threads <= 1 or m_members == 1:
        return [guarded(m) for m in range(m_members)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(guarded, range(m_members)))


def train_perturbation_ensemble(config: EsnConfig, series, m_members: int, threads: int = 1) -> Ensemble:
    """Every member draws fresh input and reservoir weights; all see the same series."""
    if m_members < 1:
        raise UsageError(f"m_members must be at least 1, got {m_members}")
    members = _run_members(lambda m: train_readout(init_esn(member_config(config, m)), series), m_members, threads)
    return Ensemble(tuple(members), uniform_weights(m_members), PERTURBATION)


def train_bagging_ensemble(
    config: EsnConfig,
    series,
    m_members: int,
    threads: int = 1,
    indices: Callable[[int, int], Sequence[int]] | None = None,
) -> Ensemble:
    """Bootstrap aggregating over readout regression rows.

    Each member gets a fresh reservoir, is driven teacher-forced over the whole
    series, and fits its readout on ``n`` post-washout columns drawn with
    replacement and kept in time order. ``indices(member, n_rows)`` overrides
    the draw (used to test degenerate bootstraps).
    """
    if m_members < 1:
        raise UsageError(f"m_members must be at least 1, got {m_members}")

    def build(m):
        cfg = member_config(config, m)
        model = init_esn(cfg)
        harvest = harvest_states(model, series)
        n_rows = harvest.states.shape[1]
        if indices is None:
            boot = bootstrap_sample(derive_stream(cfg.master_seed, STREAM_BOOTSTRAP), n_rows)
        else:
            boot = BootstrapSample(np.asarray(indices(m, n_rows), dtype=np.intp), n_rows)
        return fit_readout(model, harvest, boot.indices), boot

    built = _run_members(build, m_members, threads)
    members = tuple(b[0] for b in built)
    boots = tuple(b[1] for b in built)
    return Ensemble(members, uniform_weights(m_members), BAGGING, boots)


@dataclass(frozen=True, eq=False)
class MemberOutputs:
    """Per-member predictions that survived the divergence policy."""

    outputs: np.ndarray  # kept members x T
    weights: np.ndarray  # renormalized over kept members
    kept: tuple[int, ...]
    diverged: dict[int, int] = field(default_factory=dict)  # member -> step

    def combined(self) -> np.ndarray:
        return self.weights @ self.outputs


def member_outputs(e: Ensemble, mode: Generative | Guided, on_diverged: str = "fail", threads: int = 1) -> MemberOutputs:
    """Every member predicts on its own; generative members feed back their own outputs."""
    if on_diverged not in ON_DIVERGED:
        raise UsageError(f"on_diverged must be one of {ON_DIVERGED}, got {on_diverged!r}")

    def one(m):
        try:
            return predict(e.members[m], mode).values
        except DivergedPredictionError as exc:
            if on_diverged == "fail":
                raise
            return exc

    results = _run_members(one, e.size, threads)
    kept = [m for m, r in enumerate(results) if not isinstance(r, DivergedPredictionError)]
    diverged = {m: r.step for m, r in enumerate(results) if isinstance(r, DivergedPredictionError)}
    if not kept:
        first = min(diverged, key=diverged.get)
        raise MemberError(first, DivergedPredictionError(diverged[first]))
    w = e.weights[kept]
    total = math.fsum(w)
    if total <= 0:
        raise UsageError("all surviving members have zero weight")
    return MemberOutputs(np.vstack([results[m] for m in kept]), w / total, tuple(kept), diverged)


def predict_ensemble(e: Ensemble, mode: Generative | Guided, on_diverged: str = "fail", threads: int = 1) -> TimeSeries:
    return TimeSeries(member_outputs(e, mode, on_diverged, threads).combined(), f"{e.kind}_ensemble")


def jensen_gap(outputs: MemberOutputs, target) -> float:
    """``sum_m w_m MSE(member_m) - MSE(ensemble)``; never below -1e-12 by convexity."""
    members = math.fsum(w * mse(y, target) for w, y in zip(outputs.weights, outputs.outputs))
    return members - mse(outputs.combined(), target)


@dataclass(frozen=True)
class CvResult:
    best_m: int
    curve: tuple[tuple[int, float], ...]


def forward_chaining_folds(length: int, folds: int) -> list[tuple[slice, slice]]:
    """Fold ``i`` trains on the first ``i`` blocks and validates on block ``i+1``."""
    if folds < 2:
        raise UsageError(f"cross validation needs at least 2 folds, got {folds}")
    block = length // (folds + 1)
    if block < 1:
        raise UsageError(f"series of length {length} is too short for {folds} folds")
    return [(slice(0, i * block), slice(i * block, (i + 1) * block)) for i in range(1, folds + 1)]


def select_m_cv(
    config: EsnConfig,
    series,
    m_grid: Sequence[int],
    folds: int = 3,
    kind: str = BAGGING,
    horizon: int | None = None,
    on_diverged: str = "fail",
    threads: int = 1,
) -> CvResult:
    """Pick the ensemble size with the lowest mean forward-chaining validation MSE.

    Validation is generative over ``horizon`` steps (default: the whole
    validation block). Ensembles of size M are the first M members of the
    largest one, so every fold trains max(grid) members once. A fold where the
    ensemble diverges scores ``inf``. Ties go to the smaller M.
    """
    grid = sorted({int(m) for m in m_grid})
    if not grid:
        raise UsageError("m_grid is empty")
    if grid[0] < 1:
        raise UsageError(f"ensemble sizes must be at least 1, got {grid[0]}")
    if kind not in (PERTURBATION, BAGGING):
        raise UsageError(f"unknown ensemble kind {kind!r}")
    values = np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float)
    splits = forward_chaining_folds(values.size, folds)
    if splits[0][0].stop < config.washout_len + 2:
        raise UsageError("first forward-chaining fold is shorter than the washout")
    trainer = train_bagging_ensemble if kind == BAGGING else train_perturbation_ensemble
    scores = {m: [] for m in grid}
    for train_sl, val_sl in splits:
        target = values[val_sl]
        steps = target.size if horizon is None else min(horizon, target.size)
        full = trainer(config, TimeSeries(values[train_sl]), grid[-1], threads=threads)
        for m in grid:
            try:
                pred = predict_ensemble(full.head(m), Generative(steps), on_diverged, threads)
                scores[m].append(mse(pred, target[:steps]))
            except (MemberError, DivergedPredictionError):
                scores[m].append(math.inf)
    curve = tuple((m, math.fsum(scores[m]) / len(scores[m]) if all(map(math.isfinite, scores[m])) else math.inf) for m in grid)
    best = curve[0]
    for point in curve[1:]:
        if point[1] < best[1]:
            best = point
    return CvResult(best[0], curve)


# persistence

MANIFEST_HEADER = "# esn-ensemble v1"


def save_ensemble(e: Ensemble, path) -> list[Path]:
    """Manifest at ``path`` plus one model file per member next to it."""
    path = Path(path)
    stem = path.stem
    written = []
    lines = [MANIFEST_HEADER, f"kind = {e.kind}", f"members = {e.size}", "[members]"]
    for m, (model, w) in enumerate(zip(e.members, e.weights)):
        member_path = path.with_name(f"{stem}.member{m:03d}.model")
        save_model(model, member_path)
        written.append(member_path)
        lines.append(f"{float(w)!r} {member_path.name}")
    path.write_text("\n".join(lines) + "\n")
    return [path, *written]


def is_manifest(path) -> bool:
    try:
        with open(path) as fh:
            return fh.readline().strip() == MANIFEST_HEADER
    except OSError:
        return False


def load_ensemble(path) -> Ensemble:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read manifest: {exc}", path=path) from None
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise FormatError(f"not an ensemble manifest (expected {MANIFEST_HEADER!r})", path=path, line=1)
    kind, count, in_members = PERTURBATION, None, False
    weights, members = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line == "[members]":
            in_members = True
            continue
        if not in_members:
            if "=" not in line:
                raise FormatError("expected key = value", path=path, line=lineno)
            k, v = (s.strip() for s in line.split("=", 1))
            if k == "kind":
                kind = v
            elif k == "members":
                count = int(v)
            else:
                raise FormatError(f"unknown manifest key {k!r}", path=path, line=lineno)
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise FormatError("expected '<weight> <model file>'", path=path, line=lineno)
        try:
            weights.append(float(parts[0]))
        except ValueError:
            raise FormatError(f"bad weight {parts[0]!r}", path=path, line=lineno) from None
        members.append(load_model(path.parent / parts[1]))
    if count is not None and count != len(members):
        raise FormatError(f"manifest declares {count} members but lists {len(members)}", path=path)
    try:
        return Ensemble(tuple(members), np.array(weights), kind)
    except UsageError as exc:
        raise FormatError(str(exc), path=path) from None
