"""Time-series container, error metrics, splitting and error reduction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedReductionError, UsageError


def _as_finite_array(values, what: str = "values") -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{what} contain non-finite entries")
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """A named, read-only univariate series of finite samples."""

    values: np.ndarray
    name: str = "series"

    def __post_init__(self):
        arr = _as_finite_array(self.values)
        if arr.size < 1:
            raise UsageError("a time series needs at least one sample")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, item):
        return self.values[item]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def renamed(self, name: str) -> "TimeSeries":
        return TimeSeries(self.values, name)


@dataclass(frozen=True)
class SplitSpec:
    washout_len: int
    train_len: int
    test_len: int

    def __post_init__(self):
        if min(self.washout_len, self.train_len, self.test_len) < 0:
            raise UsageError("split lengths must be nonnegative")
        if self.washout_len >= self.train_len:
            raise UsageError(
                f"washout_len ({self.washout_len}) must be smaller than train_len ({self.train_len})"
            )

    @property
    def total(self) -> int:
        return self.washout_len + self.train_len + self.test_len


def split(series, spec: SplitSpec) -> tuple[TimeSeries, TimeSeries]:
    """Cut ``series`` into the training prefix (washout included) and the test block after it."""
    ts = series if isinstance(series, TimeSeries) else TimeSeries(series)
    if spec.total > len(ts):
        raise UsageError(
            f"split needs {spec.total} samples (washout+train+test) but series has {len(ts)}"
        )
    cut = spec.washout_len + spec.train_len
    train = TimeSeries(ts.values[:cut], f"{ts.name}:train")
    if spec.test_len == 0:
        raise UsageError("test_len must be at least 1")
    test = TimeSeries(ts.values[cut : cut + spec.test_len], f"{ts.name}:test")
    return train, test


def _pair(y, y_target) -> tuple[np.ndarray, np.ndarray]:
    a = _as_finite_array(y, "predictions")
    b = _as_finite_array(y_target, "targets")
    if a.size != b.size:
        raise UsageError(f"length mismatch: {a.size} predictions vs {b.size} targets")
    if a.size == 0:
        raise UsageError("metrics need at least one sample")
    return a, b


def mse(y, y_target) -> float:
    a, b = _pair(y, y_target)
    return math.fsum((a - b) ** 2) / a.size


def mae(y, y_target) -> float:
    a, b = _pair(y, y_target)
    return math.fsum(np.abs(a - b)) / a.size


def rmse(y, y_target) -> float:
    return math.sqrt(mse(y, y_target))


def error_reduction(e_single: float, e_ensemble: float) -> float:
    """Percentage change ``|(e_ensemble - e_single) / e_single| * 100``.

    The magnitude is returned; whether it is a reduction or an increase is
    read off ``e_ensemble < e_single``. Use :func:`signed_error_reduction`
    when the direction matters.
    """
    if not e_single > 0:
        raise UndefinedReductionError(f"reduction undefined for baseline error {e_single!r}")
    return abs((e_ensemble - e_single) / e_single) * 100.0


def signed_error_reduction(e_single: float, e_ensemble: float) -> float:
    """Positive when the ensemble improves on the single model."""
    if not e_single > 0:
        raise UndefinedReductionError(f"reduction undefined for baseline error {e_single!r}")
    return (e_single - e_ensemble) / e_single * 100.0
