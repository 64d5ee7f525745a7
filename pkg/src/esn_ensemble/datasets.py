"""Benchmark generators, preprocessing transforms and CSV I/O."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import TimeSeries
from .distributions import RngStream, derive_stream, standard_normal
from .errors import DegenerateScalingError, FormatError, GeneratorDivergedError, UsageError

MG_DIVERGENCE = 1e6


@dataclass(frozen=True)
class MgParams:
    """Mackey-Glass ``dx/dt = b_lin*x + a_num*x(t-tau) / (1 + x(t-tau)**exponent)``."""

    tau: float = 17.0
    a_num: float = 0.2
    b_lin: float = -0.1
    exponent: float = 10.0
    dt: float = 0.1
    stride: int = 10
    history: float = 1.2

    def __post_init__(self):
        if not (self.tau > 0 and self.dt > 0 and self.exponent > 0):
            raise UsageError(f"Mackey-Glass needs tau > 0, dt > 0 and exponent > 0: {self}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise UsageError(f"stride must be a positive integer, got {self.stride}")


def mackey_glass(n: int, p: MgParams = MgParams()) -> TimeSeries:
    """Sample ``x(i * stride * dt)`` for ``i = 0 .. n-1``.

    Fixed-step RK4. The delayed term is read from the stored trajectory; off-grid
    delay points (stage midpoints, or any point when ``tau/dt`` is not an integer)
    use cubic Hermite interpolation with the stored derivatives, and the constant
    history for points before ``t = 0``.
    """
    if n < 1:
        raise UsageError(f"n must be at least 1, got {n}")
    dt, stride = float(p.dt), int(p.stride)
    a, b, ex, hist = float(p.a_num), float(p.b_lin), float(p.exponent), float(p.history)
    lag = p.tau / dt
    steps = (n - 1) * stride
    xs = [hist] * (steps + 1)
    ds = [0.0] * (steps + 1)

    def rhs(x, xd):
        try:
            return b * x + a * xd / (1.0 + math.pow(xd, ex))
        except (ValueError, OverflowError, ZeroDivisionError):
            return math.nan

    def delayed(pos):
        # pos is a (fractional) grid index; negative means inside the history
        if pos <= 0.0:
            return hist
        j = math.floor(pos)
        w = pos - j
        if w == 0.0:
            return xs[j]
        y0, y1, m0, m1 = xs[j], xs[j + 1], ds[j] * dt, ds[j + 1] * dt
        w2 = w * w
        w3 = w2 * w
        return (2 * w3 - 3 * w2 + 1) * y0 + (w3 - 2 * w2 + w) * m0 + (3 * w2 - 2 * w3) * y1 + (w3 - w2) * m1

    x = hist
    d_now = delayed(-lag)
    ds[0] = rhs(x, d_now)
    for k in range(steps):
        d_half = delayed(k + 0.5 - lag)
        d_next = delayed(k + 1.0 - lag)
        k1 = rhs(x, d_now)
        k2 = rhs(x + 0.5 * dt * k1, d_half)
        k3 = rhs(x + 0.5 * dt * k2, d_half)
        k4 = rhs(x + dt * k3, d_next)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not abs(x) <= MG_DIVERGENCE:
            raise GeneratorDivergedError(k + 1, x)
        xs[k + 1] = x
        ds[k + 1] = rhs(x, d_next)
        d_now = d_next
    return TimeSeries(np.array(xs[::stride]), "mackey_glass")


ARMA_PHI = 0.81
ARMA_THETA = 0.72


def gen_arma(n: int, with_trend: bool = False, rng=None, burn_in: int = 0, noise=None) -> TimeSeries:
    """``X_t = e_t + 0.81 X_{t-1} + 0.72 e_{t-1} [+ t/1000 + (t/1000)^2]`` for ``t = 1..n``.

    ``X_0 = e_0 = 0``. The trend term sits inside the recursion, so it is
    carried forward by the autoregression. ``noise`` overrides the Gaussian
    innovations (length ``burn_in + n``); ``rng`` is an RngStream or seed.
    """
    if n < 1:
        raise UsageError(f"n must be at least 1, got {n}")
    if burn_in < 0:
        raise UsageError(f"burn_in must be nonnegative, got {burn_in}")
    total = n + burn_in
    if noise is None:
        stream = rng if isinstance(rng, RngStream) else derive_stream(0 if rng is None else rng, 0)
        eps = standard_normal(stream.generator(), total)
    else:
        eps = np.asarray(noise, dtype=float).reshape(-1)
        if eps.size != total:
            raise UsageError(f"noise override needs {total} values, got {eps.size}")
    out = np.empty(total)
    x_prev, e_prev = 0.0, 0.0
    for i in range(total):
        t = i + 1
        x = eps[i] + ARMA_PHI * x_prev + ARMA_THETA * e_prev
        if with_trend:
            x += t / 1000.0 + (t / 1000.0) ** 2
        out[i] = x
        x_prev, e_prev = x, eps[i]
    name = "arma_trend" if with_trend else "arma"
    return TimeSeries(out[burn_in:], name)


def gen_sine(n: int, with_trend: bool = False) -> TimeSeries:
    """``X_t = sin((1+t) pi^3) [+ t/1000]`` for integer ``t = 1..n``."""
    if n < 1:
        raise UsageError(f"n must be at least 1, got {n}")
    t = np.arange(1, n + 1, dtype=float)
    x = np.sin((1.0 + t) * math.pi**3)
    if with_trend:
        x = x + t / 1000.0
    return TimeSeries(x, "sine_trend" if with_trend else "sine")


class PreprocessKind(str, enum.Enum):
    CUBITIZE = "cubitize"
    STANDARDIZE = "standardize"
    UNITIZE = "unitize"


@dataclass(frozen=True)
class Preprocessor:
    """A fitted affine transform ``(x - shift) / scale``.

    cubitize: shift = min, scale = max - min
    standardize: shift = mean, scale = population std
    unitize: shift = mean, scale = Euclidean norm of the centered series
    """

    kind: PreprocessKind
    shift: float
    scale: float

    def apply(self, series) -> TimeSeries:
        ts = _series(series)
        return TimeSeries((ts.values - self.shift) / self.scale, ts.name)

    def invert(self, series) -> TimeSeries:
        ts = _series(series)
        return TimeSeries(ts.values * self.scale + self.shift, ts.name)


def _series(series) -> TimeSeries:
    return series if isinstance(series, TimeSeries) else TimeSeries(series)


def fit_preprocess(kind, train) -> Preprocessor:
    kind = PreprocessKind(kind)
    x = _series(train).values
    if kind is PreprocessKind.CUBITIZE:
        lo, hi = float(x.min()), float(x.max())
        if not hi > lo:
            raise DegenerateScalingError("cubitize needs max > min on the training data")
        return Preprocessor(kind, lo, hi - lo)
    mean = math.fsum(x) / x.size
    ss = math.fsum((x - mean) ** 2)
    if kind is PreprocessKind.STANDARDIZE:
        scale = math.sqrt(ss / x.size)
    else:
        scale = math.sqrt(ss)
    if not scale > 0:
        raise DegenerateScalingError(f"{kind.value} needs a non-constant training series")
    return Preprocessor(kind, mean, scale)


def apply(pp: Preprocessor, series) -> TimeSeries:
    return pp.apply(series)


def invert(pp: Preprocessor, series) -> TimeSeries:
    return pp.invert(series)


def load_csv(path) -> TimeSeries:
    """First column of a CSV; a single non-numeric first line is taken as a header."""
    path = Path(path)
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not any(cell.strip() for cell in row):
                continue
            cell = row[0].strip()
            try:
                v = float(cell)
            except ValueError:
                if lineno == 1:
                    continue
                raise FormatError(f"cannot parse {cell!r} as a number", path=path, line=lineno) from None
            if not math.isfinite(v):
                raise FormatError(f"non-finite value {cell!r}", path=path, line=lineno)
            values.append(v)
    if not values:
        raise FormatError("no numeric records", path=path)
    return TimeSeries(np.array(values), path.stem)


def save_csv(path, series, *more, header=None) -> None:
    """Write one or more equal-length columns at 17 significant digits."""
    cols = [np.asarray(s.values if isinstance(s, TimeSeries) else s, dtype=float).reshape(-1) for s in (series, *more)]
    if len({c.size for c in cols}) != 1:
        raise UsageError("all CSV columns must have the same length")
    if header is None:
        header = ["value"] if len(cols) == 1 else [f"col{i}" for i in range(len(cols))]
    if len(header) != len(cols):
        raise UsageError("header length must match the number of columns")
    lines = [",".join(header)]
    lines += [",".join("%.17g" % c[i] for c in cols) for i in range(cols[0].size)]
    Path(path).write_text("\n".join(lines) + "\n")
