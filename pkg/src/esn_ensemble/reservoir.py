"""Echo state network: initialization, leaky state update, readout, prediction.

Random draws come from per-purpose streams of the model's master seed:

    0  input weights            5  initial state
    1  reservoir weights + mask 6  leak rates while predicting
    2  feedback weights         7  state noise while predicting
    3  leak rates (harvest)     8  bootstrap rows (ensemble module)
    4  state noise (harvest)

Prediction streams restart on every call, so prediction is a pure function
of the trained model and its inputs.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import TimeSeries
from .distributions import WeightSpec, derive_stream, format_weight_spec, parse_weight_spec, sample, standard_normal
from .errors import (
    CannotScaleError,
    DivergedPredictionError,
    DivergedStateError,
    FormatError,
    UntrainedModelError,
    UsageError,
)
from .linalg import ridge_solve, scale_to_spectral_radius

STREAM_W_IN = 0
STREAM_W = 1
STREAM_W_BACK = 2
STREAM_LEAK = 3
STREAM_NOISE = 4
STREAM_INIT = 5
STREAM_PREDICT_LEAK = 6
STREAM_PREDICT_NOISE = 7
STREAM_BOOTSTRAP = 8

DIVERGENCE_GUARD = 1e6


@dataclass(frozen=True)
class FixedLeak:
    alpha: float = 0.3

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise UsageError(f"leaking rate must lie in (0, 1], got {self.alpha}")

    def __str__(self) -> str:
        return repr(self.alpha)


@dataclass(frozen=True)
class DynamicLeak:
    """Per-step leaking rate drawn uniformly from ``[lo, hi]``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (0 < self.lo <= self.hi <= 1):
            raise UsageError(f"dynamic leaking range must satisfy 0 < lo <= hi <= 1, got ({self.lo}, {self.hi})")

    def __str__(self) -> str:
        return f"dynamic({self.lo!r},{self.hi!r})"


@dataclass(frozen=True)
class StateNoise:
    """Per-step white noise added inside the activation: gaussian(0, scale^2) or uniform(-scale, scale)."""

    law: str = "gaussian"
    scale: float = 1e-4

    def __post_init__(self):
        if self.law not in ("gaussian", "uniform"):
            raise UsageError(f"state noise law must be gaussian or uniform, got {self.law!r}")
        if not self.scale >= 0:
            raise UsageError(f"state noise scale must be nonnegative, got {self.scale}")

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if self.law == "gaussian":
            return self.scale * standard_normal(gen, n)
        return self.scale * (2.0 * gen.random(n) - 1.0)

    def __str__(self) -> str:
        return f"{self.law}({self.scale!r})"


@dataclass(frozen=True)
class InitState:
    """Initial reservoir state: ``zero``, ``gaussian(sigma)`` or ``uniform(lo,hi)``."""

    kind: str = "zero"
    sigma: float = 0.1
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "gaussian", "uniform"):
            raise UsageError(f"init_state must be zero, gaussian or uniform, got {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma >= 0:
            raise UsageError(f"init_state sigma must be nonnegative, got {self.sigma}")
        if self.kind == "uniform" and not self.lo <= self.hi:
            raise UsageError(f"init_state uniform needs lo <= hi, got ({self.lo}, {self.hi})")

    def __str__(self) -> str:
        if self.kind == "gaussian":
            return f"gaussian({self.sigma!r})"
        if self.kind == "uniform":
            return f"uniform({self.lo!r},{self.hi!r})"
        return "zero"


@dataclass(frozen=True)
class EsnConfig:
    k_in: int = 1
    n_res: int = 1000
    l_out: int = 1
    w_in_spec: WeightSpec = field(default_factory=WeightSpec.uniform)
    w_spec: WeightSpec = field(default_factory=WeightSpec.uniform)
    input_scaling: float = 1.0
    density: float = 1.0
    rho: float = 1.25
    leak: FixedLeak | DynamicLeak = field(default_factory=FixedLeak)
    state_noise: StateNoise | None = None
    init_state: InitState = field(default_factory=InitState)
    feedback_enabled: bool = False
    beta: float = 1e-8
    washout_len: int = 100
    master_seed: int = 0

    def __post_init__(self):
        if self.k_in < 1 or self.l_out < 1 or self.n_res < 1:
            raise UsageError("k_in, n_res and l_out must all be at least 1")
        if not 0 < self.density <= 1:
            raise UsageError(f"density must lie in (0, 1], got {self.density}")
        if not self.rho > 0:
            raise UsageError(f"rho must be positive, got {self.rho}")
        if not self.input_scaling > 0:
            raise UsageError(f"input_scaling must be positive, got {self.input_scaling}")
        if not self.beta >= 0:
            raise UsageError(f"beta must be nonnegative, got {self.beta}")
        if self.washout_len < 0:
            raise UsageError(f"washout_len must be nonnegative, got {self.washout_len}")
        if not 0 <= self.master_seed < 2**64:
            raise UsageError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")

    @property
    def regressor_dim(self) -> int:
        return 1 + self.k_in + self.n_res

    def with_seed(self, seed: int) -> "EsnConfig":
        return replace(self, master_seed=int(seed))

    def to_items(self) -> dict[str, str]:
        """Flat string form, one entry per field (the ``[esn]`` config section)."""
        return {
            "k_in": str(self.k_in),
            "n_res": str(self.n_res),
            "l_out": str(self.l_out),
            "w_in": format_weight_spec(self.w_in_spec),
            "w": format_weight_spec(self.w_spec),
            "input_scaling": repr(self.input_scaling),
            "density": repr(self.density),
            "rho": repr(self.rho),
            "alpha": str(self.leak),
            "state_noise": "none" if self.state_noise is None else str(self.state_noise),
            "init_state": str(self.init_state),
            "feedback": "true" if self.feedback_enabled else "false",
            "beta": repr(self.beta),
            "washout": str(self.washout_len),
            "seed": str(self.master_seed),
        }

    @classmethod
    def from_items(cls, items: dict[str, str], base: "EsnConfig | None" = None) -> "EsnConfig":
        """Inverse of :meth:`to_items`; missing keys keep ``base`` (default) values.

        Raises ``FormatError`` with ``key`` set to the first unparsable entry.
        """
        known = {
            "k_in": ("k_in", int),
            "n_res": ("n_res", int),
            "l_out": ("l_out", int),
            "w_in": ("w_in_spec", parse_weight_spec),
            "w": ("w_spec", parse_weight_spec),
            "input_scaling": ("input_scaling", float),
            "density": ("density", float),
            "rho": ("rho", float),
            "alpha": ("leak", parse_leak),
            "state_noise": ("state_noise", parse_state_noise),
            "init_state": ("init_state", parse_init_state),
            "feedback": ("feedback_enabled", parse_bool),
            "beta": ("beta", float),
            "washout": ("washout_len", int),
            "seed": ("master_seed", int),
        }
        kwargs = {}
        for key, raw in items.items():
            if key not in known:
                raise FormatError(f"unknown esn key (expected one of {', '.join(known)})", key=key)
            name, conv = known[key]
            try:
                kwargs[name] = conv(raw.strip())
            except (ValueError, UsageError) as exc:
                raise FormatError(f"bad value {raw!r}: {exc}", key=key) from None
        try:
            return replace(base, **kwargs) if base is not None else cls(**kwargs)
        except UsageError as exc:
            raise FormatError(str(exc), key="esn") from None


_CALL_RE = re.compile(r"^([a-z_]+)\s*\((.*)\)$")


def _call(text: str) -> tuple[str, list[float]]:
    m = _CALL_RE.match(text.strip().lower())
    if not m:
        raise UsageError(f"expected name(args...), got {text!r}")
    args = [float(a) for a in m.group(2).split(",") if a.strip()]
    return m.group(1), args


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def parse_leak(text: str) -> FixedLeak | DynamicLeak:
    t = text.strip().lower()
    if t.startswith("dynamic"):
        _, args = _call(t)
        if len(args) != 2:
            raise UsageError(f"dynamic leak needs (lo, hi), got {text!r}")
        return DynamicLeak(*args)
    if t.startswith("fixed"):
        _, args = _call(t)
        if len(args) != 1:
            raise UsageError(f"fixed leak needs (alpha), got {text!r}")
        return FixedLeak(args[0])
    return FixedLeak(float(t))


def parse_state_noise(text: str) -> StateNoise | None:
    t = text.strip().lower()
    if t in ("none", "off", ""):
        return None
    name, args = _call(t)
    if len(args) != 1:
        raise UsageError(f"state noise needs one scale argument, got {text!r}")
    return StateNoise(name, args[0])


def parse_init_state(text: str) -> InitState:
    t = text.strip().lower()
    if t == "zero":
        return InitState()
    name, args = _call(t)
    if name == "gaussian" and len(args) == 1:
        return InitState("gaussian", sigma=args[0])
    if name == "uniform" and len(args) == 2:
        return InitState("uniform", lo=args[0], hi=args[1])
    raise UsageError(f"init_state must be zero, gaussian(sigma) or uniform(lo,hi), got {text!r}")


@dataclass(frozen=True, eq=False)
class EsnModel:
    config: EsnConfig
    w_in: np.ndarray
    w: np.ndarray
    w_back: np.ndarray | None = None
    w_out: np.ndarray | None = None
    last_state: np.ndarray | None = None
    last_input: np.ndarray | None = None

    def __post_init__(self):
        c = self.config
        if self.w_in.shape != (c.n_res, 1 + c.k_in) or self.w.shape != (c.n_res, c.n_res):
            raise UsageError("weight shapes do not match the configuration")
        for arr in (self.w_in, self.w, self.w_back, self.w_out, self.last_state, self.last_input):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def trained(self) -> bool:
        return self.w_out is not None


def init_state(config: EsnConfig, rng=None) -> np.ndarray:
    spec = config.init_state
    n = config.n_res
    if spec.kind == "zero":
        return np.zeros(n)
    gen = (rng if rng is not None else derive_stream(config.master_seed, STREAM_INIT)).generator() \
        if not isinstance(rng, np.random.Generator) else rng
    if spec.kind == "gaussian":
        return spec.sigma * standard_normal(gen, n)
    return spec.lo + (spec.hi - spec.lo) * gen.random(n)


def init_esn(config: EsnConfig) -> EsnModel:
    n, seed = config.n_res, config.master_seed
    w_in = sample(config.w_in_spec, derive_stream(seed, STREAM_W_IN), n * (1 + config.k_in))
    w_in = config.input_scaling * w_in.reshape(n, 1 + config.k_in)

    gen = derive_stream(seed, STREAM_W).generator()
    w = sample(config.w_spec, gen, n * n).reshape(n, n)
    if config.density < 1.0:
        w = np.where(gen.random((n, n)) < config.density, w, 0.0)
    try:
        w = scale_to_spectral_radius(w, config.rho)
    except CannotScaleError as exc:
        raise CannotScaleError(
            f"{exc} (n_res={n}, density={config.density}); raise density or n_res"
        ) from None

    w_back = None
    if config.feedback_enabled:
        w_back = sample(config.w_in_spec, derive_stream(seed, STREAM_W_BACK), n * config.l_out)
        w_back = w_back.reshape(n, config.l_out)
    return EsnModel(config, w_in, w, w_back)


def update_state(model: EsnModel, x_prev, u, y_prev=None, alpha: float | None = None, tau=None, step: int = 0) -> np.ndarray:
    """One leaky-integrator step.

    ``x~ = tanh(W_in [1; u] + W x_prev [+ W_back y_prev] [+ tau])`` and
    ``x = (1 - alpha) x_prev + alpha x~``. ``alpha`` defaults to the fixed
    leaking rate of the configuration.
    """
    if alpha is None:
        if not isinstance(model.config.leak, FixedLeak):
            raise UsageError("a dynamic leak needs an explicit alpha for each step")
        alpha = model.config.leak.alpha
    u = np.atleast_1d(np.asarray(u, dtype=float))
    pre = model.w_in[:, 0] + model.w_in[:, 1:] @ u + model.w @ x_prev
    if model.w_back is not None and y_prev is not None:
        pre = pre + model.w_back @ np.atleast_1d(y_prev)
    if tau is not None:
        pre = pre + tau
    peak = np.max(np.abs(pre))
    if not (peak <= DIVERGENCE_GUARD):
        raise DivergedStateError(step, f"reservoir pre-activation reached {peak!r} at step {step}")
    return (1.0 - alpha) * x_prev + alpha * np.tanh(pre)


class _Drive:
    """Leak rates and noise for consecutive steps, drawn from fixed streams."""

    def __init__(self, config: EsnConfig, leak_stream: int, noise_stream: int):
        self.config = config
        leak = config.leak
        self.fixed = leak.alpha if isinstance(leak, FixedLeak) else None
        self.leak_gen = None if self.fixed is not None else derive_stream(config.master_seed, leak_stream).generator()
        self.noise_gen = None
        if config.state_noise is not None:
            self.noise_gen = derive_stream(config.master_seed, noise_stream).generator()

    def next(self) -> tuple[float, np.ndarray | None]:
        if self.fixed is not None:
            alpha = self.fixed
        else:
            lo, hi = self.config.leak.lo, self.config.leak.hi
            alpha = lo + (hi - lo) * float(self.leak_gen.random())
        tau = None
        if self.noise_gen is not None:
            tau = self.config.state_noise.draw(self.noise_gen, self.config.n_res)
        return alpha, tau


class Harvest(NamedTuple):
    states: np.ndarray  # (1 + K + N) x T regressors
    targets: np.ndarray  # L x T
    last_state: np.ndarray
    last_input: np.ndarray


def _univariate(model: EsnModel, series) -> np.ndarray:
    c = model.config
    if c.k_in != 1 or c.l_out != 1:
        raise UsageError("series-driven training and prediction need k_in = l_out = 1")
    return np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float).reshape(-1)


def harvest_states(model: EsnModel, series) -> Harvest:
    """Teacher-forced run with ``u(n) = series[n]`` and target ``series[n+1]``.

    Regressor columns ``[1; u(n); x(n)]`` for the steps after the washout.
    """
    values = _univariate(model, series)
    c = model.config
    if values.size < c.washout_len + 2:
        raise UsageError(f"series of length {values.size} is too short for washout {c.washout_len} (need washout + 2)")
    steps = values.size - 1
    cols = steps - c.washout_len
    states = np.empty((c.regressor_dim, cols))
    drive = _Drive(c, STREAM_LEAK, STREAM_NOISE)
    x = init_state(c)
    for n in range(steps):
        u = values[n]
        alpha, tau = drive.next()
        x = update_state(model, x, u, y_prev=u, alpha=alpha, tau=tau, step=n)
        j = n - c.washout_len
        if j >= 0:
            states[0, j] = 1.0
            states[1, j] = u
            states[2:, j] = x
    targets = values[c.washout_len + 1 :].reshape(1, -1)
    return Harvest(states, targets, x, np.array([values[-1]]))


def fit_readout(model: EsnModel, harvest: Harvest, columns=None) -> EsnModel:
    """Ridge readout on the harvested columns (optionally a selection with repeats)."""
    s, y = harvest.states, harvest.targets
    if columns is not None:
        columns = np.asarray(columns, dtype=np.intp)
        # same memory layout as the full harvest so BLAS reduces in the same order
        s, y = np.ascontiguousarray(s[:, columns]), np.ascontiguousarray(y[:, columns])
    w_out = ridge_solve(s, y, model.config.beta)
    return replace(model, w_out=w_out, last_state=harvest.last_state.copy(), last_input=harvest.last_input.copy())


def train_readout(model: EsnModel, series) -> EsnModel:
    return fit_readout(model, harvest_states(model, series))


def training_mse(model: EsnModel, harvest: Harvest) -> float:
    if not model.trained:
        raise UntrainedModelError("model has no readout")
    resid = model.w_out @ harvest.states - harvest.targets
    return math.fsum(resid.ravel() ** 2) / resid.size


def _readout(model: EsnModel, u: np.ndarray, x: np.ndarray) -> np.ndarray:
    return model.w_out[:, 0] + model.w_out[:, 1 : 1 + u.size] @ u + model.w_out[:, 1 + u.size :] @ x


def _require_trained(model: EsnModel):
    if not model.trained or model.last_state is None:
        raise UntrainedModelError("model has no trained readout (w_out missing)")


def predict_generative(model: EsnModel, n_steps: int, guard: float = DIVERGENCE_GUARD) -> TimeSeries:
    """Free run: each prediction is fed back as the next input."""
    _require_trained(model)
    if n_steps < 1:
        raise UsageError(f"n_steps must be at least 1, got {n_steps}")
    c = model.config
    if c.k_in != c.l_out:
        raise UsageError("generative mode needs k_in == l_out")
    drive = _Drive(c, STREAM_PREDICT_LEAK, STREAM_PREDICT_NOISE)
    x = model.last_state.copy()
    u = model.last_input.copy()
    out = np.empty(n_steps)
    for n in range(n_steps):
        alpha, tau = drive.next()
        try:
            x = update_state(model, x, u, y_prev=u, alpha=alpha, tau=tau, step=n)
        except DivergedStateError:
            raise DivergedPredictionError(n, None) from None
        y = _readout(model, u, x)
        if not np.all(np.abs(y) <= guard):
            raise DivergedPredictionError(n, float(y[0]))
        out[n] = y[0]
        u = y
    return TimeSeries(out, "generative")


def predict_guided(model: EsnModel, inputs) -> TimeSeries:
    """One-step-ahead outputs with the true input supplied at every step."""
    _require_trained(model)
    values = _univariate(model, inputs)
    if values.size < 1:
        raise UsageError("guided prediction needs at least one input")
    drive = _Drive(model.config, STREAM_PREDICT_LEAK, STREAM_PREDICT_NOISE)
    x = model.last_state.copy()
    out = np.empty(values.size)
    for n, v in enumerate(values):
        u = np.array([v])
        alpha, tau = drive.next()
        x = update_state(model, x, u, y_prev=u, alpha=alpha, tau=tau, step=n)
        out[n] = _readout(model, u, x)[0]
    return TimeSeries(out, "guided")


# persistence

MODEL_HEADER = "# esn-model v1"
_SECTIONS = ("dims", "config", "w_in", "w", "w_back", "w_out", "last_state", "last_input")


def _rows(arr: np.ndarray | None) -> list[str]:
    if arr is None:
        return []
    arr = np.atleast_2d(arr)
    return [" ".join("%.17g" % v for v in row) for row in arr]


def save_model(model: EsnModel, path) -> None:
    c = model.config
    lines = [MODEL_HEADER, "[dims]", f"k_in = {c.k_in}", f"n_res = {c.n_res}", f"l_out = {c.l_out}", "[config]"]
    lines += [f"{k} = {v}" for k, v in c.to_items().items() if k not in ("k_in", "n_res", "l_out")]
    for name in ("w_in", "w", "w_back", "w_out", "last_state", "last_input"):
        lines.append(f"[{name}]")
        lines += _rows(getattr(model, name))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> EsnModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read model file: {exc}", path=path) from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise FormatError(f"not a model file (expected header {MODEL_HEADER!r})", path=path, line=1)
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in _SECTIONS:
                raise FormatError(f"unknown section [{current}]", path=path, line=lineno)
            sections[current] = []
            continue
        if current is None:
            raise FormatError("content before the first section", path=path, line=lineno)
        sections[current].append((lineno, line))
    for required in ("dims", "config", "w_in", "w", "last_state"):
        if required not in sections:
            raise FormatError(f"missing section [{required}]", path=path)

    def kv(name):
        out = {}
        for lineno, line in sections[name]:
            if "=" not in line:
                raise FormatError("expected key = value", path=path, line=lineno)
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
        return out

    dims = kv("dims")
    try:
        items = dict(kv("config"))
        items.update({k: dims[k] for k in ("k_in", "n_res", "l_out")})
    except KeyError as exc:
        raise FormatError(f"[dims] lacks {exc.args[0]}", path=path) from None
    try:
        config = EsnConfig.from_items(items)
    except FormatError as exc:
        raise FormatError(str(exc), path=path) from None

    def matrix(name, shape):
        rows = sections.get(name, [])
        if not rows:
            return None
        data = []
        for lineno, line in rows:
            try:
                data.append([float(v) for v in line.split()])
            except ValueError:
                raise FormatError(f"non-numeric entry in [{name}]", path=path, line=lineno) from None
            if len(data[-1]) != shape[1]:
                raise FormatError(f"[{name}] row has {len(data[-1])} entries, expected {shape[1]}", path=path, line=lineno)
        if len(data) != shape[0]:
            raise FormatError(f"[{name}] has {len(data)} rows, expected {shape[0]}", path=path)
        return np.array(data)

    n, k, l = config.n_res, config.k_in, config.l_out
    w_in = matrix("w_in", (n, 1 + k))
    w = matrix("w", (n, n))
    if w_in is None or w is None:
        raise FormatError("[w_in] and [w] must not be empty", path=path)
    w_back = matrix("w_back", (n, l))
    if config.feedback_enabled and w_back is None:
        raise FormatError("feedback enabled but [w_back] is empty", path=path)
    w_out = matrix("w_out", (l, 1 + k + n))
    last_state = matrix("last_state", (1, n))
    last_input = matrix("last_input", (1, k))
    return EsnModel(
        config,
        w_in,
        w,
        w_back,
        w_out,
        None if last_state is None else last_state[0],
        None if last_input is None else last_input[0],
    )


@dataclass(frozen=True)
class Generative:
    n_steps: int


@dataclass(frozen=True, eq=False)
class Guided:
    inputs: TimeSeries


def predict(model: EsnModel, mode: Generative | Guided) -> TimeSeries:
    if isinstance(mode, Generative):
        return predict_generative(model, mode.n_steps)
    if isinstance(mode, Guided):
        return predict_guided(model, mode.inputs)
    raise UsageError(f"unknown prediction mode {mode!r}")
