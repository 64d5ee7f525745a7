"""Weight laws, the arcsine density/CDF and reproducible RNG streams.

Streams are numpy ``PCG64`` generators keyed by a ``SeedSequence`` built from
``(master_seed, stream_id)``; distinct ids give statistically independent
streams. Gaussian draws use Box-Muller on the stream's uniforms so the
mapping from uniforms to normals is fixed by this module rather than by
numpy's internal normal sampler.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import EndpointSingularityError, UsageError

_SEED_LIMIT = 2**64
# spawn-key tags keep stream and member derivations disjoint
_STREAM_TAG = 0
_MEMBER_TAG = 1


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < _SEED_LIMIT:
            raise UsageError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")
        if int(self.stream_id) < 0:
            raise UsageError(f"stream_id must be nonnegative, got {self.stream_id}")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed), spawn_key=(_STREAM_TAG, int(self.stream_id))
        )
        return np.random.Generator(np.random.PCG64(seq))


def derive_stream(master_seed: int, stream_id: int) -> RngStream:
    return RngStream(int(master_seed), int(stream_id))


def derive_seed(master_seed: int, child_id: int) -> int:
    """A 64-bit child master seed, e.g. for ensemble member ``child_id``."""
    if not 0 <= int(master_seed) < _SEED_LIMIT:
        raise UsageError(f"master_seed must fit in 64 unsigned bits, got {master_seed}")
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(_MEMBER_TAG, int(child_id)))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise UsageError(f"expected an RngStream or numpy Generator, got {type(rng).__name__}")


def standard_normal(gen: np.random.Generator, n: int) -> np.ndarray:
    """Box-Muller: pairs of uniforms (u1, u2) map to r*cos, r*sin, interleaved."""
    pairs = (n + 1) // 2
    u = gen.random(2 * pairs)
    r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    theta = 2.0 * np.pi * u[1::2]
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]


class WeightKind(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN_SAME_VARIANCE = "gaussian_same_variance"
    GAUSSIAN_SAME_RANGE = "gaussian_same_range"
    ARCSINE = "arcsine"

    @property
    def is_gaussian(self) -> bool:
        return self in (WeightKind.GAUSSIAN_SAME_VARIANCE, WeightKind.GAUSSIAN_SAME_RANGE)


@dataclass(frozen=True)
class WeightSpec:
    kind: WeightKind
    lo: float = -0.5
    hi: float = 0.5
    mean: float = 0.0
    variance: float = 1.0 / 12.0

    def __post_init__(self):
        object.__setattr__(self, "kind", WeightKind(self.kind))
        if self.kind.is_gaussian:
            if not (self.variance > 0 and math.isfinite(self.variance) and math.isfinite(self.mean)):
                raise UsageError(f"gaussian weight law needs finite mean and variance > 0: {self}")
        elif not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise UsageError(f"{self.kind.value} weight law needs lo < hi: {self}")

    @classmethod
    def uniform(cls, lo: float = -0.5, hi: float = 0.5) -> "WeightSpec":
        return cls(WeightKind.UNIFORM, lo=lo, hi=hi)

    @classmethod
    def gaussian_same_variance(cls) -> "WeightSpec":
        # variance of U(-1/2, 1/2)
        return cls(WeightKind.GAUSSIAN_SAME_VARIANCE, mean=0.0, variance=1.0 / 12.0)

    @classmethod
    def gaussian_same_range(cls) -> "WeightSpec":
        # 3 sigma = 1/2
        return cls(WeightKind.GAUSSIAN_SAME_RANGE, mean=0.0, variance=1.0 / 36.0)

    @classmethod
    def arcsine(cls, lo: float = -0.5, hi: float = 0.5) -> "WeightSpec":
        return cls(WeightKind.ARCSINE, lo=lo, hi=hi)

    @property
    def label(self) -> str:
        return {
            WeightKind.UNIFORM: "uniform",
            WeightKind.GAUSSIAN_SAME_VARIANCE: "gaussian-A",
            WeightKind.GAUSSIAN_SAME_RANGE: "gaussian-B",
            WeightKind.ARCSINE: "arcsine",
        }[self.kind]

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is WeightKind.UNIFORM:
            return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        if self.kind is WeightKind.ARCSINE:
            return arcsine_cdf(x, self.lo, self.hi - self.lo)
        return ndtr((x - self.mean) / math.sqrt(self.variance))

    def __str__(self) -> str:
        return format_weight_spec(self)


CANONICAL_SPECS: tuple[WeightSpec, ...] = (
    WeightSpec.uniform(),
    WeightSpec.gaussian_same_variance(),
    WeightSpec.gaussian_same_range(),
    WeightSpec.arcsine(),
)


def sample(spec: WeightSpec, rng, n: int) -> np.ndarray:
    """``n`` independent draws from ``spec`` using ``rng`` (an RngStream or Generator)."""
    if n < 0:
        raise UsageError(f"sample count must be nonnegative, got {n}")
    gen = _generator(rng)
    if spec.kind is WeightKind.UNIFORM:
        return spec.lo + (spec.hi - spec.lo) * gen.random(n)
    if spec.kind is WeightKind.ARCSINE:
        return sample_arcsine_inverse(gen, n, spec.lo, spec.hi - spec.lo)
    return spec.mean + math.sqrt(spec.variance) * standard_normal(gen, n)


def sample_arcsine_inverse(rng, n: int, a: float, l: float) -> np.ndarray:
    """Inverse-CDF draws ``a + l*sin^2(pi*U/2)`` on ``[a, a+l]``."""
    if not l > 0:
        raise UsageError(f"arcsine width must be positive, got {l}")
    u = _generator(rng).random(n)
    return arcsine_inverse_cdf(u, a, l)


def arcsine_inverse_cdf(u, a: float, l: float):
    u = np.asarray(u, dtype=float)
    return a + l * np.sin(0.5 * np.pi * u) ** 2


def arcsine_pdf(w, a: float, l: float):
    """Arcsine density on ``(a, a+l)``; zero outside, error at the endpoints."""
    if not l > 0:
        raise UsageError(f"arcsine width must be positive, got {l}")
    w = np.asarray(w, dtype=float)
    hi = a + l
    if np.any((w == a) | (w == hi)):
        raise EndpointSingularityError(f"arcsine density is infinite at the endpoints {a} and {hi}")
    inside = (w > a) & (w < hi)
    prod = np.where(inside, (w - a) * (hi - w), 1.0)
    out = np.where(inside, 1.0 / (np.pi * np.sqrt(prod)), 0.0)
    return float(out) if out.ndim == 0 else out


def arcsine_cdf(w, a: float, l: float):
    """``(2/pi) * arcsin(sqrt((w-a)/l))``, clamped to 0 below ``a`` and 1 above ``a+l``."""
    if not l > 0:
        raise UsageError(f"arcsine width must be positive, got {l}")
    w = np.asarray(w, dtype=float)
    z = np.clip((w - a) / l, 0.0, 1.0)
    out = (2.0 / np.pi) * np.arcsin(np.sqrt(z))
    return float(out) if out.ndim == 0 else out


# textual form used in config files

_SPEC_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def format_weight_spec(spec: WeightSpec) -> str:
    k = spec.kind
    if k is WeightKind.UNIFORM or k is WeightKind.ARCSINE:
        return f"{k.value}({spec.lo!r},{spec.hi!r})"
    name = "gaussian" if k is WeightKind.GAUSSIAN_SAME_VARIANCE else "gaussian_same_range"
    return f"{name}(mean={spec.mean!r},var={spec.variance!r})"


def parse_weight_spec(text: str) -> WeightSpec:
    """Parse ``uniform(-0.5,0.5)``, ``gaussian(mean=0,var=0.0833)``, ``arcsine(lo,hi)``.

    Bare preset names (``uniform``, ``gaussian_same_variance``,
    ``gaussian_same_range``, ``arcsine``) give the canonical laws.
    """
    m = _SPEC_RE.match(text)
    if not m:
        raise UsageError(f"cannot parse weight law {text!r}")
    name, body = m.group(1), m.group(2)
    presets = {
        "uniform": WeightSpec.uniform,
        "arcsine": WeightSpec.arcsine,
        "gaussian": WeightSpec.gaussian_same_variance,
        "gaussian_same_variance": WeightSpec.gaussian_same_variance,
        "gaussian_same_range": WeightSpec.gaussian_same_range,
    }
    if name not in presets:
        raise UsageError(f"unknown weight law {name!r} in {text!r}")
    if body is None or not body.strip():
        return presets[name]()
    args, kwargs = [], {}
    try:
        for part in body.split(","):
            part = part.strip()
            if "=" in part:
                key, val = part.split("=", 1)
                kwargs[key.strip()] = float(val)
            else:
                args.append(float(part))
    except ValueError:
        raise UsageError(f"non-numeric parameter in weight law {text!r}") from None
    if name in ("uniform", "arcsine"):
        lo = kwargs.pop("lo", args[0] if len(args) > 0 else None)
        hi = kwargs.pop("hi", args[1] if len(args) > 1 else None)
        if lo is None or hi is None or kwargs or len(args) > 2:
            raise UsageError(f"{name} needs exactly (lo, hi): {text!r}")
        return WeightSpec(WeightKind(name), lo=lo, hi=hi)
    mean = kwargs.pop("mean", args[0] if len(args) > 0 else 0.0)
    var = kwargs.pop("var", kwargs.pop("variance", args[1] if len(args) > 1 else None))
    if var is None or kwargs or len(args) > 2:
        raise UsageError(f"{name} needs (mean=, var=): {text!r}")
    kind = WeightKind.GAUSSIAN_SAME_RANGE if name == "gaussian_same_range" else WeightKind.GAUSSIAN_SAME_VARIANCE
    return WeightSpec(kind, mean=mean, variance=var)
