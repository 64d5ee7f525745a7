"""Exception hierarchy shared by every module."""


class EsnError(Exception):
    """Base class for all library errors."""


class UsageError(EsnError, ValueError):
    """Bad arguments: mismatched lengths, invalid specs, out-of-range values."""


class DegenerateScalingError(UsageError):
    """A preprocessing statistic would divide by zero (constant training data)."""


class UndefinedReductionError(UsageError):
    """Error reduction against a zero baseline."""


class EndpointSingularityError(UsageError):
    """Density evaluated exactly at an endpoint where it diverges."""


class SingularMatrixError(EsnError, ArithmeticError):
    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is singular or not positive definite at pivot {pivot}")


class CannotScaleError(EsnError, ArithmeticError):
    """Spectral scaling requested for a matrix with zero spectral radius."""


class GeneratorDivergedError(EsnError, ArithmeticError):
    def __init__(self, step: int, value: float):
        self.step = step
        self.value = value
        super().__init__(f"generator diverged at integration step {step} (x={value!r})")


class DivergedStateError(EsnError, ArithmeticError):
    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"reservoir state diverged at step {step}")


class DivergedPredictionError(EsnError, ArithmeticError):
    def __init__(self, step: int, value: float | None = None):
        self.step = step
        self.value = value
        super().__init__(f"prediction diverged at step {step} (y={value!r})")


class UntrainedModelError(EsnError):
    """A readout is required but the model has no w_out."""


class MemberError(EsnError):
    """Failure inside one ensemble member; the original error is chained."""

    def __init__(self, member: int, cause: Exception):
        self.member = member
        self.cause = cause
        super().__init__(f"ensemble member {member}: {cause}")


class FormatError(EsnError, ValueError):
    """Malformed data, model, manifest or config file."""

    def __init__(self, message: str, path=None, line: int | None = None, key: str | None = None):
        self.path = path
        self.line = line
        self.key = key
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ConfigError(FormatError):
    """Invalid experiment configuration; ``key`` names the offending entry."""
