"""Dense kernels: products, ridge readout solve, spectral radius.

Matrices are plain 2-D float ``numpy`` arrays. The ridge solve goes through
the normal equations and a LAPACK Cholesky factorization so a singular Gram
matrix is reported with the failing pivot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import CannotScaleError, SingularMatrixError, UsageError

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10_000
# seed of the fixed starting block for the power iteration
_POWER_SEED = 0x5EED
_BLOCK = 16


def _matrix(a, what="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise UsageError(f"{what} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise UsageError(f"{what} has non-finite entries")
    return a


def matvec(a, v) -> np.ndarray:
    a = _matrix(a)
    v = np.asarray(v, dtype=float).reshape(-1)
    if a.shape[1] != v.size:
        raise UsageError(f"cannot multiply {a.shape} matrix by length-{v.size} vector")
    return a @ v


def matmul(a, b) -> np.ndarray:
    a, b = _matrix(a), _matrix(b)
    if a.shape[1] != b.shape[0]:
        raise UsageError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def ridge_solve(s, y, beta: float) -> np.ndarray:
    """Readout ``W = Y S^T (S S^T + beta I)^-1``.

    ``s`` holds one regressor column per sample (dim x T), ``y`` the targets
    (L x T). Minimizes ``||W S - Y||^2 + beta ||W||^2``.
    """
    s = _matrix(s, "regressors")
    y = _matrix(y, "targets")
    if s.shape[1] != y.shape[1]:
        raise UsageError(f"regressors have {s.shape[1]} samples but targets have {y.shape[1]}")
    if s.shape[1] < 1:
        raise UsageError("ridge_solve needs at least one sample")
    if not beta >= 0:
        raise UsageError(f"beta must be nonnegative, got {beta}")
    gram = s @ s.T
    gram[np.diag_indices_from(gram)] += beta
    rhs = s @ y.T
    c, info = lapack.dpotrf(gram, lower=1, clean=1, overwrite_a=1)
    if info > 0:
        raise SingularMatrixError(
            int(info),
            f"S S^T + beta I is singular or not positive definite at pivot {int(info)} "
            f"(beta={beta}); use beta > 0 or remove collinear regressors",
        )
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise UsageError(f"dpotrf rejected argument {-info}")
    w, info = lapack.dpotrs(c, rhs, lower=1)
    if info != 0:  # pragma: no cover
        raise UsageError(f"dpotrs rejected argument {-info}")
    return np.ascontiguousarray(w.T)


@dataclass(frozen=True)
class RadiusEstimate:
    value: float
    converged: bool
    iterations: int

    def __float__(self) -> float:
        return self.value


def spectral_radius_estimate(w, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> RadiusEstimate:
    """Block power iteration with Rayleigh-Ritz extraction.

    A block of orthonormal vectors is pushed through ``w`` and re-orthonormalized
    every step; the estimate is the largest modulus among the Ritz values of
    the projected block. A block (rather than one vector) handles complex
    dominant pairs and the tightly clustered leading moduli of dense random
    matrices. Converged once the estimate changes by less than ``tol * 1e-3``
    relative on two successive steps.
    """
    w = _matrix(w)
    n = w.shape[0]
    if w.shape[1] != n:
        raise UsageError(f"spectral radius needs a square matrix, got {w.shape}")
    if n <= _BLOCK:
        return RadiusEstimate(float(np.abs(np.linalg.eigvals(w)).max()), True, 0)
    gen = np.random.default_rng(_POWER_SEED)
    q, _ = np.linalg.qr(gen.standard_normal((n, _BLOCK)))
    prev = None
    calm = 0
    est = 0.0
    for it in range(1, max_iter + 1):
        z = w @ q
        est = float(np.abs(np.linalg.eigvals(q.T @ z)).max())
        if not np.any(z):
            return RadiusEstimate(0.0, True, it)
        q, _ = np.linalg.qr(z)
        if prev is not None and abs(est - prev) <= tol * 1e-3 * max(est, np.finfo(float).tiny):
            calm += 1
            if calm >= 2:
                return RadiusEstimate(est, True, it)
        else:
            calm = 0
        prev = est
    return RadiusEstimate(est, False, max_iter)


def spectral_radius(w, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    return spectral_radius_estimate(w, tol, max_iter).value


def scale_to_spectral_radius(w, rho: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    if not rho > 0:
        raise UsageError(f"target spectral radius must be positive, got {rho}")
    w = _matrix(w)
    current = spectral_radius(w, tol)
    if current == 0.0:
        raise CannotScaleError("matrix has zero spectral radius (all-zero or nilpotent); cannot scale")
    return w * (rho / current)
