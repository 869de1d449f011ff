"""Small dense linear-algebra kernel shared by the rest of the package.

Everything here operates on plain numpy arrays (row-major, float64 or
complex128).  Matrices in this package are tiny (at most 9x9 for the moment
systems, a few tens for truncated oscillators), so robustness is preferred
over speed: the matrix exponential uses scaling-and-squaring, linear solves
are LU with partial pivoting and an explicit condition guard, and the
fixed-step integrator is classical RK4.

All quantities are dimensionless (hbar = 1); rate-like entries carry units
of inverse time as documented by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.linalg import expm

#: Condition-number estimate above which a linear solve is refused.
CONDITION_LIMIT = 1e12

_UINT64_MASK = 0xFFFFFFFFFFFFFFFF


class NumericalError(RuntimeError):
    """A numerical operation could not produce a trustworthy result."""


class SingularMatrixError(NumericalError):
    """Singular or ill-conditioned matrix in a linear solve."""


class UnstableSystemError(NumericalError):
    """A stationary quantity was requested for a non-decaying system."""


def require_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D square array, rejecting anything else."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def require_finite(a: np.ndarray, name: str = "array") -> np.ndarray:
    a = np.asarray(a)
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def as_real_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite real square matrix as float64."""
    a = require_square(np.asarray(a, dtype=float), name)
    return require_finite(a, name)


def as_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite complex square matrix as complex128."""
    a = require_square(np.asarray(a, dtype=complex), name)
    if not (np.isfinite(a.real).all() and np.isfinite(a.imag).all()):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def mat_exp(a: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Matrix exponential exp(a*t) for a square real (or complex) matrix.

    Uses scaling-and-squaring with a Pade core, accurate to ~1e-12
    entrywise relative error at the sizes used here.
    """
    a = require_square(a, "exponent")
    require_finite(a, "exponent")
    if not np.isfinite(t):
        raise ValueError("time must be finite")
    return expm(a * t)


def solve_linear(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve a @ x = y with partial pivoting and a condition guard.

    Raises
    ------
    SingularMatrixError
        If the matrix is singular or its condition estimate exceeds
        ``CONDITION_LIMIT``.  Never returns silent garbage.
    """
    a = require_square(a, "coefficient matrix")
    y = np.asarray(y)
    if y.shape[0] != a.shape[0]:
        raise ValueError(f"right-hand side length {y.shape[0]} does not match "
                         f"matrix size {a.shape[0]}")
    try:
        cond = np.linalg.cond(a)
    except np.linalg.LinAlgError as exc:  # SVD failure on pathological input
        raise SingularMatrixError(f"condition estimate failed: {exc}") from exc
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularMatrixError(
            f"matrix is singular or ill-conditioned (cond ~ {cond:.3e})")
    try:
        return np.linalg.solve(a, y)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc


def eigenvalues(a: np.ndarray) -> np.ndarray:
    """Eigenvalues of a square matrix, as a complex array (unordered)."""
    a = require_square(a, "matrix")
    return np.linalg.eigvals(a)


def integrate_affine(a: np.ndarray, c: np.ndarray, x0: np.ndarray,
                     dt: float, n_steps: int) -> np.ndarray:
    """Integrate dx/dt = a @ x + c with classical fixed-step RK4.

    Returns the full path, shape ``(n_steps + 1, dim)``, including x0.
    Global error is O(dt^4).

    Raises
    ------
    NumericalError
        If the state overflows to non-finite values; the message names the
        failing step.
    """
    a = require_square(a, "drift matrix")
    c = np.asarray(c, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (a.shape[0],) or c.shape != (a.shape[0],):
        raise ValueError("dimension mismatch between matrix, offset and state")
    if dt <= 0:
        raise ValueError("dt must be positive")
    path = np.empty((n_steps + 1, x.size))
    path[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            k1 = a @ x + c
            k2 = a @ (x + 0.5 * dt * k1) + c
            k3 = a @ (x + 0.5 * dt * k2) + c
            k4 = a @ (x + dt * k3) + c
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.isfinite(x).all():
                raise NumericalError(f"state became non-finite at step {k + 1}")
            path[k + 1] = x
    return path


@dataclass(frozen=True)
class NoiseStream:
    """Deterministic Gaussian substream keyed by (base_seed, substream_index).

    Built on the counter-based Philox generator, so distinct substream
    indices are statistically independent by construction and the draw
    sequence for a given key is identical across runs, platforms and thread
    schedules.
    """

    base_seed: int
    substream_index: int = 0

    def generator(self) -> Generator:
        """A fresh generator positioned at the start of this substream."""
        key = np.array([self.base_seed & _UINT64_MASK,
                        self.substream_index & _UINT64_MASK], dtype=np.uint64)
        return Generator(Philox(key=key))

    def normal(self, shape) -> np.ndarray:
        """The first standard-normal draws of this substream."""
        return self.generator().standard_normal(shape)
