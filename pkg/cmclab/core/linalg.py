from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from cmclab.constants import (
    DET_TOLERANCE,
    IDENTITY,
    SERIES_THRESHOLD,
    TRACE_TOLERANCE,
)
from cmclab.utils.exceptions import (
    IntegrationDivergedError,
    NotTracelessError,
    NotUnimodularError,
    PreconditionError,
)

# All helpers accept a single (2, 2) matrix or a stack of shape (..., 2, 2).


def as_mat2c(m) -> np.ndarray:
    """Convert input to a complex128 array with trailing shape (2, 2).

    Args:
        m: Array-like matrix or stack of matrices

    Raises:
        PreconditionError: If the trailing shape is not (2, 2)

    Returns:
        np.ndarray: complex128 array
    """
    arr = np.asarray(m, dtype=np.complex128)
    if arr.shape[-2:] != (2, 2):
        raise PreconditionError(f"Expected trailing shape (2, 2), got {arr.shape}")
    return arr


def det2(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def trace2(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    return m[..., 0, 0] + m[..., 1, 1]


def dagger(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(np.asarray(m), -1, -2))


def frobenius(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(np.asarray(m)) ** 2, axis=(-2, -1)))


def commutator(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Matrix commutator ``XY - YX``.

    Args:
        x (np.ndarray): Left matrix (or stack)
        y (np.ndarray): Right matrix (or stack)

    Returns:
        np.ndarray: The commutator
    """
    return x @ y - y @ x


def inverse_sl2(m: np.ndarray) -> np.ndarray:
    """Inverse of a unimodular matrix via its adjugate."""
    m = np.asarray(m)
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out / det2(m)[..., None, None]


def exp_traceless(x) -> np.ndarray:
    """Closed-form exponential of a traceless 2x2 matrix.

    Uses ``exp X = cosh(s) I + sinh(s)/s X`` with ``s = sqrt(tr(X^2)/2)``. Both
    coefficients are even in ``s``, so the principal root is used without loss.
    For ``|s| < 1e-6`` the truncated Taylor series of both coefficients is used.

    Args:
        x: Traceless matrix or stack of traceless matrices

    Raises:
        NotTracelessError: If any input has ``|tr X| > 1e-12 * max(1, ||X||)``

    Returns:
        np.ndarray: ``exp(X)`` with determinant 1
    """
    x = as_mat2c(x)
    scale = np.maximum(1.0, frobenius(x))
    tr = trace2(x)
    if np.any(np.abs(tr) > TRACE_TOLERANCE * scale):
        raise NotTracelessError(
            f"exp_traceless requires a traceless matrix, got |tr X| = {np.max(np.abs(tr)):.3e}"
        )
    # for traceless X, tr(X^2)/2 = -det X
    sigma_sq = -det2(x)
    sigma = np.sqrt(sigma_sq)
    small = np.abs(sigma) < SERIES_THRESHOLD

    with np.errstate(divide="ignore", invalid="ignore"):
        cosh_coeff = np.where(
            small, 1 + sigma_sq / 2 + sigma_sq**2 / 24, np.cosh(sigma)
        )
        sinhc_coeff = np.where(
            small, 1 + sigma_sq / 6 + sigma_sq**2 / 120, np.sinh(sigma) / sigma
        )
    return cosh_coeff[..., None, None] * IDENTITY + sinhc_coeff[..., None, None] * x


def renormalize_det(s) -> np.ndarray:
    """Project a matrix near SL(2,C) back onto it by dividing by ``sqrt(det S)``.

    The square root with positive real part is used.

    Args:
        s: Matrix or stack with determinant close to 1

    Raises:
        IntegrationDivergedError: If ``Re det S <= 0``
        PreconditionError: If ``|det S - 1| >= 0.5``

    Returns:
        np.ndarray: Unimodular matrix
    """
    s = as_mat2c(s)
    d = det2(s)
    if np.any(d.real <= 0):
        raise IntegrationDivergedError(
            f"Frame determinant left the right half plane (min Re det = {np.min(d.real):.3e})"
        )
    if np.any(np.abs(d - 1) >= 0.5):
        raise PreconditionError(
            f"renormalize_det requires |det S - 1| < 0.5, got {np.max(np.abs(d - 1)):.3e}"
        )
    return s / np.sqrt(d)[..., None, None]


def _check_unimodular(f: np.ndarray, tolerance: float = DET_TOLERANCE) -> None:
    d = det2(f)
    if np.any(~np.isfinite(d)) or np.any(np.abs(d - 1) > tolerance):
        raise NotUnimodularError(
            f"Expected det = 1 within {tolerance:.0e}, got deviation {np.nanmax(np.abs(d - 1)):.3e}"
        )


def iwasawa_split_array(f) -> Tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`iwasawa_split`.

    Args:
        f: Unimodular matrix or stack

    Raises:
        NotUnimodularError: If ``|det F - 1| > 1e-10`` or F is singular

    Returns:
        Tuple[np.ndarray, np.ndarray]: (Fs, Phi) with F = Fs Phi, Fs upper triangular with positive diagonal, Phi in SU(2)
    """
    f = as_mat2c(f)
    _check_unimodular(f)
    row_norm = np.sqrt(np.abs(f[..., 1, 0]) ** 2 + np.abs(f[..., 1, 1]) ** 2)
    a = 1.0 / row_norm

    phi = np.empty_like(f)
    phi[..., 1, 0] = a * f[..., 1, 0]
    phi[..., 1, 1] = a * f[..., 1, 1]
    phi[..., 0, 0] = np.conj(phi[..., 1, 1])
    phi[..., 0, 1] = -np.conj(phi[..., 1, 0])

    fs = f @ dagger(phi)
    # clean the entries fixed by the normalization
    fs[..., 0, 0] = a
    fs[..., 1, 0] = 0
    fs[..., 1, 1] = 1.0 / a
    return fs, phi


@dataclass(frozen=True)
class SL2C:
    """A frame in SL(2,C)."""

    m: np.ndarray
    det_tolerance: float = DET_TOLERANCE

    def __post_init__(self):
        object.__setattr__(self, "m", as_mat2c(self.m))
        _check_unimodular(self.m, self.det_tolerance)


@dataclass(frozen=True)
class SU2:
    """A unitary frame (the adjusted unitary frame of an Iwasawa split)."""

    m: np.ndarray

    def __post_init__(self):
        m = as_mat2c(self.m)
        object.__setattr__(self, "m", m)
        if frobenius(m @ dagger(m) - IDENTITY) > DET_TOLERANCE:
            raise PreconditionError("Matrix is not unitary within 1e-10")
        _check_unimodular(m)


@dataclass(frozen=True)
class UpperTriangularPositive:
    """The matrix ``[[a, w], [0, 1/a]]`` with ``a > 0``."""

    a: float
    w: complex

    def __post_init__(self):
        if not self.a > 0:
            raise PreconditionError(f"Diagonal entry must be positive, got {self.a}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.w], [0, 1.0 / self.a]], dtype=np.complex128)


def iwasawa_split(f) -> Tuple[UpperTriangularPositive, SU2]:
    """Split a frame as ``F = Fs Phi`` with Fs upper triangular (positive diagonal) and Phi unitary.

    The split normalizes the second row of F to unit length, which yields the
    second row of Phi; the first row is then completed so that Phi is in SU(2).

    Args:
        f: A single 2x2 matrix in SL(2,C)

    Raises:
        NotUnimodularError: If ``|det F - 1| > 1e-10`` or F is singular

    Returns:
        Tuple[UpperTriangularPositive, SU2]: The unique factors
    """
    f = as_mat2c(f)
    if f.shape != (2, 2):
        raise PreconditionError("iwasawa_split takes a single matrix, use iwasawa_split_array for stacks")
    fs, phi = iwasawa_split_array(f)
    return UpperTriangularPositive(a=float(fs[0, 0].real), w=complex(fs[0, 1])), SU2(phi)


def polar_split(f) -> Tuple[np.ndarray, np.ndarray]:
    """Polar split ``F = P U`` with P positive Hermitian and U in SU(2).

    For unimodular F, ``P = (F F* + I) / sqrt(tr(F F*) + 2)``.

    Args:
        f: Unimodular matrix or stack

    Raises:
        NotUnimodularError: If ``|det F - 1| > 1e-10``

    Returns:
        Tuple[np.ndarray, np.ndarray]: (P, U)
    """
    f = as_mat2c(f)
    _check_unimodular(f)
    m = f @ dagger(f)
    p = (m + IDENTITY) / np.sqrt(trace2(m).real + 2.0)[..., None, None]
    u = inverse_sl2(p) @ f
    return p, u


def random_su2(rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Sample unitary frames from a normalized complex Gaussian pair."""
    shape = () if size is None else (size,)
    v = rng.normal(size=shape + (4,))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    p = v[..., 0] + 1j * v[..., 1]
    q = v[..., 2] + 1j * v[..., 3]
    out = np.empty(shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = p
    out[..., 0, 1] = q
    out[..., 1, 0] = -np.conj(q)
    out[..., 1, 1] = np.conj(p)
    return out


def random_sl2c(
    rng: np.random.Generator, size: Optional[int] = None, scale: float = 1.0
) -> np.ndarray:
    """Sample frames as exponentials of random traceless matrices."""
    shape = () if size is None else (size,)
    x = scale * (rng.normal(size=shape + (2, 2)) + 1j * rng.normal(size=shape + (2, 2)))
    tr = trace2(x)
    x[..., 0, 0] -= tr / 2
    x[..., 1, 1] -= tr / 2
    return exp_traceless(x)
