from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from cmclab.constants import HERMITIAN_TOLERANCE, HYPERBOLOID_TOLERANCE
from cmclab.core.linalg import as_mat2c, dagger, det2, frobenius, trace2
from cmclab.utils.exceptions import DomainError, NotHermitianError, PreconditionError

# Hermitian model of H^3(-1): X = X*, <X, X> = -1, X11 > 0.
# Minkowski coordinates: X = [[x0 + x3, x1 + i x2], [x1 - i x2, x0 - x3]].


def _check_hermitian(x: np.ndarray) -> None:
    scale = np.maximum(1.0, frobenius(x))
    if np.any(frobenius(x - dagger(x)) > HERMITIAN_TOLERANCE * scale):
        raise NotHermitianError("Lorentz product requires Hermitian matrices")


def _adjugate(y: np.ndarray) -> np.ndarray:
    out = np.empty_like(y)
    out[..., 0, 0] = y[..., 1, 1]
    out[..., 1, 1] = y[..., 0, 0]
    out[..., 0, 1] = -y[..., 0, 1]
    out[..., 1, 0] = -y[..., 1, 0]
    return out


def lorentz_inner(x, y) -> np.ndarray:
    """Lorentz product ``<X, Y> = -1/2 tr(X sigma2 Y^T sigma2)`` of Hermitian matrices.

    ``sigma2 Y^T sigma2`` is the adjugate of Y, so ``<X, X> = -det X``.

    Args:
        x: Hermitian matrix or stack
        y: Hermitian matrix or stack

    Raises:
        NotHermitianError: If an input is not Hermitian

    Returns:
        np.ndarray: Real scalar(s)
    """
    x = as_mat2c(x)
    y = as_mat2c(y)
    _check_hermitian(x)
    _check_hermitian(y)
    return -0.5 * trace2(x @ _adjugate(y)).real


def act(g, x) -> np.ndarray:
    """Action ``g . X = g X g*`` of SL(2,C) on Hermitian matrices."""
    g = as_mat2c(g)
    x = as_mat2c(x)
    return g @ x @ dagger(g)


def to_minkowski(x) -> np.ndarray:
    """Minkowski coordinates ``(x0, x1, x2, x3)`` of a Hermitian matrix (last axis)."""
    x = as_mat2c(x)
    return np.stack(
        [
            (x[..., 0, 0] + x[..., 1, 1]).real / 2,
            x[..., 0, 1].real,
            x[..., 0, 1].imag,
            (x[..., 0, 0] - x[..., 1, 1]).real / 2,
        ],
        axis=-1,
    )


def from_minkowski(coords) -> np.ndarray:
    """Hermitian matrix of Minkowski coordinates ``(x0, x1, x2, x3)``."""
    c = np.asarray(coords, dtype=np.float64)
    x0, x1, x2, x3 = c[..., 0], c[..., 1], c[..., 2], c[..., 3]
    out = np.empty(c.shape[:-1] + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = x0 + x3
    out[..., 1, 1] = x0 - x3
    out[..., 0, 1] = x1 + 1j * x2
    out[..., 1, 0] = x1 - 1j * x2
    return out


def is_on_hyperboloid(x, tolerance: float = HYPERBOLOID_TOLERANCE) -> np.ndarray:
    """Whether X is Hermitian, has Lorentz norm -1 and ``Re X11 > 0``."""
    x = as_mat2c(x)
    scale = np.maximum(1.0, frobenius(x))
    hermitian = frobenius(x - dagger(x)) <= HERMITIAN_TOLERANCE * scale
    norm_ok = np.abs(det2(x).real - 1.0) <= tolerance
    return hermitian & norm_ok & (x[..., 0, 0].real > 0)


def to_ball(x) -> np.ndarray:
    """Poincare-ball coordinates ``b_i = x_i / (1 + x0)`` of points on the hyperboloid.

    Args:
        x: Hermitian matrix or stack on H^3

    Raises:
        DomainError: If ``x0 <= 0``

    Returns:
        np.ndarray: Ball coordinates with trailing axis of length 3
    """
    coords = to_minkowski(x)
    x0 = coords[..., 0]
    if np.any(x0 <= 0):
        raise DomainError("Point is not in the future sheet of the hyperboloid (x0 <= 0)")
    return coords[..., 1:] / (1.0 + x0)[..., None]


def hyperbolic_distance(x, y) -> np.ndarray:
    """Geodesic distance ``arccosh(-<X, Y>)`` between points of H^3."""
    inner = -lorentz_inner(x, y)
    return np.arccosh(np.maximum(inner, 1.0))


@dataclass(frozen=True)
class HermitianPoint:
    """A point of H^3 in the Hermitian model."""

    x: np.ndarray

    def __post_init__(self):
        x = as_mat2c(self.x)
        if x.shape != (2, 2):
            raise PreconditionError("HermitianPoint holds a single matrix")
        object.__setattr__(self, "x", x)
        if not is_on_hyperboloid(x):
            raise DomainError("Matrix is not a point of H^3")

    @property
    def minkowski(self) -> np.ndarray:
        return to_minkowski(self.x)

    def to_ball(self) -> BallPoint:
        return BallPoint(*to_ball(self.x))


@dataclass(frozen=True)
class BallPoint:
    """A point of the open Poincare ball."""

    b1: float
    b2: float
    b3: float

    def __post_init__(self):
        if np.linalg.norm(self.as_tuple()) >= 1.0:
            raise DomainError("Ball coordinates must have norm below 1")

    def as_tuple(self) -> Tuple[float, float, float]:
        return (float(self.b1), float(self.b2), float(self.b3))
