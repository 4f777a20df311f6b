from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from cmclab.constants import R_PI_4, CoshGordonNormalization, g_theta
from cmclab.core.linalg import commutator, dagger, inverse_sl2
from cmclab.utils.exceptions import PreconditionError

MIN_GRID = 5


@dataclass
class GeometricData:
    """Conformal exponent, its derivatives, Hopf coefficient and mean curvature at a point (or on a grid)."""

    u: np.ndarray
    """Real conformal exponent, the induced metric is e^{2u}|dz|^2"""
    u_z: np.ndarray
    """Complex derivative of u"""
    Q: np.ndarray
    """Hopf differential coefficient"""
    H: np.ndarray
    """Mean curvature, 0 <= H < 1"""
    u_zbar: Optional[np.ndarray] = None
    """Defaults to conj(u_z), the only admissible value for real u"""

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.u_z = np.asarray(self.u_z, dtype=np.complex128)
        self.Q = np.asarray(self.Q, dtype=np.complex128)
        self.H = np.asarray(self.H, dtype=np.float64)
        if self.u_zbar is None:
            self.u_zbar = np.conj(self.u_z)
        else:
            self.u_zbar = np.asarray(self.u_zbar, dtype=np.complex128)
            if not np.allclose(self.u_zbar, np.conj(self.u_z), atol=1e-12):
                raise PreconditionError("u_zbar must equal conj(u_z) for real u")
        if np.any(self.H < 0) or np.any(self.H >= 1):
            raise PreconditionError("Mean curvature must satisfy 0 <= H < 1")


@dataclass(frozen=True)
class SpectralParam:
    """The spectral parameter lambda with modulus s and phase theta."""

    lam: complex

    def __post_init__(self):
        if self.lam == 0:
            raise PreconditionError("Spectral parameter must be non-zero")

    @property
    def s(self) -> float:
        return float(abs(self.lam))

    @property
    def theta(self) -> float:
        return float(np.angle(self.lam))

    @property
    def is_cmc_interpretable(self) -> bool:
        return self.s <= 1.0


def build_lax_pair(data: GeometricData) -> Tuple[np.ndarray, np.ndarray]:
    """Build the connection ``F^{-1} dF = A dz + B dzbar`` of a conformal immersion.

    Args:
        data (GeometricData): Pointwise or gridded geometric data

    Returns:
        Tuple[np.ndarray, np.ndarray]: Traceless (A, B) with shape ``u.shape + (2, 2)``
    """
    shape = np.broadcast(data.u, data.u_z, data.Q, data.H).shape
    eu = np.exp(data.u)
    a = np.zeros(shape + (2, 2), dtype=np.complex128)
    b = np.zeros(shape + (2, 2), dtype=np.complex128)

    a[..., 0, 0] = data.u_z / 2
    a[..., 0, 1] = eu * (1 + data.H) / 2
    a[..., 1, 0] = -data.Q / (4 * eu)
    a[..., 1, 1] = -data.u_z / 2

    b[..., 0, 0] = -data.u_zbar / 2
    b[..., 0, 1] = np.conj(data.Q) / (4 * eu)
    b[..., 1, 0] = eu * (1 - data.H) / 2
    b[..., 1, 1] = data.u_zbar / 2
    return a, b


def balanced_modulus(H: float) -> float:
    """Balanced spectral modulus ``s = sqrt((1 - H) / (1 + H))``.

    Args:
        H (float): Mean curvature in [0, 1)

    Raises:
        PreconditionError: If H is outside [0, 1)

    Returns:
        float: s in (0, 1]
    """
    if not 0 <= H < 1:
        raise PreconditionError(f"balanced_modulus requires 0 <= H < 1, got {H}")
    return float(np.sqrt((1 - H) / (1 + H)))


def h_from_modulus(s: float) -> float:
    """Inverse of :func:`balanced_modulus`, ``H = (1 - s^2) / (1 + s^2)``."""
    if not 0 < s <= 1:
        raise PreconditionError(f"Balanced modulus must lie in (0, 1], got {s}")
    return float((1 - s**2) / (1 + s**2))


def balance_gauge(
    A: np.ndarray, B: np.ndarray, s: float, theta: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Apply the balanced spectral deformation and the phase gauges to a Lax pair.

    The (1 + H) entry of A is scaled by s, the (1 - H) entry of B by 1/s, Q by
    ``e^{-2 i theta}``; the result is conjugated by ``g(e^{i theta})`` and then by
    the diagonal phase ``R_PI_4``. The metric-carrying entries end up in
    ``A'[1, 0]`` and ``B'[0, 1]``.

    Args:
        A (np.ndarray): dz part from :func:`build_lax_pair`
        B (np.ndarray): dzbar part from :func:`build_lax_pair`
        s (float): Spectral modulus
        theta (float): Phase angle in radians

    Returns:
        Tuple[np.ndarray, np.ndarray]: (A', B')
    """
    phase = np.exp(1j * theta)
    a = np.array(A, dtype=np.complex128, copy=True)
    b = np.array(B, dtype=np.complex128, copy=True)
    a[..., 0, 1] *= s
    b[..., 1, 0] /= s
    a[..., 1, 0] *= phase**-2
    b[..., 0, 1] *= np.conj(phase**-2)

    gauge = R_PI_4 @ g_theta(phase)
    gauge_inv = inverse_sl2(gauge)
    return gauge @ a @ gauge_inv, gauge @ b @ gauge_inv


# FINITE DIFFERENCES on grids indexed [ix, iy], z = x + i y


def _central(f: np.ndarray, h: float, axis: int, stride: int = 1) -> np.ndarray:
    out = np.full(f.shape, np.nan, dtype=np.result_type(f, np.float64))
    n = f.shape[axis]
    lo = [slice(None)] * f.ndim
    hi = [slice(None)] * f.ndim
    mid = [slice(None)] * f.ndim
    lo[axis] = slice(0, n - 2 * stride)
    hi[axis] = slice(2 * stride, n)
    mid[axis] = slice(stride, n - stride)
    out[tuple(mid)] = (f[tuple(hi)] - f[tuple(lo)]) / (2 * stride * h)
    return out


def _second(f: np.ndarray, h: float, axis: int, stride: int = 1) -> np.ndarray:
    out = np.full(f.shape, np.nan, dtype=np.result_type(f, np.float64))
    n = f.shape[axis]
    lo = [slice(None)] * f.ndim
    hi = [slice(None)] * f.ndim
    mid = [slice(None)] * f.ndim
    lo[axis] = slice(0, n - 2 * stride)
    hi[axis] = slice(2 * stride, n)
    mid[axis] = slice(stride, n - stride)
    out[tuple(mid)] = (f[tuple(hi)] - 2 * f[tuple(mid)] + f[tuple(lo)]) / (stride * h) ** 2
    return out


def _derivative(f, h, axis, order: int = 1, richardson: bool = False) -> np.ndarray:
    op = _central if order == 1 else _second
    d_h = op(f, h, axis)
    if not richardson:
        return d_h
    return (4 * d_h - op(f, h, axis, stride=2)) / 3


def d_dz(f, hx, hy, richardson=False) -> np.ndarray:
    """``d/dz = (d/dx - i d/dy) / 2`` on an [ix, iy] grid (NaN on the margin)."""
    return 0.5 * (
        _derivative(f, hx, 0, richardson=richardson)
        - 1j * _derivative(f, hy, 1, richardson=richardson)
    )


def d_dzbar(f, hx, hy, richardson=False) -> np.ndarray:
    """``d/dzbar = (d/dx + i d/dy) / 2`` on an [ix, iy] grid (NaN on the margin)."""
    return 0.5 * (
        _derivative(f, hx, 0, richardson=richardson)
        + 1j * _derivative(f, hy, 1, richardson=richardson)
    )


def laplace_quarter(f, hx, hy, richardson=False) -> np.ndarray:
    """``f_{z zbar} = (f_xx + f_yy) / 4``."""
    return 0.25 * (
        _derivative(f, hx, 0, order=2, richardson=richardson)
        + _derivative(f, hy, 1, order=2, richardson=richardson)
    )


def connection_residual_grid(
    A: np.ndarray, B: np.ndarray, hx: float, hy: float, richardson: bool = False
) -> np.ndarray:
    """Matrix flatness residual ``A_zbar - B_z - [A, B]`` of sampled connection fields.

    Args:
        A (np.ndarray): dz part, shape (nx, ny, 2, 2)
        B (np.ndarray): dzbar part, shape (nx, ny, 2, 2)
        hx (float): Grid spacing in x
        hy (float): Grid spacing in y
        richardson (bool, optional): Combine steps h and 2h. Defaults to False.

    Returns:
        np.ndarray: Residual field, NaN on the finite-difference margin
    """
    return (
        d_dzbar(A, hx, hy, richardson)
        - d_dz(B, hx, hy, richardson)
        - commutator(A, B)
    )


@dataclass
class GaussCodazziResidual:
    """Scalar and matrix residuals of the structure equations on a grid."""

    gauss: np.ndarray
    """u_zzbar - e^{2u}(1 - H^2)/4 - e^{-2u}|Q|^2/16"""
    codazzi: np.ndarray
    """Q_zbar - 2 e^{2u} H_z"""
    flatness: np.ndarray
    """A_zbar - B_z - [A, B], shape (nx, ny, 2, 2)"""
    u: np.ndarray

    def identity_defect(self) -> float:
        """Largest entrywise mismatch between the matrix residual and the scalar equations.

        Returns:
            float: Max over interior points (finite-difference error, O(h^2))
        """
        scale = np.exp(-self.u) / 4
        expected = np.empty_like(self.flatness)
        expected[..., 0, 0] = self.gauss
        expected[..., 1, 1] = -self.gauss
        expected[..., 1, 0] = -scale * self.codazzi
        expected[..., 0, 1] = -scale * np.conj(self.codazzi)
        return float(np.nanmax(np.abs(self.flatness - expected)))

    def max_abs(self) -> dict:
        return {
            "gauss": float(np.nanmax(np.abs(self.gauss))),
            "codazzi": float(np.nanmax(np.abs(self.codazzi))),
            "flatness": float(np.nanmax(np.abs(self.flatness))),
        }


def _check_grid(field: np.ndarray) -> None:
    if field.ndim != 2 or min(field.shape) < MIN_GRID:
        raise PreconditionError(
            f"Residuals need a grid of at least {MIN_GRID}x{MIN_GRID}, got {field.shape}"
        )


def gauss_codazzi_residual(
    u: np.ndarray,
    Q: np.ndarray,
    H: np.ndarray,
    hx: float,
    hy: Optional[float] = None,
    richardson: bool = False,
) -> GaussCodazziResidual:
    """Evaluate the structure-equation residuals of arbitrary sampled data.

    The data need not solve the equations; the matrix residual of the Lax pair
    built from the same samples must still match the scalar residuals up to
    finite-difference error.

    Args:
        u (np.ndarray): Conformal exponent on an [ix, iy] grid
        Q (np.ndarray): Hopf coefficient on the grid
        H (np.ndarray): Mean curvature on the grid (scalar broadcasts)
        hx (float): Spacing in x
        hy (Optional[float], optional): Spacing in y. Defaults to hx.
        richardson (bool, optional): Use the (4 D_h - D_2h)/3 combination. Defaults to False.

    Raises:
        PreconditionError: If the grid is smaller than 5x5

    Returns:
        GaussCodazziResidual: The residual fields (NaN on the margin)
    """
    hy = hx if hy is None else hy
    u = np.asarray(u, dtype=np.float64)
    _check_grid(u)
    Q = np.broadcast_to(np.asarray(Q, dtype=np.complex128), u.shape)
    H = np.broadcast_to(np.asarray(H, dtype=np.float64), u.shape)

    u_z = d_dz(u, hx, hy, richardson)
    e2u = np.exp(2 * u)
    gauss = (
        laplace_quarter(u, hx, hy, richardson)
        - e2u * (1 - H**2) / 4
        - np.abs(Q) ** 2 / (16 * e2u)
    )
    codazzi = d_dzbar(Q, hx, hy, richardson) - 2 * e2u * d_dz(H, hx, hy, richardson)

    # u_z is NaN on the margin, so the matrix residual loses one more ring
    a, b = build_lax_pair(GeometricData(u=u, u_z=u_z, Q=Q, H=H))
    flatness = connection_residual_grid(a, b, hx, hy, richardson)
    return GaussCodazziResidual(gauss=gauss, codazzi=codazzi, flatness=flatness, u=u)


def cosh_gordon_residual(
    u: np.ndarray,
    hx: float,
    hy: Optional[float],
    normalization: CoshGordonNormalization,
) -> np.ndarray:
    """The cosh-Gordon diagnostic of the minimal case H = 0, Q = 2.

    The two normalizations are different equations, so no default is taken.

    Args:
        u (np.ndarray): Conformal exponent on an [ix, iy] grid
        hx (float): Spacing in x
        hy (Optional[float]): Spacing in y (None means hx)
        normalization (CoshGordonNormalization): Which form of the equation to evaluate

    Returns:
        np.ndarray: The residual field (NaN on the margin)
    """
    hy = hx if hy is None else hy
    u = np.asarray(u, dtype=np.float64)
    _check_grid(u)
    u_zzbar = laplace_quarter(u, hx, hy)
    normalization = CoshGordonNormalization(normalization)
    if normalization == CoshGordonNormalization.GAUSS_EQUATION:
        return u_zzbar - np.cosh(2 * u) / 2
    return 4 * u_zzbar - np.cosh(2 * u)
