from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from numpy.polynomial import polynomial
from scipy.integrate import solve_ivp

from cmclab.constants import (
    DEFAULT_FD_STEP,
    E21,
    NILPOTENT_TOLERANCE,
    POLE_MARGIN,
    FlatnessMode,
    SeedVariant,
)
from cmclab.core.linalg import commutator, dagger, det2, frobenius
from cmclab.utils.exceptions import (
    DomainError,
    PoleProximityError,
    PreconditionError,
    RankOneViolationError,
)

if TYPE_CHECKING:
    from cmclab.utils.run_config import SeedConfig

MatrixField = Callable[[np.ndarray], np.ndarray]


def _profile_matrix(g: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``rho [[-g, g^2], [-1, g]]``, nilpotent for every g."""
    out = np.empty(np.shape(g) + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = -g
    out[..., 0, 1] = g**2
    out[..., 1, 0] = -1
    out[..., 1, 1] = g
    return np.asarray(rho)[..., None, None] * out


def _profile_matrix_dx(g, rho, g_x, rho_x) -> np.ndarray:
    out = _profile_matrix(g, rho_x)
    out[..., 0, 0] += -rho * g_x
    out[..., 0, 1] += 2 * rho * g * g_x
    out[..., 1, 1] += rho * g_x
    return out


def ode_rhs(g, rho, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """Right-hand side of the flatness ODE for x-dependent profiles.

    Args:
        g: Profile g(x)
        rho: Amplitude rho(x)
        lam (float): Real spectral parameter

    Returns:
        Tuple[np.ndarray, np.ndarray]: (g', rho')
    """
    k = lam / (1 + lam)
    one_g2 = 1 + np.square(g)
    g_dot = -2 * k * rho * one_g2**2
    rho_dot = 4 * k * g * np.square(rho) * one_g2
    return g_dot, rho_dot


def _pole_distance(phase: np.ndarray) -> np.ndarray:
    offset = np.mod(np.asarray(phase) - np.pi / 2, np.pi)
    return np.minimum(offset, np.pi - offset)


def tan_solution(
    C: float, delta: float, lam: float, x, pole_margin: float = POLE_MARGIN
) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form solution ``g = tan(-2 lam C x / (1 + lam) + delta)``, ``rho = C / (1 + g^2)``.

    Args:
        C (float): Amplitude constant
        delta (float): Phase offset
        lam (float): Real spectral parameter
        x: Evaluation point(s)
        pole_margin (float, optional): Minimal distance (radians) of the phase to a pole of tan. Defaults to 0.05.

    Raises:
        PoleProximityError: If the phase is within the margin of a pole

    Returns:
        Tuple[np.ndarray, np.ndarray]: (g, rho)
    """
    phase = -2 * lam * C * np.asarray(x, dtype=np.float64) / (1 + lam) + delta
    if np.any(_pole_distance(phase) < pole_margin):
        raise PoleProximityError(
            f"tan profile evaluated within {pole_margin} rad of a pole"
        )
    g = np.tan(phase)
    return g, C / (1 + g**2)


class RankOneSeed(ABC):
    """Base class of the (1,0)-form seeds ``eta = A(z) dz`` with ``det A = 0``."""

    variant: Optional[SeedVariant] = None

    @abstractmethod
    def coefficient(self, z: np.ndarray) -> np.ndarray:
        """The dz coefficient at z (vectorized over z)."""
        pass

    def coefficient_zbar(self, z: np.ndarray) -> np.ndarray:
        """Closed-form ``d/dzbar`` of the coefficient.

        Raises:
            PreconditionError: If the variant has no closed-form derivative
        """
        raise PreconditionError(
            f"{self.__class__.__name__} provides no analytic derivative, use finite differences"
        )

    @property
    def has_analytic_derivative(self) -> bool:
        return False


class GenericOuterProduct(RankOneSeed):
    """Seed ``v w^T dz`` from two vector fields with ``w^T v = 0``."""

    def __init__(self, v: Callable, w: Callable):
        self.v = v
        self.w = w

    def coefficient(self, z):
        v = np.asarray(self.v(z), dtype=np.complex128)
        w = np.asarray(self.w(z), dtype=np.complex128)
        pairing = np.sum(w * v, axis=-1)
        if np.any(np.abs(pairing) > NILPOTENT_TOLERANCE * np.maximum(1.0, np.linalg.norm(v, axis=-1) * np.linalg.norm(w, axis=-1))):
            raise RankOneViolationError("Outer-product seed requires w^T v = 0")
        return v[..., :, None] * w[..., None, :]


class TanProfile(RankOneSeed):
    """Closed-form x-dependent seed ``rho(x) [[-g, g^2], [-1, g]]`` with the tan profile."""

    variant = SeedVariant.TAN

    def __init__(
        self, C: float, delta: float, lam: float, pole_margin: float = POLE_MARGIN
    ):
        if C == 0:
            raise PreconditionError("TanProfile requires C != 0")
        if not lam > 0:
            raise PreconditionError("TanProfile requires a real lambda > 0")
        self.C = float(C)
        self.delta = float(delta)
        self.lam = float(lam)
        self.pole_margin = float(pole_margin)

    @property
    def slope(self) -> float:
        return 2 * self.lam * self.C / (1 + self.lam)

    def profile(self, x) -> Tuple[np.ndarray, np.ndarray]:
        return tan_solution(self.C, self.delta, self.lam, x, self.pole_margin)

    def profile_dx(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """Closed-form (g', rho') of the tan profile."""
        g, rho = self.profile(x)
        g_x = -self.slope * (1 + g**2)
        rho_x = -2 * self.C * g * g_x / (1 + g**2) ** 2
        return g_x, rho_x

    def coefficient(self, z):
        g, rho = self.profile(np.real(z))
        return _profile_matrix(g, rho)

    def coefficient_zbar(self, z):
        x = np.real(z)
        g, rho = self.profile(x)
        g_x, rho_x = self.profile_dx(x)
        return 0.5 * _profile_matrix_dx(g, rho, g_x, rho_x)

    @property
    def has_analytic_derivative(self) -> bool:
        return True

    @property
    def pole_free_interval(self) -> Tuple[float, float]:
        """The maximal x-interval around x = 0 (if pole free) that respects the pole margin."""
        # phase(x) = delta - slope * x lies in (-pi/2 + m, pi/2 - m) shifted to contain delta
        center = np.round(self.delta / np.pi) * np.pi
        lo_phase = center - np.pi / 2 + self.pole_margin
        hi_phase = center + np.pi / 2 - self.pole_margin
        ends = sorted(((self.delta - lo_phase) / self.slope, (self.delta - hi_phase) / self.slope))
        return ends[0], ends[1]


class OdeProfile(RankOneSeed):
    """Seed from the numerically integrated flatness ODE.

    The trajectory is computed once on construction (dense output of an
    explicit 8th-order Runge-Kutta pair) and is read-only afterwards, so the
    seed may be evaluated from several threads.
    """

    variant = SeedVariant.ODE

    def __init__(
        self,
        g0: float,
        rho0: float,
        lam: float,
        x_start: float = 0.0,
        x_end: float = 1.0,
        rtol: float = 1e-12,
        atol: float = 1e-12,
    ):
        if rho0 == 0:
            raise PreconditionError("OdeProfile requires rho0 != 0")
        if not lam > 0:
            raise PreconditionError("OdeProfile requires a real lambda > 0")
        if x_start == x_end:
            raise PreconditionError("OdeProfile requires a non-empty interval")
        self.g0 = float(g0)
        self.rho0 = float(rho0)
        self.lam = float(lam)
        self.x_start = float(x_start)
        self.x_end = float(x_end)

        solution = solve_ivp(
            lambda _, y: np.array(ode_rhs(y[0], y[1], self.lam)),
            (self.x_start, self.x_end),
            np.array([self.g0, self.rho0]),
            method="DOP853",
            rtol=rtol,
            atol=atol,
            dense_output=True,
        )
        if not solution.success:
            raise DomainError(f"Flatness ODE could not be integrated: {solution.message}")
        self._trajectory = solution.sol
        logger.debug(
            f"Integrated flatness ODE on [{self.x_start}, {self.x_end}] in {solution.nfev} evaluations"
        )

    @property
    def domain(self) -> Tuple[float, float]:
        return min(self.x_start, self.x_end), max(self.x_start, self.x_end)

    def profile(self, x) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        lo, hi = self.domain
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise DomainError(f"OdeProfile evaluated outside [{lo}, {hi}]")
        y = self._trajectory(np.ravel(x))
        return y[0].reshape(x.shape), y[1].reshape(x.shape)

    def coefficient(self, z):
        g, rho = self.profile(np.real(z))
        return _profile_matrix(g, rho)

    def coefficient_zbar(self, z):
        g, rho = self.profile(np.real(z))
        g_x, rho_x = ode_rhs(g, rho, self.lam)
        return 0.5 * _profile_matrix_dx(g, rho, g_x, rho_x)

    @property
    def has_analytic_derivative(self) -> bool:
        return True


class FixedNilpotent(RankOneSeed):
    """Seed ``a(z) E21 dz`` with a polynomial coefficient ``a`` (holomorphic)."""

    variant = SeedVariant.NILPOTENT

    def __init__(self, coefficients: Sequence[complex]):
        if len(coefficients) == 0:
            raise PreconditionError("FixedNilpotent needs at least one coefficient")
        self.coefficients = np.asarray(coefficients, dtype=np.complex128)

    def a(self, z) -> np.ndarray:
        return polynomial.polyval(np.asarray(z, dtype=np.complex128), self.coefficients)

    def coefficient(self, z):
        return np.asarray(self.a(z))[..., None, None] * E21

    def coefficient_zbar(self, z):
        return np.zeros(np.shape(z) + (2, 2), dtype=np.complex128)

    @property
    def has_analytic_derivative(self) -> bool:
        return True


def seed_coefficient(seed: RankOneSeed, z) -> np.ndarray:
    """Evaluate a seed and check that the coefficient is nilpotent.

    Args:
        seed (RankOneSeed): The seed
        z: Evaluation point(s)

    Raises:
        RankOneViolationError: If ``det A`` is not zero within tolerance
        PoleProximityError: If a tan profile is evaluated near a pole
        DomainError: If z lies outside the seed domain

    Returns:
        np.ndarray: The dz coefficient
    """
    coeff = seed.coefficient(z)
    scale = np.maximum(1.0, frobenius(coeff) ** 2)
    if np.any(np.abs(det2(coeff)) > NILPOTENT_TOLERANCE * scale):
        raise RankOneViolationError("Seed coefficient is not rank one (det != 0)")
    return coeff


@dataclass
class ConnectionField:
    """A connection ``Omega = A dz + B dzbar`` on a region of the plane.

    When ``b`` is omitted the connection is the rank-one type ``B = -lam A*``.
    Derivative callables enable the analytic flatness residual.
    """

    a: MatrixField
    lam: complex
    b: Optional[MatrixField] = None
    a_zbar: Optional[MatrixField] = None
    b_z: Optional[MatrixField] = None
    name: str = "connection"
    seed: Optional[RankOneSeed] = field(default=None, repr=False)

    def A(self, z) -> np.ndarray:
        return np.asarray(self.a(np.asarray(z, dtype=np.complex128)), dtype=np.complex128)

    def B(self, z) -> np.ndarray:
        if self.b is not None:
            return np.asarray(self.b(np.asarray(z, dtype=np.complex128)), dtype=np.complex128)
        return -self.lam * dagger(self.A(z))

    @property
    def has_analytic_derivative(self) -> bool:
        if self.a_zbar is None:
            return False
        return self.b is None or self.b_z is not None

    def A_zbar(self, z) -> np.ndarray:
        if self.a_zbar is None:
            raise PreconditionError(f"{self.name} has no analytic derivative")
        return np.asarray(self.a_zbar(np.asarray(z, dtype=np.complex128)))

    def B_z(self, z) -> np.ndarray:
        if self.b is None:
            # (A*)_z = (A_zbar)*
            return -self.lam * dagger(self.A_zbar(z))
        if self.b_z is None:
            raise PreconditionError(f"{self.name} has no analytic derivative")
        return np.asarray(self.b_z(np.asarray(z, dtype=np.complex128)))

    def cmc_report(self) -> dict:
        """Mean-curvature interpretation of the spectral parameter."""
        # local import, surface imports this module
        from cmclab.core.surface import h_from_lambda, realized_mean_curvature

        s = abs(self.lam)
        report = {"lambda_re": float(np.real(self.lam)), "lambda_im": float(np.imag(self.lam)), "modulus": s}
        if s > 1:
            report["regime"] = "outside the 0 <= H < 1 regime"
            return report
        report["regime"] = "cmc"
        report["H_target"] = h_from_lambda(self.lam)
        # |lam| = 1 gives an su(2) connection and a constant immersion
        report["H_realized"] = realized_mean_curvature(self.lam) if s < 1 else None
        return report


def connection_from_seed(seed: RankOneSeed, lam: complex) -> ConnectionField:
    """Form the rank-one connection ``Omega = eta - lam eta*``.

    Args:
        seed (RankOneSeed): The (1,0)-form data
        lam (complex): Non-zero spectral parameter

    Raises:
        PreconditionError: If lam is zero

    Returns:
        ConnectionField: Connection with ``B = -lam A*``
    """
    if lam == 0:
        raise PreconditionError("Spectral parameter must be non-zero")
    seed_lam = getattr(seed, "lam", None)
    if seed_lam is not None and not np.isclose(seed_lam, lam):
        logger.warning(
            f"Seed profile was built for lambda={seed_lam} but the connection uses lambda={lam}; it will not be flat"
        )
    return ConnectionField(
        a=lambda z: seed_coefficient(seed, z),
        lam=complex(lam),
        a_zbar=seed.coefficient_zbar if seed.has_analytic_derivative else None,
        name=seed.__class__.__name__,
        seed=seed,
    )


def _fd_residual(conn: ConnectionField, z: np.ndarray, h: float) -> np.ndarray:
    a_x = (conn.A(z + h) - conn.A(z - h)) / (2 * h)
    a_y = (conn.A(z + 1j * h) - conn.A(z - 1j * h)) / (2 * h)
    b_x = (conn.B(z + h) - conn.B(z - h)) / (2 * h)
    b_y = (conn.B(z + 1j * h) - conn.B(z - 1j * h)) / (2 * h)
    a_zbar = 0.5 * (a_x + 1j * a_y)
    b_z = 0.5 * (b_x - 1j * b_y)
    return a_zbar - b_z - commutator(conn.A(z), conn.B(z))


def flatness_residual(
    conn: ConnectionField,
    z,
    h: float = DEFAULT_FD_STEP,
    mode: FlatnessMode = FlatnessMode.ANALYTIC,
) -> np.ndarray:
    """The flatness residual ``A_zbar - B_z - [A, B]`` at z.

    Args:
        conn (ConnectionField): The connection
        z: Evaluation point(s)
        h (float, optional): Finite-difference step. Defaults to 1e-4.
        mode (FlatnessMode, optional): Analytic derivatives or a 4-point central stencil. Defaults to analytic.

    Raises:
        PreconditionError: If analytic mode is requested without closed-form derivatives
        DomainError: If the stencil leaves the domain of the connection

    Returns:
        np.ndarray: Residual matrix (or stack)
    """
    z = np.asarray(z, dtype=np.complex128)
    if FlatnessMode(mode) == FlatnessMode.FINITE_DIFFERENCE:
        return _fd_residual(conn, z, h)
    return conn.A_zbar(z) - conn.B_z(z) - commutator(conn.A(z), conn.B(z))


@dataclass
class FlatnessCertificate:
    """Finite-difference flatness residual with an estimate of its truncation error."""

    residual: np.ndarray
    residual_norm: np.ndarray
    error_estimate: np.ndarray
    h: float

    @property
    def certified_bound(self) -> np.ndarray:
        """Residual norm plus its error bar."""
        return self.residual_norm + self.error_estimate


def flatness_certificate(
    conn: ConnectionField, z, h: float = DEFAULT_FD_STEP
) -> FlatnessCertificate:
    """Finite-difference residual with a Richardson error bar from steps h and 2h.

    Args:
        conn (ConnectionField): The connection
        z: Evaluation point(s)
        h (float, optional): Finite-difference step. Defaults to 1e-4.

    Returns:
        FlatnessCertificate: Residual at step h and the estimated truncation error
    """
    r_h = flatness_residual(conn, z, h, FlatnessMode.FINITE_DIFFERENCE)
    r_2h = flatness_residual(conn, z, 2 * h, FlatnessMode.FINITE_DIFFERENCE)
    return FlatnessCertificate(
        residual=r_h,
        residual_norm=frobenius(r_h),
        error_estimate=frobenius(r_h - r_2h) / 3,
        h=h,
    )


def seed_from_config(config: "SeedConfig") -> RankOneSeed:
    """Build a seed from the ``seed`` block of a run config.

    Args:
        config (SeedConfig): Seed configuration

    Raises:
        PreconditionError: If the variant parameters are invalid

    Returns:
        RankOneSeed: The seed
    """
    variant = SeedVariant(config.variant)
    lam = config.lam.value
    if variant in (SeedVariant.TAN, SeedVariant.ODE) and (lam.imag != 0 or lam.real <= 0):
        raise PreconditionError(f"{variant.value} seeds require a real lambda > 0, got {lam}")
    if variant == SeedVariant.TAN:
        return TanProfile(C=config.C, delta=config.delta, lam=lam.real, pole_margin=config.pole_margin)
    if variant == SeedVariant.ODE:
        return OdeProfile(
            g0=config.g0,
            rho0=config.rho0,
            lam=lam.real,
            x_start=config.x_start,
            x_end=config.x_end,
        )
    return FixedNilpotent([c.value for c in config.coefficients])
