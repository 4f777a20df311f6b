from __future__ import annotations

from typing import TYPE_CHECKING, Optional

from dacite import DaciteError

if TYPE_CHECKING:
    from cmclab.core.magnus import FrameGrid


class CMCLabException(Exception):
    """Base class of all exceptions raised by cmclab."""

    pass


# PRECONDITIONS


class PreconditionError(CMCLabException, ValueError):
    """Exception raised when the input of an operation violates its preconditions."""

    pass


class NotTracelessError(PreconditionError):
    """Exception raised when a matrix expected in sl(2,C) has non-zero trace."""

    pass


class NotUnimodularError(PreconditionError):
    """Exception raised when a matrix expected in SL(2,C) has determinant != 1."""

    pass


class NotHermitianError(PreconditionError):
    """Exception raised when a matrix expected to be Hermitian is not."""

    pass


class RankOneViolationError(PreconditionError):
    """Exception raised when seed data does not produce nilpotent coefficients."""

    pass


class DomainError(PreconditionError):
    """Exception raised when a point lies outside the domain of an operation."""

    pass


class PoleProximityError(DomainError):
    """Exception raised when a seed is evaluated too close to a pole of its profile."""

    pass


class OpenLoopError(PreconditionError):
    """Exception raised when a holonomy loop does not close."""

    pass


class SingularDenominatorError(PreconditionError):
    """Exception raised when the Aiyama-Akutagawa denominator 1 - |nu|^4 vanishes."""

    pass


class SingularMetricError(PreconditionError):
    """Exception raised when the Kokubu metric is evaluated on or beyond its singular circle."""

    pass


# NUMERICAL FAILURES


class NumericalFailure(CMCLabException, ArithmeticError):
    """Base class for failures of the computation itself."""

    pass


class IntegrationDivergedError(NumericalFailure):
    """Exception raised when the frame leaves SL(2,C) beyond repair."""

    pass


class StepUnderflowError(NumericalFailure):
    """Exception raised when the adaptive step size falls below its lower bound."""

    pass


class NonFlatConnectionError(NumericalFailure):
    """Exception raised when the connection data fails the flatness checks.

    Attributes:
        residual (float): The measured flatness residual or cell defect
        frame_grid (Optional[FrameGrid]): The partially validated frame grid, if one was computed
    """

    def __init__(
        self,
        message: str,
        residual: float = float("nan"),
        frame_grid: Optional["FrameGrid"] = None,
    ):
        super().__init__(message)
        self.residual = residual
        self.frame_grid = frame_grid


class DegenerateMetricError(NumericalFailure):
    """Exception raised when the induced metric vanishes and the immersion degenerates."""

    pass


# CONFIGURATION


class RunConfigException(DaciteError):
    """Exception raised when the run config file has issues."""

    pass
