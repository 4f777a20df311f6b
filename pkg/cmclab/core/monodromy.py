from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from cmclab.constants import DESCENT_TOLERANCE, IDENTITY, LOOP_CLOSURE_TOLERANCE
from cmclab.core.linalg import as_mat2c, dagger, det2, frobenius, trace2
from cmclab.core.magnus import IntegrationDiagnostics, IntegratorConfig, PathSpec, integrate_path
from cmclab.core.seeds import ConnectionField
from cmclab.utils.exceptions import IntegrationDivergedError, OpenLoopError

TRACE_REALITY_TOLERANCE = 1e-8


@dataclass
class HolonomyResult:
    """Holonomy of a loop; only trace and defect are independent of the basepoint."""

    rho: np.ndarray
    unitarity_defect: float
    trace: complex
    basepoint: complex
    diagnostics: Optional[IntegrationDiagnostics] = None

    @classmethod
    def from_matrix(
        cls,
        rho,
        basepoint: complex = 0j,
        diagnostics: Optional[IntegrationDiagnostics] = None,
    ) -> "HolonomyResult":
        rho = as_mat2c(rho)
        return cls(
            rho=rho,
            unitarity_defect=float(frobenius(rho @ dagger(rho) - IDENTITY)),
            trace=complex(trace2(rho)),
            basepoint=complex(basepoint),
            diagnostics=diagnostics,
        )


@dataclass
class UnitarityReport:
    """Descent criterion of a holonomy."""

    descends: bool
    """rho rho* = I within 1e-8"""
    defect: float
    possibly_unitarizable: bool
    """Real trace with |tr| <= 2, necessary for conjugacy into SU(2); not decided further"""


def rectangle_loop(z0: complex, width: float, height: float) -> list[complex]:
    """Counter-clockwise rectangle starting and ending at z0."""
    z0 = complex(z0)
    return [z0, z0 + width, z0 + width + 1j * height, z0 + 1j * height, z0]


def cylinder_loop(x: float, y0: float = 0.0, period: float = 2 * math.pi) -> list[complex]:
    """The loop ``y: y0 -> y0 + period`` at fixed x, on the universal cover of a cylinder."""
    return [complex(x, y0), complex(x, y0 + period)]


def reversed_loop(points: Sequence[complex]) -> list[complex]:
    return list(reversed([complex(p) for p in points]))


def holonomy(
    conn: ConnectionField,
    loop: Sequence[complex],
    cfg: Optional[IntegratorConfig] = None,
    period: complex = 0j,
) -> HolonomyResult:
    """Holonomy ``rho = S(end)`` of a loop with ``S(start) = I``.

    Args:
        conn (ConnectionField): The connection
        loop (Sequence[complex]): Polyline vertices
        cfg (Optional[IntegratorConfig], optional): Step control. Defaults to IntegratorConfig().
        period (complex, optional): Deck translation the loop closes up to (``2 pi i`` for a y-periodic cylinder). Defaults to 0.

    Raises:
        OpenLoopError: If ``end - start`` differs from ``period`` by more than 1e-12
        IntegrationDivergedError: If the holonomy drifts off SL(2,C)

    Returns:
        HolonomyResult: Holonomy, trace and unitarity defect
    """
    points = [complex(p) for p in loop]
    gap = abs(points[-1] - points[0] - complex(period))
    if gap > LOOP_CLOSURE_TOLERANCE:
        raise OpenLoopError(f"Loop does not close (gap {gap:.3e})")

    rho, diagnostics = integrate_path(conn, PathSpec.polyline(points), cfg)
    drift = abs(det2(rho) - 1)
    if drift > 1e-9:
        raise IntegrationDivergedError(f"Holonomy determinant drift {drift:.3e}")

    result = HolonomyResult.from_matrix(rho, basepoint=points[0], diagnostics=diagnostics)
    logger.debug(
        f"Holonomy at {points[0]}: trace {result.trace:.10g}, unitarity defect {result.unitarity_defect:.3e}"
    )
    return result


def unitarity_report(result: HolonomyResult) -> UnitarityReport:
    """Decide strict descent and flag traces compatible with SU(2).

    Args:
        result (HolonomyResult): A holonomy

    Returns:
        UnitarityReport: The descent decision
    """
    trace = result.trace
    possibly = (
        abs(trace.imag) <= TRACE_REALITY_TOLERANCE
        and abs(trace.real) <= 2 + TRACE_REALITY_TOLERANCE
    )
    return UnitarityReport(
        descends=result.unitarity_defect <= DESCENT_TOLERANCE,
        defect=result.unitarity_defect,
        possibly_unitarizable=bool(possibly),
    )


def holonomy_report(result: HolonomyResult) -> dict:
    """JSON-ready summary of a holonomy."""
    report = unitarity_report(result)
    return {
        "trace_re": result.trace.real,
        "trace_im": result.trace.imag,
        "unitarity_defect": report.defect,
        "descends": report.descends,
        "possibly_unitarizable": report.possibly_unitarizable,
        "basepoint": [result.basepoint.real, result.basepoint.imag],
    }
