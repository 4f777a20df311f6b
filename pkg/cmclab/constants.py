from enum import Enum
from pathlib import Path

import numpy as np

# NAMED MATRICES

IDENTITY = np.eye(2, dtype=np.complex128)
E12 = np.array([[0, 1], [0, 0]], dtype=np.complex128)
E21 = np.array([[0, 0], [1, 0]], dtype=np.complex128)
SIGMA1 = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA2 = np.array([[0, 1j], [-1j, 0]], dtype=np.complex128)
"""Second Pauli matrix in the sign convention used by the Lorentz product."""
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=np.complex128)
R_PI_4 = np.diag([np.exp(-0.25j * np.pi), np.exp(0.25j * np.pi)]).astype(np.complex128)
"""Diagonal phase conjugation used by the balancing gauge."""


def g_theta(theta: complex) -> np.ndarray:
    """Off-diagonal gauge ``i [[0, theta^(1/2)], [theta^(-1/2), 0]]`` for a unit complex ``theta``.

    Args:
        theta (complex): Unit complex number

    Returns:
        np.ndarray: The 2x2 gauge matrix (det 1)
    """
    root = np.sqrt(complex(theta))
    return 1j * np.array([[0, root], [1 / root, 0]], dtype=np.complex128)


# TOLERANCES

TRACE_TOLERANCE = 1e-12
DET_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-12
HYPERBOLOID_TOLERANCE = 1e-8
SERIES_THRESHOLD = 1e-6
NILPOTENT_TOLERANCE = 1e-12
LOOP_CLOSURE_TOLERANCE = 1e-12
DESCENT_TOLERANCE = 1e-8
METRIC_FLOOR = 1e-12
AA_DENOMINATOR_FLOOR = 1e-6
IMMERSION_DRIFT_TOLERANCE = 1e-6

FLATNESS_WARN = 1e-6
"""Sampled flatness above this is logged as a warning before integration."""
FLATNESS_ERROR = 1e-3
"""Sampled flatness above this aborts grid integration."""
FLATNESS_THRESHOLD = 1e-6
"""Default pass threshold of the ``flatness`` command."""
SURFACE_H_TOLERANCE = 2e-4
AA_AGREEMENT_TOLERANCE = 1e-4

DEFAULT_FD_STEP = 1e-4
POLE_MARGIN = 0.05
CELL_DEFECT_SAMPLES = 10
CELL_DEFECT_SEED = 0
MAX_GRID_NODES = 4096
OBJ_SIGNIFICANT_DIGITS = 9

# ENUMS


class SeedVariant(str, Enum):
    """Available rank-one seed variants."""

    TAN = "tan"
    """Closed-form tangent profile, depends on x only."""
    ODE = "ode"
    """Profile obtained by integrating the flatness ODE."""
    NILPOTENT = "nilpotent"
    """Fixed nilpotent direction with a polynomial coefficient (not flat in general)."""


class FlatnessMode(str, Enum):
    """How the flatness residual derivatives are obtained."""

    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite_difference"


class CoshGordonNormalization(str, Enum):
    """Normalization of the cosh-Gordon diagnostic."""

    GAUSS_EQUATION = "gauss_equation"
    """``u_zzbar - cosh(2u) / 2``, as implied by the Gauss equation at H=0, |Q|=2."""
    LAPLACIAN = "laplacian"
    """``Laplace u - cosh(2u)`` with ``Laplace = 4 d_z d_zbar``."""


class NuPreset(str, Enum):
    """Preset maps nu for the Aiyama-Akutagawa representation."""

    CONJ_HALF = "conj_half"
    """nu = conj(z) / 2"""
    HOLOMORPHIC_HALF = "holomorphic_half"
    """nu = z / 2"""
    CONSTANT = "constant"
    """nu = const"""


class Command(str, Enum):
    """Available CLI subcommands."""

    FLATNESS = "flatness"
    SURFACE = "surface"
    MONODROMY = "monodromy"
    JACOBI = "jacobi"
    AA_COMPARE = "aa-compare"


# EXIT CODES

EXIT_SUCCESS = 0
EXIT_NUMERICAL_FAILURE = 1
EXIT_CONFIG_ERROR = 2

# FILE NAMES

THREADS_ENV_VAR = "CMC_THREADS"

OUTPUT_FILES = {
    Command.FLATNESS: ("flatness_report.json",),
    Command.SURFACE: ("mesh.obj", "geometry.csv", "report.json"),
    Command.MONODROMY: ("monodromy_report.json",),
    Command.JACOBI: ("jacobi_potential.csv", "jacobi_report.json"),
    Command.AA_COMPARE: ("aa_report.json",),
}

DATA_DIR = Path(__file__).parent / "data"
CONFIGS_DIR = DATA_DIR / "configs"
