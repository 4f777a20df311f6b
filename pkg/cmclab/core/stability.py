from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from cmclab.utils.exceptions import PreconditionError


def jacobi_potential(u, Q, H) -> np.ndarray:
    """Potential ``2H^2 - e^{-4u}|Q|^2 / 2 - 2`` of the Jacobi operator ``-Laplace - V``.

    The constant -2 is the ambient Ricci term, so the potential never exceeds ``2H^2 - 2``.
    """
    u = np.asarray(u, dtype=np.float64)
    return 2 * np.square(H) - 0.5 * np.exp(-4 * u) * np.abs(Q) ** 2 - 2


def fourier_potential(u, Q, H, m: int) -> np.ndarray:
    """Mode potential ``V_m = e^{2u} (2H^2 - e^{-4u}|Q|^2 / 2 - 2) - m^2`` of rotationally symmetric data.

    Args:
        u: Conformal exponent sampled in s = log r
        Q: Hopf coefficient sampled in s
        H: Mean curvature
        m (int): Fourier mode

    Returns:
        np.ndarray: V_m on the samples
    """
    u = np.asarray(u, dtype=np.float64)
    return np.exp(2 * u) * jacobi_potential(u, Q, H) - m**2


def c_h(H: float) -> float:
    """Normalization constant ``C_H = 2(1 + H) - sqrt(1 - H^2)``."""
    if not 0 <= H < 1:
        raise PreconditionError(f"C_H requires 0 <= H < 1, got {H}")
    return float(2 * (1 + H) - np.sqrt(1 - H**2))


def aa_jacobi_potential(nu_abs, H: float) -> np.ndarray:
    """Jacobi potential in Gauss-map variables, ``2H^2 - 2 - C_H^2 / (2 (1 + |nu|^2)^2)``."""
    nu_abs = np.asarray(nu_abs, dtype=np.float64)
    return 2 * H**2 - 2 - 0.5 * c_h(H) ** 2 / (1 + nu_abs**2) ** 2


@dataclass
class ModeSpectrum:
    """Dirichlet spectrum of ``-d^2/ds^2 - V_m`` on a uniform grid."""

    m: int
    negative_eigenvalue_count: int
    smallest_eigenvalue: float
    eigenvalues: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "negative_eigenvalue_count": self.negative_eigenvalue_count,
            "smallest_eigenvalue": self.smallest_eigenvalue,
        }


def dirichlet_spectrum(V, s, m: int = 0) -> ModeSpectrum:
    """Eigenvalues of ``-d^2/ds^2 - V`` with Dirichlet conditions at both ends of s.

    The operator is discretized on the interior nodes with the 3-point stencil,
    which gives a symmetric tridiagonal matrix.

    Args:
        V: Potential sampled on s
        s: Uniform grid (at least 3 nodes)
        m (int, optional): Mode label for the report. Defaults to 0.

    Raises:
        PreconditionError: If the grid is too small or not uniform

    Returns:
        ModeSpectrum: Sorted eigenvalues and the count of negative ones
    """
    s = np.asarray(s, dtype=np.float64)
    V = np.broadcast_to(np.asarray(V, dtype=np.float64), s.shape)
    if s.ndim != 1 or len(s) < 3:
        raise PreconditionError("dirichlet_spectrum needs a 1-D grid with at least 3 nodes")
    steps = np.diff(s)
    h = steps[0]
    if h <= 0 or not np.allclose(steps, h, rtol=1e-9, atol=0):
        raise PreconditionError("dirichlet_spectrum needs a uniform increasing grid")

    interior = V[1:-1]
    diagonal = 2 / h**2 - interior
    off_diagonal = np.full(len(interior) - 1, -1 / h**2)
    eigenvalues = eigh_tridiagonal(diagonal, off_diagonal, eigvals_only=True)
    return ModeSpectrum(
        m=m,
        negative_eigenvalue_count=int(np.sum(eigenvalues < 0)),
        smallest_eigenvalue=float(eigenvalues[0]),
        eigenvalues=eigenvalues,
    )


@dataclass
class ModeAnalysis:
    s: np.ndarray
    potentials: Dict[int, np.ndarray]
    spectra: List[ModeSpectrum]

    def table(self) -> tuple[list[str], np.ndarray]:
        """Columns ``s, V_m...`` for CSV export."""
        modes = sorted(self.potentials)
        columns = ["s"] + [f"V_{m}" for m in modes]
        data = np.column_stack([self.s] + [self.potentials[m] for m in modes])
        return columns, data


def mode_analysis(s, u, Q, H: float, modes: Sequence[int]) -> ModeAnalysis:
    """Mode potentials and their Dirichlet spectra for a list of modes."""
    s = np.asarray(s, dtype=np.float64)
    potentials = {int(m): np.broadcast_to(fourier_potential(u, Q, H, m), s.shape).copy() for m in modes}
    spectra = [dirichlet_spectrum(potentials[m], s, m) for m in sorted(potentials)]
    return ModeAnalysis(s=s, potentials=potentials, spectra=spectra)
