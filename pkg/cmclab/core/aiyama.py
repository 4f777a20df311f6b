from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.interpolate import RectBivariateSpline

from cmclab.constants import AA_DENOMINATOR_FLOOR, SIGMA3, NuPreset
from cmclab.core.hyperbolic import hyperbolic_distance
from cmclab.core.laxpair import balanced_modulus
from cmclab.core.linalg import commutator, dagger
from cmclab.core.magnus import FrameGrid, GridSpec, IntegratorConfig, integrate_grid
from cmclab.core.seeds import ConnectionField
from cmclab.core.surface import extract_geometry, gauss_map, immerse, stereographic
from cmclab.utils.data_handling import read_csv
from cmclab.utils.exceptions import (
    DegenerateMetricError,
    PreconditionError,
    SingularDenominatorError,
)

ComplexField = Callable[[np.ndarray], np.ndarray]


@dataclass
class AAData:
    """Gauss-map data ``nu`` with ``d/dz conj(nu)`` and the mean curvature."""

    nu: ComplexField
    nu_bar_z: ComplexField
    H: float

    def __post_init__(self):
        if not 0 <= self.H < 1:
            raise PreconditionError(f"AAData requires 0 <= H < 1, got {self.H}")


def nu_preset(preset: NuPreset, constant: complex = 0j) -> Tuple[ComplexField, ComplexField]:
    """Built-in maps nu with their ``conj(nu)_z``.

    Args:
        preset (NuPreset): Which map
        constant (complex, optional): Value of the constant preset. Defaults to 0.

    Returns:
        Tuple[ComplexField, ComplexField]: (nu, conj(nu)_z)
    """
    preset = NuPreset(preset)
    if preset == NuPreset.CONJ_HALF:
        return (lambda z: np.conj(z) / 2, lambda z: np.full(np.shape(z), 0.5 + 0j))
    if preset == NuPreset.HOLOMORPHIC_HALF:
        return (lambda z: np.asarray(z) / 2, lambda z: np.zeros(np.shape(z), dtype=np.complex128))
    return (
        lambda z: np.full(np.shape(z), complex(constant)),
        lambda z: np.zeros(np.shape(z), dtype=np.complex128),
    )


class SampledAAData(AAData):
    """Gauss-map data interpolated from samples on a tensor grid (bicubic splines)."""

    def __init__(self, x: np.ndarray, y: np.ndarray, nu: np.ndarray, H: float):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        nu = np.asarray(nu, dtype=np.complex128)
        if nu.shape != (len(x), len(y)):
            raise PreconditionError(f"Samples must have shape {(len(x), len(y))}, got {nu.shape}")
        if min(len(x), len(y)) < 4:
            raise PreconditionError("Bicubic interpolation needs at least 4 samples per direction")
        self.x, self.y, self.samples = x, y, nu
        self._re = RectBivariateSpline(x, y, nu.real)
        self._im = RectBivariateSpline(x, y, nu.imag)
        super().__init__(nu=self._nu, nu_bar_z=self._nu_bar_z, H=H)

    def _eval(self, z, dx: int = 0, dy: int = 0) -> np.ndarray:
        z = np.asarray(z, dtype=np.complex128)
        xs, ys = np.ravel(z.real), np.ravel(z.imag)
        value = self._re.ev(xs, ys, dx=dx, dy=dy) + 1j * self._im.ev(xs, ys, dx=dx, dy=dy)
        return value.reshape(z.shape)

    def _nu(self, z):
        return self._eval(z)

    def _nu_bar_z(self, z):
        # conj(nu)_z = (conj(nu_x) - i conj(nu_y)) / 2
        return 0.5 * (np.conj(self._eval(z, dx=1)) - 1j * np.conj(self._eval(z, dy=1)))

    @classmethod
    def from_csv(cls, path: Path | str, H: float) -> "SampledAAData":
        """Load samples from a CSV with columns ``x, y, re_nu, im_nu`` covering a full tensor grid."""
        columns, data = read_csv(path)
        index = {name.strip().lower(): k for k, name in enumerate(columns)}
        try:
            x, y = data[:, index["x"]], data[:, index["y"]]
            nu = data[:, index["re_nu"]] + 1j * data[:, index["im_nu"]]
        except KeyError as e:
            raise PreconditionError(f"nu CSV is missing column {e}")
        xs, ys = np.unique(x), np.unique(y)
        if len(xs) * len(ys) != len(x):
            raise PreconditionError("nu CSV samples do not form a full tensor grid")
        order = np.lexsort((y, x))
        return cls(xs, ys, nu[order].reshape(len(xs), len(ys)), H)


def nu_from_frame_grid(frame_grid: FrameGrid, H: float) -> SampledAAData:
    """Gauss map of integrated frames in stereographic coordinates, as interpolated AA data."""
    nu = stereographic(gauss_map(frame_grid.frames))
    return SampledAAData(frame_grid.x, frame_grid.y, nu, H)


def _nu_checked(data: AAData, z) -> np.ndarray:
    nu = np.asarray(data.nu(z), dtype=np.complex128)
    if np.any(np.abs(1 - np.abs(nu) ** 4) < AA_DENOMINATOR_FLOOR):
        raise SingularDenominatorError("1 - |nu|^4 vanishes: nu reaches the unit circle")
    return nu


def aa_omega(data: AAData, z) -> np.ndarray:
    """dz coefficient of ``omega = -2 conj(nu)_z / (sqrt(1 - H^2) (1 - |nu|^4)) dz``.

    Raises:
        SingularDenominatorError: If ``|1 - |nu|^4| < 1e-6``
    """
    nu = _nu_checked(data, z)
    return -2 * np.asarray(data.nu_bar_z(z)) / (np.sqrt(1 - data.H**2) * (1 - np.abs(nu) ** 4))


def aa_alpha(data: AAData, z) -> np.ndarray:
    """dz coefficient of ``alpha = [[-nu, nu^2], [-1, nu]] omega`` (rank one)."""
    nu = _nu_checked(data, z)
    omega = np.asarray(aa_omega(data, z))
    out = np.empty(np.shape(nu) + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = -nu
    out[..., 0, 1] = nu**2
    out[..., 1, 0] = -1
    out[..., 1, 1] = nu
    return omega[..., None, None] * out


def aa_tau(data: AAData, z) -> Tuple[np.ndarray, np.ndarray]:
    """dz and dzbar parts of ``tau = ((1+H) alpha + (1-H) alpha*) / 2 + sqrt(1-H^2) / 4 [sigma3, alpha + alpha*]``.

    alpha is a (1,0)-form and alpha* a (0,1)-form, so they split between the two parts.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (A_tau, B_tau), both traceless
    """
    H = data.H
    a = aa_alpha(data, z)
    a_star = dagger(a)
    weight = np.sqrt(1 - H**2) / 4
    a_tau = 0.5 * (1 + H) * a + weight * commutator(SIGMA3, a)
    b_tau = 0.5 * (1 - H) * a_star + weight * commutator(SIGMA3, a_star)
    return a_tau, b_tau


def aa_connection(data: AAData) -> ConnectionField:
    """The AA connection ``tau`` as a connection field (derivatives by finite differences)."""
    return ConnectionField(
        a=lambda z: aa_tau(data, z)[0],
        b=lambda z: aa_tau(data, z)[1],
        lam=balanced_modulus(data.H),
        name="aa_tau",
    )


def induced_metric_aa(data: AAData, z) -> np.ndarray:
    """Metric coefficient ``(1 + |nu|^2)^2 |omega|^2``; zero marks a non-immersed point."""
    nu = _nu_checked(data, z)
    metric = (1 + np.abs(nu) ** 2) ** 2 * np.abs(aa_omega(data, z)) ** 2
    if np.any(metric == 0):
        logger.warning("AA induced metric vanishes: the data does not define an immersion there")
    return metric


def aa_reconstruct(
    data: AAData,
    grid: GridSpec,
    cfg: Optional[IntegratorConfig] = None,
    threads: int = 1,
    strict: bool = True,
) -> Tuple[FrameGrid, np.ndarray]:
    """Integrate ``F^{-1} dF = tau`` over a grid and form ``f = F F*``.

    Args:
        data (AAData): Gauss-map data
        grid (GridSpec): Grid and initial frame
        cfg (Optional[IntegratorConfig], optional): Step control. Defaults to IntegratorConfig().
        threads (int, optional): Worker threads. Defaults to 1.
        strict (bool, optional): Raise on non-flat tau. Defaults to True.

    Raises:
        NonFlatConnectionError: If tau is not flat (nu is not admissible for this H)

    Returns:
        Tuple[FrameGrid, np.ndarray]: Frames and the immersion
    """
    frame_grid = integrate_grid(aa_connection(data), grid, cfg, threads=threads, strict=strict)
    return frame_grid, immerse(frame_grid.frames)


@dataclass
class AAComparison:
    """Outcome of rebuilding a rank-one surface from its Gauss map."""

    tau_flatness: float
    cell_defect: float
    max_distance: float
    """Largest hyperbolic distance between the two immersions on interior nodes"""
    metric_mismatch: Optional[float]
    tolerance: float

    @property
    def agrees(self) -> bool:
        return self.max_distance <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "tau_flatness": self.tau_flatness,
            "cell_defect": self.cell_defect,
            "max_distance": self.max_distance,
            "metric_mismatch": self.metric_mismatch,
            "tolerance": self.tolerance,
            "agrees": self.agrees,
        }


def aa_compare(
    frame_grid: FrameGrid,
    H: float,
    cfg: Optional[IntegratorConfig] = None,
    threads: int = 1,
    tolerance: float = 1e-4,
) -> AAComparison:
    """Rebuild an integrated surface from its Gauss map and compare the immersions.

    The AA frames start from the rank-one frame at the common basepoint.

    Args:
        frame_grid (FrameGrid): Frames of the rank-one surface
        H (float): Mean curvature used for the AA forms
        cfg (Optional[IntegratorConfig], optional): Step control. Defaults to IntegratorConfig().
        threads (int, optional): Worker threads. Defaults to 1.
        tolerance (float, optional): Agreement tolerance on the hyperbolic distance. Defaults to 1e-4.

    Returns:
        AAComparison: Flatness of tau, distances and metric mismatch
    """
    data = nu_from_frame_grid(frame_grid, H)
    x, y = frame_grid.x, frame_grid.y
    grid = GridSpec(
        x0=float(x[0]),
        x1=float(x[-1]),
        y0=float(y[0]),
        y1=float(y[-1]),
        nx=len(x),
        ny=len(y),
        initial_frame=frame_grid.frames[0, 0],
    )
    aa_grid, f_aa = aa_reconstruct(data, grid, cfg, threads=threads, strict=False)
    f_rank_one = immerse(frame_grid.frames)
    distance = hyperbolic_distance(f_rank_one[1:-1, 1:-1], f_aa[1:-1, 1:-1])

    mismatch = None
    try:
        e2u = extract_geometry(frame_grid).e2u[1:-1, 1:-1]
        xx, yy = np.meshgrid(x[1:-1], y[1:-1], indexing="ij")
        metric = induced_metric_aa(data, xx + 1j * yy)
        mismatch = float(np.max(np.abs(metric - e2u)))
    except (DegenerateMetricError, SingularDenominatorError, PreconditionError) as e:
        logger.warning(f"Metric comparison skipped: {e}")

    diag = aa_grid.diagnostics
    comparison = AAComparison(
        tau_flatness=float(diag.max_flatness_residual),
        cell_defect=float(diag.cell_defect),
        max_distance=float(np.max(distance)),
        metric_mismatch=mismatch,
        tolerance=tolerance,
    )
    if not comparison.agrees:
        logger.warning(
            f"Immersions differ by up to {comparison.max_distance:.3e} (tau flatness {comparison.tau_flatness:.3e})"
        )
    return comparison
