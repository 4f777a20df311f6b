from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from loguru import logger

from cmclab.constants import IMMERSION_DRIFT_TOLERANCE, METRIC_FLOOR, SIGMA3
from cmclab.core.hyperbolic import BallPoint, HermitianPoint, to_ball, to_minkowski
from cmclab.core.linalg import SU2, as_mat2c, dagger, det2, iwasawa_split_array
from cmclab.core.magnus import FrameGrid
from cmclab.utils.data_handling import write_csv
from cmclab.utils.exceptions import (
    DegenerateMetricError,
    DomainError,
    NotUnimodularError,
    PreconditionError,
    SingularMetricError,
)
from cmclab.utils.mesh_io import grid_triangles, triangle_areas, write_obj

MIN_GRID = 5
DEGENERATE_FACE_AREA = 1e-14
LORENTZ = np.array([-1.0, 1.0, 1.0, 1.0])

CSV_COLUMNS = (
    "x",
    "y",
    "b1",
    "b2",
    "b3",
    "g1",
    "g2",
    "g3",
    "e2u",
    "H_num",
    "ReQ",
    "ImQ",
    "conformal_defect",
)


def immerse(s) -> np.ndarray:
    """The immersion ``f = S S*`` into the Hermitian model.

    Args:
        s: Frame or stack of frames

    Raises:
        NotUnimodularError: If ``|det S - 1| > 1e-6``

    Returns:
        np.ndarray: Hermitian matrices on H^3
    """
    s = as_mat2c(s)
    drift = np.abs(det2(s) - 1)
    if np.any(drift > IMMERSION_DRIFT_TOLERANCE):
        raise NotUnimodularError(f"Frame determinant drift {np.max(drift):.3e} exceeds 1e-6")
    return s @ dagger(s)


def gauss_matrix(s) -> np.ndarray:
    """``-Phi sigma3 Phi*`` with Phi the unitary Iwasawa factor of S."""
    _, phi = iwasawa_split_array(s)
    return -(phi @ SIGMA3 @ dagger(phi))


def gauss_map(s) -> np.ndarray:
    """Adjusted normal Gauss map as a unit 3-vector of Pauli coordinates.

    Args:
        s: Frame or stack of frames

    Returns:
        np.ndarray: (g1, g2, g3) on the unit sphere (trailing axis)
    """
    g = gauss_matrix(s)
    return np.stack([g[..., 1, 0].real, g[..., 1, 0].imag, g[..., 0, 0].real], axis=-1)


def stereographic(g) -> np.ndarray:
    """Stereographic coordinate ``(g1 + i g2) / (1 - g3)`` from the north pole.

    Raises:
        DomainError: At the north pole
    """
    g = np.asarray(g, dtype=np.float64)
    denominator = 1 - g[..., 2]
    if np.any(denominator < 1e-12):
        raise DomainError("Stereographic projection is undefined at the north pole")
    return (g[..., 0] + 1j * g[..., 1]) / denominator


def h_from_lambda(lam: complex) -> float:
    """The mean curvature law ``H = (1 - |lam|^2) / (1 + |lam|^2)``.

    Args:
        lam (complex): Non-zero spectral parameter

    Raises:
        PreconditionError: If lam is zero

    Returns:
        float: H (in [0, 1) exactly when ``|lam| <= 1``)
    """
    if lam == 0:
        raise PreconditionError("Spectral parameter must be non-zero")
    s2 = abs(lam) ** 2
    return float((1 - s2) / (1 + s2))


def is_cmc_interpretable(lam: complex) -> bool:
    return 0 < abs(lam) <= 1


def realized_mean_curvature(lam: complex) -> float:
    """Mean curvature carried by ``f = S S*`` for the x-dependent seeds, ``(1 + |lam|^2) / (1 - |lam|^2)``.

    For these seeds ``f_z = (1 - conj(lam)) S A S*``; the resulting surface has a
    flat metric and principal curvatures with product 1.

    Args:
        lam (complex): Spectral parameter with ``0 < |lam| < 1``

    Raises:
        PreconditionError: If ``|lam|`` is 0 or at least 1 (``|lam| = 1`` gives a constant map)

    Returns:
        float: The realized H (> 1)
    """
    s2 = abs(lam) ** 2
    if not 0 < s2 < 1:
        raise PreconditionError(f"realized_mean_curvature requires 0 < |lam| < 1, got {lam}")
    return float((1 + s2) / (1 - s2))


def singular_radius(H: float) -> float:
    """Radius ``sqrt((1 + H) / (1 - H))`` of the singular circle of the Kokubu metric."""
    if not 0 <= H < 1:
        raise PreconditionError(f"Kokubu metric requires 0 <= H < 1, got {H}")
    return float(np.sqrt((1 + H) / (1 - H)))


def kokubu_metric(zeta, H: float) -> np.ndarray:
    """Coefficient of ``|dzeta|^2`` in the target metric of the Gauss map.

    ``4 / ((1 + |zeta|^2) ((1 - |zeta|^2) + H (1 + |zeta|^2)))``

    Args:
        zeta: Stereographic coordinate(s)
        H (float): Mean curvature in [0, 1)

    Raises:
        SingularMetricError: On or beyond the singular circle

    Returns:
        np.ndarray: Positive coefficient(s)
    """
    singular_radius(H)
    r2 = np.abs(np.asarray(zeta)) ** 2
    inner = (1 - r2) + H * (1 + r2)
    if np.any(inner <= 1e-10):
        raise SingularMetricError(
            f"Kokubu metric evaluated on or beyond its singular circle |zeta| = {singular_radius(H):.6g}"
        )
    return 4 / ((1 + r2) * inner)


@dataclass(frozen=True)
class SurfacePoint:
    """Immersion, unitary frame, Gauss map and ball coordinates at one point."""

    f: HermitianPoint
    phi: SU2
    gauss: np.ndarray
    ball: BallPoint


def surface_point(s) -> SurfacePoint:
    s = as_mat2c(s)
    f = immerse(s)
    _, phi = iwasawa_split_array(s)
    return SurfacePoint(
        f=HermitianPoint(f),
        phi=SU2(phi),
        gauss=gauss_map(s),
        ball=BallPoint(*to_ball(f)),
    )


@dataclass
class SurfaceGrid:
    """Surface data on the nodes of a frame grid, indexed [ix, iy]."""

    f: np.ndarray
    gauss: np.ndarray
    ball: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def shape(self):
        return self.f.shape[:2]

    def lorentz_norm_deviation(self) -> float:
        """Largest ``|<f, f> + 1|`` over the grid."""
        return float(np.max(np.abs(det2(self.f).real - 1)))


def build_surface(frame_grid: FrameGrid) -> SurfaceGrid:
    f = immerse(frame_grid.frames)
    return SurfaceGrid(
        f=f,
        gauss=gauss_map(frame_grid.frames),
        ball=to_ball(f),
        x=frame_grid.x,
        y=frame_grid.y,
    )


@dataclass
class ExtractedGeometry:
    """Finite-difference geometry of the immersion, NaN on the grid margin."""

    e2u: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    conformal_defect: np.ndarray
    normal: np.ndarray
    """Lorentz-unit normal in Minkowski coordinates, shape (nx, ny, 4)"""

    def interior(self, field: np.ndarray) -> np.ndarray:
        return field[1:-1, 1:-1]

    def summary(self) -> dict:
        h = self.interior(self.H)
        return {
            "H_median": float(np.median(h)),
            "H_min": float(np.min(h)),
            "H_max": float(np.max(h)),
            "e2u_min": float(np.min(self.interior(self.e2u))),
            "e2u_max": float(np.max(self.interior(self.e2u))),
            "conformal_defect_max": float(np.max(self.interior(self.conformal_defect))),
            "abs_Q_max": float(np.max(np.abs(self.interior(self.Q)))),
        }


def _lorentz(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(LORENTZ * a * b, axis=-1)


def _normal(f: np.ndarray, f_x: np.ndarray, f_y: np.ndarray) -> np.ndarray:
    # cofactor covector of the rows (e_k, f, f_x, f_y), raised with the Lorentz metric
    rows = np.stack([f, f_x, f_y], axis=-2)
    covector = np.empty(f.shape, dtype=np.float64)
    for k in range(4):
        minor = np.delete(rows, k, axis=-1)
        covector[..., k] = (-1) ** k * np.linalg.det(minor)
    return LORENTZ * covector


def extract_geometry(frame_grid: FrameGrid) -> ExtractedGeometry:
    """Conformal factor, mean curvature and Hopf coefficient of ``f = S S*`` by central differences.

    Conventions: ``<f_z, f_zbar> = e^{2u} / 2``, ``H = 2 e^{-2u} <f_zzbar, n>``,
    ``Q = 2 <f_zz, n>``, with n the Lorentz-unit normal orthogonal to f, f_x, f_y.
    The normal is oriented so that the median of H is non-negative.

    Args:
        frame_grid (FrameGrid): Integrated frames, at least 5x5

    Raises:
        PreconditionError: If the grid is smaller than 5x5
        DegenerateMetricError: If ``e^{2u} < 1e-12`` at an interior point

    Returns:
        ExtractedGeometry: The fields (NaN on the margin)
    """
    nx, ny = frame_grid.shape
    if nx < MIN_GRID or ny < MIN_GRID:
        raise PreconditionError(f"extract_geometry needs at least {MIN_GRID}x{MIN_GRID} nodes, got {nx}x{ny}")
    hx, hy = frame_grid.hx, frame_grid.hy
    m = to_minkowski(immerse(frame_grid.frames))

    c = m[1:-1, 1:-1]
    f_x = (m[2:, 1:-1] - m[:-2, 1:-1]) / (2 * hx)
    f_y = (m[1:-1, 2:] - m[1:-1, :-2]) / (2 * hy)
    f_xx = (m[2:, 1:-1] - 2 * c + m[:-2, 1:-1]) / hx**2
    f_yy = (m[1:-1, 2:] - 2 * c + m[1:-1, :-2]) / hy**2
    f_xy = (m[2:, 2:] - m[2:, :-2] - m[:-2, 2:] + m[:-2, :-2]) / (4 * hx * hy)

    E = _lorentz(f_x, f_x)
    F = _lorentz(f_x, f_y)
    G = _lorentz(f_y, f_y)
    e2u = (E + G) / 2
    if np.any(~(e2u >= METRIC_FLOOR)):
        logger.error(f"Induced metric degenerates (min e^2u = {np.nanmin(e2u):.3e})")
        raise DegenerateMetricError(
            f"Conformal factor below {METRIC_FLOOR:g}: the immersion is degenerate"
        )

    n = _normal(c, f_x, f_y)
    n = n / np.sqrt(_lorentz(n, n))[..., None]
    L = _lorentz(f_xx, n)
    M = _lorentz(f_xy, n)
    N = _lorentz(f_yy, n)
    H = (L + N) / (2 * e2u)
    Q = 0.5 * (L - N - 2j * M)
    if np.median(H) < 0:
        n, H, Q = -n, -H, -Q
    defect = np.abs(E - G - 2j * F) / (E + G)

    def pad(field, trailing=()):
        out = np.full((nx, ny) + trailing, np.nan, dtype=field.dtype)
        out[1:-1, 1:-1] = field
        return out

    return ExtractedGeometry(
        e2u=pad(e2u),
        H=pad(H),
        Q=pad(Q),
        conformal_defect=pad(defect),
        normal=pad(n, (4,)),
    )


@dataclass
class MeshExport:
    obj_path: Path
    csv_path: Optional[Path]
    vertex_count: int
    face_count: int
    degenerate_faces: int


def export_mesh(
    surface: SurfaceGrid,
    obj_path: Path | str,
    csv_path: Optional[Path | str] = None,
    geometry: Optional[ExtractedGeometry] = None,
) -> MeshExport:
    """Export the surface in Poincare-ball coordinates as an OBJ mesh with a CSV sidecar.

    Args:
        surface (SurfaceGrid): Surface on the grid nodes
        obj_path (Path | str): OBJ destination
        csv_path (Optional[Path | str], optional): Per-vertex sidecar destination. Defaults to None.
        geometry (Optional[ExtractedGeometry], optional): Extracted fields for the sidecar (NaN when missing). Defaults to None.

    Returns:
        MeshExport: Paths and counts, including the number of degenerate triangles
    """
    nx, ny = surface.shape
    vertices = surface.ball.reshape(-1, 3)
    faces = grid_triangles(nx, ny)
    degenerate = int(np.sum(triangle_areas(vertices, faces) < DEGENERATE_FACE_AREA))
    if degenerate:
        logger.warning(f"Mesh has {degenerate} degenerate faces out of {len(faces)}")
    write_obj(obj_path, vertices, faces, comment=f"cmclab surface {nx}x{ny}, degenerate faces: {degenerate}")

    if csv_path is not None:
        xx, yy = np.meshgrid(surface.x, surface.y, indexing="ij")
        if geometry is None:
            nan = np.full((nx, ny), np.nan)
            e2u, H, Q, defect = nan, nan, nan + 0j, nan
        else:
            e2u, H, Q, defect = geometry.e2u, geometry.H, geometry.Q, geometry.conformal_defect
        table = np.column_stack(
            [
                xx.ravel(),
                yy.ravel(),
                vertices,
                surface.gauss.reshape(-1, 3),
                e2u.ravel(),
                H.ravel(),
                Q.real.ravel(),
                Q.imag.ravel(),
                defect.ravel(),
            ]
        )
        write_csv(csv_path, CSV_COLUMNS, table)

    return MeshExport(
        obj_path=Path(obj_path),
        csv_path=None if csv_path is None else Path(csv_path),
        vertex_count=len(vertices),
        face_count=len(faces),
        degenerate_faces=degenerate,
    )
