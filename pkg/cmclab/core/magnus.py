from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from rich.console import Console
from rich.progress import Progress

from cmclab.constants import (
    CELL_DEFECT_SAMPLES,
    CELL_DEFECT_SEED,
    DEFAULT_FD_STEP,
    FLATNESS_ERROR,
    FLATNESS_WARN,
    IDENTITY,
    FlatnessMode,
)
from cmclab.core.linalg import as_mat2c, commutator, det2, exp_traceless, frobenius, renormalize_det
from cmclab.core.seeds import ConnectionField, flatness_residual
from cmclab.utils.exceptions import (
    IntegrationDivergedError,
    NonFlatConnectionError,
    PreconditionError,
    StepUnderflowError,
)

# Gauss-Legendre nodes on [0, 1]
_NODES = np.array([0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6])
_COMMUTATOR_WEIGHT = math.sqrt(3) / 12

CELL_DEFECT_WARN = 1e-7


@dataclass
class IntegratorConfig:
    """Step control of the Magnus integrator."""

    atol: float = 1e-10
    """Local error tolerance, the estimate is normalized by it"""
    h0: float = 1e-2
    """Initial step length"""
    hmin: float = 1e-9
    hmax: float = 0.1
    safety: float = 0.9
    renormalize_every: int = 1
    """Renormalize the determinant every this many accepted steps"""
    fixed_step: Optional[float] = None
    """If set, take equal steps of at most this length without error control"""
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (0 < self.hmin <= self.h0 <= self.hmax):
            raise PreconditionError("IntegratorConfig requires 0 < hmin <= h0 <= hmax")
        if self.atol <= 0:
            raise PreconditionError("atol must be positive")
        if self.renormalize_every < 1:
            raise PreconditionError("renormalize_every must be a positive integer")
        if self.fixed_step is not None and self.fixed_step <= 0:
            raise PreconditionError("fixed_step must be positive")


@dataclass
class IntegrationDiagnostics:
    """Counters and extrema gathered while integrating."""

    steps_accepted: int = 0
    steps_rejected: int = 0
    max_local_error: float = 0.0
    max_det_drift: float = 0.0
    total_renormalization: float = 0.0
    max_flatness_residual: Optional[float] = None
    cell_defect: Optional[float] = None

    def merge(self, other: "IntegrationDiagnostics") -> None:
        self.steps_accepted += other.steps_accepted
        self.steps_rejected += other.steps_rejected
        self.max_local_error = max(self.max_local_error, other.max_local_error)
        self.max_det_drift = max(self.max_det_drift, other.max_det_drift)
        self.total_renormalization += other.total_renormalization

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PathSpec:
    """A polyline in the parameter plane with the frame at its first point."""

    points: Sequence[complex]
    initial_frame: np.ndarray = field(default_factory=lambda: IDENTITY.copy())

    def __post_init__(self):
        self.points = [complex(p) for p in self.points]
        if len(self.points) < 2:
            raise PreconditionError("A path needs at least two points")
        self.initial_frame = as_mat2c(self.initial_frame)

    @classmethod
    def segment(cls, z0: complex, z1: complex, initial_frame=None) -> "PathSpec":
        return cls([z0, z1], IDENTITY.copy() if initial_frame is None else initial_frame)

    @classmethod
    def polyline(cls, points: Sequence[complex], initial_frame=None) -> "PathSpec":
        return cls(list(points), IDENTITY.copy() if initial_frame is None else initial_frame)

    def reversed(self) -> "PathSpec":
        return PathSpec(list(reversed(self.points)), self.initial_frame)

    @property
    def length(self) -> float:
        return float(sum(abs(b - a) for a, b in zip(self.points[:-1], self.points[1:])))


@dataclass
class GridSpec:
    """A rectangular grid ``[x0, x1] x [y0, y1]`` with nx by ny nodes."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int
    initial_frame: np.ndarray = field(default_factory=lambda: IDENTITY.copy())

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise PreconditionError("A grid needs at least 2 nodes per direction")
        if not all(np.isfinite([self.x0, self.x1, self.y0, self.y1])):
            raise PreconditionError("Grid bounds must be finite")
        if self.x0 == self.x1 or self.y0 == self.y1:
            raise PreconditionError("Grid must have non-zero extent")
        self.initial_frame = as_mat2c(self.initial_frame)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x0, self.x1, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y0, self.y1, self.ny)

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / (self.ny - 1)

    @property
    def z(self) -> np.ndarray:
        """Complex node coordinates indexed [ix, iy]."""
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        return xx + 1j * yy


@dataclass
class FrameGrid:
    """Frames integrated over a grid, indexed [ix, iy]."""

    frames: np.ndarray
    x: np.ndarray
    y: np.ndarray
    det_drift: np.ndarray
    diagnostics: IntegrationDiagnostics

    @property
    def hx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def hy(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.frames.shape[:2]


def _node_values(conn: ConnectionField, z0: complex, dz: complex) -> Tuple[np.ndarray, np.ndarray]:
    nodes = z0 + _NODES * dz
    a = conn.A(nodes)
    b = conn.B(nodes)
    omega = a * dz + b * np.conj(dz)
    return omega[0], omega[1]


def magnus_step(conn: ConnectionField, z0: complex, z1: complex) -> np.ndarray:
    """One fourth-order Magnus step of ``S^{-1} dS = A dz + B dzbar`` along ``[z0, z1]``.

    The node values carry the step, ``Omega_i = A(z_i) dz + B(z_i) conj(dz)``,
    and the frame is updated on the right, ``S(z1) = S(z0) exp(sigma)`` with
    ``sigma = (Omega_1 + Omega_2) / 2 + sqrt(3) / 12 [Omega_1, Omega_2]``.

    Args:
        conn (ConnectionField): The connection
        z0 (complex): Start of the step
        z1 (complex): End of the step

    Returns:
        np.ndarray: The unimodular increment ``exp(sigma)``
    """
    dz = complex(z1) - complex(z0)
    omega_1, omega_2 = _node_values(conn, complex(z0), dz)
    sigma = 0.5 * (omega_1 + omega_2) + _COMMUTATOR_WEIGHT * commutator(omega_1, omega_2)
    return exp_traceless(sigma)


def _renormalize(s: np.ndarray, diag: IntegrationDiagnostics) -> np.ndarray:
    drift = abs(det2(s) - 1)
    diag.max_det_drift = max(diag.max_det_drift, float(drift))
    diag.total_renormalization += float(drift)
    return renormalize_det(s)


def _integrate_segment(
    conn: ConnectionField,
    s: np.ndarray,
    z0: complex,
    z1: complex,
    cfg: IntegratorConfig,
    diag: IntegrationDiagnostics,
) -> np.ndarray:
    length = abs(z1 - z0)
    if length == 0:
        return s
    direction = (z1 - z0) / length

    if cfg.fixed_step is not None:
        n = max(1, math.ceil(length / cfg.fixed_step - 1e-12))
        for k in range(n):
            a = z0 + direction * length * k / n
            b = z0 + direction * length * (k + 1) / n
            s = s @ magnus_step(conn, a, b)
            diag.steps_accepted += 1
            if diag.steps_accepted % cfg.renormalize_every == 0:
                s = _renormalize(s, diag)
        return s

    t = 0.0
    h = min(cfg.h0, cfg.hmax)
    since_renormalization = 0
    while t < length:
        if diag.steps_accepted + diag.steps_rejected >= cfg.max_steps:
            raise IntegrationDivergedError(f"Exceeded {cfg.max_steps} Magnus steps")
        step = min(h, length - t)
        za = z0 + direction * t
        zm = z0 + direction * (t + step / 2)
        zb = z0 + direction * (t + step) if t + step < length else z1

        full = magnus_step(conn, za, zb)
        half = magnus_step(conn, za, zm) @ magnus_step(conn, zm, zb)
        local_error = float(frobenius(full - half))
        eps = local_error / cfg.atol

        if eps <= 1:
            s = s @ half
            t += step
            diag.steps_accepted += 1
            diag.max_local_error = max(diag.max_local_error, local_error)
            since_renormalization += 1
            if since_renormalization >= cfg.renormalize_every:
                s = _renormalize(s, diag)
                since_renormalization = 0
        else:
            diag.steps_rejected += 1
            if step <= cfg.hmin:
                logger.error(f"Step size underflow at z={za:.6g} (local error {local_error:.3e})")
                raise StepUnderflowError(
                    f"Step size fell below hmin={cfg.hmin:g} at z={za:.6g}"
                )

        factor = 2.0 if eps == 0 else min(2.0, max(0.5, cfg.safety * eps ** (-0.25)))
        h = min(cfg.hmax, max(cfg.hmin, step * factor))

    if since_renormalization:
        s = _renormalize(s, diag)
    return s


def integrate_path(
    conn: ConnectionField,
    path: PathSpec,
    cfg: Optional[IntegratorConfig] = None,
) -> Tuple[np.ndarray, IntegrationDiagnostics]:
    """Integrate ``S^{-1} dS = Omega`` along a polyline.

    Step control compares one full step with two half steps; the local error
    ``eps = ||E_full - E_half||_F / atol`` decides acceptance (``eps <= 1``)
    and the next step ``h * min(2, max(1/2, safety * eps^(-1/4)))``.

    Args:
        conn (ConnectionField): The connection
        path (PathSpec): The polyline and the initial frame
        cfg (Optional[IntegratorConfig], optional): Step control. Defaults to IntegratorConfig().

    Raises:
        StepUnderflowError: If a step is rejected at the minimal step size
        IntegrationDivergedError: If the frame leaves SL(2,C) or the step budget is exhausted

    Returns:
        Tuple[np.ndarray, IntegrationDiagnostics]: The frame at the end point and the diagnostics
    """
    cfg = cfg or IntegratorConfig()
    diag = IntegrationDiagnostics()
    s = path.initial_frame.copy()
    for z0, z1 in zip(path.points[:-1], path.points[1:]):
        s = _integrate_segment(conn, s, z0, z1, cfg, diag)
    return s, diag


def sample_flatness(conn: ConnectionField, grid: GridSpec) -> float:
    """Largest Frobenius norm of the flatness residual over the grid nodes.

    Uses closed-form derivatives when available, otherwise a central stencil on
    the interior nodes.
    """
    z = grid.z
    if conn.has_analytic_derivative:
        residual = flatness_residual(conn, z, mode=FlatnessMode.ANALYTIC)
    else:
        interior = z[1:-1, 1:-1] if min(z.shape) > 2 else z
        step = min(DEFAULT_FD_STEP, grid.hx / 4, grid.hy / 4)
        residual = flatness_residual(conn, interior, h=step, mode=FlatnessMode.FINITE_DIFFERENCE)
    return float(np.max(frobenius(residual)))


def _cell_defect(
    conn: ConnectionField,
    grid: GridSpec,
    frames: np.ndarray,
    cfg: IntegratorConfig,
) -> float:
    cells = [(i, j) for i in range(1, grid.nx) for j in range(1, grid.ny)]
    interior = [(i, j) for i, j in cells if i < grid.nx - 1 and j < grid.ny - 1] or cells
    rng = np.random.default_rng(CELL_DEFECT_SEED)
    count = min(len(interior), max(CELL_DEFECT_SAMPLES, 1))
    picks = rng.choice(len(interior), size=count, replace=False)

    x, y = grid.x, grid.y
    base = complex(x[0], y[0])
    defect = 0.0
    for k in sorted(picks):
        i, j = interior[k]
        # column-major: along the bottom row first, then up the column
        path = PathSpec([base, complex(x[i], y[0]), complex(x[i], y[j])], grid.initial_frame)
        s_col, _ = integrate_path(conn, path, cfg)
        defect = max(defect, float(frobenius(s_col - frames[i, j])))
    return defect


def integrate_grid(
    conn: ConnectionField,
    grid: GridSpec,
    cfg: Optional[IntegratorConfig] = None,
    threads: int = 1,
    strict: bool = True,
    show_progress: bool = False,
) -> FrameGrid:
    """Integrate frames over a rectangular grid.

    The left column is integrated first, then every row from its left node.
    Rows are independent, so they may run in a thread pool; the result does
    not depend on the number of threads. Flatness is sampled beforehand and the
    row-major frames are cross-checked against column-major re-integration on
    a seeded random subset of interior cells.

    Args:
        conn (ConnectionField): The connection
        grid (GridSpec): The grid and the frame at ``(x0, y0)``
        cfg (Optional[IntegratorConfig], optional): Step control. Defaults to IntegratorConfig().
        threads (int, optional): Worker threads for the rows. Defaults to 1.
        strict (bool, optional): Raise on non-flat data. Defaults to True.
        show_progress (bool, optional): Show a progress bar on stderr. Defaults to False.

    Raises:
        NonFlatConnectionError: If ``strict`` and the sampled flatness residual exceeds 1e-3 or the cell defect does; the error carries the computed grid

    Returns:
        FrameGrid: The frames and diagnostics
    """
    cfg = cfg or IntegratorConfig()
    diag = IntegrationDiagnostics()

    residual = sample_flatness(conn, grid)
    diag.max_flatness_residual = residual
    if residual > FLATNESS_ERROR:
        logger.error(f"Connection is not flat on the grid (max residual {residual:.3e})")
    elif residual > FLATNESS_WARN:
        logger.warning(f"Sampled flatness residual {residual:.3e} exceeds {FLATNESS_WARN:g}")

    x, y = grid.x, grid.y
    frames = np.empty((grid.nx, grid.ny, 2, 2), dtype=np.complex128)
    frames[0, 0] = grid.initial_frame

    for j in range(1, grid.ny):
        frames[0, j] = _integrate_segment(
            conn, frames[0, j - 1], complex(x[0], y[j - 1]), complex(x[0], y[j]), cfg, diag
        )

    def integrate_row(j: int) -> Tuple[np.ndarray, IntegrationDiagnostics]:
        row_diag = IntegrationDiagnostics()
        row = np.empty((grid.nx, 2, 2), dtype=np.complex128)
        row[0] = frames[0, j]
        for i in range(1, grid.nx):
            row[i] = _integrate_segment(
                conn, row[i - 1], complex(x[i - 1], y[j]), complex(x[i], y[j]), cfg, row_diag
            )
        return row, row_diag

    with Progress(console=Console(stderr=True), transient=True, disable=not show_progress) as progress:
        task = progress.add_task("Integrating rows", total=grid.ny)
        with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
            # map preserves order, diagnostics are merged row by row
            for j, (row, row_diag) in enumerate(executor.map(integrate_row, range(grid.ny))):
                frames[:, j] = row
                diag.merge(row_diag)
                progress.advance(task)

    diag.cell_defect = _cell_defect(conn, grid, frames, cfg)
    det_drift = np.abs(det2(frames) - 1)
    frame_grid = FrameGrid(frames=frames, x=x, y=y, det_drift=det_drift, diagnostics=diag)
    logger.info(
        f"Integrated {grid.nx}x{grid.ny} grid: {diag.steps_accepted} steps accepted, "
        f"{diag.steps_rejected} rejected, cell defect {diag.cell_defect:.3e}"
    )

    if diag.cell_defect > CELL_DEFECT_WARN:
        logger.warning(f"Cell defect {diag.cell_defect:.3e} exceeds {CELL_DEFECT_WARN:g}")
    if residual > FLATNESS_ERROR or diag.cell_defect > FLATNESS_ERROR:
        message = (
            f"Non-integrable connection data: flatness residual {residual:.3e}, "
            f"cell defect {diag.cell_defect:.3e}"
        )
        if strict:
            raise NonFlatConnectionError(message, residual=residual, frame_grid=frame_grid)
        logger.warning(message)
    return frame_grid

