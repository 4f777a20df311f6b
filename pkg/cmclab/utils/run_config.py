from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Optional

import yaml
from dacite import Config, DaciteError, from_dict

from cmclab.constants import (
    AA_AGREEMENT_TOLERANCE,
    CONFIGS_DIR,
    FLATNESS_THRESHOLD,
    MAX_GRID_NODES,
    POLE_MARGIN,
    SURFACE_H_TOLERANCE,
    FlatnessMode,
    NuPreset,
    SeedVariant,
)
from cmclab.core.magnus import GridSpec, IntegratorConfig
from cmclab.utils.exceptions import PreconditionError, RunConfigException


@dataclass
class ComplexValue:
    """A complex number written as ``{"re": x, "im": y}``"""

    re: float
    im: float = 0.0

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)


@dataclass
class SeedConfig:
    """Dataclass for the seed block"""

    variant: str
    """One of tan, ode, nilpotent"""
    lam: ComplexValue
    """The spectral parameter, written as "lambda" in the config file"""
    C: float = 1.0
    """Amplitude of the tan profile"""
    delta: float = 0.0
    """Phase offset of the tan profile"""
    pole_margin: float = POLE_MARGIN
    """Minimal distance (radians) of the tan phase to its poles"""
    g0: float = 0.0
    """Initial value of g for the ode profile"""
    rho0: float = 1.0
    """Initial value of rho for the ode profile"""
    x_start: float = 0.0
    x_end: float = 1.0
    coefficients: List[ComplexValue] = field(default_factory=lambda: [ComplexValue(1.0)])
    """Polynomial coefficients of a(z) for the nilpotent seed, lowest degree first"""

    def __post_init__(self):
        try:
            SeedVariant(self.variant)
        except ValueError:
            raise RunConfigException(f"Unknown seed variant: {self.variant}")
        if self.lam.value == 0:
            raise RunConfigException("lambda must be non-zero")


@dataclass
class GridConfig:
    """Dataclass for the grid block"""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x0, self.x1, self.y0, self.y1)):
            raise RunConfigException("Grid bounds must be finite")
        for name, n in (("nx", self.nx), ("ny", self.ny)):
            if not 2 <= n <= MAX_GRID_NODES:
                raise RunConfigException(f"{name} must lie in [2, {MAX_GRID_NODES}], got {n}")

    def to_spec(self) -> GridSpec:
        return GridSpec(x0=self.x0, x1=self.x1, y0=self.y0, y1=self.y1, nx=self.nx, ny=self.ny)


@dataclass
class ThresholdsConfig:
    """Pass criteria of the commands"""

    flatness: float = FLATNESS_THRESHOLD
    """Max flatness residual accepted by the flatness command"""
    surface_h: float = SURFACE_H_TOLERANCE
    """Max deviation of the median numerical H from the realized mean curvature"""
    aa_agreement: float = AA_AGREEMENT_TOLERANCE
    """Max hyperbolic distance between the rank-one and the AA immersions"""


@dataclass
class LoopConfig:
    """Dataclass for the holonomy loop"""

    kind: str = "cylinder"
    """cylinder, rectangle or polyline"""
    x: float = 0.1
    """Fixed x of the cylinder loop"""
    y0: float = 0.0
    period: float = 2 * math.pi
    """Period of the cylinder in y"""
    corner: Optional[ComplexValue] = None
    """Start corner of the rectangle loop"""
    width: float = 0.1
    height: float = 0.1
    points: Optional[List[ComplexValue]] = None
    """Vertices of a polyline loop"""

    def __post_init__(self):
        if self.kind not in ("cylinder", "rectangle", "polyline"):
            raise RunConfigException(f"Unknown loop kind: {self.kind}")
        if self.kind == "polyline" and (self.points is None or len(self.points) < 2):
            raise RunConfigException("A polyline loop needs at least two points")


@dataclass
class JacobiConfig:
    """Dataclass for the Jacobi mode analysis"""

    s0: float
    s1: float
    n: int
    """Number of grid nodes in s"""
    H: float = 0.0
    modes: List[int] = field(default_factory=lambda: [0, 1, 2])
    u: float = 0.0
    """Constant conformal exponent, used when no profile file is given"""
    Q: ComplexValue = field(default_factory=lambda: ComplexValue(0.0))
    """Constant Hopf coefficient, used when no profile file is given"""
    profile_csv: Optional[str] = None
    """CSV with columns s, u, re_q, im_q"""

    def __post_init__(self):
        if self.n < 3:
            raise RunConfigException("The Jacobi grid needs at least 3 nodes")
        if not self.s0 < self.s1:
            raise RunConfigException("Jacobi interval must satisfy s0 < s1")
        if not 0 <= self.H < 1:
            raise RunConfigException("Jacobi analysis requires 0 <= H < 1")


@dataclass
class AAConfig:
    """Dataclass for the Gauss-map (AA) reconstruction"""

    H: Optional[float] = None
    """Mean curvature of the AA forms, defaults to the law of the seed's lambda"""
    nu: Optional[str] = None
    """Preset map nu; without a preset or CSV the Gauss map of the seed surface is used"""
    nu_constant: ComplexValue = field(default_factory=lambda: ComplexValue(0.0))
    nu_csv: Optional[str] = None
    """CSV with columns x, y, re_nu, im_nu"""

    def __post_init__(self):
        if self.nu is not None:
            try:
                NuPreset(self.nu)
            except ValueError:
                raise RunConfigException(f"Unknown nu preset: {self.nu}")
        if self.H is not None and not 0 <= self.H < 1:
            raise RunConfigException("AA forms require 0 <= H < 1")


@dataclass
class RunConfig:
    """Dataclass for a complete run"""

    seed: Optional[SeedConfig] = None
    grid: Optional[GridConfig] = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    output_dir: str = "cmclab_output"
    verbosity: str = "INFO"
    flatness_mode: str = FlatnessMode.ANALYTIC.value
    thresholds: ThresholdsConfig = field(default_factory=ThresholdsConfig)
    loop: Optional[LoopConfig] = None
    jacobi: Optional[JacobiConfig] = None
    aa: Optional[AAConfig] = None

    def __post_init__(self):
        try:
            FlatnessMode(self.flatness_mode)
        except ValueError:
            raise RunConfigException(f"Unknown flatness mode: {self.flatness_mode}")
        if self.verbosity.upper() not in ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR"):
            raise RunConfigException(f"Unknown verbosity: {self.verbosity}")

    def require(self, *blocks: str) -> None:
        """Check that the named optional blocks are present.

        Raises:
            RunConfigException: If a block is missing
        """
        missing = [b for b in blocks if getattr(self, b) is None]
        if missing:
            raise RunConfigException(f"Config is missing required block(s): {', '.join(missing)}")


def _rename_lambda(data: Any) -> Any:
    if isinstance(data, dict):
        return {("lam" if k == "lambda" else k): _rename_lambda(v) for k, v in data.items()}
    if isinstance(data, list):
        return [_rename_lambda(v) for v in data]
    return data


def resolve_config_path(name: Path | str) -> Path:
    """Return the path itself if it exists, else the bundled config of that name."""
    path = Path(name)
    if path.exists():
        return path
    bundled = CONFIGS_DIR / (path.name if path.suffix else f"{path.name}.json")
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"Run config not found: {name}")


def parse_run_config(data: dict) -> RunConfig:
    """Convert a parsed config mapping into a RunConfig.

    Raises:
        RunConfigException: If the mapping does not match the schema
    """
    if not isinstance(data, dict):
        raise RunConfigException("Run config must be a mapping")
    try:
        # Convert the dictionary to the dataclass
        return from_dict(
            data_class=RunConfig,
            data=_rename_lambda(data),
            config=Config(strict=True, cast=[float]),
        )
    except DaciteError as e:
        raise RunConfigException(f"Error loading run config: {e}")
    except PreconditionError as e:
        raise RunConfigException(f"Invalid integrator settings: {e}")


def load_run_config(file_path: Path | str) -> RunConfig:
    """Load a run config from a JSON (or YAML) file

    Params:
        file_path (Path | str): The path to the config file or the name of a bundled config

    Raises:
        FileNotFoundError: If the file is not found
        RunConfigException: If the file is unreadable, malformed or violates the schema

    Returns:
        RunConfig: The run config
    """
    path = resolve_config_path(file_path)
    try:
        with open(path, "r") as file:
            data = yaml.safe_load(file)
    except yaml.YAMLError as e:
        raise RunConfigException(f"Malformed run config {path}: {e}")
    except OSError as e:
        # directories and unreadable files
        raise RunConfigException(f"Cannot read run config {path}: {e}")
    return parse_run_config(data)
