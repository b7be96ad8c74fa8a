from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Method(str, Enum):
    """Registration methods."""
    MPIR = "MPIR"
    MEIR = "MEIR"
    MEIR_ITERATED = "MEIR-iterated"


class PoseSource(str, Enum):
    """Which field of an iterated MEIR run the closest rigid-like fit uses."""
    COMPOSITION = "composition"
    SECOND_STEP = "second-step"


class SynthKind(str, Enum):
    """Kinds of synthetic deformation."""
    RIGID = "rigid"
    ELASTIC = "elastic"
    RIGID_ELASTIC = "rigid+elastic"


class BenchmarkCase(str, Enum):
    """Synthetic benchmark cases.

    i: elastic only; ii: rotation + elastic; iii: scale + elastic;
    iv: rotation + scale + elastic.
    """
    I = "i"
    II = "ii"
    III = "iii"
    IV = "iv"


class ElasticConfig(BaseModel):
    """Regularizer weight and Lame constants, and the gray-level scale of the elastic data term."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(10.0, ge=0.0, description="Regularization weight (0 disables regularization)")
    lam: float = Field(0.0, description="First Lame constant (lambda)")
    mu: float = Field(1.0, ge=0.0, description="Second Lame constant (shear modulus)")
    gray_levels: float = Field(255.0, gt=0.0, description="Intensity range the data term is measured on")

    @model_validator(mode="after")
    def validate_lame(self):
        """The energy must be positive semidefinite whenever it is used."""
        if self.alpha > 0 and self.mu <= 0:
            raise ValueError("mu must be > 0 when alpha > 0")
        if self.lam + self.mu < 0:
            raise ValueError("lambda + mu must be >= 0")
        return self


class SolverConfig(BaseModel):
    """Gauss-Newton, Armijo and inner conjugate-gradient settings."""
    model_config = ConfigDict(frozen=True)

    max_iterations: int = Field(50, gt=0, description="Gauss-Newton iteration cap")
    grad_tolerance: float = Field(1e-6, gt=0, description="Stop when |grad| <= tol * (1 + |J0|)")
    step_tolerance: float = Field(1e-6, gt=0, description="Stop when |step| <= tol * (1 + |x|)")
    objective_tolerance: float = Field(1e-6, gt=0, description="Stop when |dJ| <= tol * (1 + |J0|)")
    armijo_beta: float = Field(0.5, gt=0, lt=1, description="Backtracking contraction factor")
    armijo_c1: float = Field(1e-4, gt=0, lt=0.5, description="Sufficient-decrease constant")
    armijo_max_backtracks: int = Field(10, gt=0, description="Maximum number of step reductions")
    cg_max_iterations: int = Field(50, gt=0, description="Inner CG iteration cap")
    cg_tolerance: float = Field(1e-2, gt=0, description="Inner CG relative residual tolerance")


def _default_elastic_solver() -> SolverConfig:
    return SolverConfig(max_iterations=30)


class RegistrationConfig(BaseModel):
    """Everything a MPIR/MEIR run depends on."""
    model_config = ConfigDict(frozen=True)

    schedule: Tuple[float, ...] = Field((100.0, 10.0, 1.0, 0.0), description="Decreasing scale parameters")
    grid_n: int = Field(128, description="Registration grid cells per axis")
    elastic: ElasticConfig = Field(default_factory=ElasticConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig, description="Parametric solver settings")
    elastic_solver: SolverConfig = Field(default_factory=_default_elastic_solver,
                                         description="Elastic solver settings")
    prereg_two_level: bool = Field(False, description="Solve the pre-registration on a half grid first")
    iterate_twice: bool = Field(True, description="Run MEIR twice (second pass on the registered template)")
    pose_from: PoseSource = Field(PoseSource.COMPOSITION, description="Field used for iterated-MEIR pose")
    comparability_factor: float = Field(1.5, gt=0, description="MPIR/MEIR NDM ratio still called comparable")
    jobs: int = Field(1, ge=1, description="Worker threads for pair-level parallelism")

    @field_validator("schedule")
    def validate_schedule(cls, v):
        """Scales must be nonnegative and strictly decreasing."""
        if len(v) == 0:
            raise ValueError("Scale schedule cannot be empty")
        if any(theta < 0 for theta in v):
            raise ValueError(f"Scale parameters must be nonnegative: {v}")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError(f"Scale schedule must be strictly decreasing: {v}")
        return tuple(float(theta) for theta in v)

    @field_validator("grid_n")
    def validate_grid_n(cls, v):
        """Grid size must be a power of two, at least 16."""
        if v < 16 or v & (v - 1):
            raise ValueError(f"grid_n must be a power of two >= 16, got {v}")
        return v


class SynthSpec(BaseModel):
    """Ground truth of one synthetic frame."""
    model_config = ConfigDict(frozen=True)

    kind: SynthKind = Field(SynthKind.RIGID_ELASTIC, description="Deformation kind")
    scale: float = Field(1.0, gt=0, description="Scale factor (omega_0)")
    rotation_degrees: float = Field(0.0, description="Rotation angle in degrees (omega_1)")
    elastic_intensity: float = Field(0.0, ge=0, description="Max elastic displacement in grid cells")
    seed: int = Field(0, ge=0, lt=2**64, description="Seed of the elastic perturbation")
    smoothing_sigma: float = Field(5.0, gt=0, description="Gaussian smoothing width in grid cells")
    pad_margin: float = Field(0.25, ge=0, lt=0.5, description="Zero margin as a fraction of the domain")

    @property
    def has_rigid(self) -> bool:
        return self.kind in (SynthKind.RIGID, SynthKind.RIGID_ELASTIC)

    @property
    def has_elastic(self) -> bool:
        return self.kind in (SynthKind.ELASTIC, SynthKind.RIGID_ELASTIC) and self.elastic_intensity > 0


class RunManifest(BaseModel):
    """Record written next to every CLI output."""
    command: str = Field(..., description="Subcommand that produced the outputs")
    inputs: List[str] = Field(default_factory=list, description="Input paths")
    config: Dict[str, Any] = Field(default_factory=dict, description="Resolved configuration keys")
    seed: Optional[int] = Field(None, description="Seed used for synthesis")
    version: str = Field(..., description="Tool version")
    started_at: str = Field(..., description="ISO start timestamp")
    finished_at: Optional[str] = Field(None, description="ISO end timestamp")
    wall_time: Optional[float] = Field(None, description="Seconds spent in registration")
    outputs: List[str] = Field(default_factory=list, description="Written files")

    def to_text(self) -> str:
        """Render as key=value lines; config keys come first so the file loads as a config."""
        lines = [f"{key}={format_config_value(value)}" for key, value in sorted(self.config.items())]
        lines.append(f"COMMAND={self.command}")
        lines.append(f"INPUTS={','.join(self.inputs)}")
        lines.append(f"MANIFEST_SEED={'' if self.seed is None else self.seed}")
        lines.append(f"VERSION={self.version}")
        lines.append(f"STARTED_AT={self.started_at}")
        lines.append(f"FINISHED_AT={self.finished_at or ''}")
        lines.append(f"WALL_TIME={'' if self.wall_time is None else f'{self.wall_time:.3f}'}")
        lines.append(f"OUTPUTS={','.join(self.outputs)}")
        return "\n".join(lines) + "\n"


def format_config_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if value is None:
        return ""
    return str(value)
