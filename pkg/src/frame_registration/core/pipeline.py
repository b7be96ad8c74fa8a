"""
Multiscale registration schedules.

MPIR searches a rigid-like map at every scale. MEIR pre-registers with a
rigid-like map at the coarsest scale and then runs elastic registration
coarse-to-fine, each scale warm-started from the previous one. The iterated
MEIR registers the reference against the Step-1 output a second time.
"""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from frame_registration.core.image import ScalarImage, resample_image
from frame_registration.core.interpolation import Interpolant, build_interpolant
from frame_registration.core.objective import ndm
from frame_registration.core.solver import SolverTrace, solve_elastic, solve_parametric
from frame_registration.core.task import PairTask
from frame_registration.core.transforms import (
    DisplacementField,
    RigidLikeParams,
    apply_rigid,
    closest_rigid_like,
    compose_displacements,
    rigid_to_displacement,
    warp_image,
)
from frame_registration.core.worker import run_tasks
from frame_registration.exceptions import ContractError, RegistrationError
from frame_registration.schemas import Method, PoseSource, RegistrationConfig

logger = logging.getLogger(__name__)

MIN_TWO_LEVEL_GRID = 32
# theta is measured in cells of the grid it is applied on; the moment penalty
# is a fourth power of the spacing, so a half-resolution grid needs theta / 16
COARSE_THETA_FACTOR = 1.0 / 16.0


@dataclass(frozen=True)
class ScaleRecord:
    """Objective summary of one solve in a schedule."""
    theta: float
    stage: str
    objective_before: float
    objective_after: float
    iterations: int
    stop_reason: str
    converged: bool
    step: int = 1

    @classmethod
    def from_trace(cls, theta: float, stage: str, trace: SolverTrace, step: int = 1) -> "ScaleRecord":
        return cls(
            theta=theta,
            stage=stage,
            objective_before=trace.initial_objective,
            objective_after=trace.final_objective,
            iterations=len(trace.iterates) - 1,
            stop_reason=trace.stop_reason.value if trace.stop_reason else "",
            converged=trace.converged,
            step=step,
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            "step": self.step,
            "stage": self.stage,
            "theta": self.theta,
            "objective_before": self.objective_before,
            "objective_after": self.objective_after,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "converged": self.converged,
        }


class Pose(NamedTuple):
    scale: float
    rotation_degrees: float
    translation: Tuple[float, float]


@dataclass(eq=False)
class RegistrationResult:
    """Outcome of one MPIR / MEIR / iterated MEIR run."""
    method: Method
    per_scale: List[ScaleRecord]
    final_displacement: DisplacementField
    final_rigid: RigidLikeParams
    ndm: float
    warped_template: ScalarImage
    reference: ScalarImage
    wall_time: float
    flags: List[str] = field(default_factory=list)
    traces: List[SolverTrace] = field(default_factory=list, repr=False)
    steps: List["RegistrationResult"] = field(default_factory=list, repr=False)
    pose_from: PoseSource = PoseSource.COMPOSITION

    @property
    def ok(self) -> bool:
        """True when every solve converged and no pass was rejected."""
        return not self.flags

    def recompute_ndm(self) -> float:
        return ndm(self.reference, self.warped_template)


class CurvePoint(NamedTuple):
    index: int
    ndm: float
    ndm_mpir: Optional[float] = None
    flags: Tuple[str, ...] = ()


@dataclass
class NdmCurve:
    """NDM of consecutive frame pairs, indexed by the template frame."""
    method: Method
    points: List[CurvePoint] = field(default_factory=list)

    @property
    def pairs(self) -> List[Tuple[int, float]]:
        return [(p.index, p.ndm) for p in self.points]

    @property
    def values(self) -> np.ndarray:
        return np.array([p.ndm for p in self.points])

    @property
    def mpir_values(self) -> Optional[np.ndarray]:
        if not self.points or self.points[0].ndm_mpir is None:
            return None
        return np.array([p.ndm_mpir for p in self.points])

    @property
    def flagged(self) -> List[int]:
        return [p.index for p in self.points if p.flags]


class DualResult(NamedTuple):
    mpir: RegistrationResult
    meir: RegistrationResult
    selected: Method


def _prepare(r: ScalarImage, t: ScalarImage, cfg: RegistrationConfig) -> Tuple[ScalarImage, ScalarImage]:
    if r.domain != t.domain:
        raise ContractError("Reference and template must share the domain")
    return resample_image(r, cfg.grid_n), resample_image(t, cfg.grid_n)


class _ScaleSpace:
    """Interpolants of one image, built once per theta."""

    def __init__(self, img: ScalarImage):
        self.img = img
        self._cache: Dict[float, Interpolant] = {}

    def __getitem__(self, theta: float) -> Interpolant:
        if theta not in self._cache:
            self._cache[theta] = build_interpolant(self.img, theta)
        return self._cache[theta]


def _flag_unconverged(flags: List[str], label: str, trace: SolverTrace) -> None:
    if not trace.converged:
        flags.append(f"{label}: {trace.stop_reason.value}")
        logger.info(f"{label} did not converge ({trace.stop_reason.value}), continuing with best iterate")


def run_mpir(r: ScalarImage, t: ScalarImage, cfg: RegistrationConfig) -> RegistrationResult:
    """
    Multiscale parametric registration.

    A rigid-like map is solved at every scale, each initialized from the
    previous scale's parameters (identity at the first).
    """
    started = time.perf_counter()
    r, t = _prepare(r, t, cfg)
    grid = r.grid
    r_space, t_space = _ScaleSpace(r), _ScaleSpace(t)
    w = RigidLikeParams.identity()
    records, traces, flags = [], [], []

    for theta in cfg.schedule:
        w, trace = solve_parametric(r_space[theta], t_space[theta], grid, w, cfg.solver)
        records.append(ScaleRecord.from_trace(theta, "parametric", trace))
        traces.append(trace)
        _flag_unconverged(flags, f"parametric theta={theta:g}", trace)
        logger.info(f"MPIR theta={theta:g}: J {trace.initial_objective:.6e} -> {trace.final_objective:.6e}")

    warped = warp_image(t_space[0.0], apply_rigid(w, grid.points), grid)
    result = RegistrationResult(
        method=Method.MPIR,
        per_scale=records,
        final_displacement=rigid_to_displacement(w, grid),
        final_rigid=w,
        ndm=ndm(r, warped),
        warped_template=warped,
        reference=r,
        wall_time=time.perf_counter() - started,
        flags=flags,
        traces=traces,
    )
    logger.info(f"MPIR finished: NDM={result.ndm:.6f} in {result.wall_time:.2f}s")
    return result


def _prereg(r_space: _ScaleSpace, t_space: _ScaleSpace, cfg: RegistrationConfig):
    """Rigid-like pre-registration at the coarsest scale; returns (w, [(grid_n, theta, trace)])."""
    theta0 = cfg.schedule[0]
    grid = r_space.img.grid
    if not cfg.prereg_two_level:
        w, trace = solve_parametric(r_space[theta0], t_space[theta0], grid, RigidLikeParams.identity(), cfg.solver)
        return w, [(grid.nx, theta0, trace)]

    n = grid.nx
    if n < MIN_TWO_LEVEL_GRID:
        raise ContractError(f"Two-level pre-registration needs grid_n >= {MIN_TWO_LEVEL_GRID}, got {n}")
    r_coarse = resample_image(r_space.img, n // 2)
    t_coarse = resample_image(t_space.img, n // 2)
    coarse_theta = theta0 * COARSE_THETA_FACTOR
    w, coarse_trace = solve_parametric(
        build_interpolant(r_coarse, coarse_theta), build_interpolant(t_coarse, coarse_theta), r_coarse.grid,
        RigidLikeParams.identity(), cfg.solver,
    )
    w, fine_trace = solve_parametric(r_space[theta0], t_space[theta0], grid, w, cfg.solver)
    return w, [(n // 2, coarse_theta, coarse_trace), (n, theta0, fine_trace)]


def two_level_prereg(r: ScalarImage, t: ScalarImage, cfg: RegistrationConfig) -> RigidLikeParams:
    """Pre-registration solved on a half-resolution grid, then refined on the full grid."""
    r, t = _prepare(r, t, cfg)
    w, _ = _prereg(_ScaleSpace(r), _ScaleSpace(t), cfg.model_copy(update={"prereg_two_level": True}))
    return w


def run_meir(r: ScalarImage, t: ScalarImage, cfg: RegistrationConfig) -> RegistrationResult:
    """
    Single-pass multiscale elastic registration with rigid-like pre-registration.

    The elastic solve also runs at the coarsest scale, warm-started from the
    pre-registration converted to a displacement field. The regularizer
    measures deviation from that field, so the rigid-like part found by the
    pre-registration is not penalized.
    """
    if cfg.elastic.alpha <= 0:
        raise ContractError("MEIR needs a positive regularization weight alpha")
    started = time.perf_counter()
    r, t = _prepare(r, t, cfg)
    grid = r.grid
    r_space, t_space = _ScaleSpace(r), _ScaleSpace(t)
    records, traces, flags = [], [], []

    w, prereg_traces = _prereg(r_space, t_space, cfg)
    for level_n, level_theta, trace in prereg_traces:
        records.append(ScaleRecord.from_trace(level_theta, f"prereg-{level_n}", trace))
        traces.append(trace)
        _flag_unconverged(flags, f"prereg {level_n}x{level_n}", trace)

    u_pre = rigid_to_displacement(w, grid)
    u = u_pre
    for theta in cfg.schedule:
        u, trace = solve_elastic(r_space[theta], t_space[theta], grid, u, cfg.elastic, cfg.elastic_solver,
                                 u_ref=u_pre)
        records.append(ScaleRecord.from_trace(theta, "elastic", trace))
        traces.append(trace)
        _flag_unconverged(flags, f"elastic theta={theta:g}", trace)
        logger.info(f"MEIR theta={theta:g}: J {trace.initial_objective:.6e} -> {trace.final_objective:.6e}")

    warped = warp_image(t_space[0.0], u.mapped_points(), grid)
    result = RegistrationResult(
        method=Method.MEIR,
        per_scale=records,
        final_displacement=u,
        final_rigid=closest_rigid_like(u),
        ndm=ndm(r, warped),
        warped_template=warped,
        reference=r,
        wall_time=time.perf_counter() - started,
        flags=flags,
        traces=traces,
    )
    logger.info(f"MEIR finished: NDM={result.ndm:.6f} in {result.wall_time:.2f}s")
    return result


def run_meir_iterated(r: ScalarImage, t: ScalarImage, cfg: RegistrationConfig) -> RegistrationResult:
    """
    MEIR iterated twice.

    Step 2 registers the reference against the Step-1 output. The composed
    map is phi1(phi2(x)); if Step 2 does not lower the NDM its field is
    dropped and the Step-1 result stands.
    """
    started = time.perf_counter()
    step1 = run_meir(r, t, cfg)
    step2 = run_meir(step1.reference, step1.warped_template, cfg)
    records = list(step1.per_scale) + [replace(rec, step=2) for rec in step2.per_scale]
    flags = [f"step 1 {flag}" for flag in step1.flags] + [f"step 2 {flag}" for flag in step2.flags]

    if step2.ndm <= step1.ndm:
        composed = compose_displacements(step1.final_displacement, step2.final_displacement)
        warped, value = step2.warped_template, step2.ndm
        pose_field = composed if cfg.pose_from == PoseSource.COMPOSITION else step2.final_displacement
    else:
        message = f"second MEIR pass rejected (NDM {step2.ndm:.6f} > {step1.ndm:.6f})"
        logger.warning(message)
        flags.append(message)
        composed = step1.final_displacement
        warped, value = step1.warped_template, step1.ndm
        pose_field = composed if cfg.pose_from == PoseSource.COMPOSITION else DisplacementField.zeros(composed.grid)

    result = RegistrationResult(
        method=Method.MEIR_ITERATED,
        per_scale=records,
        final_displacement=composed,
        final_rigid=closest_rigid_like(pose_field),
        ndm=value,
        warped_template=warped,
        reference=step1.reference,
        wall_time=time.perf_counter() - started,
        flags=flags,
        traces=step1.traces + step2.traces,
        steps=[step1, step2],
        pose_from=cfg.pose_from,
    )
    logger.info(f"MEIR-iterated finished: NDM {step1.ndm:.6f} -> {result.ndm:.6f} in {result.wall_time:.2f}s")
    return result


def run_registration(r: ScalarImage, t: ScalarImage, method: Method, cfg: RegistrationConfig) -> RegistrationResult:
    """Dispatch to MPIR, MEIR or iterated MEIR; plain MEIR honours ``cfg.iterate_twice``."""
    method = Method(method)
    if method == Method.MPIR:
        return run_mpir(r, t, cfg)
    if method == Method.MEIR_ITERATED or (method == Method.MEIR and cfg.iterate_twice):
        return run_meir_iterated(r, t, cfg)
    return run_meir(r, t, cfg)


def extract_pose(res: RegistrationResult) -> Pose:
    """Scale, rotation (degrees) and translation read from a result."""
    if res.method == Method.MEIR:
        w = closest_rigid_like(res.final_displacement)
    else:
        # MPIR carries its parameters; iterated MEIR was already fit to the field chosen by pose_from
        w = res.final_rigid
    return Pose(w.scale, w.rotation_degrees, w.translation)


def select_method(ndm_mpir: float, ndm_meir: float, comparability_factor: float = 1.5) -> Method:
    """MPIR when its NDM is comparable to MEIR's (ties go to the cheaper model)."""
    if not (math.isfinite(ndm_mpir) and math.isfinite(ndm_meir)):
        raise ContractError(f"NDM values must be finite: {ndm_mpir}, {ndm_meir}")
    return Method.MPIR if ndm_mpir <= comparability_factor * ndm_meir else Method.MEIR


def run_dual(r: ScalarImage, t: ScalarImage, cfg: RegistrationConfig) -> DualResult:
    """Register with both MPIR and iterated MEIR and pick the model for the pose."""
    mpir = run_mpir(r, t, cfg)
    meir = run_meir_iterated(r, t, cfg)
    selected = select_method(mpir.ndm, meir.ndm, cfg.comparability_factor)
    logger.info(f"NDM MPIR={mpir.ndm:.6f} MEIR={meir.ndm:.6f}: selected {selected.value}")
    return DualResult(mpir, meir, selected)


def _curve_point(index: int, r: ScalarImage, t: ScalarImage, method: Method, cfg: RegistrationConfig,
                 both: bool) -> CurvePoint:
    primary = run_registration(r, t, method, cfg)
    flags = tuple(primary.flags)
    ndm_mpir = None
    if both:
        other = run_mpir(r, t, cfg)
        ndm_mpir = other.ndm
        flags += tuple(f"MPIR {flag}" for flag in other.flags)
    return CurvePoint(index, primary.ndm, ndm_mpir, flags)


def run_speed_curve(
    frames: Sequence[ScalarImage],
    method: Method,
    cfg: RegistrationConfig,
    both: bool = False,
) -> NdmCurve:
    """
    NDM of every consecutive pair; frame k is the template, frame k+1 the reference.

    Args:
        frames: Ordered frames
        method: Method of the primary curve
        cfg: Registration configuration (``cfg.jobs`` pairs run concurrently)
        both: Also record the MPIR value of every pair

    Raises:
        ContractError: With fewer than two frames
    """
    if len(frames) < 2:
        raise ContractError(f"A speed curve needs at least 2 frames, got {len(frames)}")
    method = Method(method)
    tasks = [
        PairTask(
            index=k,
            label=f"pair {k}->{k + 1}",
            payload=lambda k=k: _curve_point(k, frames[k + 1], frames[k], method, cfg, both),
        )
        for k in range(len(frames) - 1)
    ]
    curve = NdmCurve(method)
    for task in run_tasks(tasks, cfg.jobs):
        if not task.succeeded:
            if isinstance(task.exception, RegistrationError):
                raise task.exception
            raise RegistrationError(f"{task.label} failed: {task.error}") from task.exception
        curve.points.append(task.result)
    return curve
