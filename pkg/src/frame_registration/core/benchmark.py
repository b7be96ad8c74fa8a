import logging
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from frame_registration.core.image import ScalarImage
from frame_registration.core.pipeline import run_meir_iterated, run_mpir
from frame_registration.core.synth import pose_errors, synthesize
from frame_registration.core.task import PairTask
from frame_registration.core.worker import run_tasks
from frame_registration.exceptions import ContractError
from frame_registration.schemas import BenchmarkCase, RegistrationConfig, SynthKind, SynthSpec

logger = logging.getLogger(__name__)

DEFAULT_ELASTIC_INTENSITY = 4.0
CASE_IV_FIXED_ROTATION = 20.0
CASE_IV_FIXED_SCALE = 1.4
SWEEP_AXES = ("scale", "rotation")


class PairOutcome(NamedTuple):
    ndm_meir: Optional[float]
    ndm_mpir: float
    scale_error_meir: Optional[float]
    scale_error_mpir: float
    rotation_error_meir: Optional[float]
    rotation_error_mpir: float
    monotone: bool


@dataclass(frozen=True)
class BenchmarkRow:
    """Mean absolute errors and NDM of one sweep point, for both methods."""
    setting: str
    count: int
    failures: int
    ndm_meir: Optional[float]
    ndm_mpir: float
    scale_error_meir: Optional[float]
    scale_error_mpir: float
    rotation_error_meir: Optional[float]
    rotation_error_mpir: float
    monotone: bool = True

    COLUMNS = (
        "setting", "count", "failures",
        "ndm_meir", "ndm_mpir",
        "scale_error_meir", "scale_error_mpir",
        "rotation_error_meir", "rotation_error_mpir",
    )

    def to_dict(self) -> Dict[str, object]:
        return {column: getattr(self, column) for column in self.COLUMNS}


class IntensityPoint(NamedTuple):
    intensity: float
    ndm_meir: float
    ndm_mpir: float


def _case_settings(case: BenchmarkCase, sweep: Sequence[float], sweep_axis: str) -> List[Tuple[str, float, float]]:
    """(label, scale, rotation_degrees) per sweep value."""
    if not sweep:
        raise ContractError("Benchmark sweep cannot be empty")
    if case == BenchmarkCase.I:
        if len(sweep) != 1:
            raise ContractError(f"Case i takes a single sweep value, got {len(sweep)}")
        return [("original", 1.0, 0.0)]
    if case == BenchmarkCase.II:
        return [(f"rotation={v:g}", 1.0, float(v)) for v in sweep]
    if case == BenchmarkCase.III:
        settings = [(f"scale={v:g}", float(v), 0.0) for v in sweep]
    elif sweep_axis == "scale":
        settings = [(f"scale={v:g}", float(v), CASE_IV_FIXED_ROTATION) for v in sweep]
    elif sweep_axis == "rotation":
        return [(f"rotation={v:g}", CASE_IV_FIXED_SCALE, float(v)) for v in sweep]
    else:
        raise ContractError(f"sweep_axis must be one of {SWEEP_AXES}, got {sweep_axis!r}")
    if any(scale <= 0 for _, scale, _ in settings):
        raise ContractError(f"Scale factors must be positive: {list(sweep)}")
    return settings


def _register_synthetic(img: ScalarImage, spec: SynthSpec, frame_index: int, cfg: RegistrationConfig,
                        include_meir: bool) -> PairOutcome:
    frame = synthesize(img, spec, frame_index)
    mpir = run_mpir(frame.reference, frame.image, cfg)
    scale_mpir, rotation_mpir = pose_errors(mpir.final_rigid, frame.ground_truth)
    monotone = all(trace.is_monotone() for trace in mpir.traces)
    if not include_meir:
        return PairOutcome(None, mpir.ndm, None, scale_mpir, None, rotation_mpir, monotone)
    meir = run_meir_iterated(frame.reference, frame.image, cfg)
    scale_meir, rotation_meir = pose_errors(meir.final_rigid, frame.ground_truth)
    monotone = monotone and all(trace.is_monotone() for trace in meir.traces)
    return PairOutcome(meir.ndm, mpir.ndm, scale_meir, scale_mpir, rotation_meir, rotation_mpir, monotone)


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    if not values or values[0] is None:
        return None
    return float(np.mean(values))


def run_benchmark(
    frames: Sequence[ScalarImage],
    case: BenchmarkCase,
    sweep: Sequence[float],
    cfg: RegistrationConfig,
    elastic_intensity: float = DEFAULT_ELASTIC_INTENSITY,
    seed: int = 0,
    sweep_axis: str = "scale",
    smoothing_sigma: float = 5.0,
    pad_margin: float = 0.25,
    include_meir: bool = True,
) -> List[BenchmarkRow]:
    """
    Synthesize every frame at every sweep point and register with both methods.

    Args:
        frames: Source corpus
        case: i (elastic), ii (rotation), iii (scale) or iv (rotation and scale)
        sweep: Rotations in degrees (ii) or scale factors (iii); case iv sweeps
            scale at a fixed 20 degree rotation, or rotation at a fixed scale
            of 1.4 when ``sweep_axis`` is "rotation"; case i takes one value
        cfg: Registration configuration (``cfg.jobs`` pairs run concurrently)
        elastic_intensity: Maximum elastic displacement in cells; 0 gives
            purely rigid templates
        include_meir: Register with iterated MEIR as well as MPIR

    Returns:
        One row per sweep point; failed pairs are counted and left out of the means
    """
    if not frames:
        raise ContractError("Benchmark needs at least one frame")
    case = BenchmarkCase(case)
    settings = _case_settings(case, list(sweep), sweep_axis)
    kind = SynthKind.RIGID_ELASTIC if elastic_intensity > 0 else SynthKind.RIGID

    tasks = []
    for row_index, (label, scale, rotation) in enumerate(settings):
        spec = SynthSpec(
            kind=kind,
            scale=scale,
            rotation_degrees=rotation,
            elastic_intensity=elastic_intensity,
            seed=seed,
            smoothing_sigma=smoothing_sigma,
            pad_margin=pad_margin,
        )
        for frame_index, img in enumerate(frames):
            tasks.append(PairTask(
                index=row_index * len(frames) + frame_index,
                label=f"case {case.value} {label} frame {frame_index}",
                payload=lambda img=img, spec=spec, f=frame_index: _register_synthetic(img, spec, f, cfg, include_meir),
            ))
    finished = run_tasks(tasks, cfg.jobs)

    rows = []
    for row_index, (label, _, _) in enumerate(settings):
        chunk = finished[row_index * len(frames):(row_index + 1) * len(frames)]
        outcomes = [task.result for task in chunk if task.succeeded]
        failures = len(chunk) - len(outcomes)
        if failures:
            logger.warning(f"Case {case.value} {label}: {failures} of {len(chunk)} pairs failed")
        if not outcomes:
            meir_nan = math.nan if include_meir else None
            rows.append(BenchmarkRow(label, 0, failures, meir_nan, math.nan, meir_nan, math.nan, meir_nan, math.nan))
            continue
        columns = list(zip(*outcomes))
        rows.append(BenchmarkRow(
            setting=label,
            count=len(outcomes),
            failures=failures,
            ndm_meir=_mean(columns[0]),
            ndm_mpir=_mean(columns[1]),
            scale_error_meir=_mean(columns[2]),
            scale_error_mpir=_mean(columns[3]),
            rotation_error_meir=_mean(columns[4]),
            rotation_error_mpir=_mean(columns[5]),
            monotone=all(columns[6]),
        ))
        logger.info(f"Case {case.value} {label}: NDM MEIR={rows[-1].ndm_meir} MPIR={rows[-1].ndm_mpir:.6f}")
    return rows


def _intensity_point(img: ScalarImage, spec: SynthSpec, cfg: RegistrationConfig) -> IntensityPoint:
    frame = synthesize(img, spec)
    meir = run_meir_iterated(frame.reference, frame.image, cfg)
    mpir = run_mpir(frame.reference, frame.image, cfg)
    return IntensityPoint(spec.elastic_intensity, meir.ndm, mpir.ndm)


def run_intensity_sweep(
    frame: ScalarImage,
    intensities: Sequence[float],
    cfg: RegistrationConfig,
    scale: float = 0.8,
    rotation_degrees: float = 10.0,
    seed: int = 0,
    smoothing_sigma: float = 5.0,
    pad_margin: float = 0.25,
) -> List[IntensityPoint]:
    """NDM of both methods as the elastic intensity of a scaled, rotated template grows."""
    if not intensities:
        raise ContractError("Intensity sweep cannot be empty")
    tasks = [
        PairTask(
            index=i,
            label=f"intensity {value:g}",
            payload=lambda value=value: _intensity_point(frame, SynthSpec(
                kind=SynthKind.RIGID_ELASTIC,
                scale=scale,
                rotation_degrees=rotation_degrees,
                elastic_intensity=value,
                seed=seed,
                smoothing_sigma=smoothing_sigma,
                pad_margin=pad_margin,
            ), cfg),
        )
        for i, value in enumerate(intensities)
    ]
    points = []
    for task in run_tasks(tasks, cfg.jobs):
        if not task.succeeded:
            raise task.exception
        points.append(task.result)
    return points
