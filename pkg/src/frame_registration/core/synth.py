"""
Synthetic frames with known deformations.

A frame is zero padded, optionally perturbed by a smooth random elastic
field, and optionally scaled and rotated about the domain center. The
result T satisfies T(phi(x)) = padded(x) for the centered rigid-like map
phi, so registering T against the padded frame should recover the
ground-truth scale and rotation.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from frame_registration.core.image import ScalarImage, pad_image
from frame_registration.core.interpolation import build_interpolant
from frame_registration.core.transforms import RigidLikeParams, apply_rigid
from frame_registration.exceptions import ContractError
from frame_registration.schemas import SynthSpec

logger = logging.getLogger(__name__)

DOMAIN_CENTER = (0.5, 0.5)
GAUSSIAN_TRUNCATE = 3.0


def centered_rigid(scale: float, rotation_degrees: float, center: Tuple[float, float] = DOMAIN_CENTER) -> RigidLikeParams:
    """Rigid-like map scaling and rotating about ``center``, in origin-based parameters."""
    linear = RigidLikeParams.from_degrees(scale, rotation_degrees)
    c = np.asarray(center, dtype=float)
    tx, ty = c - linear.linear_part() @ c
    return RigidLikeParams(linear.scale, linear.rotation, float(tx), float(ty))


@dataclass(eq=False)
class SyntheticFrame:
    """A synthesized template together with its reference and ground truth."""
    image: ScalarImage
    reference: ScalarImage
    spec: SynthSpec
    frame_index: int
    ground_truth: RigidLikeParams
    perturbation: Optional[np.ndarray] = None
    warnings: List[str] = field(default_factory=list)


def _rigid_warp(img: ScalarImage, spec: SynthSpec, warnings: Optional[List[str]] = None) -> ScalarImage:
    if spec.scale == 1.0 and spec.rotation_degrees % 360.0 == 0.0:
        return img
    phi = centered_rigid(spec.scale, spec.rotation_degrees)
    grid = img.grid

    # content leaving the domain is cut off; NDM is still taken over the whole domain
    lo, hi = spec.pad_margin, 1.0 - spec.pad_margin
    corners = np.array([[lo, lo], [hi, lo], [lo, hi], [hi, hi]])
    if not img.domain.contains(apply_rigid(phi, corners)).all():
        message = (f"Synthetic content leaves the domain (scale={spec.scale:g}, "
                   f"rotation={spec.rotation_degrees:g})")
        logger.warning(message)
        if warnings is not None:
            warnings.append(message)

    values, _ = build_interpolant(img, 0.0).evaluate(apply_rigid(phi.inverse(), grid.points))
    return ScalarImage(values.reshape(grid.shape), img.domain)


def make_rigid_synthetic(img: ScalarImage, spec: SynthSpec) -> ScalarImage:
    """
    Pad, then scale and rotate about the domain center.

    The output is T(x) = padded(phi^-1(x)) with phi the centered map of
    (spec.scale, spec.rotation_degrees).
    """
    if not spec.has_rigid:
        raise ContractError(f"Synth kind {spec.kind.value} has no rigid component")
    return _rigid_warp(pad_image(img, spec.pad_margin), spec)


def elastic_perturbation(shape: Tuple[int, int], spec: SynthSpec, cell_size: float,
                         frame_index: int = 0) -> np.ndarray:
    """
    Smooth random displacements of shape (ny*nx, 2) with max magnitude intensity*h.

    Each component is a uniform(0, 1) draw smoothed by a Gaussian of
    ``spec.smoothing_sigma`` cells and centered to zero mean. The generator is
    seeded from (seed, frame_index) so every frame has its own deformation.
    """
    ny, nx = shape
    if spec.elastic_intensity == 0:
        return np.zeros((ny * nx, 2))
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, frame_index]))
    components = []
    for _ in range(2):
        raw = rng.uniform(0.0, 1.0, size=(ny, nx))
        smooth = gaussian_filter(raw, sigma=spec.smoothing_sigma, mode="nearest", truncate=GAUSSIAN_TRUNCATE)
        components.append((smooth - smooth.mean()).ravel())
    displacement = np.column_stack(components)
    largest = float(np.max(np.hypot(displacement[:, 0], displacement[:, 1])))
    if largest == 0.0:
        return np.zeros_like(displacement)
    return displacement * (spec.elastic_intensity * cell_size / largest)


def make_elastic_synthetic(img: ScalarImage, spec: SynthSpec, frame_index: int = 0) -> Tuple[ScalarImage, np.ndarray]:
    """
    Interpolate the image on a randomly perturbed grid.

    Returns:
        (deformed image, perturbed grid points of shape (N, 2))
    """
    grid = img.grid
    if spec.elastic_intensity == 0:
        return img, grid.points.copy()
    perturbation = elastic_perturbation(grid.shape, spec, grid.cell_size[0], frame_index)
    perturbed = grid.points + perturbation
    values, _ = build_interpolant(img, 0.0).evaluate(perturbed)
    return ScalarImage(values.reshape(grid.shape), img.domain), perturbed


def synthesize(img: ScalarImage, spec: SynthSpec, frame_index: int = 0) -> SyntheticFrame:
    """Pad, apply the elastic then the rigid component of ``spec``, and record the truth."""
    padded = pad_image(img, spec.pad_margin)
    warnings: List[str] = []
    current, perturbation = padded, None
    if spec.has_elastic:
        current, points = make_elastic_synthetic(padded, spec, frame_index)
        perturbation = points - padded.grid.points
    if spec.has_rigid:
        current = _rigid_warp(current, spec, warnings)
        truth = centered_rigid(spec.scale, spec.rotation_degrees)
    else:
        truth = RigidLikeParams.identity()
    return SyntheticFrame(
        image=current,
        reference=padded,
        spec=spec,
        frame_index=frame_index,
        ground_truth=truth,
        perturbation=perturbation,
        warnings=warnings,
    )


def rotation_error_degrees(estimated: float, truth: float) -> float:
    """Absolute angular difference wrapped into [0, 180]."""
    return abs((estimated - truth + 180.0) % 360.0 - 180.0)


def pose_errors(estimated: RigidLikeParams, truth: RigidLikeParams) -> Tuple[float, float]:
    """(|scale error|, |rotation error| in degrees)."""
    return (abs(estimated.scale - truth.scale),
            rotation_error_degrees(estimated.rotation_degrees, truth.rotation_degrees))
