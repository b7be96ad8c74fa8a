import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.ndimage import map_coordinates

from frame_registration.core.image import Grid, ScalarImage
from frame_registration.core.interpolation import Interpolant
from frame_registration.exceptions import ContractError, EstimationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RigidLikeParams:
    """
    Scale, rotation and translation of the map x -> scale * R(rotation) x + (tx, ty).

    The rotation is in radians and about the coordinate origin.
    """
    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.omega):
            raise ContractError(f"Rigid-like parameters must be finite: {self.omega}")

    @classmethod
    def identity(cls) -> "RigidLikeParams":
        return cls()

    @classmethod
    def from_omega(cls, omega) -> "RigidLikeParams":
        s, r, tx, ty = (float(v) for v in omega)
        return cls(s, r, tx, ty)

    @classmethod
    def from_degrees(cls, scale: float, rotation_degrees: float, tx: float = 0.0, ty: float = 0.0):
        return cls(scale, math.radians(rotation_degrees), tx, ty)

    @property
    def omega(self) -> Tuple[float, float, float, float]:
        return (self.scale, self.rotation, self.tx, self.ty)

    @property
    def rotation_degrees(self) -> float:
        return math.degrees(self.rotation)

    @property
    def translation(self) -> Tuple[float, float]:
        return (self.tx, self.ty)

    def as_array(self) -> np.ndarray:
        return np.array(self.omega, dtype=float)

    def linear_part(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    def inverse(self) -> "RigidLikeParams":
        """Analytic inverse (requires a nonzero scale)."""
        if self.scale == 0:
            raise ContractError("A zero-scale map has no inverse")
        inv_scale = 1.0 / self.scale
        c, s = math.cos(-self.rotation), math.sin(-self.rotation)
        tx = -inv_scale * (c * self.tx - s * self.ty)
        ty = -inv_scale * (s * self.tx + c * self.ty)
        return RigidLikeParams(inv_scale, -self.rotation, tx, ty)


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Displacement u = (u1, u2) on a grid; the induced map is x -> x - u(x)."""
    grid: Grid
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        u1 = np.array(self.u1, dtype=float).ravel()
        u2 = np.array(self.u2, dtype=float).ravel()
        if u1.size != self.grid.size or u2.size != self.grid.size:
            raise ContractError(
                f"Field components must have {self.grid.size} entries, got {u1.size} and {u2.size}"
            )
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise ContractError("Displacement field must be finite")
        u1.flags.writeable = False
        u2.flags.writeable = False
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)

    @classmethod
    def zeros(cls, grid: Grid) -> "DisplacementField":
        return cls(grid, np.zeros(grid.size), np.zeros(grid.size))

    @classmethod
    def from_vector(cls, grid: Grid, vector: np.ndarray) -> "DisplacementField":
        """Inverse of ``as_vector``: [u1; u2] stacked."""
        vector = np.asarray(vector, dtype=float)
        return cls(grid, vector[:grid.size], vector[grid.size:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.u1, self.u2])

    def as_array(self) -> np.ndarray:
        """Displacements as an (N, 2) array."""
        return np.column_stack([self.u1, self.u2])

    def mapped_points(self) -> np.ndarray:
        """phi(x) = x - u(x) at the grid points."""
        return self.grid.points - self.as_array()

    def max_magnitude(self) -> float:
        return float(np.max(np.hypot(self.u1, self.u2)))


def apply_rigid(w: RigidLikeParams, pts: np.ndarray) -> np.ndarray:
    """Map points through x -> w0 R(w1) x + (w2, w3)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    return pts @ w.linear_part().T + np.array(w.translation)


def rigid_jacobian(w: RigidLikeParams, pts: np.ndarray) -> np.ndarray:
    """
    Derivatives of the rigid-like map with respect to (w0, w1, w2, w3).

    Returns:
        Array of shape (N, 2, 4)
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    c, s = math.cos(w.rotation), math.sin(w.rotation)
    rotated = pts @ np.array([[c, -s], [s, c]]).T
    d_rotation = w.scale * (pts @ np.array([[-s, -c], [c, -s]]).T)
    jac = np.zeros((len(pts), 2, 4))
    jac[:, :, 0] = rotated
    jac[:, :, 1] = d_rotation
    jac[:, 0, 2] = 1.0
    jac[:, 1, 3] = 1.0
    return jac


def apply_displacement(u: DisplacementField, pts: np.ndarray) -> np.ndarray:
    """Return x - u(x) for the points of u's grid."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if len(pts) != u.grid.size:
        raise ContractError(f"Expected {u.grid.size} grid points, got {len(pts)}")
    return pts - u.as_array()


def rigid_to_displacement(w: RigidLikeParams, grid: Grid) -> DisplacementField:
    """Displacement u(x) = x - phi_w(x) that reproduces the rigid-like map on ``grid``."""
    u = grid.points - apply_rigid(w, grid.points)
    return DisplacementField(grid, u[:, 0], u[:, 1])


def warp_image(itp: Interpolant, phi_points: np.ndarray, grid: Grid) -> ScalarImage:
    """Sample ``itp`` at the mapped grid points phi(x_j); points leaving the domain give 0."""
    phi_points = np.asarray(phi_points, dtype=float).reshape(-1, 2)
    if len(phi_points) != grid.size:
        raise ContractError(f"Expected {grid.size} mapped points, got {len(phi_points)}")
    values, _ = itp.evaluate(phi_points)
    return ScalarImage(values.reshape(grid.shape), grid.domain)


def sample_field(u: DisplacementField, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of u at arbitrary points (edge values extended outside)."""
    index = u.grid.to_index(pts)
    coords = np.vstack([index[:, 1], index[:, 0]])
    u1 = map_coordinates(u.u1.reshape(u.grid.shape), coords, order=1, mode="nearest")
    u2 = map_coordinates(u.u2.reshape(u.grid.shape), coords, order=1, mode="nearest")
    return np.column_stack([u1, u2])


def compose_displacements(u_outer: DisplacementField, u_inner: DisplacementField) -> DisplacementField:
    """
    Field of the map x -> phi_outer(phi_inner(x)).

    phi_outer is evaluated by bilinear resampling of u_outer at the inner
    warp targets, so u(x) = u_inner(x) + u_outer(x - u_inner(x)).
    """
    if u_outer.grid != u_inner.grid:
        raise ContractError("Composed fields must share a grid")
    targets = u_inner.mapped_points()
    composed = u_inner.as_array() + sample_field(u_outer, targets)
    return DisplacementField(u_inner.grid, composed[:, 0], composed[:, 1])


def closest_rigid_like(u: DisplacementField) -> RigidLikeParams:
    """
    Least-squares rigid-like map closest to x -> x - u(x) over the grid.

    Both point sets are centered and written as complex numbers; the optimal
    complex factor w0 * exp(i w1) is the normalized cross-covariance and the
    translation follows from the centroids.

    Raises:
        EstimationError: If all grid points coincide
    """
    source = u.grid.points
    target = u.mapped_points()
    z_src = source[:, 0] + 1j * source[:, 1]
    z_dst = target[:, 0] + 1j * target[:, 1]
    src_mean, dst_mean = z_src.mean(), z_dst.mean()
    src_c = z_src - src_mean
    dst_c = z_dst - dst_mean

    spread = float(np.sum(np.abs(src_c) ** 2))
    if spread == 0.0:
        raise EstimationError("Cannot fit a rigid-like map to coincident points")
    cross = np.sum(dst_c * np.conj(src_c))
    factor = cross / spread
    translation = dst_mean - factor * src_mean
    return RigidLikeParams(float(abs(factor)), float(np.angle(factor)), float(translation.real), float(translation.imag))


def rigid_fit_objective(u: DisplacementField, w: RigidLikeParams) -> float:
    """Sum of squared distances between phi(x_j) and the rigid-like image of x_j."""
    residual = u.mapped_points() - apply_rigid(w, u.grid.points)
    return float(np.sum(residual ** 2))
