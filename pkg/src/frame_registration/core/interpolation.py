"""
Multiscale cubic B-spline interpolation.

The spline basis is scaled to the integer-node values (1, 4, 1). Coefficients
sit on the image's cell centers and are extended outside the grid by
half-sample mirroring, so constant images are reproduced exactly. The scale
parameter theta trades data fit against a per-axis moment (second
difference) penalty on the coefficients:

    min_c ||B c - s||^2 + theta * (||(B_y (x) M_x) c||^2 + ||(M_y (x) B_x) c||^2)

which is solved exactly by diagonalizing each axis' pencil (M'M, B'B).
Outside the image domain the interpolant is zero.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.linalg

from frame_registration.core.image import Domain, ScalarImage
from frame_registration.exceptions import ContractError, RegistrationError

logger = logging.getLogger(__name__)

_OFFSETS = np.arange(-1, 3)


def bspline(t: np.ndarray) -> np.ndarray:
    """Cubic B-spline with node values b(0)=4, b(+-1)=1."""
    a = np.abs(t)
    out = np.zeros_like(a, dtype=float)
    inner = a < 1.0
    outer = (a >= 1.0) & (a < 2.0)
    out[inner] = 4.0 - 6.0 * a[inner] ** 2 + 3.0 * a[inner] ** 3
    out[outer] = (2.0 - a[outer]) ** 3
    return out


def bspline_derivative(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    out = np.zeros_like(a)
    inner = a < 1.0
    outer = (a >= 1.0) & (a < 2.0)
    out[inner] = -12.0 * t[inner] + 9.0 * t[inner] * a[inner]
    out[outer] = -3.0 * np.sign(t[outer]) * (2.0 - a[outer]) ** 2
    return out


def mirror_index(k: np.ndarray, n: int) -> np.ndarray:
    """Half-sample symmetric extension of indices into [0, n)."""
    k = np.mod(k, 2 * n)
    return np.where(k >= n, 2 * n - 1 - k, k)


def _stencil_matrix(n: int, stencil) -> np.ndarray:
    matrix = np.zeros((n, n))
    rows = np.arange(n)
    for offset, weight in zip((-1, 0, 1), stencil):
        np.add.at(matrix, (rows, mirror_index(rows + offset, n)), weight)
    return matrix


@lru_cache(maxsize=32)
def collocation_matrix(n: int) -> np.ndarray:
    """Spline values at the n cell centers (mirror-closed (1, 4, 1) stencil)."""
    matrix = _stencil_matrix(n, (1.0, 4.0, 1.0))
    matrix.flags.writeable = False
    return matrix


@lru_cache(maxsize=32)
def moment_matrix(n: int) -> np.ndarray:
    """Second differences of the coefficients, mirror-closed; annihilates constants."""
    matrix = _stencil_matrix(n, (1.0, -2.0, 1.0))
    matrix.flags.writeable = False
    return matrix


@lru_cache(maxsize=32)
def _axis_pencil(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized eigenpairs of (M'M, B'B): V' B'B V = I, V' M'M V = diag(lam)."""
    b = collocation_matrix(n)
    m = moment_matrix(n)
    lam, vectors = scipy.linalg.eigh(m.T @ m, b.T @ b)
    lam = np.clip(lam, 0.0, None)
    lam.flags.writeable = False
    vectors.flags.writeable = False
    return lam, vectors


@dataclass(frozen=True, eq=False)
class Interpolant:
    """Spline representation of an image at scale ``theta``."""
    coefficients: np.ndarray
    theta: float
    domain: Domain

    @property
    def shape(self) -> Tuple[int, int]:
        return self.coefficients.shape

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Evaluate values and analytic gradients at arbitrary points.

        Args:
            points: Array of shape (N, 2) with (x1, x2) coordinates

        Returns:
            (values of shape (N,), gradients of shape (N, 2)); points outside
            the domain get value 0 and gradient (0, 0)
        """
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        values = np.zeros(len(points))
        gradients = np.zeros((len(points), 2))
        inside = self.domain.contains(points)
        if not inside.any():
            return values, gradients

        ny, nx = self.coefficients.shape
        h1 = self.domain.width / nx
        h2 = self.domain.height / ny
        p = points[inside]
        t1 = (p[:, 0] - self.domain.x_min) / h1 - 0.5
        t2 = (p[:, 1] - self.domain.y_min) / h2 - 0.5
        k1 = np.floor(t1).astype(int)[:, None] + _OFFSETS
        k2 = np.floor(t2).astype(int)[:, None] + _OFFSETS
        d1 = t1[:, None] - k1
        d2 = t2[:, None] - k2
        w1, dw1 = bspline(d1), bspline_derivative(d1)
        w2, dw2 = bspline(d2), bspline_derivative(d2)

        local = self.coefficients[mirror_index(k2, ny)[:, :, None], mirror_index(k1, nx)[:, None, :]]
        values[inside] = np.einsum("ma,mab,mb->m", w2, local, w1)
        gradients[inside, 0] = np.einsum("ma,mab,mb->m", w2, local, dw1) / h1
        gradients[inside, 1] = np.einsum("ma,mab,mb->m", dw2, local, w1) / h2
        return values, gradients


def build_interpolant(img: ScalarImage, theta: float) -> Interpolant:
    """
    Fit spline coefficients to an image at scale ``theta``.

    theta = 0 is plain interpolation; larger theta gives smoother
    representations that keep only the prominent features.
    """
    if theta < 0 or not np.isfinite(theta):
        raise ContractError(f"theta must be a finite nonnegative number, got {theta}")
    ny, nx = img.data.shape
    by, bx = collocation_matrix(ny), collocation_matrix(nx)
    try:
        if theta == 0:
            # C = By^-1 S Bx^-T
            coefficients = scipy.linalg.solve(by, scipy.linalg.solve(bx, img.data.T).T)
        else:
            lam_y, vy = _axis_pencil(ny)
            lam_x, vx = _axis_pencil(nx)
            projected = vy.T @ (by.T @ img.data @ bx) @ vx
            projected /= 1.0 + theta * (lam_y[:, None] + lam_x[None, :])
            coefficients = vy @ projected @ vx.T
    except scipy.linalg.LinAlgError as e:
        raise RegistrationError(f"Spline normal system is singular: {e}") from e
    coefficients.flags.writeable = False
    return Interpolant(coefficients, float(theta), img.domain)


def interp_eval(itp: Interpolant, pts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Values and gradients of ``itp`` at ``pts``; zero outside the domain."""
    return itp.evaluate(pts)
