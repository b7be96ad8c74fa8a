import logging
from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from frame_registration.core.image import Grid, ScalarImage
from frame_registration.core.transforms import DisplacementField
from frame_registration.exceptions import ContractError, UndefinedMeasureError
from frame_registration.schemas import ElasticConfig

logger = logging.getLogger(__name__)


def ssd(r_vals: np.ndarray, t_vals: np.ndarray, cell_area: float) -> float:
    """Midpoint quadrature of 1/2 * integral (T - R)^2."""
    r_vals = np.asarray(r_vals, dtype=float).ravel()
    t_vals = np.asarray(t_vals, dtype=float).ravel()
    if r_vals.size != t_vals.size:
        raise ContractError(f"SSD operands differ in length: {r_vals.size} vs {t_vals.size}")
    if cell_area <= 0:
        raise ContractError(f"cell_area must be positive, got {cell_area}")
    diff = t_vals - r_vals
    return 0.5 * cell_area * float(diff @ diff)


def ndm(r_img: ScalarImage, t_warped: ScalarImage) -> float:
    """
    Normalized dissimilarity ||T(phi) - R|| / ||R|| in L2 over the whole grid.

    Raises:
        UndefinedMeasureError: If the reference has zero norm
    """
    if r_img.data.shape != t_warped.data.shape:
        raise ContractError(f"NDM operands differ in shape: {r_img.data.shape} vs {t_warped.data.shape}")
    r = r_img.samples
    reference_norm = float(np.sqrt(r @ r))
    if reference_norm == 0.0:
        raise UndefinedMeasureError("NDM is undefined for an all-zero reference")
    diff = t_warped.samples - r
    return float(np.sqrt(diff @ diff)) / reference_norm


def _axis_difference(n: int, h: float) -> sp.csr_matrix:
    """Forward differences; the last row repeats the previous one so linear data is exact."""
    if n == 1:
        return sp.csr_matrix((1, 1))
    rows = np.concatenate([np.arange(n - 1), np.arange(n - 1), [n - 1, n - 1]])
    cols = np.concatenate([np.arange(n - 1), np.arange(1, n), [n - 2, n - 1]])
    vals = np.concatenate([-np.ones(n - 1), np.ones(n - 1), [-1.0, 1.0]])
    return sp.csr_matrix((vals / h, (rows, cols)), shape=(n, n))


@lru_cache(maxsize=16)
def difference_operators(grid: Grid) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse partial derivatives (d/dx1, d/dx2) acting on row-major grid vectors."""
    h1, h2 = grid.cell_size
    d1 = sp.kron(sp.identity(grid.ny), _axis_difference(grid.nx, h1), format="csr")
    d2 = sp.kron(_axis_difference(grid.ny, h2), sp.identity(grid.nx), format="csr")
    return d1, d2


@lru_cache(maxsize=16)
def _elastic_matrix(grid: Grid, lam: float, mu: float) -> sp.csr_matrix:
    d1, d2 = difference_operators(grid)
    div = sp.hstack([d1, d2])
    laplace = d1.T @ d1 + d2.T @ d2
    matrix = (lam + mu) * (div.T @ div) + mu * sp.block_diag([laplace, laplace])
    return (grid.cell_area * matrix).tocsr()


def elastic_matrix(grid: Grid, cfg: ElasticConfig) -> sp.csr_matrix:
    """Assembled operator A with elastic_energy(u) = 1/2 <u, A u> on stacked [u1; u2]."""
    return _elastic_matrix(grid, float(cfg.lam), float(cfg.mu))


def elastic_energy(u: DisplacementField, cfg: ElasticConfig) -> float:
    """
    Midpoint quadrature of the linear-elastic energy

        integral (lam + mu)/2 (div u)^2 + mu/2 (|grad u1|^2 + |grad u2|^2) dx.
    """
    if cfg.mu < 0 or cfg.lam + cfg.mu < 0:
        raise ContractError(f"Lame constants give an indefinite energy: lam={cfg.lam}, mu={cfg.mu}")
    d1, d2 = difference_operators(u.grid)
    d11, d21 = d1 @ u.u1, d2 @ u.u1
    d12, d22 = d1 @ u.u2, d2 @ u.u2
    div = d11 + d22
    density = 0.5 * (cfg.lam + cfg.mu) * div ** 2 + 0.5 * cfg.mu * (d11 ** 2 + d21 ** 2 + d12 ** 2 + d22 ** 2)
    return u.grid.cell_area * float(np.sum(density))


def elastic_operator_apply(u: DisplacementField, cfg: ElasticConfig) -> DisplacementField:
    """Return A u, the gradient of the elastic energy at u."""
    if cfg.mu < 0 or cfg.lam + cfg.mu < 0:
        raise ContractError(f"Lame constants give an indefinite energy: lam={cfg.lam}, mu={cfg.mu}")
    return DisplacementField.from_vector(u.grid, elastic_matrix(u.grid, cfg) @ u.as_vector())
