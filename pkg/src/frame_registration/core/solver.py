"""
Gauss-Newton minimization with Armijo backtracking.

Both registration problems are least-squares in the residual
r_j = T(phi(x_j)) - R(x_j), weighted by the cell area:

  parametric  J(w) = 1/2 h sum r_j^2                       (4 unknowns)
  elastic     J(u) = 1/2 h g^2 sum r_j^2 + alpha/2 <u - u_ref, A (u - u_ref)>
                                                          (2N unknowns)

The elastic data term is measured on g gray levels of images scaled to
[0, 1]. u_ref is zero or the pre-registered field.

The parametric normal equations are a dense 4x4 solve; the elastic ones are
applied matrix-free and solved by preconditioned conjugate gradients.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg

from frame_registration.core.image import Grid
from frame_registration.core.interpolation import Interpolant
from frame_registration.core.objective import elastic_matrix
from frame_registration.core.transforms import (
    DisplacementField,
    RigidLikeParams,
    apply_rigid,
    rigid_jacobian,
)
from frame_registration.exceptions import ContractError, SolverError
from frame_registration.schemas import ElasticConfig, SolverConfig

logger = logging.getLogger(__name__)

SINGULAR_SHIFT = 1e-10


class StopReason(Enum):
    """Why a Gauss-Newton run ended."""
    GRADIENT = "gradient"
    STEP = "step"
    OBJECTIVE_CHANGE = "objective-change"
    MAX_ITERATIONS = "max-iterations"
    LINE_SEARCH_FAILURE = "line-search-failure"


class IterationRecord(NamedTuple):
    iteration: int
    objective: float
    gradient_norm: float
    step: float


class LineSearchResult(NamedTuple):
    step: float
    accepted: bool
    value: float


@dataclass
class SolverTrace:
    """History of accepted iterates of one solve."""
    iterates: List[IterationRecord] = field(default_factory=list)
    converged: bool = False
    stop_reason: Optional[StopReason] = None
    notes: List[str] = field(default_factory=list)

    def record(self, iteration: int, objective: float, gradient_norm: float, step: float) -> None:
        self.iterates.append(IterationRecord(iteration, objective, gradient_norm, step))

    def note(self, message: str) -> None:
        logger.warning(message)
        self.notes.append(message)

    @property
    def objective_values(self) -> List[float]:
        return [record.objective for record in self.iterates]

    @property
    def initial_objective(self) -> float:
        return self.iterates[0].objective

    @property
    def final_objective(self) -> float:
        return self.iterates[-1].objective

    def is_monotone(self) -> bool:
        """Accepted objective values never increase."""
        values = self.objective_values
        return all(b <= a for a, b in zip(values, values[1:]))

    def to_dict(self):
        return {
            "iterations": len(self.iterates) - 1,
            "initial_objective": self.initial_objective if self.iterates else None,
            "final_objective": self.final_objective if self.iterates else None,
            "converged": self.converged,
            "stop_reason": self.stop_reason.value if self.stop_reason else None,
            "notes": list(self.notes),
        }


def armijo_search(
    objective: Callable[[float], float],
    base_value: float,
    directional_derivative: float,
    cfg: SolverConfig,
) -> LineSearchResult:
    """
    Backtrack along {1, beta, beta^2, ...} until sufficient decrease.

    Args:
        objective: Objective as a function of the step length
        base_value: Objective at step 0
        directional_derivative: Slope at step 0 (must be negative)
        cfg: Solver configuration (beta, c1, backtrack cap)

    Returns:
        LineSearchResult(step, accepted, value); accepted is False when no
        step on the ladder satisfies the Armijo condition
    """
    if not directional_derivative < 0:
        raise ContractError(f"Not a descent direction: slope {directional_derivative}")
    step = 1.0
    value = base_value
    for _ in range(cfg.armijo_max_backtracks + 1):
        value = objective(step)
        if np.isfinite(value) and value <= base_value + cfg.armijo_c1 * step * directional_derivative:
            return LineSearchResult(step, True, float(value))
        step *= cfg.armijo_beta
    return LineSearchResult(step / cfg.armijo_beta, False, float(value))


class _Linearization(NamedTuple):
    gradient: np.ndarray
    direction: Callable[[], Tuple[np.ndarray, Optional[str]]]


def _gauss_newton(problem, x0: np.ndarray, cfg: SolverConfig, label: str) -> Tuple[np.ndarray, SolverTrace]:
    """Generic Gauss-Newton loop; ``problem`` provides value(x) and linearize(x, cfg)."""
    trace = SolverTrace()
    x = np.array(x0, dtype=float)
    value = problem.value(x)
    if not np.isfinite(value):
        raise SolverError(f"{label}: non-finite initial objective")
    objective_scale = 1.0 + abs(value)
    previous_value = None
    last_step = 0.0
    last_step_norm = None

    for iteration in range(cfg.max_iterations + 1):
        linearization = problem.linearize(x, cfg)
        gradient_norm = float(np.linalg.norm(linearization.gradient))
        trace.record(iteration, value, gradient_norm, last_step)
        logger.debug(f"{label} it={iteration} J={value:.6e} |g|={gradient_norm:.3e} step={last_step:g}")

        if gradient_norm <= cfg.grad_tolerance * objective_scale:
            trace.stop_reason, trace.converged = StopReason.GRADIENT, True
            break
        if last_step_norm is not None and last_step_norm <= cfg.step_tolerance * (1.0 + np.linalg.norm(x)):
            trace.stop_reason, trace.converged = StopReason.STEP, True
            break
        if previous_value is not None and abs(previous_value - value) <= cfg.objective_tolerance * objective_scale:
            trace.stop_reason, trace.converged = StopReason.OBJECTIVE_CHANGE, True
            break
        if iteration == cfg.max_iterations:
            trace.stop_reason = StopReason.MAX_ITERATIONS
            break

        direction, note = linearization.direction()
        if note:
            trace.note(f"{label} iteration {iteration}: {note}")
        slope = float(linearization.gradient @ direction)
        if not (np.all(np.isfinite(direction)) and slope < 0):
            trace.note(f"{label} iteration {iteration}: not a descent direction, using steepest descent")
            direction = -linearization.gradient
            slope = -gradient_norm ** 2

        search = armijo_search(lambda s: problem.value(x + s * direction), value, slope, cfg)
        if not search.accepted:
            trace.stop_reason = StopReason.LINE_SEARCH_FAILURE
            trace.note(f"{label}: line search failed at iteration {iteration}, keeping best iterate")
            break

        x = x + search.step * direction
        previous_value, value = value, search.value
        last_step = search.step
        last_step_norm = search.step * float(np.linalg.norm(direction))

    return x, trace


class ParametricProblem:
    """Rigid-like registration objective on a fixed grid."""

    def __init__(self, r_itp: Interpolant, t_itp: Interpolant, grid: Grid):
        if r_itp.domain != t_itp.domain:
            raise ContractError("Reference and template interpolants must share the domain")
        self.grid = grid
        self.t_itp = t_itp
        self.reference, _ = r_itp.evaluate(grid.points)
        self.cell_area = grid.cell_area

    def residual(self, omega: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Residuals T(phi_w(x_j)) - R(x_j) and template gradients at phi_w(x_j)."""
        mapped = apply_rigid(RigidLikeParams.from_omega(omega), self.grid.points)
        values, gradients = self.t_itp.evaluate(mapped)
        return values - self.reference, gradients

    def value(self, omega: np.ndarray) -> float:
        if not np.all(np.isfinite(omega)):
            return np.inf
        residual, _ = self.residual(omega)
        return 0.5 * self.cell_area * float(residual @ residual)

    def residual_jacobian(self, omega: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Residuals and their (N, 4) Jacobian by the chain rule."""
        residual, gradients = self.residual(omega)
        jac_phi = rigid_jacobian(RigidLikeParams.from_omega(omega), self.grid.points)
        return residual, np.einsum("nk,nkp->np", gradients, jac_phi)

    def gradient(self, omega: np.ndarray) -> np.ndarray:
        residual, jac = self.residual_jacobian(omega)
        return self.cell_area * (jac.T @ residual)

    def linearize(self, omega: np.ndarray, cfg: SolverConfig) -> _Linearization:
        residual, jac = self.residual_jacobian(omega)
        gradient = self.cell_area * (jac.T @ residual)
        normal = self.cell_area * (jac.T @ jac)

        def direction():
            try:
                return scipy.linalg.cho_solve(scipy.linalg.cho_factor(normal), -gradient), None
            except scipy.linalg.LinAlgError:
                shifted = normal + SINGULAR_SHIFT * np.eye(4)
                return np.linalg.solve(shifted, -gradient), "singular 4x4 normal system regularized"

        return _Linearization(gradient, direction)


class ElasticProblem:
    """Elastic registration objective on a fixed grid, u stacked as [u1; u2]."""

    def __init__(self, r_itp: Interpolant, t_itp: Interpolant, grid: Grid, ecfg: ElasticConfig,
                 reference_field: Optional[np.ndarray] = None):
        if r_itp.domain != t_itp.domain:
            raise ContractError("Reference and template interpolants must share the domain")
        if ecfg.alpha <= 0:
            raise ContractError(f"Elastic registration needs alpha > 0, got {ecfg.alpha}")
        self.grid = grid
        self.t_itp = t_itp
        self.reference, _ = r_itp.evaluate(grid.points)
        self.data_weight = grid.cell_area * ecfg.gray_levels ** 2
        self.alpha = ecfg.alpha
        self.reference_field = (np.zeros(2 * grid.size) if reference_field is None
                                else np.asarray(reference_field, dtype=float).ravel())
        self.regularizer = elastic_matrix(grid, ecfg)
        self._regularizer_diagonal = self.regularizer.diagonal()

    def _split(self, vector: np.ndarray) -> np.ndarray:
        return np.asarray(vector, dtype=float).reshape(2, self.grid.size).T

    def residual(self, vector: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Residuals T(x_j - u_j) - R(x_j) and template gradients at x_j - u_j."""
        values, gradients = self.t_itp.evaluate(self.grid.points - self._split(vector))
        return values - self.reference, gradients

    def value(self, vector: np.ndarray) -> float:
        if not np.all(np.isfinite(vector)):
            return np.inf
        residual, _ = self.residual(vector)
        deviation = vector - self.reference_field
        data = 0.5 * self.data_weight * float(residual @ residual)
        return data + 0.5 * self.alpha * float(deviation @ (self.regularizer @ deviation))

    def gradient(self, vector: np.ndarray) -> np.ndarray:
        residual, gradients = self.residual(vector)
        return self._gradient(vector, residual, gradients)

    def _gradient(self, vector, residual, gradients) -> np.ndarray:
        # dr_j/du_j = -grad T(x_j - u_j)
        data = -self.data_weight * (gradients * residual[:, None])
        return data.T.ravel() + self.alpha * (self.regularizer @ (vector - self.reference_field))

    def linearize(self, vector: np.ndarray, cfg: SolverConfig) -> _Linearization:
        residual, gradients = self.residual(vector)
        gradient = self._gradient(vector, residual, gradients)
        n = self.grid.size
        weight = self.data_weight

        def normal_apply(v):
            v = np.asarray(v, dtype=float).ravel()
            projected = gradients[:, 0] * v[:n] + gradients[:, 1] * v[n:]
            data = weight * np.concatenate([gradients[:, 0] * projected, gradients[:, 1] * projected])
            return data + self.alpha * (self.regularizer @ v)

        diagonal = weight * np.concatenate([gradients[:, 0] ** 2, gradients[:, 1] ** 2])
        diagonal = diagonal + self.alpha * self._regularizer_diagonal
        inverse_diagonal = 1.0 / np.maximum(diagonal, np.finfo(float).tiny)

        def direction():
            operator = LinearOperator((2 * n, 2 * n), matvec=normal_apply, dtype=float)
            preconditioner = LinearOperator((2 * n, 2 * n), matvec=lambda v: inverse_diagonal * np.ravel(v),
                                            dtype=float)
            step, info = cg(operator, -gradient, rtol=cfg.cg_tolerance, maxiter=cfg.cg_max_iterations,
                            M=preconditioner)
            if info < 0 or not np.all(np.isfinite(step)):
                return -gradient, "CG breakdown, falling back to steepest descent"
            if info > 0:
                logger.debug(f"CG stopped at the iteration cap ({cfg.cg_max_iterations})")
            return step, None

        return _Linearization(gradient, direction)


def solve_parametric(
    r_itp: Interpolant,
    t_itp: Interpolant,
    grid: Grid,
    w0: RigidLikeParams,
    cfg: SolverConfig,
) -> Tuple[RigidLikeParams, SolverTrace]:
    """
    Minimize 1/2 ||T(phi_w) - R||^2 over the rigid-like parameters.

    Returns:
        (final parameters, trace of accepted iterates)
    """
    problem = ParametricProblem(r_itp, t_itp, grid)
    omega, trace = _gauss_newton(problem, w0.as_array(), cfg, label=f"parametric(theta={t_itp.theta:g})")
    return RigidLikeParams.from_omega(omega), trace


def solve_elastic(
    r_itp: Interpolant,
    t_itp: Interpolant,
    grid: Grid,
    u0: DisplacementField,
    ecfg: ElasticConfig,
    cfg: SolverConfig,
    u_ref: Optional[DisplacementField] = None,
) -> Tuple[DisplacementField, SolverTrace]:
    """
    Minimize 1/2 g^2 ||T(x - u) - R||^2 + alpha S(u - u_ref) over displacement fields.

    u_ref defaults to the zero field; the multiscale elastic method passes the
    pre-registered rigid-like field so that the regularizer leaves it in place.

    Returns:
        (final field, trace of accepted iterates)
    """
    if u0.grid != grid or (u_ref is not None and u_ref.grid != grid):
        raise ContractError("Initial and reference fields must live on the registration grid")
    problem = ElasticProblem(r_itp, t_itp, grid, ecfg,
                             reference_field=None if u_ref is None else u_ref.as_vector())
    vector, trace = _gauss_newton(problem, u0.as_vector(), cfg, label=f"elastic(theta={t_itp.theta:g})")
    return DisplacementField.from_vector(grid, vector), trace
