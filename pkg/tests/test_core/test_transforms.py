import math

import numpy as np
import pytest

from frame_registration.core.image import cell_centered_grid
from frame_registration.core.interpolation import build_interpolant
from frame_registration.core.transforms import (
    DisplacementField,
    RigidLikeParams,
    apply_displacement,
    apply_rigid,
    closest_rigid_like,
    compose_displacements,
    rigid_fit_objective,
    rigid_jacobian,
    rigid_to_displacement,
    sample_field,
    warp_image,
)
from frame_registration.exceptions import ContractError, EstimationError

pytestmark = pytest.mark.core


def _least_squares_rigid(u: DisplacementField) -> RigidLikeParams:
    """x -> [[a, -b], [b, a]] x + t is linear in (a, b, tx, ty); solve it directly."""
    x = u.grid.points
    y = u.mapped_points()
    n = len(x)
    design = np.zeros((2 * n, 4))
    design[:n] = np.column_stack([x[:, 0], -x[:, 1], np.ones(n), np.zeros(n)])
    design[n:] = np.column_stack([x[:, 1], x[:, 0], np.zeros(n), np.ones(n)])
    (a, b, tx, ty), *_ = np.linalg.lstsq(design, np.concatenate([y[:, 0], y[:, 1]]), rcond=None)
    return RigidLikeParams(math.hypot(a, b), math.atan2(b, a), tx, ty)


def test_apply_rigid_examples():
    pts = np.array([[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_allclose(apply_rigid(RigidLikeParams.identity(), pts), pts)
    np.testing.assert_allclose(apply_rigid(RigidLikeParams.from_degrees(1.0, 90.0), pts),
                               [[0.0, 1.0], [-2.0, 0.0]], atol=1e-15)
    np.testing.assert_allclose(apply_rigid(RigidLikeParams(2.0, 0.0, 0.5, -1.0), pts), [[2.5, -1.0], [0.5, 3.0]])


def test_params_conversions():
    w = RigidLikeParams.from_degrees(1.4, 20.0, 0.1, -0.2)

    assert w.rotation_degrees == pytest.approx(20.0)
    assert w.omega == (1.4, math.radians(20.0), 0.1, -0.2)
    assert RigidLikeParams.from_omega(w.as_array()) == w
    with pytest.raises(ContractError):
        RigidLikeParams(math.nan, 0.0, 0.0, 0.0)


def test_inverse_undoes_map():
    w = RigidLikeParams.from_degrees(0.8, -35.0, 0.3, 0.1)
    pts = np.random.default_rng(0).uniform(size=(10, 2))

    np.testing.assert_allclose(apply_rigid(w.inverse(), apply_rigid(w, pts)), pts, atol=1e-12)
    with pytest.raises(ContractError):
        RigidLikeParams(0.0, 0.0, 0.0, 0.0).inverse()


def test_rigid_jacobian_matches_differences():
    w = RigidLikeParams(1.2, 0.3, 0.05, -0.1)
    pts = np.random.default_rng(2).uniform(size=(6, 2))
    jac = rigid_jacobian(w, pts)
    eps = 1e-7
    for p in range(4):
        step = np.zeros(4)
        step[p] = eps
        fd = (apply_rigid(RigidLikeParams.from_omega(w.as_array() + step), pts)
              - apply_rigid(RigidLikeParams.from_omega(w.as_array() - step), pts)) / (2 * eps)
        np.testing.assert_allclose(jac[:, :, p], fd, atol=1e-7)


def test_apply_displacement():
    grid = cell_centered_grid(4, 4)
    u = DisplacementField(grid, np.full(16, 0.1), np.full(16, -0.2))

    np.testing.assert_allclose(apply_displacement(u, grid.points), grid.points - [0.1, -0.2])
    with pytest.raises(ContractError):
        apply_displacement(u, grid.points[:5])


def test_displacement_field_validation():
    grid = cell_centered_grid(4, 4)
    with pytest.raises(ContractError):
        DisplacementField(grid, np.zeros(15), np.zeros(16))
    with pytest.raises(ContractError):
        DisplacementField(grid, np.full(16, np.inf), np.zeros(16))

    u = DisplacementField.from_vector(grid, np.arange(32.0))
    np.testing.assert_array_equal(u.as_vector(), np.arange(32.0))
    assert DisplacementField.zeros(grid).max_magnitude() == 0.0


@pytest.mark.parametrize("omega", [(1.0, 0.0, 0.0, 0.0), (1.4, math.radians(20.0), 0.05, -0.1),
                                   (0.6, math.radians(-45.0), 0.2, 0.3)])
def test_closest_rigid_like_recovers_rigid_fields(omega):
    grid = cell_centered_grid(16, 16)
    w = RigidLikeParams.from_omega(omega)
    fit = closest_rigid_like(rigid_to_displacement(w, grid))

    np.testing.assert_allclose(fit.as_array(), w.as_array(), atol=1e-10)
    assert rigid_fit_objective(rigid_to_displacement(w, grid), fit) < 1e-12


def test_closest_rigid_like_matches_least_squares_on_non_rigid_fields():
    grid = cell_centered_grid(12, 12)
    rng = np.random.default_rng(3)
    u = DisplacementField(grid, rng.normal(0.0, 0.05, grid.size), rng.normal(0.0, 0.05, grid.size))

    fit = closest_rigid_like(u)
    oracle = _least_squares_rigid(u)
    assert rigid_fit_objective(u, fit) == pytest.approx(rigid_fit_objective(u, oracle), abs=1e-6)
    # nudging the fit never helps
    for p in range(4):
        step = np.zeros(4)
        step[p] = 1e-3
        assert rigid_fit_objective(u, fit) <= rigid_fit_objective(u, RigidLikeParams.from_omega(fit.as_array() + step))


def test_closest_rigid_like_degenerate_grid():
    grid = cell_centered_grid(1, 1)
    with pytest.raises(EstimationError):
        closest_rigid_like(DisplacementField.zeros(grid))


def test_warp_identity_reproduces_image(blob_16):
    grid = blob_16.grid
    warped = warp_image(build_interpolant(blob_16, 0.0), grid.points, grid)
    np.testing.assert_allclose(warped.data, blob_16.data, atol=1e-10)


def test_warp_outside_is_zero(blob_16):
    grid = blob_16.grid
    warped = warp_image(build_interpolant(blob_16, 0.0), grid.points + 2.0, grid)
    assert np.all(warped.data == 0.0)


def test_compose_translations():
    grid = cell_centered_grid(8, 8)
    outer = DisplacementField(grid, np.full(64, 0.01), np.zeros(64))
    inner = DisplacementField(grid, np.zeros(64), np.full(64, -0.02))
    composed = compose_displacements(outer, inner)

    np.testing.assert_allclose(composed.u1, 0.01)
    np.testing.assert_allclose(composed.u2, -0.02)


def test_compose_with_zero_field():
    grid = cell_centered_grid(8, 8)
    rng = np.random.default_rng(4)
    u = DisplacementField(grid, rng.normal(0, 0.01, 64), rng.normal(0, 0.01, 64))
    zero = DisplacementField.zeros(grid)

    np.testing.assert_allclose(compose_displacements(zero, u).as_vector(), u.as_vector())
    np.testing.assert_allclose(compose_displacements(u, zero).as_vector(), u.as_vector(), atol=1e-15)
    with pytest.raises(ContractError):
        compose_displacements(u, DisplacementField.zeros(cell_centered_grid(4, 4)))


def test_sample_field_at_grid_points():
    grid = cell_centered_grid(6, 6)
    rng = np.random.default_rng(5)
    u = DisplacementField(grid, rng.normal(size=36), rng.normal(size=36))
    np.testing.assert_allclose(sample_field(u, grid.points), u.as_array(), atol=1e-12)
