from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from frame_registration.core.image import ScalarImage
from frame_registration.core.queue_manager import QueueManager
from frame_registration.core.synth import centered_rigid
from frame_registration.core.transforms import apply_rigid
from frame_registration.core.worker import Worker
from frame_registration.schemas import RegistrationConfig, SolverConfig

# (center x1, center x2, width, weight); kept away from the boundary so
# small rigid maps never push content out of the unit square
BLOBS = [
    (0.42, 0.45, 0.09, 1.0),
    (0.60, 0.40, 0.06, 0.7),
    (0.50, 0.62, 0.07, 0.5),
]
OTHER_BLOBS = [
    (0.35, 0.60, 0.08, 0.9),
    (0.65, 0.65, 0.05, 0.8),
]


def pytest_configure(config: pytest.Config):
    config.addinivalue_line("markers", "dothis: only do this test")
    config.addinivalue_line("markers", "core: core functionality")
    config.addinivalue_line("markers", "cli: command line interface")
    config.addinivalue_line("markers", "utils: utility functions")
    config.addinivalue_line("markers", "slow: registration runs on several frames")


def blob_function(points: np.ndarray, blobs=BLOBS) -> np.ndarray:
    """Sum of Gaussian bumps evaluated at (N, 2) points."""
    points = np.asarray(points, dtype=float)
    values = np.zeros(len(points))
    for cx, cy, width, weight in blobs:
        r2 = (points[:, 0] - cx) ** 2 + (points[:, 1] - cy) ** 2
        values += weight * np.exp(-r2 / (2.0 * width ** 2))
    return values


def blob_image(n: int, blobs=BLOBS, mapping=None) -> ScalarImage:
    """Blob texture sampled at the cell centers of an n x n grid, optionally at mapping(points)."""
    x = (np.arange(n) + 0.5) / n
    xx, yy = np.meshgrid(x, x)
    points = np.column_stack([xx.ravel(), yy.ravel()])
    if mapping is not None:
        points = mapping(points)
    return ScalarImage(blob_function(points, blobs).reshape(n, n))


def save_png(path: Path, img: ScalarImage) -> Path:
    pixels = np.round(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path)
    return path


@pytest.fixture
def make_blob():
    return blob_image


@pytest.fixture
def rigid_pair():
    """Factory of (reference, template, phi) with T(phi(x)) = R(x) for the centered map phi."""
    def build(n: int, scale: float, rotation_degrees: float):
        phi = centered_rigid(scale, rotation_degrees)
        reference = blob_image(n)
        template = blob_image(n, mapping=lambda pts: apply_rigid(phi.inverse(), pts))
        return reference, template, phi
    return build


@pytest.fixture
def blob_32() -> ScalarImage:
    return blob_image(32)


@pytest.fixture
def blob_16() -> ScalarImage:
    return blob_image(16)


@pytest.fixture
def small_config() -> RegistrationConfig:
    """Short schedule on a 32 x 32 grid with the default regularizer."""
    return RegistrationConfig(
        schedule=(10.0, 1.0, 0.0),
        grid_n=32,
        solver=SolverConfig(max_iterations=30),
        elastic_solver=SolverConfig(max_iterations=15),
    )


@pytest.fixture
def tiny_config() -> RegistrationConfig:
    """Two scales on a 16 x 16 grid, for tests that register many pairs."""
    return RegistrationConfig(
        schedule=(1.0, 0.0),
        grid_n=16,
        solver=SolverConfig(max_iterations=10),
        elastic_solver=SolverConfig(max_iterations=5),
    )


@pytest.fixture
def frame_dir(tmp_path: Path) -> Path:
    """Three identical 16 x 16 frames."""
    directory = tmp_path / "frames"
    directory.mkdir()
    img = blob_image(16)
    for i in range(3):
        save_png(directory / f"frame_{i:03d}.png", img)
    return directory


@pytest.fixture
def queue_manager():
    """Create a queue manager instance."""
    return QueueManager()


@pytest.fixture
def worker(queue_manager):
    """Create a worker instance."""
    worker = Worker(queue_manager)
    yield worker
    worker.stop()
