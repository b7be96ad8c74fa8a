import logging

import numpy as np
import pytest
from PIL import Image

from frame_registration.core.image import (
    Domain,
    ScalarImage,
    cell_centered_grid,
    load_frame,
    pad_image,
    resample_image,
)
from frame_registration.exceptions import ContractError, IngestionError

pytestmark = pytest.mark.core


def test_cell_centered_grid():
    grid = cell_centered_grid(4, 2)

    assert grid.shape == (2, 4)
    assert grid.size == 8
    assert grid.cell_size == (0.25, 0.5)
    assert grid.cell_area == pytest.approx(0.125)
    np.testing.assert_allclose(grid.points[0], [0.125, 0.25])
    np.testing.assert_allclose(grid.points[4], [0.125, 0.75])
    np.testing.assert_allclose(grid.to_index(grid.points[5:6]), [[1.0, 1.0]])


def test_grid_points_on_other_domain():
    grid = cell_centered_grid(2, 2, Domain(-1.0, 1.0, 0.0, 4.0))
    np.testing.assert_allclose(grid.points, [[-0.5, 1.0], [0.5, 1.0], [-0.5, 3.0], [0.5, 3.0]])


def test_invalid_domain_and_grid():
    with pytest.raises(ContractError):
        Domain(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ContractError):
        cell_centered_grid(0, 4)


def test_scalar_image_validation():
    with pytest.raises(ContractError):
        ScalarImage(np.array([[0.0, np.nan]]))
    with pytest.raises(ContractError):
        ScalarImage(np.zeros(4))
    with pytest.raises(ContractError):
        ScalarImage.from_samples(3, 3, np.zeros(8))


def test_scalar_image_samples_are_row_major():
    img = ScalarImage.from_samples(3, 2, np.arange(6))

    assert (img.width, img.height) == (3, 2)
    assert img.data[1, 0] == 3.0
    np.testing.assert_array_equal(img.samples, np.arange(6.0))
    assert not img.data.flags.writeable


def test_resample_block_average():
    img = ScalarImage(np.arange(16.0).reshape(4, 4))
    coarse = resample_image(img, 2)

    np.testing.assert_allclose(coarse.data, [[2.5, 4.5], [10.5, 12.5]])


def test_resample_keeps_constants():
    img = ScalarImage(np.full((6, 6), 0.3))
    np.testing.assert_allclose(resample_image(img, 4).data, 0.3)
    np.testing.assert_allclose(resample_image(img, 9).data, 0.3)


def test_load_gray_frame(tmp_path):
    pixels = np.arange(64, dtype=np.uint8).reshape(8, 8) * 4
    path = tmp_path / "gray.png"
    Image.fromarray(pixels).save(path)

    img = load_frame(path, 8)
    np.testing.assert_allclose(img.data, pixels / 255.0)
    assert img.domain == Domain()


def test_load_rgb_frame_uses_luminance(tmp_path):
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    rgb[..., 0] = 255
    path = tmp_path / "red.png"
    Image.fromarray(rgb).save(path)

    img = load_frame(path, 4)
    np.testing.assert_allclose(img.data, 0.299)


def test_load_non_square_frame_warns(tmp_path, caplog):
    path = tmp_path / "wide.png"
    Image.fromarray(np.full((4, 8), 128, dtype=np.uint8)).save(path)

    with caplog.at_level(logging.WARNING):
        img = load_frame(path, 4)
    assert img.data.shape == (4, 4)
    assert "not square" in caplog.text


def test_load_frame_errors(tmp_path):
    broken = tmp_path / "broken.png"
    broken.write_bytes(b"not an image")

    with pytest.raises(IngestionError):
        load_frame(broken)
    with pytest.raises(IngestionError):
        load_frame(tmp_path / "missing.png")


def test_pad_image_shrinks_content():
    img = ScalarImage(np.ones((8, 8)))
    padded = pad_image(img, 0.25)

    assert padded.data.shape == (8, 8)
    np.testing.assert_allclose(padded.data[2:6, 2:6], 1.0)
    assert padded.data[:2].sum() == 0.0
    assert padded.data[:, 6:].sum() == 0.0
    assert padded.data.sum() == pytest.approx(64 * 0.25)


def test_pad_image_zero_margin_and_range():
    img = ScalarImage(np.ones((4, 4)))
    assert pad_image(img, 0.0) is img
    with pytest.raises(ContractError):
        pad_image(img, 0.5)
