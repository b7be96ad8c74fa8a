import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from frame_registration.exceptions import ContractError, IngestionError

logger = logging.getLogger(__name__)

LUMINANCE_WEIGHTS = (0.299, 0.587, 0.114)
DEFAULT_RESOLUTION = 128


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle [x_min, x_max] x [y_min, y_max]."""
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ContractError(f"Domain must have positive side lengths: {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of the points lying in the closed rectangle."""
        points = np.asarray(points, dtype=float)
        return (
            (points[:, 0] >= self.x_min) & (points[:, 0] <= self.x_max)
            & (points[:, 1] >= self.y_min) & (points[:, 1] <= self.y_max)
        )


UNIT_DOMAIN = Domain()


@dataclass(frozen=True)
class Grid:
    """Cell-centered grid of nx x ny cells over a domain.

    Points are stored row-major: index j = i2 * nx + i1, with i1 running
    along x1 (columns) and i2 along x2 (rows).
    """
    nx: int
    ny: int
    domain: Domain = UNIT_DOMAIN

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ContractError(f"Grid needs at least one cell per axis, got {self.nx}x{self.ny}")

    @property
    def shape(self) -> Tuple[int, int]:
        """Array shape (rows, columns) of fields living on this grid."""
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def cell_size(self) -> Tuple[float, float]:
        return (self.domain.width / self.nx, self.domain.height / self.ny)

    @property
    def cell_area(self) -> float:
        h1, h2 = self.cell_size
        return h1 * h2

    @cached_property
    def points(self) -> np.ndarray:
        h1, h2 = self.cell_size
        x1 = self.domain.x_min + (np.arange(self.nx) + 0.5) * h1
        x2 = self.domain.y_min + (np.arange(self.ny) + 0.5) * h2
        xx1, xx2 = np.meshgrid(x1, x2)
        points = np.column_stack([xx1.ravel(), xx2.ravel()])
        points.flags.writeable = False
        return points

    def to_index(self, points: np.ndarray) -> np.ndarray:
        """Continuous (column, row) index coordinates of points; cell centers are integers."""
        points = np.asarray(points, dtype=float)
        h1, h2 = self.cell_size
        return np.column_stack([
            (points[:, 0] - self.domain.x_min) / h1 - 0.5,
            (points[:, 1] - self.domain.y_min) / h2 - 0.5,
        ])


@dataclass(frozen=True, eq=False)
class ScalarImage:
    """Grayscale intensities sampled on a cell-centered grid.

    ``data`` has shape (height, width); ``samples`` is its row-major flat view.
    """
    data: np.ndarray
    domain: Domain = field(default=UNIT_DOMAIN)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or data.size == 0:
            raise ContractError(f"Image data must be a nonempty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ContractError("Image samples must be finite")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_samples(cls, width: int, height: int, samples, domain: Domain = UNIT_DOMAIN) -> "ScalarImage":
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size != width * height:
            raise ContractError(f"Expected {width * height} samples, got {samples.size}")
        return cls(samples.reshape(height, width), domain)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> np.ndarray:
        return self.data.ravel()

    @property
    def grid(self) -> Grid:
        return Grid(self.width, self.height, self.domain)


def cell_centered_grid(nx: int, ny: int, domain: Domain = UNIT_DOMAIN) -> Grid:
    """Create the cell-centered grid with nx x ny cells over ``domain``."""
    return Grid(nx, ny, domain)


def _area_weights(n_out: int, n_in: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """
    Box-filter resampling weights along one axis.

    Output cell k covers [k/n_out, (k+1)/n_out] of the unit interval, input
    cell i covers its share of [lo, hi]. Entry (k, i) is the fraction of
    output cell k overlapped by input cell i. Edges are expressed in units of
    1/(n_in*n_out) so integer ratios stay exact.
    """
    unit = float(n_in * n_out)
    out_edges = np.arange(n_out + 1, dtype=float) * n_in
    in_edges = lo * unit + np.arange(n_in + 1, dtype=float) * (hi - lo) * n_out
    overlap = (
        np.minimum(out_edges[1:, None], in_edges[None, 1:])
        - np.maximum(out_edges[:-1, None], in_edges[None, :-1])
    )
    return np.clip(overlap, 0.0, None) / n_in


def resample_image(img: ScalarImage, width: int, height: int = None) -> ScalarImage:
    """Resample by area averaging onto a width x height grid over the same domain."""
    height = width if height is None else height
    if (width, height) == (img.width, img.height):
        return img
    wy = _area_weights(height, img.height)
    wx = _area_weights(width, img.width)
    return ScalarImage(wy @ img.data @ wx.T, img.domain)


def load_frame(path: Union[str, Path], target_n: int = DEFAULT_RESOLUTION) -> ScalarImage:
    """
    Read an 8-bit gray or RGB raster as a grayscale image on [0,1]^2.

    Args:
        path: Image file (PNG, PGM or any format Pillow decodes)
        target_n: Output resolution per axis

    Returns:
        Image with intensities in [0, 1], resampled to target_n x target_n

    Raises:
        IngestionError: If the file cannot be read or decoded
    """
    if target_n < 1:
        raise ContractError(f"target_n must be positive, got {target_n}")
    try:
        with Image.open(path) as raster:
            raster.load()
            if raster.mode in ("L", "1"):
                gray = np.asarray(raster.convert("L"), dtype=np.float64)
            else:
                rgb = np.asarray(raster.convert("RGB"), dtype=np.float64)
                gray = rgb @ np.asarray(LUMINANCE_WEIGHTS)
    except (OSError, UnidentifiedImageError, ValueError) as e:
        raise IngestionError(f"Cannot read frame {path}: {e}") from e

    height, width = gray.shape
    if width != height:
        logger.warning(f"Frame {path} is not square ({width}x{height}); resampling to {target_n}x{target_n}")
    img = ScalarImage(gray / 255.0)
    return resample_image(img, target_n, target_n)


def pad_image(img: ScalarImage, margin_fraction: float) -> ScalarImage:
    """
    Shrink the image content into the central part of the domain, zeros outside.

    The content occupies the central (1 - 2*margin_fraction) fraction of each
    axis; the sample count is unchanged and total intensity scales by
    (1 - 2*margin_fraction)^2.
    """
    if not 0.0 <= margin_fraction < 0.5:
        raise ContractError(f"margin_fraction must lie in [0, 0.5), got {margin_fraction}")
    if margin_fraction == 0.0:
        return img
    lo, hi = margin_fraction, 1.0 - margin_fraction
    wy = _area_weights(img.height, img.height, lo, hi)
    wx = _area_weights(img.width, img.width, lo, hi)
    return ScalarImage(wy @ img.data @ wx.T, img.domain)
