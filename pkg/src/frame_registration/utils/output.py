"""Result files: CSV tables, grayscale images, SVG plots and run manifests."""
import csv
import logging
import math
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Sequence, Union

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from frame_registration.core.image import ScalarImage  # noqa: E402
from frame_registration.core.transforms import DisplacementField  # noqa: E402
from frame_registration.schemas import RunManifest  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# fixed ids and no date stamp keep reruns byte-identical
SVG_RC = {"svg.hashsalt": "frame-registration", "svg.fonttype": "none"}
SVG_METADATA = {"Date": None, "Creator": None}


def format_number(value: Any) -> str:
    """Six decimals for reals, plain text otherwise."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else f"{value:.6f}"
    return str(value)


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """Write rows as CSV with fixed numeric formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_number(row.get(column)) for column in columns])
    logger.info(f"Wrote {path}")
    return path


def write_image(path: PathLike, img: ScalarImage) -> Path:
    """Save intensities clipped to [0, 1] as an 8-bit grayscale PNG or PGM (by suffix)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.round(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path)
    logger.info(f"Wrote {path}")
    return path


def difference_image(reference: ScalarImage, warped: ScalarImage) -> ScalarImage:
    """|R - T(phi)| per sample."""
    return ScalarImage(np.abs(reference.data - warped.data), reference.domain)


def _save_svg(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format='svg', metadata=SVG_METADATA)
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def plot_curves(
    path: PathLike,
    x: Sequence[float],
    series: Dict[str, Sequence[float]],
    xlabel: str,
    ylabel: str,
    title: str = "",
) -> Path:
    """One polyline per named series over a shared x axis."""
    with matplotlib.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(8, 4))
        for name, values in series.items():
            ax.plot(x, values, marker='o', markersize=3, linewidth=1.2, label=name)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        return _save_svg(fig, Path(path))


def plot_deformed_grid(path: PathLike, u: DisplacementField, spacing: int = 8) -> Path:
    """Draw every ``spacing``-th grid line mapped through x -> x - u(x)."""
    grid = u.grid
    mapped = u.mapped_points().reshape(grid.ny, grid.nx, 2)
    rows = range(0, grid.ny, spacing)
    cols = range(0, grid.nx, spacing)
    with matplotlib.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 6))
        for i in rows:
            ax.plot(mapped[i, :, 0], mapped[i, :, 1], color='tab:blue', linewidth=0.7)
        for j in cols:
            ax.plot(mapped[:, j, 0], mapped[:, j, 1], color='tab:blue', linewidth=0.7)
        ax.set_xlim(grid.domain.x_min, grid.domain.x_max)
        ax.set_ylim(grid.domain.y_max, grid.domain.y_min)
        ax.set_aspect('equal')
        ax.set_title('Id - u')
        fig.tight_layout()
        return _save_svg(fig, Path(path))


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def write_manifest(path: PathLike, manifest: RunManifest) -> Path:
    """Write the manifest as key=value text."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        f.write(manifest.to_text())
    logger.info(f"Wrote {path}")
    return path


def list_frames(directory: PathLike, suffixes: Sequence[str] = ('.png', '.pgm', '.jpg', '.jpeg', '.bmp', '.tif', '.tiff')) -> list:
    """Image files of a directory in lexicographic order."""
    directory = Path(directory)
    return sorted(
        str(directory / name) for name in os.listdir(directory)
        if Path(name).suffix.lower() in suffixes
    )
