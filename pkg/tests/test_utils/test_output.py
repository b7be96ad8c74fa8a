import math

import numpy as np
import pytest

from frame_registration.config import parse_config_text
from frame_registration.core.image import ScalarImage, load_frame
from frame_registration.core.transforms import DisplacementField
from frame_registration.schemas import RunManifest
from frame_registration.utils.output import (
    difference_image,
    format_number,
    list_frames,
    plot_curves,
    plot_deformed_grid,
    write_csv,
    write_image,
    write_manifest,
)

pytestmark = pytest.mark.utils


@pytest.mark.parametrize("value,expected", [
    (0.1234567, "0.123457"),
    (np.float64(2.0), "2.000000"),
    (math.nan, "nan"),
    (None, ""),
    (True, "true"),
    (3, "3"),
    ("MEIR", "MEIR"),
])
def test_format_number(value, expected):
    assert format_number(value) == expected


def test_write_csv(tmp_path):
    path = write_csv(tmp_path / "sub" / "table.csv", ["setting", "ndm", "flags"],
                     [{"setting": "scale=0.8", "ndm": 0.05}, {"setting": "scale=1.2", "ndm": 0.1, "flags": "x"}])

    assert path.read_text() == "setting,ndm,flags\nscale=0.8,0.050000,\nscale=1.2,0.100000,x\n"


def test_write_image_reads_back(tmp_path, blob_16):
    path = write_image(tmp_path / "frame.png", blob_16)
    loaded = load_frame(path, 16)

    np.testing.assert_allclose(loaded.data, np.clip(blob_16.data, 0.0, 1.0), atol=0.5 / 255 + 1e-12)


def test_difference_image(blob_16):
    other = ScalarImage(blob_16.data + 0.25)
    np.testing.assert_allclose(difference_image(blob_16, other).data, 0.25)


def test_plots_are_reproducible(tmp_path, blob_16):
    for name in ("a", "b"):
        plot_curves(tmp_path / f"{name}.svg", [0, 1, 2], {"MEIR": [0.1, 0.3, 0.2], "MPIR": [0.2, 0.4, 0.3]},
                    xlabel="template frame", ylabel="NDM")
        plot_deformed_grid(tmp_path / f"{name}_grid.svg", DisplacementField.zeros(blob_16.grid), spacing=4)

    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert (tmp_path / "a_grid.svg").read_bytes() == (tmp_path / "b_grid.svg").read_bytes()


def test_list_frames_is_lexicographic(tmp_path):
    for name in ("frame_10.png", "frame_02.png", "notes.txt", "frame_01.PGM"):
        (tmp_path / name).write_bytes(b"")

    assert [p.split("/")[-1] for p in list_frames(tmp_path)] == ["frame_01.PGM", "frame_02.png", "frame_10.png"]


def test_manifest_loads_as_configuration(tmp_path):
    manifest = RunManifest(
        command="register",
        inputs=["r.png", "t.png"],
        config={"GRID": 64, "SCALES": [10.0, 1.0, 0.0], "LOG_FILE": None},
        seed=7,
        version="0.1.0",
        started_at="2024-01-01T00:00:00+00:00",
        wall_time=1.5,
        outputs=["result.csv"],
    )
    text = write_manifest(tmp_path / "manifest.txt", manifest).read_text()

    assert "WALL_TIME=1.500" in text
    assert "INPUTS=r.png,t.png" in text
    assert parse_config_text(text) == {"GRID": 64, "SCALES": [10.0, 1.0, 0.0], "LOG_FILE": None}
