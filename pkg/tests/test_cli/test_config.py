import pytest

from frame_registration.cli.config_manager import create_config
from frame_registration.config import (
    DEFAULT_CONFIG,
    build_registration_config,
    coerce_value,
    format_config_text,
    load_config,
    parse_config_text,
    read_config_file,
)
from frame_registration.exceptions import ContractError
from frame_registration.schemas import PoseSource

pytestmark = pytest.mark.cli


def test_defaults():
    config = load_config()
    assert config["SCALES"] == [100.0, 10.0, 1.0, 0.0]
    assert config["GRID"] == 128
    assert config["ITERATE"] == 2
    assert config["METHOD"] == "meir"


def test_file_and_environment_layers(tmp_path, monkeypatch):
    config_file = tmp_path / "run.txt"
    config_file.write_text("# registration settings\n\nGRID=64\nalpha = 2.5\nTWO_LEVEL=yes\n")
    monkeypatch.setenv("FRAME_REG_GRID", "32")

    config = load_config(config_file)

    assert config["GRID"] == 32
    assert config["ALPHA"] == 2.5
    assert config["TWO_LEVEL"] is True
    assert config["MU"] == DEFAULT_CONFIG["MU"]


@pytest.mark.parametrize("key,raw,expected", [
    ("GRID", "64", 64),
    ("ALPHA", "0.25", 0.25),
    ("TWO_LEVEL", "false", False),
    ("SCALES", "10, 1, 0", [10.0, 1.0, 0.0]),
    ("LOG_FILE", "", None),
    ("LOG_FILE", "run.log", "run.log"),
])
def test_coerce_value(key, raw, expected):
    assert coerce_value(key, raw) == expected


@pytest.mark.parametrize("key,raw", [("GRID", "many"), ("ALPHA", "x"), ("TWO_LEVEL", "maybe"), ("SCALES", "1,a")])
def test_coerce_value_rejects_bad_text(key, raw):
    with pytest.raises(ContractError):
        coerce_value(key, raw)


def test_parse_config_text():
    assert parse_config_text("JOBS=4\nCOMMAND=register\n") == {"JOBS": 4}
    with pytest.raises(ContractError):
        parse_config_text("JOBS 4\n")


def test_config_text_reads_back(tmp_path):
    path = tmp_path / "config.txt"
    path.write_text(format_config_text(DEFAULT_CONFIG))
    assert read_config_file(path) == DEFAULT_CONFIG


def test_build_registration_config():
    config = dict(DEFAULT_CONFIG, GRID=32, ITERATE=1, POSE_FROM="second-step", JOBS=3, GRAY_LEVELS=1.0)
    cfg = build_registration_config(config)

    assert cfg.grid_n == 32
    assert not cfg.iterate_twice
    assert cfg.pose_from == PoseSource.SECOND_STEP
    assert cfg.jobs == 3
    assert cfg.elastic.alpha == 10.0
    assert cfg.elastic.gray_levels == 1.0
    assert build_registration_config(DEFAULT_CONFIG).elastic.gray_levels == 255.0
    assert cfg.solver.max_iterations == DEFAULT_CONFIG["MAX_ITER_PARAMETRIC"]


def test_build_registration_config_rejects_iterate():
    with pytest.raises(ContractError):
        build_registration_config(dict(DEFAULT_CONFIG, ITERATE=3))


def test_create_config_non_interactive(tmp_path):
    path = tmp_path / "conf" / "private_config.txt"

    assert create_config(str(path), interactive=False)
    assert read_config_file(path) == DEFAULT_CONFIG
    assert not create_config(str(path), interactive=False)


def test_create_config_interactive(tmp_path, monkeypatch):
    path = tmp_path / "private_config.txt"
    answers = iter(["10,1,0", "64", "", "", "", "1", "mpir", "", ""])
    monkeypatch.setattr("builtins.input", lambda prompt: next(answers))

    assert create_config(str(path), interactive=True)
    config = read_config_file(path)
    assert config["SCALES"] == [10.0, 1.0, 0.0]
    assert config["GRID"] == 64
    assert config["ITERATE"] == 1
    assert config["METHOD"] == "mpir"
    assert config["ALPHA"] == DEFAULT_CONFIG["ALPHA"]
