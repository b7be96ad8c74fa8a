import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from frame_registration.exceptions import ContractError
from frame_registration.schemas import (
    ElasticConfig,
    PoseSource,
    RegistrationConfig,
    SolverConfig,
    format_config_value,
)

logger = logging.getLogger(__name__)


DEFAULT_CONFIG = {
    "LOG_LEVEL": "INFO",
    "LOG_FILE": None,

    "SCALES": [100.0, 10.0, 1.0, 0.0],
    "GRID": 128,
    "ALPHA": 10.0,
    "MU": 1.0,
    "LAMBDA": 0.0,
    "GRAY_LEVELS": 255.0,
    "TWO_LEVEL": False,
    "ITERATE": 2,
    "POSE_FROM": "composition",
    "COMPARABILITY": 1.5,
    "METHOD": "meir",

    "MAX_ITER_PARAMETRIC": 50,
    "MAX_ITER_ELASTIC": 30,
    "CG_MAX_ITER": 50,
    "CG_TOL": 1e-2,

    "SEED": 0,
    "SMOOTHING_SIGMA": 5.0,
    "PAD_MARGIN": 0.25,
    "ELASTIC_INTENSITY": 4.0,

    "JOBS": 1,
}

ENV_PREFIX = "FRAME_REG_"

PRIVATE_CONFIG_FILES = [
    Path(__file__).parent/'private_config.txt',
    Path(__file__).parent.parent.parent/'private_config.txt',
]


def load_config(path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    Load configuration with the following priority:
    1. Environment variables
    2. Explicit configuration file (``path``)
    3. Private configuration file
    4. Default configuration

    Command line flags are applied on top by the commands.

    Returns:
        Dictionary containing configuration values
    """
    config = DEFAULT_CONFIG.copy()

    private_config = _load_private_config()
    if private_config:
        config.update(private_config)
        logger.debug("Private configuration loaded")

    if path is not None:
        config.update(read_config_file(path))

    env_config = _load_from_environment()
    if env_config:
        config.update(env_config)

    return config


def coerce_value(key: str, raw: str) -> Any:
    """Convert a textual value to the type of the key's default."""
    default = DEFAULT_CONFIG[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ('true', 'yes', '1'):
                return True
            if raw.lower() in ('false', 'no', '0'):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as e:
        raise ContractError(f"Invalid value for {key}: {raw!r}") from e
    return raw or None


def parse_config_text(text: str) -> Dict[str, Any]:
    """
    Parse key=value lines; blank lines and ``#`` comments are skipped.

    Keys that are not configuration keys (e.g. the bookkeeping lines of a run
    manifest) are ignored, so a manifest loads as a configuration file.
    """
    config = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ContractError(f"Line {number} is not of the form KEY=VALUE: {line!r}")
        key, value = line.split('=', 1)
        key = key.strip().upper()
        if key not in DEFAULT_CONFIG:
            logger.debug(f"Ignoring unknown configuration key {key}")
            continue
        config[key] = coerce_value(key, value)
    return config


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a key=value configuration file."""
    with open(path, 'r') as f:
        logger.info(f"Loading configuration from {path}")
        return parse_config_text(f.read())


def format_config_text(config: Dict[str, Any]) -> str:
    """Render configuration values as key=value lines in DEFAULT_CONFIG order."""
    return "".join(f"{key}={format_config_value(config.get(key))}\n" for key in DEFAULT_CONFIG)


def _load_private_config() -> Dict[str, Any]:
    """
    Load configuration from private configuration file.

    Returns:
        Configuration dictionary, or empty dictionary if no configuration file found
    """
    for config_file in PRIVATE_CONFIG_FILES:
        if os.path.isfile(config_file):
            try:
                return read_config_file(config_file)
            except (OSError, ContractError) as e:
                logger.warning(f"Error reading configuration file {config_file}: {e}")

    return {}


def _load_from_environment() -> Dict[str, Any]:
    """
    Load configuration from environment variables.

    Returns:
        Configuration dictionary loaded from FRAME_REG_<KEY> variables
    """
    env_config = {}
    for key in DEFAULT_CONFIG:
        env_var = f"{ENV_PREFIX}{key}"
        if env_var in os.environ:
            env_config[key] = coerce_value(key, os.environ[env_var])
    return env_config


def build_registration_config(config: Dict[str, Any]) -> RegistrationConfig:
    """
    Validated registration settings from a configuration dictionary.

    Raises:
        ContractError: If ITERATE is not 1 or 2
        pydantic.ValidationError: If any model invariant fails
    """
    iterate = int(config["ITERATE"])
    if iterate not in (1, 2):
        raise ContractError(f"ITERATE must be 1 or 2, got {iterate}")
    cg = {"cg_max_iterations": int(config["CG_MAX_ITER"]), "cg_tolerance": float(config["CG_TOL"])}
    return RegistrationConfig(
        schedule=tuple(config["SCALES"]),
        grid_n=int(config["GRID"]),
        elastic=ElasticConfig(alpha=config["ALPHA"], lam=config["LAMBDA"], mu=config["MU"],
                              gray_levels=config["GRAY_LEVELS"]),
        solver=SolverConfig(max_iterations=int(config["MAX_ITER_PARAMETRIC"]), **cg),
        elastic_solver=SolverConfig(max_iterations=int(config["MAX_ITER_ELASTIC"]), **cg),
        prereg_two_level=bool(config["TWO_LEVEL"]),
        iterate_twice=iterate == 2,
        pose_from=PoseSource(config["POSE_FROM"]),
        comparability_factor=float(config["COMPARABILITY"]),
        jobs=int(config["JOBS"]),
    )
