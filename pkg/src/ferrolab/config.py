"""
Configuration management for the ferrofluid laboratory.

This module provides centralized configuration options for the simulator,
the bench timing, and the command line tool. Values come from built-in
defaults, the environment (optionally seeded from a .env file), and flat
key/value parameter files.
"""
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field
from rich.console import Console
from rich.logging import RichHandler

from ferrolab.utils import ParameterFileError

logger = logging.getLogger(__name__)


class FerroLabConfig(BaseModel):
    """Configuration settings for the ferrofluid laboratory."""

    # Output directory name, relative to the working directory
    output_dir_name: str = Field(
        default="ferrolab-out",
        description="Directory where runs write CSVs, plots and manifests"
    )

    # Seed used when no --seed flag is given
    default_seed: int = Field(
        default=0,
        ge=0,
        description="Default deterministic seed for the device chaos ensemble"
    )

    # Logging verbosity for library loggers
    log_level: str = Field(
        default="WARNING",
        description="Level for the ferrolab logger (DEBUG, INFO, WARNING, ERROR)"
    )

    # Script interpreter fuel
    step_limit: int = Field(
        default=10_000_000,
        ge=1,
        description="Maximum number of statements a script may execute"
    )

    # Bench timing
    sweep_duration: float = Field(
        default=0.5,
        gt=0,
        description="Simulated duration of one VNA sweep in seconds"
    )

    command_latency: float = Field(
        default=0.1,
        ge=0,
        description="Simulated latency of one DC generator command in seconds"
    )

    chaos_enabled: bool = Field(
        default=True,
        description="Whether the chaotic perturbation is enabled by default"
    )

    manifest_name: str = Field(
        default="manifest.json",
        description="File name of the run manifest inside the output directory"
    )


def load_config() -> FerroLabConfig:
    """
    Load configuration from a .env file, environment variables and defaults.

    Returns:
        FerroLabConfig object with configuration settings
    """
    load_dotenv()
    config_dict = {
        "output_dir_name": os.environ.get("FERROLAB_OUT", "ferrolab-out"),
        "default_seed": int(os.environ.get("FERROLAB_SEED", 0)),
        "log_level": os.environ.get("FERROLAB_LOG_LEVEL", "WARNING").upper(),
        "step_limit": int(os.environ.get("FERROLAB_STEP_LIMIT", 10_000_000)),
        "sweep_duration": float(os.environ.get("FERROLAB_SWEEP_DURATION", 0.5)),
        "command_latency": float(os.environ.get("FERROLAB_COMMAND_LATENCY", 0.1)),
        "chaos_enabled": os.environ.get("FERROLAB_CHAOS", "1").lower() not in ("0", "false", "no", "off"),
        "manifest_name": os.environ.get("FERROLAB_MANIFEST", "manifest.json"),
    }

    return FerroLabConfig(**config_dict)


# Create a global config instance
config = load_config()


def setup_logging(level: Optional[str] = None) -> None:
    """
    Route the ferrolab logger through a rich handler on stderr.

    Args:
        level: Logging level name; defaults to the configured level
    """
    root = logging.getLogger("ferrolab")
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel((level or config.log_level).upper())
    root.propagate = False


def get_output_dir(out: Optional[Path] = None) -> Path:
    """
    Get the output directory path, creating it if it doesn't exist.

    Args:
        out: Explicit directory; defaults to the configured directory name

    Returns:
        Path object for the output directory
    """
    output_dir = Path(out) if out is not None else Path.cwd() / config.output_dir_name
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir


def read_parameter_file(path: Path) -> Dict[str, str]:
    """
    Read a flat key/value parameter file.

    Lines have the form ``key = value``; ``#`` starts a comment and blank
    lines are ignored.

    Args:
        path: Path to the UTF-8 parameter file

    Returns:
        Mapping of keys to their raw string values

    Raises:
        ParameterFileError: If the file is missing, a line has no '=', or a key repeats
    """
    path = Path(path)
    if not path.exists():
        raise ParameterFileError(f"Parameter file {path} does not exist")

    values: Dict[str, str] = {}
    for number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterFileError(f"{path}:{number}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParameterFileError(f"{path}:{number}: empty key")
        if key in values:
            raise ParameterFileError(f"{path}:{number}: duplicate key {key!r}")
        values[key] = value
    return values


def split_parameters(values: Dict[str, str], known: Iterable[str]) -> Tuple[Dict[str, str], Dict[str, str]]:
    """
    Split a parameter mapping into the keys a consumer knows and the rest.

    Args:
        values: Parsed parameter mapping
        known: Keys accepted by the consumer

    Returns:
        Tuple of (known subset, remaining subset)
    """
    known = set(known)
    mine = {key: value for key, value in values.items() if key in known}
    rest = {key: value for key, value in values.items() if key not in known}
    return mine, rest
