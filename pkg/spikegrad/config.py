"""Flat `dotted.key: value` config files, command-line overrides and output locations."""
import logging
import os

import yaml

from dotenv import load_dotenv
from pathlib import Path
from pydantic import BaseModel, ValidationError
from typing import Any, Dict, Mapping, Optional, Sequence, Type, TypeVar

from spikegrad.exception import ConfigurationException
from spikegrad.type_models import ExperimentConfig
from spikegrad.util import flatten_dotted, nest_dotted

logger = logging.getLogger(__name__)

OUTPUT_ROOT_VARIABLE = "SPIKEGRAD_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"

Model = TypeVar("Model", bound=BaseModel)


def read_flat_config(path: Path) -> Dict[str, Any]:
    """Dotted keys of a config file; nested mappings are flattened to the same form."""
    if not path.is_file():
        raise ConfigurationException(f"Config file {path} does not exist.")

    try:
        content = yaml.safe_load(path.read_text())
    except yaml.YAMLError as error:
        raise ConfigurationException(f"Config file {path} is not a key-value file: {error}") from None

    if content is None:
        return {}
    if not isinstance(content, dict):
        raise ConfigurationException(f"Config file {path} must hold one `key: value` per line.")
    return flatten_dotted(content)


def parse_override(text: str) -> Dict[str, Any]:
    """`model.width=32` → {"model.width": 32}; the value is read as a YAML scalar."""
    key, separator, value = text.partition("=")
    if not separator or not key.strip():
        raise ConfigurationException(f"Override {text!r} is not of the form key=value.")
    return {key.strip(): yaml.safe_load(value) if value.strip() else None}


def validate(model: Type[Model], flat: Mapping[str, Any]) -> Model:
    """Validate dotted keys against a pydantic model, reporting every offending field."""
    try:
        return model.model_validate(nest_dotted(dict(flat)))
    except ValidationError as error:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in issue['loc']) or '<config>'}: {issue['msg']}"
            for issue in error.errors()
        )
        raise ConfigurationException(f"Invalid configuration: {problems}") from None


def load_config(
    path: Optional[Path] = None,
    overrides: Sequence[str] = (),
    flags: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """File values, then `--set` overrides, then dedicated flags; later wins.

    Args:
        path: flat config file, optional
        overrides: `key=value` strings
        flags: dotted keys from dedicated command-line options; None values are skipped
    """
    flat: Dict[str, Any] = read_flat_config(path) if path is not None else {}

    for override in overrides:
        flat.update(parse_override(override))
    for key, value in (flags or {}).items():
        if value is not None:
            flat[key] = value

    config = validate(ExperimentConfig, flat)
    logger.debug("Resolved configuration: %s", config.model_dump(mode="json"))
    return config


def output_root() -> Path:
    """Default root for run directories, from SPIKEGRAD_OUTPUT_ROOT (a .env file is honoured)."""
    load_dotenv()
    return Path(os.getenv(OUTPUT_ROOT_VARIABLE, DEFAULT_OUTPUT_ROOT))


def run_directory(config: ExperimentConfig, command: str) -> Path:
    """Output directory of a run, created if needed; named by its settings, never by time."""
    if config.output_dir is not None:
        directory = config.output_dir
    else:
        name = f"{command}-{config.dataset.kind.value}-{config.algorithm.value}-{config.mode.value}-seed{config.seed}"
        directory = output_root() / name

    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as error:
        raise ConfigurationException(f"Cannot create output directory {directory}: {error}") from None
    return directory
