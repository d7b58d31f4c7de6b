import re
from io import StringIO
from pathlib import Path

from dotenv import dotenv_values
from pydantic import ValidationError

from src.custom_exceptions import ConfigParseError
from src.models import RunConfig
from src.utils import format_key_values, logger


_ENTRY = re.compile(r"^(?:export\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _scan_lines(text: str) -> dict[str, int]:
    """Line number of every key; rejects lines that are not `key=value`."""
    key_lines: dict[str, int] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        match = _ENTRY.match(line)
        if match is None:
            raise ConfigParseError("Malformed configuration line.", line=number)
        key = match.group(1)
        if key in key_lines:
            raise ConfigParseError("Duplicate configuration key.", key=key, line=number)
        key_lines[key] = number
    return key_lines


def _offending_key(error: dict) -> str | None:
    if error.get("loc"):
        return str(error["loc"][0])
    return (error.get("ctx") or {}).get("key")


def parse_config(text: str) -> RunConfig:
    """
    Parse a `key=value` run configuration.

    Args:
        text: The document; `#` comments and blank lines are allowed.

    Returns:
        A validated RunConfig with experiment defaults filled in.

    Raises:
        ConfigParseError: Naming the offending key and its line for unknown keys,
            malformed numbers and out-of-range values.
    """
    key_lines = _scan_lines(text)
    values = dotenv_values(stream=StringIO(text), interpolate=False)
    try:
        config = RunConfig.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        key = _offending_key(first)
        line = key_lines.get(key) if key is not None else None
        logger.error(f"Invalid configuration value for '{key}' (line {line}): {first['msg']}")
        raise ConfigParseError(first["msg"], key=key, line=line) from e

    logger.debug(f"Parsed configuration: {config.model_dump()}")
    return config


def emit_config(config: RunConfig) -> str:
    """Render a RunConfig in the format parse_config reads."""
    return format_key_values(config.model_dump())


def load_run_config(file_path: Path) -> RunConfig:
    """
    Loads and validates a run configuration file.

    Raises:
        FileNotFoundError: If the file does not exist.
        ConfigParseError: If the content is invalid.
    """
    logger.info(f"Attempting to load run configuration from: {file_path}")

    if not file_path.is_file():
        logger.error(f"Configuration file not found at: {file_path}")
        raise FileNotFoundError(f"Configuration file not found: {file_path}")

    with open(file_path, "r", encoding="utf-8") as f:
        text = f.read()
    config = parse_config(text)
    logger.info(f"Loaded configuration for experiment '{config.experiment}' from {file_path}.")
    return config
