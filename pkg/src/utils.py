import logging
import os
from pathlib import Path
from typing import Any

import pandas as pd
from dotenv import load_dotenv


load_dotenv()
GARDNER_LOG_LEVEL = os.getenv("GARDNER_LOG_LEVEL", "INFO")
GARDNER_OUTPUT_DIR = os.getenv("GARDNER_OUTPUT_DIR", "results")

# 9 significant digits
CSV_FLOAT_FORMAT = "%.8e"

# --- Logger Setup ---
logging.basicConfig(
    level=getattr(logging, GARDNER_LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s | %(levelname)s | %(filename)s:%(lineno)d | %(funcName)s | %(message)s",
)
logger = logging.getLogger(__name__)


# --- Save csv file ---
def save_to_csv(frame: pd.DataFrame, file_path: Path) -> None:
    """Writes a table with a header row and fixed scientific formatting."""

    logger.info(f"Attempting to save {len(frame)} rows to: {file_path}")
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(
            file_path,
            index=False,
            float_format=CSV_FLOAT_FORMAT,
            lineterminator="\n",
        )
        logger.info(f"Successfully saved {len(frame)} rows to {file_path}.")

    except IOError as e:
        logger.error(
            f"Failed to write results file to {file_path}. Check permissions and path. Error: {e}."
        )
        raise


# --- Key-value documents ---
def format_value(value: Any) -> str:
    """Renders a scalar or sequence so it reads back unchanged."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(item) for item in value)
    return str(value)


def format_key_values(entries: dict[str, Any]) -> str:
    """Renders one `key=value` line per entry, skipping None values."""
    lines = [
        f"{key}={format_value(value)}"
        for key, value in entries.items()
        if value is not None
    ]
    return "\n".join(lines) + "\n"


def save_key_values(entries: dict[str, Any], file_path: Path) -> None:
    logger.info(f"Writing key-value document to: {file_path}")
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(format_key_values(entries))
    except IOError as e:
        logger.error(f"Failed to write {file_path}. Error: {e}.")
        raise
