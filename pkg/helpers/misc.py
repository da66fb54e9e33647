import json
import hashlib
import logging
from pathlib import Path
from typing import Union

import psutil

logger = logging.getLogger(__name__)


def check_create_directory(directory_path: Union[str, Path]):
    """
    Creates directory (and missing parents) if it doesn't exist
    :param directory_path: str or Path example 'runs/s7'
    """
    path = Path(directory_path)
    if not path.is_dir():
        logger.info(f"Creating directory {path}")
        path.mkdir(parents=True, exist_ok=True)


def write_json(path: Union[str, Path], content: dict):
    # No timestamps in here, dumps of the same run must stay byte-identical.
    with open(path, "w", encoding="utf-8") as f:
        json.dump(content, f, indent=4, sort_keys=True)
        f.write("\n")


def read_json(path: Union[str, Path]) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def config_hash(content: dict) -> str:
    """
    :param content: JSON serializable dict
    :return: first 12 hex digits of SHA-256 over its sorted-key JSON form
    """
    encoded = json.dumps(content, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()[:12]


def process_memory_mb() -> float:
    """Resident memory of the current process in MiB."""
    return psutil.Process().memory_info().rss / 1024 ** 2
