import os
import logging
from pathlib import Path
from sys import stdout, stderr
from typing import Union

from helpers import misc

LOG_LEVEL_VARIABLE = "CNGCF_LOG"
LOG_FILE_NAME = "log.txt"
_formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s [%(name)s/%(funcName)s]",
                               "%d-%m-%Y %H:%M:%S")


def console_level() -> int:
    """
    Reads the console log level from the CNGCF_LOG environment variable.
    Unknown values fall back to INFO.
    :return: int logging level
    """
    name = os.environ.get(LOG_LEVEL_VARIABLE, "INFO").strip().upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        print(f"Unknown {LOG_LEVEL_VARIABLE} value '{name}', using INFO", file=stderr)
        return logging.INFO
    return level


def get_console_handler() -> logging.StreamHandler:
    """
    Returns console handler which outputs to stdout with the level taken from CNGCF_LOG.
    :return: stdout StreamHandler
    """
    console_handler = logging.StreamHandler(stdout)
    console_handler.setLevel(console_level())
    return console_handler


def get_file_handler(directory: Union[str, Path]) -> logging.FileHandler:
    """
    Returns file handler which writes log.txt inside the run directory with log level of debug.
    Log messages have a timestamp prefix.
    :param directory: run output directory, created if missing
    :return: FileHandler
    """
    misc.check_create_directory(directory)
    file_handler = logging.FileHandler(Path(directory) / LOG_FILE_NAME, encoding="utf-8")
    file_handler.setFormatter(_formatter)
    file_handler.setLevel(logging.DEBUG)
    return file_handler
