import logging
import traceback

from helpers.errors import (CheckpointLoadError, ConfigError, DataError, EmptyDatasetError, IngestionError,
                            NonFiniteLossError, NumericError, UsageError)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_INTERNAL = 4


def on_command_error(command: str, error: Exception) -> int:
    """
    Logs a failed command and maps its exception to the process exit code.
    Expected errors are logged without a traceback.
    :param command: name of the subcommand that raised
    :param error: the exception
    :return: int exit code
    """
    if isinstance(error, UsageError):
        logger.error(f"Invalid command input: {error.message}")
        return EXIT_USAGE

    if isinstance(error, ConfigError):
        # Every problem on its own line so the whole list is readable in log.txt
        logger.error(f"'{command}' aborted, {len(error.problems)} configuration problem(s):")
        for problem in error.problems:
            logger.error(f"\t{problem}")
        return EXIT_USAGE

    if isinstance(error, IngestionError):
        logger.error(f"Can't ingest data: {error.message}")
        return EXIT_DATA

    if isinstance(error, EmptyDatasetError):
        logger.error(f"Empty dataset: {error.message}")
        return EXIT_DATA

    if isinstance(error, CheckpointLoadError):
        logger.error(f"Checkpoint error: {error.message}")
        return EXIT_DATA

    if isinstance(error, DataError):
        logger.error(f"Data error: {error.message}")
        return EXIT_DATA

    if isinstance(error, (FileNotFoundError, PermissionError, IsADirectoryError)):
        logger.error(f"Can't access {error.filename}: {error.strerror}")
        return EXIT_DATA

    if isinstance(error, NonFiniteLossError):
        logger.error(f"Training diverged: {error.message}. Try a lower learning rate or a larger l2 weight.")
        return EXIT_NUMERIC

    if isinstance(error, NumericError):
        log_traceback(command, error)
        return EXIT_NUMERIC

    log_traceback(command, error)
    return EXIT_INTERNAL


def log_traceback(command: str, error: Exception):
    error_type = type(error)
    traceback_message = "".join(traceback.format_exception(error_type, error, error.__traceback__))
    logger.critical(f"Ignoring {error_type.__name__} exception in command '{command}': {error}\n{traceback_message}")
