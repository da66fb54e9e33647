import sys
import logging
import argparse
import importlib
import traceback
from pathlib import Path
from typing import List, Optional

from commands import cmd_errors
from config_handler import RunConfig, validate_config
from helpers import logger_handlers
from helpers.converters import non_negative_integer
from helpers.errors import UsageError

root_logger = logging.getLogger()
logger = logging.getLogger(__name__)

startup_commands = ["synth",
                    "ingest",
                    "train",
                    "evaluate",
                    "ablate",
                    "sweep",
                    "gridsearch"]


class ArgumentParser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad input, here it raises UsageError instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config json, defaults apply to everything it omits")
    common.add_argument("--seed", type=non_negative_integer, help="overrides the config seed")
    common.add_argument("--out", help="output directory of the run")

    parser = ArgumentParser(prog="cngcf", description="Causal neural graph collaborative filtering")
    subparsers = parser.add_subparsers(dest="command", metavar="command", parser_class=ArgumentParser)
    subparsers.required = True
    for name in startup_commands:
        command_path = f"commands.{name}"
        try:
            importlib.import_module(command_path).setup(subparsers, [common])
            logger.debug(f"Loaded command {command_path}")
        except Exception as e:
            exc = f"{type(e).__name__}: {e}"
            logger.error(f"{exc} Failed to load command {command_path}")
            logger.warning("".join(traceback.format_exception(type(e), e, e.__traceback__)))
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Config file (or defaults) with the CLI flags applied, validated as a whole."""
    path = args.config
    if path is None and getattr(args, "default_config", None) is not None:
        path = args.default_config(args)
    config = validate_config(path)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if getattr(args, "configure", None) is not None:
        config = args.configure(args, config)
    return RunConfig.from_dict(config.to_dict())


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parses argv, runs the subcommand and returns the exit code:
    0 success, 1 usage or configuration error, 2 data error, 3 numeric failure, 4 internal error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e.message, file=sys.stderr)
        return cmd_errors.EXIT_USAGE
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else cmd_errors.EXIT_OK

    root_logger.setLevel(logging.DEBUG)
    console_handler = logger_handlers.get_console_handler()
    root_logger.addHandler(console_handler)
    file_handler = None
    try:
        out = Path(args.out) if args.out is not None else Path(args.default_out(args))
        file_handler = logger_handlers.get_file_handler(out)
        root_logger.addHandler(file_handler)
        config = load_run_config(args)
        config.save(out)
        logger.info(f"Running '{args.command}' into {out} (seed {config.seed}, config {config.config_hash()})")
        return args.func(args, config, out)
    except Exception as e:
        return cmd_errors.on_command_error(args.command, e)
    finally:
        root_logger.removeHandler(console_handler)
        if file_handler is not None:
            root_logger.removeHandler(file_handler)
            file_handler.close()


if __name__ == "__main__":
    sys.exit(main())
