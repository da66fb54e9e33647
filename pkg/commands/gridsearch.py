import logging
from pathlib import Path
from argparse import Namespace

import dataset_handler
from commands.cmd_errors import EXIT_OK
from config_handler import RunConfig
from helpers import misc
from helpers.converters import positive_integer
from helpers.errors import UsageError
from pipeline import trainer

logger = logging.getLogger(__name__)


def default_out(args: Namespace) -> Path:
    if args.data is None:
        raise UsageError("gridsearch needs --data, the directory of a dataset dump")
    return Path(args.data) / "gridsearch"


def run(args: Namespace, config: RunConfig, out) -> int:
    """
    Trains every point of eval.grid and writes grid.csv plus best_config.json, the run
    config with the winning train section.
    """
    if args.data is None:
        raise UsageError("gridsearch needs --data, the directory of a dataset dump")
    splits, _ = dataset_handler.prepare_splits(args.data, config.data.k_core, config.data.split_ratios, config.seed)
    result = trainer.grid_search(splits, config.eval.grid, config.train, config.seed, args.jobs)
    result.to_csv(Path(out) / "grid.csv")
    misc.write_json(Path(out) / "best_config.json", config.replace(train=result.best).to_dict())
    logger.info("\n" + result.table())
    return EXIT_OK


def setup(subparsers, parents):
    parser = subparsers.add_parser("gridsearch", parents=parents, help="grid search lr, l2 weight and dropout")
    parser.add_argument("--data", help="dataset dump directory")
    parser.add_argument("--jobs", type=positive_integer, default=1, help="configurations trained in parallel")
    parser.set_defaults(func=run, default_out=default_out)
