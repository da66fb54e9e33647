import logging
import dataclasses
from pathlib import Path
from argparse import Namespace

import dataset_handler
from commands.cmd_errors import EXIT_OK
from config_handler import SWEEP_AXES, RunConfig
from helpers.converters import positive_integer, seed_list, value_list
from helpers.errors import UsageError
from pipeline import experiments

logger = logging.getLogger(__name__)

SWEEP_FILE = "sweep.csv"


def default_out(args: Namespace) -> Path:
    if args.data is None:
        raise UsageError("sweep needs --data, the directory of a dataset dump")
    return Path(args.data) / "sweep"


def configure(args: Namespace, config: RunConfig) -> RunConfig:
    changes = {}
    if args.axis is not None:
        changes["sweep_axis"] = args.axis
    if args.values is not None:
        changes["sweep_values"] = tuple(args.values)
    if args.seeds:
        changes["seeds"] = tuple(args.seeds)
    return config.replace(eval=dataclasses.replace(config.eval, **changes)) if changes else config


def run(args: Namespace, config: RunConfig, out) -> int:
    """
    One training per value (and seed) of the swept hyperparameter; writes sweep.csv with
    value, precision@10, recall@10 and ndcg@10.
    """
    if args.data is None:
        raise UsageError("sweep needs --data, the directory of a dataset dump")
    splits, _ = dataset_handler.prepare_splits(args.data, config.data.k_core, config.data.split_ratios, config.seed)
    axis = config.eval.sweep_axis
    rows = experiments.sweep(splits, config.train, axis, config.eval.sweep_values, config.eval.seeds, args.jobs)
    experiments.write_sweep_csv(rows, Path(out) / SWEEP_FILE)
    logger.info("\n" + experiments.sweep_table(rows, axis))
    return EXIT_OK


def setup(subparsers, parents):
    parser = subparsers.add_parser("sweep", parents=parents, help="sweep embedding size or dropout")
    parser.add_argument("--data", help="dataset dump directory")
    parser.add_argument("--axis", choices=SWEEP_AXES)
    parser.add_argument("--values", type=value_list, help="comma separated values, example 0.0,0.2,0.4")
    parser.add_argument("--seeds", type=seed_list, help="comma separated seeds, example 0,1,2")
    parser.add_argument("--jobs", type=positive_integer, default=1, help="configurations trained in parallel")
    parser.set_defaults(func=run, default_out=default_out, configure=configure)
