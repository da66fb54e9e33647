import logging
import dataclasses
from pathlib import Path
from argparse import Namespace

import checkpoint_handler
import dataset_handler
from commands.cmd_errors import EXIT_OK
from config_handler import MODELS, RunConfig
from helpers import table_handler
from helpers.converters import non_negative_integer, ratio
from helpers.errors import UsageError
from pipeline import trainer

logger = logging.getLogger(__name__)


def default_out(args: Namespace) -> Path:
    if args.data is None:
        raise UsageError("train needs --data (a dataset dump) or --out of the run to resume")
    return Path(args.data)


def default_config(args: Namespace):
    # A resumed run keeps the config it was started with.
    if args.resume and args.out is not None:
        return Path(args.out) / "config.json"
    return None


def configure(args: Namespace, config: RunConfig) -> RunConfig:
    changes = {}
    if args.model is not None:
        changes["model"] = args.model
    if args.max_epochs is not None:
        changes["max_epochs"] = args.max_epochs
    if args.dropout is not None:
        changes["dropout"] = args.dropout
    return config.replace(train=dataclasses.replace(config.train, **changes)) if changes else config


def run(args: Namespace, config: RunConfig, out) -> int:
    """
    Trains on the dump in --data; writes best/ and last/ checkpoints and training_log.csv.
    With --resume the run in --out continues from its last/ checkpoint.
    """
    if args.resume:
        last = checkpoint_handler.load_checkpoint(Path(out) / "last")
        splits = dataset_handler.splits_from_reference(last.dataset, args.data)
        result = trainer.resume_training(out, splits, config.train)
    else:
        if args.data is None:
            raise UsageError("train needs --data, the directory of a dataset dump")
        splits, reference = dataset_handler.prepare_splits(args.data, config.data.k_core,
                                                           config.data.split_ratios, config.seed)
        result = trainer.train(splits, config.train, config.seed, out, dataset=reference)

    best = result.best
    rows = [["best", best.best_epoch, max(best.best_precision, 0.0)],
            ["last", result.last.epoch, result.log[-1]["val_precision@10"] if result.log else 0.0]]
    logger.info("\n" + table_handler.render(["checkpoint", "epoch", "val precision@10"], rows,
                                            f"{config.train.model} run {best.config_hash}"))
    return EXIT_OK


def setup(subparsers, parents):
    parser = subparsers.add_parser("train", parents=parents, help="train a model on a dataset dump")
    parser.add_argument("--data", help="dataset dump directory")
    parser.add_argument("--model", choices=MODELS, help="overrides train.model")
    parser.add_argument("--max-epochs", dest="max_epochs", type=non_negative_integer, help="overrides train.max_epochs")
    parser.add_argument("--dropout", type=ratio, help="overrides train.dropout")
    parser.add_argument("--resume", action="store_true", help="continue the run saved in --out")
    parser.set_defaults(func=run, default_out=default_out, default_config=default_config, configure=configure)
