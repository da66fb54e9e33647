import logging
import dataclasses
from pathlib import Path
from argparse import Namespace

import checkpoint_handler
import dataset_handler
from commands.cmd_errors import EXIT_OK
from config_handler import RunConfig
from helpers import table_handler
from helpers.converters import positive_integer
from helpers.errors import UsageError
from pipeline import evaluation, synthgen

logger = logging.getLogger(__name__)

PARTS = ("test", "validation")


def default_out(args: Namespace) -> Path:
    if args.ckpt is None:
        raise UsageError("evaluate needs --ckpt, a checkpoint directory")
    return Path(args.ckpt) / "eval"


def configure(args: Namespace, config: RunConfig) -> RunConfig:
    if args.k:
        return config.replace(eval=dataclasses.replace(config.eval, ks=tuple(args.k)))
    return config


def run(args: Namespace, config: RunConfig, out) -> int:
    """
    Scores a checkpoint on the split it was trained with and writes report.json / report.txt.
    """
    if args.ckpt is None:
        raise UsageError("evaluate needs --ckpt, a checkpoint directory")
    checkpoint = checkpoint_handler.load_checkpoint(args.ckpt)
    splits = dataset_handler.splits_from_reference(checkpoint.dataset, args.data)
    ks = config.eval.ks
    report = evaluation.evaluate(checkpoint, splits, ks, args.part)
    report.save(out)
    logger.info("\n" + report.table())

    rows = []
    for k in report.ks:
        expected = evaluation.random_ranker_expectation(splits, k, args.part)
        rows.append([f"@{k}", report.metric("precision", k), expected["precision"],
                     report.metric("recall", k), expected["recall"]])
    logger.info("\n" + table_handler.render(["K", "precision", "random precision", "recall", "random recall"],
                                            rows, "Against a uniformly random ranking"))

    if args.ground_truth:
        directory = args.data if args.data is not None else checkpoint.dataset["path"]
        scores = synthgen.load_ground_truth_scores(directory, splits.graph)
        oracle = evaluation.evaluate_scores(scores, splits, ks, args.part)
        oracle.save(Path(out) / "ground_truth")
        logger.info("\n" + oracle.table())
    return EXIT_OK


def setup(subparsers, parents):
    parser = subparsers.add_parser("evaluate", parents=parents, help="compute Precision/Recall/NDCG@K")
    parser.add_argument("--ckpt", help="checkpoint directory, for example runs/s7/best")
    parser.add_argument("--data", help="dataset dump directory, defaults to the one stored in the checkpoint")
    parser.add_argument("--k", type=positive_integer, action="append", help="cutoff, repeatable")
    parser.add_argument("--part", choices=PARTS, default="test")
    parser.add_argument("--ground-truth", dest="ground_truth", action="store_true",
                        help="also rank by the synthetic ground-truth scores")
    parser.set_defaults(func=run, default_out=default_out, configure=configure)
