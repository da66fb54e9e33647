import logging
import dataclasses
from pathlib import Path
from argparse import Namespace

import dataset_handler
from commands.cmd_errors import EXIT_OK
from config_handler import ABLATION_VARIANTS, RunConfig
from helpers.converters import positive_integer, seed_list
from helpers.errors import UsageError
from pipeline import experiments

logger = logging.getLogger(__name__)


def default_out(args: Namespace) -> Path:
    if args.data is None:
        raise UsageError("ablate needs --data, the directory of a dataset dump")
    return Path(args.data) / "ablations"


def configure(args: Namespace, config: RunConfig) -> RunConfig:
    changes = {}
    if args.k:
        changes["ks"] = tuple(args.k)
    if args.seeds:
        changes["seeds"] = tuple(args.seeds)
    if args.variant:
        changes["variants"] = tuple(args.variant)
    return config.replace(eval=dataclasses.replace(config.eval, **changes)) if changes else config


def run(args: Namespace, config: RunConfig, out) -> int:
    if args.data is None:
        raise UsageError("ablate needs --data, the directory of a dataset dump")
    splits, _ = dataset_handler.prepare_splits(args.data, config.data.k_core, config.data.split_ratios, config.seed)
    table = experiments.run_ablations(splits, config.train, config.eval.seeds, config.eval.variants,
                                      config.eval.ks, args.jobs)
    table.to_csv(Path(out) / "ablations.csv")
    text = table.table()
    with open(Path(out) / "ablations.txt", "w", encoding="utf-8") as f:
        f.write(text + "\n")
    logger.info("\n" + text)
    return EXIT_OK


def setup(subparsers, parents):
    parser = subparsers.add_parser("ablate", parents=parents, help="train and compare the ablation variants")
    parser.add_argument("--data", help="dataset dump directory")
    parser.add_argument("--k", type=positive_integer, action="append", help="cutoff, repeatable")
    parser.add_argument("--seeds", type=seed_list, help="comma separated seeds, example 0,1,2")
    parser.add_argument("--variant", choices=ABLATION_VARIANTS, action="append", help="variant to run, repeatable")
    parser.add_argument("--jobs", type=positive_integer, default=1, help="configurations trained in parallel")
    parser.set_defaults(func=run, default_out=default_out, configure=configure)
