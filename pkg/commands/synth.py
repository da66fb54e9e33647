import logging
from argparse import Namespace

from commands.cmd_errors import EXIT_OK
from config_handler import RunConfig
from helpers import table_handler
from helpers.errors import UsageError
from pipeline import synthgen

logger = logging.getLogger(__name__)


def default_out(args: Namespace):
    raise UsageError("synth needs --out, the directory the dataset dump is written to")


def run(args: Namespace, config: RunConfig, out) -> int:
    """
    Generates the synthetic dataset of the synth config section and writes its canonical dump.
    """
    dataset = synthgen.synthesize(config.synth, config.seed, out)
    stats = dataset.graph.statistics()
    logger.info("\n" + table_handler.render(list(stats), [list(stats.values())], f"Synthetic dataset, seed {config.seed}"))
    return EXIT_OK


def setup(subparsers, parents):
    parser = subparsers.add_parser("synth", parents=parents, help="generate the synthetic dataset")
    parser.set_defaults(func=run, default_out=default_out)
