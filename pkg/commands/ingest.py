import logging
import dataclasses
from argparse import Namespace

import dataset_handler
from commands.cmd_errors import EXIT_OK
from config_handler import RunConfig
from helpers import table_handler
from helpers.errors import ConfigError, UsageError

logger = logging.getLogger(__name__)

FILE_FLAGS = ("user_features", "item_features", "user_neighbors", "item_neighbors")


def default_out(args: Namespace):
    raise UsageError("ingest needs --out, the directory the dataset dump is written to")


def configure(args: Namespace, config: RunConfig) -> RunConfig:
    changes = {name: getattr(args, name) for name in FILE_FLAGS if getattr(args, name) is not None}
    if args.data is not None:
        changes["interactions"] = args.data
    if args.threshold is not None:
        changes["rating_threshold"] = args.threshold
    return config.replace(data=dataclasses.replace(config.data, **changes))


def run(args: Namespace, config: RunConfig, out) -> int:
    """
    Reads raw interaction / feature / neighbor files, keeps ratings above the threshold
    and writes the canonical dump. The k-core filter is applied when a dump is split,
    its effect is reported in the manifest.
    """
    data = config.data
    if data.interactions is None:
        raise ConfigError("data.interactions: required by ingest (or pass --data)")
    graph = dataset_handler.ingest(data.interactions, data.user_features, data.item_features,
                                   data.rating_threshold, data.user_neighbors, data.item_neighbors)
    filtered = dataset_handler.k_core_filter(graph, data.k_core)
    manifest = {
        "source": "ingest",
        "files": {name: getattr(data, name) for name in ("interactions",) + FILE_FLAGS},
        "rating_threshold": data.rating_threshold,
        "k_core": {"k": data.k_core, "counts": filtered.statistics()},
    }
    dataset_handler.dump_graph(graph, out, manifest)

    header = ["", "users", "items", "interactions", "density"]
    rows = [["ingested"] + list(graph.statistics().values()),
            [f"{data.k_core}-core"] + list(filtered.statistics().values())]
    logger.info("\n" + table_handler.render(header, rows, "Dataset statistics"))
    return EXIT_OK


def setup(subparsers, parents):
    parser = subparsers.add_parser("ingest", parents=parents, help="ingest raw interaction logs")
    parser.add_argument("--data", help="interactions csv (user_id,item_id,rating)")
    parser.add_argument("--threshold", type=float, help="keep ratings strictly above this value")
    for name in FILE_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, help=f"{name.replace('_', ' ')} csv")
    parser.set_defaults(func=run, default_out=default_out, configure=configure)
