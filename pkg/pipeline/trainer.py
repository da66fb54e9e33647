"""
Optimization loop with early stopping on validation Precision@10, checkpointing,
grid search and the matrix factorization baseline.
"""
import logging
import itertools
from pathlib import Path
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

import checkpoint_handler
from checkpoint_handler import Checkpoint
from config_handler import GRID_AXES, TrainConfig
from dataset_handler import SplitDataset
from helpers import misc, table_handler
from helpers.errors import ConfigError, EmptyDatasetError
from model.numeric import AdamState, RngStreams, Tape, adam_step
from model.objective import LossBreakdown
from pipeline import evaluation

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

VALIDATION_K = 10
LOG_COLUMNS = ("epoch", "elbo_clean", "elbo_cf", "kl", "recon", "total", "loss", f"val_precision@{VALIDATION_K}")
LOG_FILE = "training_log.csv"


@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint

    @property
    def log(self) -> List[dict]:
        return self.last.log


def validation_precision(model, params, splits: SplitDataset) -> float:
    report = evaluation.evaluate_representations(model.representations(params), splits,
                                                 ks=(VALIDATION_K,), part="validation")
    return report.metric("precision", VALIDATION_K)


def _log_row(epoch: int, breakdown: LossBreakdown, precision: float) -> dict:
    return {"epoch": epoch, "elbo_clean": breakdown.elbo_clean, "elbo_cf": breakdown.elbo_cf,
            "kl": breakdown.kl, "recon": breakdown.reconstruction, "total": breakdown.total,
            "loss": breakdown.loss, f"val_precision@{VALIDATION_K}": precision}


def write_training_log(rows: Sequence[dict], path: PathLike):
    pd.DataFrame(list(rows), columns=list(LOG_COLUMNS)).to_csv(path, index=False)


def train(splits: SplitDataset, cfg: TrainConfig, seed: int = 0, out_dir: Optional[PathLike] = None,
          resume: Optional[Tuple[Checkpoint, Checkpoint]] = None, dataset: Optional[dict] = None) -> TrainResult:
    """
    Trains the configured model. Each epoch draws fresh exogenous noise (or negatives),
    takes one Adam step per batch on the full-graph loss and scores Precision@10 on the
    validation split; training stops once it has not improved for cfg.patience epochs.

    :param splits: train / validation / test interactions
    :param cfg: training configuration
    :param seed: run seed, every random stream derives from it
    :param out_dir: when given, best/ and last/ checkpoints plus training_log.csv are written here
    :param resume: (last, best) checkpoints of an interrupted run to continue from
    :param dataset: dataset reference stored in the checkpoint manifests
    :raise NonFiniteLossError: on a non-finite loss term, naming epoch, batch and term
    """
    model = checkpoint_handler.build_model(splits, cfg)
    streams = RngStreams(seed)
    if resume is not None:
        last, best = resume
        if last.config.replace(max_epochs=cfg.max_epochs) != cfg:
            logger.warning(f"Resuming a run trained with config {last.config_hash} under a different config")
        streams.restore(last.rng_states)
        params, optimizer = last.params, last.optimizer
        first_epoch, wait, log = last.epoch + 1, last.epochs_without_improvement, list(last.log)
        logger.info(f"Resuming {model.name} training at epoch {first_epoch}")
    else:
        params = model.init_params(streams)
        optimizer = AdamState(learning_rate=cfg.learning_rate)
        best = Checkpoint(params, optimizer, cfg, seed, dataset=dataset or {})
        first_epoch, wait, log = 1, 0, []
        logger.info(f"Training {model.name} with config {best.config_hash} (seed {seed})")

    epoch = first_epoch - 1
    for epoch in range(first_epoch, cfg.max_epochs + 1):
        model.start_epoch(epoch, streams)
        batches = model.batches(streams)
        if not batches:
            raise EmptyDatasetError("Training split has no interactions")
        total = None
        for batch_index, batch in enumerate(batches):
            with Tape() as tape:
                loss, breakdown = model.loss(params, batch, streams, epoch, batch_index)
            gradients = tape.backward(loss, wrt=list(params.values()))
            params, optimizer = adam_step(params, {name: gradients[tensor] for name, tensor in params.items()},
                                          optimizer)
            total = breakdown if total is None else total + breakdown
        breakdown = total.scaled(1.0 / len(batches))

        precision = validation_precision(model, params, splits)
        log.append(_log_row(epoch, breakdown, precision))
        cf_text = "" if breakdown.elbo_cf is None else f", elbo_cf {breakdown.elbo_cf:.4f}"
        logger.info(f"Epoch {epoch}: loss {breakdown.loss:.4f}, elbo {breakdown.elbo_clean:.4f}{cf_text}, "
                    f"kl {breakdown.kl:.4f}, val P@{VALIDATION_K} {precision:.4f}")

        if precision > best.best_precision:
            wait = 0
            best = Checkpoint(params, optimizer, cfg, seed, epoch=epoch, best_epoch=epoch, best_precision=precision,
                              rng_states=streams.states(), log=list(log), dataset=dataset or best.dataset)
            if out_dir is not None:
                checkpoint_handler.save_checkpoint(best, Path(out_dir) / "best")
        else:
            wait += 1
        if wait >= cfg.patience:
            logger.info(f"Validation P@{VALIDATION_K} did not improve for {cfg.patience} epochs, "
                        f"stopping at epoch {epoch} (best epoch {best.best_epoch})")
            break

    last = Checkpoint(params, optimizer, cfg, seed, epoch=epoch, best_epoch=best.best_epoch,
                      best_precision=best.best_precision, epochs_without_improvement=wait,
                      rng_states=streams.states(), log=log, dataset=dataset or best.dataset)
    if out_dir is not None:
        checkpoint_handler.save_checkpoint(last, Path(out_dir) / "last")
        if best.epoch == 0:
            checkpoint_handler.save_checkpoint(best, Path(out_dir) / "best")
        write_training_log(log, Path(out_dir) / LOG_FILE)
    logger.info(f"Finished {model.name} training after epoch {last.epoch}, best val P@{VALIDATION_K} "
                f"{max(best.best_precision, 0.0):.4f}, process memory {misc.process_memory_mb():.1f} MiB")
    return TrainResult(best, last)


def resume_training(run_dir: PathLike, splits: SplitDataset, cfg: Optional[TrainConfig] = None) -> TrainResult:
    """Continues the run saved in run_dir (its last/ and best/ checkpoints)."""
    run_dir = Path(run_dir)
    last = checkpoint_handler.load_checkpoint(run_dir / "last")
    best = checkpoint_handler.load_checkpoint(run_dir / "best")
    return train(splits, cfg or last.config, last.seed, run_dir, resume=(last, best), dataset=last.dataset)


def train_mf_baseline(splits: SplitDataset, cfg: TrainConfig, seed: int = 0,
                      out_dir: Optional[PathLike] = None, dataset: Optional[dict] = None) -> TrainResult:
    return train(splits, cfg.replace(model="mf"), seed, out_dir, dataset=dataset)


# Grid search ########################################################################

@dataclass
class GridResult:
    best: TrainConfig
    rows: List[dict]

    def table(self) -> str:
        header = list(GRID_AXES) + ["seed", "best_epoch", f"val_precision@{VALIDATION_K}"]
        return table_handler.render(header, [[row[name] for name in header] for row in self.rows],
                                    "Grid search results")

    def to_csv(self, path: PathLike):
        pd.DataFrame(self.rows).to_csv(path, index=False)


def expand_grid(search_space: Mapping[str, Sequence[float]]) -> List[Dict[str, float]]:
    """
    :raise ConfigError: on an unknown axis or an empty grid
    """
    unknown = [axis for axis in search_space if axis not in GRID_AXES]
    if unknown:
        raise ConfigError([f"grid.{axis}: unknown axis, allowed {', '.join(GRID_AXES)}" for axis in unknown])
    axes = [axis for axis in GRID_AXES if axis in search_space]
    if not axes or any(len(search_space[axis]) == 0 for axis in axes):
        raise ConfigError("grid: the search space is empty")
    return [dict(zip(axes, values)) for values in itertools.product(*(search_space[axis] for axis in axes))]


def grid_search(splits: SplitDataset, search_space: Mapping[str, Sequence[float]], base: TrainConfig,
                seed: int = 0, jobs: int = 1) -> GridResult:
    """
    Trains every grid point (job i uses seed + i) and keeps the best validation Precision@10.
    Ties go to the lower L2 weight, then the lower learning rate, then the lower dropout.
    """
    points = expand_grid(search_space)
    configs = [base.replace(**{axis: float(value) for axis, value in point.items()}) for point in points]
    problems = [problem for config in configs for problem in config.problems()]
    if problems:
        raise ConfigError(sorted(set(problems)))
    logger.info(f"Grid search over {len(configs)} configurations with {jobs} job(s)")

    def run(job: int) -> dict:
        result = train(splits, configs[job], seed + job)
        config = configs[job]
        return {"learning_rate": config.learning_rate, "l2_weight": config.l2_weight, "dropout": config.dropout,
                "seed": seed + job, "best_epoch": result.best.best_epoch,
                f"val_precision@{VALIDATION_K}": max(result.best.best_precision, 0.0)}

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        rows = list(executor.map(run, range(len(configs))))
    best_index = min(range(len(rows)), key=lambda i: (-rows[i][f"val_precision@{VALIDATION_K}"],
                                                      rows[i]["l2_weight"], rows[i]["learning_rate"],
                                                      rows[i]["dropout"]))
    logger.info(f"Best grid point: {points[best_index]} "
                f"(val P@{VALIDATION_K} {rows[best_index][f'val_precision@{VALIDATION_K}']:.4f})")
    return GridResult(configs[best_index], rows)
