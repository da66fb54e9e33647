import logging
from pathlib import Path
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config_handler import ABLATION_VARIANTS, SWEEP_AXES, TrainConfig
from dataset_handler import SplitDataset
from helpers import table_handler
from helpers.errors import ConfigError
from pipeline import evaluation, trainer

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ABLATION_CHANGES = {
    "full": {},
    "no_causal_messages": {"causal_messages": False},
    "no_counterfactual": {"counterfactual": False},
    "gcn": {"encoder": "gcn"},
    "mf": {"model": "mf"},
}
SWEEP_COLUMNS = ("value", "precision@10", "recall@10", "ndcg@10")


def _metric_names(ks: Sequence[int]) -> List[str]:
    return [f"{name}@{k}" for k in sorted(ks) for name in evaluation.METRICS]


def train_and_evaluate(splits: SplitDataset, cfg: TrainConfig, seed: int, ks: Sequence[int]) -> Dict[str, float]:
    result = trainer.train(splits, cfg, seed)
    report = evaluation.evaluate(result.best, splits, ks)
    return {f"{name}@{k}": report.metric(name, k) for k in report.ks for name in evaluation.METRICS}


def _run_all(splits: SplitDataset, tasks: List[Tuple[TrainConfig, int]], ks: Sequence[int],
             jobs: int) -> List[Dict[str, float]]:
    """Runs (config, seed) tasks, in parallel threads when jobs > 1; results keep task order."""
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        return list(executor.map(lambda task: train_and_evaluate(splits, task[0], task[1], ks), tasks))


def _mean(results: List[Dict[str, float]], names: Sequence[str]) -> Dict[str, float]:
    return {name: float(np.mean([result[name] for result in results])) for name in names}


# Ablations ##########################################################################

@dataclass
class AblationTable:
    rows: List[dict]
    metric_names: List[str]
    seeds: List[int]

    def row(self, variant: str) -> dict:
        return next(row for row in self.rows if row["variant"] == variant)

    def table(self) -> str:
        header = ["variant"] + self.metric_names + [f"delta {name}" for name in self.metric_names[:3]]
        rows = []
        for row in self.rows:
            deltas = [self._delta_text(row, name) for name in self.metric_names[:3]]
            rows.append([row["variant"]] + [row[name] for name in self.metric_names] + deltas)
        return table_handler.render(header, rows, f"Ablations over seeds {self.seeds}")

    @staticmethod
    def _delta_text(row: dict, name: str) -> str:
        relative = row[f"relative_{name}"]
        shown = "n/a" if relative is None else f"{relative:+.1f}%"
        return f"{row[f'delta_{name}']:+.4f} ({shown})"

    def to_csv(self, path: PathLike):
        pd.DataFrame(self.rows).to_csv(path, index=False)


def ablation_config(base: TrainConfig, variant: str) -> TrainConfig:
    if variant not in ABLATION_CHANGES:
        raise ConfigError(f"Unknown ablation variant '{variant}', allowed {', '.join(ABLATION_VARIANTS)}")
    return base.replace(**ABLATION_CHANGES[variant])


def run_ablations(splits: SplitDataset, base: TrainConfig, seeds: Sequence[int] = (0,),
                  variants: Sequence[str] = ABLATION_VARIANTS, ks: Sequence[int] = evaluation.DEFAULT_KS,
                  jobs: int = 1) -> AblationTable:
    """
    Trains and evaluates every variant under the same seeds. Each row holds the metric means
    over seeds, delta_<metric> = variant - full and relative_<metric> = delta / full in percent.
    The full model is always run since every delta refers to it.
    """
    variants = ["full"] + [v for v in dict.fromkeys(variants) if v != "full"]
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("ablations need at least one seed")
    configs = {variant: ablation_config(base, variant) for variant in variants}
    tasks = [(configs[variant], seed) for variant in variants for seed in seeds]
    logger.info(f"Running {len(variants)} ablation variants x {len(seeds)} seeds")
    results = _run_all(splits, tasks, ks, jobs)

    names = _metric_names(ks)
    means = {variant: _mean(results[i * len(seeds):(i + 1) * len(seeds)], names) for i, variant in enumerate(variants)}
    rows = []
    for variant in variants:
        row = {"variant": variant}
        row.update(means[variant])
        for name in names:
            delta = means[variant][name] - means["full"][name]
            row[f"delta_{name}"] = delta
            row[f"relative_{name}"] = None if means["full"][name] == 0 else 100.0 * delta / means["full"][name]
        rows.append(row)
    return AblationTable(rows, names, seeds)


# Sweeps #############################################################################

def sweep_config(base: TrainConfig, axis: str, value: float) -> TrainConfig:
    """embedding_size sets the hidden factor size, dropout the dropout ratio."""
    if axis == "embedding_size":
        if value != int(value) or value < 1:
            raise ConfigError(f"embedding_size values must be positive integers, got {value}")
        return base.replace(h_dim=int(value))
    if axis == "dropout":
        return base.replace(dropout=float(value))
    raise ConfigError(f"Unknown sweep axis '{axis}', allowed {', '.join(SWEEP_AXES)}")


def sweep(splits: SplitDataset, base: TrainConfig, axis: str, values: Sequence[float],
          seeds: Sequence[int] = (0,), jobs: int = 1) -> List[dict]:
    """
    :return: one row per value with the mean precision@10, recall@10 and ndcg@10 over seeds
    :raise ConfigError: on an empty value list, an unknown axis or an invalid value
    """
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    configs = [sweep_config(base, axis, value) for value in values]
    problems = [problem for config in configs for problem in config.problems()]
    if problems:
        raise ConfigError(sorted(set(problems)))
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    tasks = [(config, seed) for config in configs for seed in seeds]
    logger.info(f"Sweeping {axis} over {values} with {len(seeds)} seed(s)")
    results = _run_all(splits, tasks, (10,), jobs)

    rows = []
    for i, value in enumerate(values):
        row = {"value": value}
        row.update(_mean(results[i * len(seeds):(i + 1) * len(seeds)], SWEEP_COLUMNS[1:]))
        rows.append(row)
    return rows


def write_sweep_csv(rows: Sequence[dict], path: PathLike):
    pd.DataFrame(list(rows), columns=list(SWEEP_COLUMNS)).to_csv(path, index=False)


def sweep_table(rows: Sequence[dict], axis: str, title: Optional[str] = None) -> str:
    return table_handler.render([axis] + list(SWEEP_COLUMNS[1:]),
                                [[row[name] for name in SWEEP_COLUMNS] for row in rows],
                                title or f"Sweep over {axis}")
