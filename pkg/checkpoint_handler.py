import logging
from pathlib import Path
from dataclasses import dataclass, field
from typing import Dict, List, Union

import numpy as np

from config_handler import TrainConfig, train_config_hash
from dataset_handler import SplitDataset
from helpers import misc
from helpers.errors import CheckpointLoadError, ConfigError
from model.baseline import MFModel
from model.cngcf import CNGCFModel
from model.decoder import Representations
from model.numeric import AdamState, ModelParams

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

PARAMS_DIRECTORY = "params"
MANIFEST_FILE = "manifest.json"
OPTIMIZER_FILE = "optimizer.bin"
FORMAT_VERSION = 1

MODEL_TYPES = {CNGCFModel.name: CNGCFModel, MFModel.name: MFModel}


def build_model(splits: SplitDataset, cfg: TrainConfig):
    try:
        return MODEL_TYPES[cfg.model](splits, cfg)
    except KeyError:
        raise ConfigError(f"train.model: unknown model '{cfg.model}'")


@dataclass
class Checkpoint:
    params: ModelParams
    optimizer: AdamState
    config: TrainConfig
    seed: int
    epoch: int = 0
    best_epoch: int = 0
    best_precision: float = -1.0
    epochs_without_improvement: int = 0
    rng_states: Dict[str, dict] = field(default_factory=dict)
    log: List[dict] = field(default_factory=list)
    dataset: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return train_config_hash(self.config, self.seed)

    def representations(self, splits: SplitDataset) -> Representations:
        model = build_model(splits, self.config)
        return model.representations(self.params)


# Save ###############################################################################

def save_checkpoint(checkpoint: Checkpoint, directory: PathLike) -> Path:
    """
    Writes params/<name>.npy for every tensor, manifest.json and optimizer.bin.
    """
    directory = Path(directory)
    params_directory = directory / PARAMS_DIRECTORY
    misc.check_create_directory(params_directory)
    for name, array in checkpoint.params.arrays().items():
        np.save(params_directory / f"{name}.npy", array, allow_pickle=False)

    optimizer = checkpoint.optimizer
    arrays = {"hyper": np.array([optimizer.learning_rate, optimizer.beta1, optimizer.beta2, optimizer.epsilon]),
              "step": np.array([optimizer.step], dtype=np.int64)}
    for name, moment in optimizer.first_moments.items():
        arrays[f"m__{name}"] = moment
    for name, moment in optimizer.second_moments.items():
        arrays[f"v__{name}"] = moment
    with open(directory / OPTIMIZER_FILE, "wb") as f:
        np.savez(f, **arrays)

    manifest = {
        "format_version": FORMAT_VERSION,
        "model": checkpoint.config.model,
        "param_names": list(checkpoint.params),
        "shapes": {name: list(shape) for name, shape in checkpoint.params.shapes().items()},
        "dims": {"h_dim": checkpoint.config.h_dim, "latent_dim": checkpoint.config.latent_dim,
                 "n_layers": checkpoint.config.n_layers, "z_dim": checkpoint.config.z_dim},
        "config": checkpoint.config.to_dict(),
        "config_hash": checkpoint.config_hash,
        "seed": checkpoint.seed,
        "epoch": checkpoint.epoch,
        "best_epoch": checkpoint.best_epoch,
        "best_precision@10": checkpoint.best_precision,
        "epochs_without_improvement": checkpoint.epochs_without_improvement,
        "rng_states": checkpoint.rng_states,
        "log": checkpoint.log,
        "dataset": checkpoint.dataset,
    }
    misc.write_json(directory / MANIFEST_FILE, manifest)
    logger.debug(f"Checkpoint for epoch {checkpoint.epoch} written to {directory}")
    return directory


# Load ###############################################################################

def load_checkpoint(directory: PathLike) -> Checkpoint:
    """
    :raise CheckpointLoadError: if the directory is missing, incomplete or inconsistent
    """
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    if not manifest_path.is_file():
        raise CheckpointLoadError(f"No checkpoint at {directory} (missing {MANIFEST_FILE})")
    try:
        manifest = misc.read_json(manifest_path)
    except ValueError as e:
        raise CheckpointLoadError(f"Corrupt checkpoint manifest {manifest_path}: {e}")

    problems = []
    try:
        config = TrainConfig.parse(manifest["config"], "config", problems)
        if problems:
            raise CheckpointLoadError(f"Checkpoint config is invalid: {'; '.join(problems)}")
        params = {}
        for name in manifest["param_names"]:
            shape = manifest["shapes"][name]
            array = np.load(directory / PARAMS_DIRECTORY / f"{name}.npy", allow_pickle=False)
            if list(array.shape) != list(shape):
                raise CheckpointLoadError(f"Parameter {name} has shape {array.shape}, manifest says {shape}")
            params[name] = array
        optimizer = _load_optimizer(directory / OPTIMIZER_FILE)
    except (KeyError, FileNotFoundError, OSError, ValueError) as e:
        raise CheckpointLoadError(f"Incomplete checkpoint at {directory}: {e}")

    checkpoint = Checkpoint(
        params=ModelParams(params), optimizer=optimizer, config=config, seed=manifest["seed"],
        epoch=manifest["epoch"], best_epoch=manifest["best_epoch"], best_precision=manifest["best_precision@10"],
        epochs_without_improvement=manifest["epochs_without_improvement"], rng_states=manifest["rng_states"],
        log=manifest["log"], dataset=manifest.get("dataset", {}))
    if checkpoint.config_hash != manifest["config_hash"]:
        raise CheckpointLoadError(f"Config hash mismatch in {directory}: "
                                  f"{checkpoint.config_hash} != {manifest['config_hash']}")
    logger.info(f"Loaded checkpoint {directory} (epoch {checkpoint.epoch}, config {checkpoint.config_hash})")
    return checkpoint


def _load_optimizer(path: Path) -> AdamState:
    with open(path, "rb") as f:
        with np.load(f, allow_pickle=False) as archive:
            learning_rate, beta1, beta2, epsilon = (float(v) for v in archive["hyper"])
            first = {key[3:]: archive[key] for key in archive.files if key.startswith("m__")}
            second = {key[3:]: archive[key] for key in archive.files if key.startswith("v__")}
            step = int(archive["step"][0])
    return AdamState(learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon, step=step,
                     first_moments=first, second_moments=second)
