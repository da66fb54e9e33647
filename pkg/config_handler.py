import json
import logging
import dataclasses
from pathlib import Path
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

from helpers import misc
from helpers.errors import ConfigError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ENCODERS = ("causal", "gcn")
MODELS = ("cngcf", "mf")
LIKELIHOODS = ("logistic", "multinomial")
VARIANCES = ("exp_relu", "exp")
NEIGHBOR_MODES = ("causal", "causal+co_interaction")
MESSAGE_NORMS = ("mean", "sum")
DROPOUT_MODES = ("feature", "node")
CF_DISTRIBUTIONS = ("normal", "uniform", "point")
ABLATION_VARIANTS = ("full", "no_causal_messages", "no_counterfactual", "gcn", "mf")
SWEEP_AXES = ("embedding_size", "dropout")
GRID_AXES = ("learning_rate", "l2_weight", "dropout")

DEFAULT_GRID = {
    "learning_rate": [0.0001, 0.0005, 0.001, 0.005],
    "l2_weight": [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0],
    "dropout": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
}


def _key(f: dataclasses.Field) -> str:
    return f.metadata.get("key", f.name)


class _Section:
    """Shared (de)serialization for the config sections."""

    def to_dict(self) -> Dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, dict):
                value = {k: list(v) for k, v in value.items()}
            out[_key(f)] = value
        return out

    def problems(self, path: str) -> List[str]:
        return []

    @classmethod
    def parse(cls, raw: Any, path: str, problems: List[str]):
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            problems.append(f"{path}: expected an object, got {type(raw).__name__}")
            return cls()
        known = {_key(f): f for f in dataclasses.fields(cls)}
        for unknown in sorted(set(raw) - set(known)):
            problems.append(f"{path}.{unknown}: unknown key")
        values = {}
        for key, f in known.items():
            if key in raw:
                default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
                values[f.name] = _coerce(raw[key], default, f"{path}.{key}", problems)
        section = cls(**{name: value for name, value in values.items() if value is not _INVALID})
        problems.extend(section.problems(path))
        return section


_INVALID = object()


def _coerce(value, default, path: str, problems: List[str]):
    """Checks value against the type of the field default."""
    def fail(expected):
        problems.append(f"{path}: expected {expected}, got {json.dumps(value)}")
        return _INVALID

    if isinstance(default, bool):
        return value if isinstance(value, bool) else fail("true or false")
    if isinstance(default, int):
        return value if isinstance(value, int) and not isinstance(value, bool) else fail("an integer")
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        return fail("a number")
    if isinstance(default, str) or default is None:
        return value if isinstance(value, str) or (default is None and value is None) else fail("a string")
    if isinstance(default, tuple):
        if not isinstance(value, list) or not value:
            return fail("a non-empty list")
        items = [_coerce(v, default[0], f"{path}[{i}]", problems) for i, v in enumerate(value)]
        return _INVALID if any(item is _INVALID for item in items) else tuple(items)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            return fail("an object")
        return {k: v for k, v in value.items()}
    return value


# Sections ###########################################################################

@dataclass(frozen=True)
class SynthConfig(_Section):
    n_users: int = 1000
    n_items: int = 1000
    n_causal_neighbors: int = 10
    latent_dim: int = 16
    k_range: Tuple[int, int] = (20, 100)
    n_exogenous: int = 4

    def problems(self, path: str = "synth") -> List[str]:
        found = []
        if self.n_users < 2 or self.n_items < 2:
            found.append(f"{path}.n_users/n_items: need at least 2 of each, got {self.n_users}/{self.n_items}")
        if not 1 <= self.n_causal_neighbors < min(self.n_users, self.n_items):
            found.append(f"{path}.n_causal_neighbors: must be >= 1 and below n_users and n_items, "
                         f"got {self.n_causal_neighbors}")
        if len(self.k_range) != 2 or not 1 <= self.k_range[0] <= self.k_range[-1] <= self.n_items:
            found.append(f"{path}.k_range: expected [min, max] with 1 <= min <= max <= n_items, "
                         f"got {list(self.k_range)}")
        if self.latent_dim < 1:
            found.append(f"{path}.latent_dim: must be >= 1, got {self.latent_dim}")
        if self.n_exogenous < 0:
            found.append(f"{path}.n_exogenous: can't be negative, got {self.n_exogenous}")
        return found


@dataclass(frozen=True)
class DataConfig(_Section):
    interactions: Optional[str] = None
    user_features: Optional[str] = None
    item_features: Optional[str] = None
    user_neighbors: Optional[str] = None
    item_neighbors: Optional[str] = None
    rating_threshold: float = 3.0
    k_core: int = 10
    split_ratios: Tuple[float, float, float] = (0.7, 0.1, 0.2)

    def problems(self, path: str = "data") -> List[str]:
        found = []
        if self.k_core < 1:
            found.append(f"{path}.k_core: must be >= 1, got {self.k_core}")
        ratios = self.split_ratios
        if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
            found.append(f"{path}.split_ratios: expected three non-negative values summing to 1, got {list(ratios)}")
        return found


@dataclass(frozen=True)
class TrainConfig(_Section):
    model: str = "cngcf"
    learning_rate: float = 0.001
    l2_weight: float = 0.01
    dropout: float = 0.4
    dropout_mode: str = "feature"
    batch_size: int = 1024
    max_epochs: int = 400
    patience: int = 20
    lambda_: float = field(default=0.5, metadata={"key": "lambda"})
    h_dim: int = 32
    latent_dim: int = 64
    n_layers: int = 2
    z_dim: int = 4
    encoder: str = "causal"
    causal_messages: bool = True
    counterfactual: bool = True
    cf_distribution: str = "normal"
    cf_params: Tuple[float, float] = (0.0, 1.0)
    likelihood: str = "logistic"
    variance: str = "exp_relu"
    message_norm: str = "mean"
    neighbors: str = "causal"
    max_neighbors: int = 50
    node_embeddings: bool = False
    n_samples: int = 1

    def problems(self, path: str = "train") -> List[str]:
        found = []

        def choice(name, allowed):
            value = getattr(self, name)
            if value not in allowed:
                found.append(f"{path}.{name}: must be one of {', '.join(allowed)}, got '{value}'")

        choice("model", MODELS)
        choice("encoder", ENCODERS)
        choice("dropout_mode", DROPOUT_MODES)
        choice("cf_distribution", CF_DISTRIBUTIONS)
        choice("likelihood", LIKELIHOODS)
        choice("variance", VARIANCES)
        choice("neighbors", NEIGHBOR_MODES)
        choice("message_norm", MESSAGE_NORMS)
        if self.learning_rate < 0:
            found.append(f"{path}.learning_rate: can't be negative, got {self.learning_rate}")
        if self.l2_weight < 0:
            found.append(f"{path}.l2_weight: can't be negative, got {self.l2_weight}")
        if not 0.0 <= self.dropout < 1.0:
            found.append(f"{path}.dropout: must be in [0, 1), got {self.dropout}")
        if not 0.0 <= self.lambda_ <= 1.0:
            found.append(f"{path}.lambda: must be in [0, 1], got {self.lambda_}")
        for name in ("batch_size", "patience", "h_dim", "latent_dim", "n_layers", "max_neighbors", "n_samples"):
            if getattr(self, name) < 1:
                found.append(f"{path}.{name}: must be >= 1, got {getattr(self, name)}")
        for name in ("max_epochs", "z_dim"):
            if getattr(self, name) < 0:
                found.append(f"{path}.{name}: can't be negative, got {getattr(self, name)}")
        if len(self.cf_params) != 2:
            found.append(f"{path}.cf_params: expected two numbers, got {list(self.cf_params)}")
        elif self.cf_distribution == "normal" and self.cf_params[1] <= 0:
            found.append(f"{path}.cf_params: normal scale must be > 0, got {self.cf_params[1]}")
        elif self.cf_distribution == "uniform" and self.cf_params[0] >= self.cf_params[1]:
            found.append(f"{path}.cf_params: uniform needs low < high, got {list(self.cf_params)}")
        return found

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class EvalConfig(_Section):
    ks: Tuple[int, ...] = (10, 20)
    seeds: Tuple[int, ...] = (0,)
    variants: Tuple[str, ...] = ABLATION_VARIANTS
    sweep_axis: str = "dropout"
    sweep_values: Tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    grid: Dict[str, list] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID.items()})

    def problems(self, path: str = "eval") -> List[str]:
        found = []
        if any(k < 1 for k in self.ks):
            found.append(f"{path}.ks: every K must be >= 1, got {list(self.ks)}")
        if any(seed < 0 for seed in self.seeds):
            found.append(f"{path}.seeds: seeds can't be negative, got {list(self.seeds)}")
        unknown = [v for v in self.variants if v not in ABLATION_VARIANTS]
        if unknown:
            found.append(f"{path}.variants: unknown variants {unknown}, allowed {', '.join(ABLATION_VARIANTS)}")
        if self.sweep_axis not in SWEEP_AXES:
            found.append(f"{path}.sweep_axis: must be one of {', '.join(SWEEP_AXES)}, got '{self.sweep_axis}'")
        for axis, values in self.grid.items():
            if axis not in GRID_AXES:
                found.append(f"{path}.grid.{axis}: unknown axis, allowed {', '.join(GRID_AXES)}")
            elif not isinstance(values, list) or not values or \
                    any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
                found.append(f"{path}.grid.{axis}: expected a non-empty list of numbers")
        return found


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    SECTIONS = (("synth", SynthConfig), ("data", DataConfig), ("train", TrainConfig), ("eval", EvalConfig))

    def to_dict(self) -> Dict[str, Any]:
        out = {"seed": self.seed}
        for name, _ in self.SECTIONS:
            out[name] = getattr(self, name).to_dict()
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        """
        :raise ConfigError: listing every violated constraint with its field path
        """
        problems = []
        if not isinstance(raw, dict):
            raise ConfigError(f"config: expected an object, got {type(raw).__name__}")
        for unknown in sorted(set(raw) - {"seed"} - {name for name, _ in cls.SECTIONS}):
            problems.append(f"{unknown}: unknown key")
        seed = _coerce(raw.get("seed", 0), 0, "seed", problems)
        if seed is not _INVALID and seed < 0:
            problems.append(f"seed: can't be negative, got {seed}")
        sections = {name: section.parse(raw.get(name), name, problems) for name, section in cls.SECTIONS}
        if problems:
            raise ConfigError(problems)
        return cls(seed=seed, **sections)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def config_hash(self) -> str:
        return train_config_hash(self.train, self.seed)

    def save(self, directory: PathLike) -> Path:
        misc.check_create_directory(directory)
        path = Path(directory) / "config.json"
        misc.write_json(path, self.to_dict())
        return path


def train_config_hash(train: TrainConfig, seed: int) -> str:
    return misc.config_hash({"train": train.to_dict(), "seed": seed})


class ConfigHandler:
    """Loads a run config json file and turns it into a validated RunConfig."""

    def __init__(self, path: Optional[PathLike] = None):
        """
        :param path: path of the json config, None means all defaults.
        """
        self._path = Path(path) if path is not None else None
        self._config = self._load_config()

    def _load_config(self) -> dict:
        """
        Loads config and checks for validity of json file. An empty file counts as {}.
        :return: dict loaded json data
        :raise ConfigError: missing file or invalid json
        """
        if self._path is None:
            return {}
        try:
            with open(self._path, encoding="utf-8") as cfg:
                text = cfg.read()
        except FileNotFoundError as e:
            logger.critical(f"Config json file was not found: {self._path} : {e}")
            raise ConfigError(f"config file not found: {self._path}")
        if not text.strip():
            return {}
        try:
            data = json.loads(text)
        except ValueError as e:
            logger.critical(f"Invalid config json: {e}")
            raise ConfigError(f"config file {self._path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"config file {self._path} must hold a JSON object")
        return data

    def validate(self) -> RunConfig:
        return RunConfig.from_dict(self._config)


def validate_config(path: Optional[PathLike]) -> RunConfig:
    """
    Parses a run config file, fills defaults and reports every problem at once.
    :param path: json file, None or an empty file means all defaults
    :return: RunConfig
    :raise ConfigError: with the full list of problems
    """
    config = ConfigHandler(path).validate()
    logger.debug(f"Effective config:\n{json.dumps(config.to_dict(), indent=4, sort_keys=True)}")
    return config
