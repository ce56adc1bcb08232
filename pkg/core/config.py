"""
RIS Link Simulator - Configuration
Experiment and training settings. Shipped defaults live in
``data/experiment_defaults.json``; a user JSON file is merged over them and
command-line flags override both. ``RISLINK_SEED`` and ``RISLINK_WORKERS``
(read from the environment or a ``.env`` file) replace the shipped seed and
worker count.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from .errors import ConfigError
from .modem import SUPPORTED_ORDERS
from .neural_net import canonical_normalization

# Load environment variables
load_dotenv()

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
DEFAULTS_FILE = DATA_DIR / "experiment_defaults.json"
SEED_ENV = "RISLINK_SEED"
WORKERS_ENV = "RISLINK_WORKERS"

METHODS = ("modelbased", "autoencoder", "random-phase")


@dataclass(frozen=True)
class SystemDims:
    """Antennas ``n_t``/``n_r``, streams ``n_s``, RIS elements ``K``, modulation order ``M``."""
    n_t: int = 4
    n_r: int = 2
    n_s: int = 2
    K: int = 16
    M: int = 2

    def validate(self) -> "SystemDims":
        for name in ("n_t", "n_r", "n_s", "K"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_s > min(self.n_t, self.n_r):
            raise ConfigError(f"n_s={self.n_s} exceeds min(n_t, n_r)={min(self.n_t, self.n_r)}")
        if self.M not in SUPPORTED_ORDERS:
            raise ConfigError(f"M={self.M} is not one of {SUPPORTED_ORDERS}")
        return self

    def as_tuple(self) -> Tuple[int, int, int, int, int]:
        return (self.n_t, self.n_r, self.n_s, self.K, self.M)

    @property
    def bits_per_vector(self) -> int:
        return self.n_s * (self.M.bit_length() - 1)


@dataclass(frozen=True)
class TrainConfig:
    dims: SystemDims = field(default_factory=SystemDims)
    epochs: int = 10
    batch_size: int = 1000
    lr: float = 2e-4
    train_snr_db: float = 5.0
    n_samples: int = 200000
    sigma_e: float = 0.1
    P: float = 4.0
    seed: int = 0
    normalization: str = "paper"
    hidden_widths: Optional[Dict[str, List[int]]] = None

    def validate(self) -> "TrainConfig":
        self.dims.validate()
        for name in ("epochs", "batch_size", "n_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 for batch normalization")
        if self.n_samples % self.batch_size:
            raise ConfigError(f"batch_size={self.batch_size} must divide n_samples={self.n_samples}")
        if self.lr <= 0 or self.P <= 0:
            raise ConfigError("lr and P must be positive")
        if self.sigma_e < 0:
            raise ConfigError(f"sigma_e must be non-negative, got {self.sigma_e}")
        try:
            canonical_normalization(self.normalization)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return self

    @property
    def iterations(self) -> int:
        return self.epochs * (self.n_samples // self.batch_size)


@dataclass(frozen=True)
class LinkConfig:
    """One operating point of the model-based link."""
    dims: SystemDims = field(default_factory=SystemDims)
    P: float = 4.0
    snr_db: float = 5.0
    sigma_e: float = 0.0
    max_iter: int = 200
    tol: float = 1e-6
    power_allocation: str = "waterfilling"
    symbols_per_channel: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    dims: SystemDims = field(default_factory=SystemDims)
    P: float = 4.0
    snr_db: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    sigma_e: Tuple[float, ...] = (0.0,)
    n_bits: int = 1000000
    methods: Tuple[str, ...] = ("modelbased",)
    max_iter: int = 200
    tol: float = 1e-6
    power_allocation: str = "waterfilling"
    symbols_per_channel: int = 50
    eval_batch_size: int = 1000
    workers: int = 1
    seed: int = 0
    output: str = "results/ber.csv"
    checkpoint: Optional[str] = None
    bench_repetitions: int = 100
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "ExperimentConfig":
        self.dims.validate()
        self.train.validate()
        if self.P <= 0:
            raise ConfigError(f"P must be positive, got {self.P}")
        if not self.snr_db:
            raise ConfigError("at least one SNR point is required")
        if any(s < 0 for s in self.sigma_e):
            raise ConfigError("sigma_e values must be non-negative")
        if self.n_bits < 1:
            raise ConfigError(f"n_bits must be positive, got {self.n_bits}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"unknown method(s) {unknown}; choose from {METHODS}")
        if self.max_iter < 1 or self.tol < 0:
            raise ConfigError("max_iter must be >= 1 and tol >= 0")
        if self.power_allocation not in ("waterfilling", "equal"):
            raise ConfigError(f"power_allocation must be 'waterfilling' or 'equal', got '{self.power_allocation}'")
        for name in ("symbols_per_channel", "workers", "bench_repetitions"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.eval_batch_size < 2:
            raise ConfigError("eval_batch_size must be at least 2")
        return self

    def link(self, snr_db: float, sigma_e: float) -> LinkConfig:
        return LinkConfig(dims=self.dims, P=self.P, snr_db=snr_db, sigma_e=sigma_e,
                          max_iter=self.max_iter, tol=self.tol,
                          power_allocation=self.power_allocation,
                          symbols_per_channel=self.symbols_per_channel)

    def to_flat_dict(self) -> Dict[str, Any]:
        flat = _flatten(self)
        return {key: (list(value) if isinstance(value, tuple) else value) for key, value in flat.items()}


# Flat JSON keys for the nested dataclasses
_DIM_KEYS = tuple(f.name for f in fields(SystemDims))
_TRAIN_KEYS = {
    "epochs": "epochs", "batch_size": "batch_size", "lr": "lr",
    "train_snr_db": "train_snr_db", "n_samples": "n_samples",
    "train_sigma_e": "sigma_e", "normalization": "normalization",
    "hidden_widths": "hidden_widths",
}
_TUPLE_KEYS = ("snr_db", "sigma_e", "methods")


def _flatten(config: ExperimentConfig) -> Dict[str, Any]:
    flat = {k: v for k, v in asdict(config).items() if k not in ("dims", "train")}
    flat.update(asdict(config.dims))
    train = asdict(config.train)
    for flat_key, train_key in _TRAIN_KEYS.items():
        flat[flat_key] = train[train_key]
    return flat


def _load_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _environment_overrides() -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    for env, key in ((SEED_ENV, "seed"), (WORKERS_ENV, "workers")):
        raw = os.getenv(env)
        if raw:
            try:
                overrides[key] = int(raw)
            except ValueError as e:
                raise ConfigError(f"{env} must be an integer, got '{raw}'") from e
    return overrides


def _normalization_name(mode: Any) -> Any:
    try:
        return canonical_normalization(mode)
    except ValueError:
        return mode


def config_from_flat(flat: Dict[str, Any]) -> ExperimentConfig:
    """Build and validate an ``ExperimentConfig`` from flat JSON-style keys."""
    known = set(_DIM_KEYS) | set(_TRAIN_KEYS) | {f.name for f in fields(ExperimentConfig)} - {"dims", "train"}
    unknown = sorted(set(flat) - known)
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    try:
        dims = SystemDims(**{k: int(flat[k]) for k in _DIM_KEYS if k in flat})
        top = {k: v for k, v in flat.items()
               if k not in _DIM_KEYS and k not in _TRAIN_KEYS}
        for key in _TUPLE_KEYS:
            if key in top:
                value = top[key]
                top[key] = tuple(value) if isinstance(value, (list, tuple)) else (value,)
        top["snr_db"] = tuple(float(s) for s in top.get("snr_db", ExperimentConfig.snr_db))
        top["sigma_e"] = tuple(float(s) for s in top.get("sigma_e", ExperimentConfig.sigma_e))
        train_kwargs = {train_key: flat[flat_key] for flat_key, train_key in _TRAIN_KEYS.items() if flat_key in flat}
        if "normalization" in train_kwargs:
            train_kwargs["normalization"] = _normalization_name(train_kwargs["normalization"])
        train = TrainConfig(dims=dims, P=float(top.get("P", ExperimentConfig.P)),
                            seed=int(top.get("seed", ExperimentConfig.seed)), **train_kwargs)
        config = ExperimentConfig(dims=dims, train=train, **top)
    except TypeError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    return config.validate()


def load_experiment_config(path: Optional[str] = None,
                           overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Defaults <- environment <- JSON file <- explicit overrides (CLI flags)."""
    flat = _load_json(DEFAULTS_FILE) if DEFAULTS_FILE.exists() else {}
    flat = {**flat, **_environment_overrides()}
    if path:
        flat = {**flat, **_load_json(Path(path))}
    if overrides:
        flat = {**flat, **{k: v for k, v in overrides.items() if v is not None}}
    return config_from_flat(flat)


def with_dims(config: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy with some dimensions changed (keeps the training dims in step)."""
    dims = replace(config.dims, **changes).validate()
    return replace(config, dims=dims, train=replace(config.train, dims=dims))
