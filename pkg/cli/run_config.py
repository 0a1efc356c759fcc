from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
import logging
import os

import yaml

from common.errors import StorageError, ValidationError
from model.cwae import ModelConfig
from selection.context import PREDICTIVE, SCORES, SWEEP_TRAIN
from training.trainer import TrainConfig

logger = logging.getLogger(__name__)

OUT_DIR_ENV = "CTXAD_OUT_DIR"
DEFAULT_OUT_DIR = "runs"
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

SELECTION_KEYS = ("batch_size", "learning_rate", "curve_epochs", "score", "prior_samples")


@dataclass(frozen=True)
class RunConfig:
    """
    One experiment's settings.

    model: dict
        ModelConfig field overrides (the column split is decided per run)
    train: dict
        TrainConfig field overrides for the final models
    selection: dict
        batch_size / learning_rate / curve_epochs / score / prior_samples of
        the one-epoch sweep, unset keys fall back to SWEEP_TRAIN and the
        predictive score with 64 prior draws
    out_dir: str | None
        None defers to $CTXAD_OUT_DIR, then runs/
    """

    manifest: str | None = None
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    selection: dict = field(default_factory=dict)
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    out_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValidationError("run config needs at least one seed")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        for key in ("context_columns", "content_columns", "seed"):
            if key in self.model:
                raise ValidationError(f"model.{key} is set per run and cannot be configured")
        unknown = [k for k in self.selection if k not in SELECTION_KEYS]
        if unknown:
            raise ValidationError(f"unknown selection key(s) {unknown}")
        if self.selection_score not in SCORES:
            raise ValidationError(f"selection.score must be one of {list(SCORES)}, got {self.selection_score!r}")
        if not isinstance(self.selection.get("prior_samples", 64), int) or self.prior_samples < 1:
            raise ValidationError("selection.prior_samples must be a positive integer")
        # surface bad overrides before any training starts
        try:
            ModelConfig(content_columns=("_",), **self.model)
            TrainConfig(**self.train)
        except TypeError as e:
            raise ValidationError(f"bad run config override: {e}") from e

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(**{**self.train, "seed": seed})

    def selection_train_config(self) -> TrainConfig:
        overrides = {k: v for k, v in self.selection.items() if k in ("batch_size", "learning_rate")}
        return replace(SWEEP_TRAIN, **overrides)

    @property
    def curve_epochs(self) -> int:
        return int(self.selection.get("curve_epochs", 0))

    @property
    def selection_score(self) -> str:
        return self.selection.get("score", PREDICTIVE)

    @property
    def prior_samples(self) -> int:
        return int(self.selection.get("prior_samples", 64))

    def resolved_out_dir(self, override: str | None = None) -> Path:
        return Path(override or self.out_dir or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["seeds"] = list(self.seeds)
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        unknown = [k for k in payload if k not in cls.__dataclass_fields__]
        if unknown:
            raise ValidationError(f"unknown run config key(s) {unknown}")
        payload = dict(payload)
        for key in ("model", "train", "selection"):
            payload[key] = dict(payload.get(key) or {})
        if "seeds" in payload:
            payload["seeds"] = tuple(payload["seeds"] or ())
        return cls(**payload)


def load_run_config(path: str | Path | None) -> RunConfig:
    """Reads a YAML run config; None gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        payload = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as e:
        raise StorageError(f"cannot read run config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ValidationError(f"run config {path} is not valid YAML: {e}") from e
    if not isinstance(payload, dict):
        raise ValidationError(f"run config {path} must be a mapping")
    config = RunConfig.from_dict(payload)
    if config.manifest is not None and not Path(config.manifest).is_absolute():
        config = RunConfig.from_dict({**config.to_dict(), "manifest": str(path.parent / config.manifest)})
    logger.debug("run config %s: %s", path, config.to_dict())
    return config


@dataclass
class RunSummary:
    """
    Evaluation outcome for one dataset over all seeds.

    per_seed: list[dict]
        {seed, cwae_aucroc, wae_aucroc, thresholds} in seed order
    variance: dict | None
        total / within / between variance of the content given the context,
        None for the unconditioned run
    """

    dataset: str
    context: str
    per_seed: list[dict]
    cwae_mean: float
    cwae_std: float
    wae_mean: float
    wae_std: float
    selection: str | None = None
    best_context: str | None = None
    best_mean: float | None = None
    complexity_avg_scaled: float | None = None
    variance: dict | None = None
    paths: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "RunSummary":
        return cls(**payload)


def write_yaml(payload: dict, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(payload, sort_keys=False), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e
    return path


def read_summary(path: str | Path) -> RunSummary:
    path = Path(path)
    try:
        payload = yaml.safe_load(path.read_text(encoding="utf-8"))
        return RunSummary.from_dict(payload)
    except OSError as e:
        raise StorageError(f"cannot read summary {path}: {e}") from e
    except (yaml.YAMLError, TypeError) as e:
        raise ValidationError(f"{path} is not an evaluation summary: {e}") from e
