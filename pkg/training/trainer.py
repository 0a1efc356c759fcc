from dataclasses import dataclass, field
import logging
import time

import numpy as np
from tqdm import tqdm

from common.errors import NumericalDivergenceError, ValidationError
from common.logs import progress_disabled
from data.encode import EncodedTable, Split
from data.splits import context_distribution
from model.cwae import CwaeParams, ModelConfig, anomaly_score, init_params, loss, predictive_score
from model.optim import AdamState, adam_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """
    epochs: int
        full passes over the train split, 0 leaves parameters untouched
    batch_size: int
        rows per step; the last partial batch is kept
    seed: int
        drives the shuffle order and the prior draws
    """

    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 3e-3
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")


@dataclass
class TrainReport:
    """Per-epoch means; val_recon is empty when the data has no validation rows."""

    train_total: list[float] = field(default_factory=list)
    train_recon: list[float] = field(default_factory=list)
    train_mmd: list[float] = field(default_factory=list)
    val_recon: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    first_batch_total: float | None = None
    optimizer: AdamState | None = field(default=None, repr=False)

    def to_dict(self, include_timings: bool = False) -> dict:
        payload = {
            "train_total": self.train_total,
            "train_recon": self.train_recon,
            "train_mmd": self.train_mmd,
            "val_recon": self.val_recon,
        }
        if include_timings:
            payload["epoch_seconds"] = self.epoch_seconds
        return payload


def validation_nll(params: CwaeParams, config: ModelConfig, data: EncodedTable) -> float:
    """Mean anomaly score over the validation rows, i.e. mean -log P(content | context)."""
    rows = data.rows_for(Split.VAL)
    if rows.shape[0] == 0:
        raise ValidationError("validation split is empty")
    return float(np.mean(anomaly_score(params, config, rows)))


def predictive_nll(params: CwaeParams, config: ModelConfig, data: EncodedTable, n_samples: int = 64, seed: int = 0) -> float:
    """
    Mean predictive_score over the validation rows, with `n_samples` prior
    draws fixed by `seed`.
    """
    rows = data.rows_for(Split.VAL)
    if rows.shape[0] == 0:
        raise ValidationError("validation split is empty")
    if n_samples < 1:
        raise ValidationError("n_samples must be positive")
    prior = np.random.default_rng(seed).standard_normal((n_samples, config.latent_dim))
    return float(np.mean(predictive_score(params, config, rows, prior)))


def output_marginals(data: EncodedTable, columns) -> dict[str, np.ndarray]:
    """Add-one smoothed train frequencies of each column, the same estimate the context term uses."""
    return {c: context_distribution(data, c).probabilities for c in columns}


def fresh_params(config: ModelConfig, data: EncodedTable) -> CwaeParams:
    """init_params with the output biases set to the train frequencies of the content columns."""
    return init_params(config, data.schema, marginals=output_marginals(data, config.content_columns))


def train(
    params: CwaeParams,
    config: ModelConfig,
    tcfg: TrainConfig,
    data: EncodedTable,
    optimizer: AdamState | None = None,
) -> tuple[CwaeParams, TrainReport]:
    """
    Mini-batch Adam over the train split. Parameters are updated in place and
    returned with the per-epoch report.

    params: CwaeParams
        initialised or resumed parameters
    config: ModelConfig
        architecture and loss weights
    tcfg: TrainConfig
        loop settings
    data: EncodedTable
        split dataset
    optimizer: AdamState | None
        resumed optimizer state, a fresh one is created otherwise
    """
    report = TrainReport()
    if tcfg.epochs == 0:
        return params, report

    rows = data.rows_for(Split.TRAIN)
    n = rows.shape[0]
    if n == 0:
        raise ValidationError("train split is empty")
    has_val = bool(np.any(data.mask(Split.VAL)))

    rng = np.random.default_rng(tcfg.seed)
    state = optimizer if optimizer is not None else AdamState(learning_rate=tcfg.learning_rate)
    param_list = params.parameters()
    quiet = progress_disabled(logger)

    for epoch in range(tcfg.epochs):
        started = time.perf_counter()
        order = rng.permutation(n) if tcfg.shuffle else np.arange(n)
        totals = np.zeros(3)
        for start in tqdm(range(0, n, tcfg.batch_size), desc=f"Epoch {epoch + 1}/{tcfg.epochs}", leave=False, disable=quiet):
            batch = rows[order[start : start + tcfg.batch_size]]
            prior = rng.standard_normal((batch.shape[0], config.mmd_dim))
            try:
                total, recon, mmd = loss(params, config, batch, prior, backward=True)
            except NumericalDivergenceError as e:
                raise NumericalDivergenceError(
                    f"training diverged at epoch {epoch + 1}, step {start // tcfg.batch_size + 1}: {e.message}",
                    hint="try a smaller learning rate",
                ) from e
            if report.first_batch_total is None:
                report.first_batch_total = total
            adam_step(param_list, state)
            # weight each batch by its row count so the epoch mean is a per-row mean
            totals += np.array([total, recon, mmd]) * batch.shape[0]

        total, recon, mmd = (totals / n).tolist()
        report.train_total.append(total)
        report.train_recon.append(recon)
        report.train_mmd.append(mmd)
        if has_val:
            report.val_recon.append(validation_nll(params, config, data))
        report.epoch_seconds.append(time.perf_counter() - started)
        logger.debug(
            "epoch %d: total %.5f recon %.5f mmd %.5f%s",
            epoch + 1,
            total,
            recon,
            mmd,
            f" val {report.val_recon[-1]:.5f}" if has_val else "",
        )

    report.optimizer = state
    return params, report
