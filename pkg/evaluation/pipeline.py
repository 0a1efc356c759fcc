"""
Final-model evaluation: train the contextual model and the unconditioned
baseline per seed, threshold on training scores and score the test split.
"""

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
import logging

import numpy as np
from tqdm import tqdm

from common.errors import ValidationError
from common.logs import progress_disabled
from data.encode import EncodedTable, Split
from data.schema import schema_fingerprint
from evaluation.roc import RocReport, aucroc_grid
from evaluation.thresholds import ThresholdTable, contextual_ratios, fit_thresholds
from model.cwae import CwaeParams, ModelConfig, anomaly_score
from model.optim import AdamState
from selection.context import NO_CONTEXT, derive_seed
from training.checkpoint import Checkpoint, save_checkpoint
from training.trainer import TrainConfig, TrainReport, fresh_params, train

logger = logging.getLogger(__name__)


@dataclass
class ModelEvaluation:
    roc: RocReport
    thresholds: ThresholdTable
    report: TrainReport


@dataclass
class SeedResult:
    seed: int
    cwae: ModelEvaluation
    wae: ModelEvaluation
    checkpoints: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "cwae_aucroc": self.cwae.roc.aucroc,
            "wae_aucroc": self.wae.roc.aucroc,
            "thresholds": self.cwae.thresholds.stats(),
        }


def train_final(
    data: EncodedTable,
    context: str | None,
    model_overrides: dict,
    tcfg: TrainConfig,
) -> tuple[CwaeParams, ModelConfig, TrainReport]:
    """Fresh model conditioned on `context` (None = unconditioned), trained for tcfg.epochs."""
    config = ModelConfig.for_context(data.schema, context, **model_overrides).with_seed(tcfg.seed)
    params = fresh_params(config, data)
    params, report = train(params, config, tcfg, data)
    return params, config, report


def evaluate_model(params: CwaeParams, config: ModelConfig, data: EncodedTable, report: TrainReport) -> ModelEvaluation:
    """
    Thresholds from the max training score per context value, then grid
    AUCROC of the test ratios.
    """
    context = config.context_columns[0] if config.context_columns else None
    train_scores = anomaly_score(params, config, data.rows_for(Split.TRAIN))
    test_scores = anomaly_score(params, config, data.rows_for(Split.TEST))
    if context is None:
        table = fit_thresholds(train_scores)
        test_context = None
    else:
        table = fit_thresholds(train_scores, data.column(context, Split.TRAIN), context_column=context)
        test_context = data.column(context, Split.TEST)
    records = contextual_ratios(
        test_scores,
        table,
        data.labels_for(Split.TEST),
        context_values=test_context,
        row_ids=np.flatnonzero(data.mask(Split.TEST)),
    )
    return ModelEvaluation(roc=aucroc_grid(records), thresholds=table, report=report)


def _save(path: Path, params, config, report: TrainReport, data: EncodedTable, seed: int) -> str:
    checkpoint = Checkpoint(
        config=config,
        fingerprint=schema_fingerprint(data.schema),
        params=params,
        optimizer=report.optimizer if report.optimizer is not None else AdamState(),
        seed=seed,
        epoch=len(report.train_total),
    )
    save_checkpoint(path, checkpoint)
    return str(path)


def evaluate_seed(args) -> SeedResult:
    """
    One seed of the evaluation. Takes a single tuple for pool workers:
    (data, context, model_overrides, train_overrides, seed, checkpoint_dir).
    Both models train with the seed derived from (seed, "final"), so with no
    context the two coincide.
    """
    data, context, model_overrides, train_overrides, seed, checkpoint_dir = args
    tcfg = TrainConfig(**{**train_overrides, "seed": derive_seed(seed, "final")})

    params, config, report = train_final(data, context, model_overrides, tcfg)
    cwae = evaluate_model(params, config, data, report)
    result = SeedResult(seed=seed, cwae=cwae, wae=cwae)
    if checkpoint_dir is not None:
        tag = context or NO_CONTEXT
        result.checkpoints.append(_save(Path(checkpoint_dir) / f"cwae_{tag}_seed{seed}.ckpt", params, config, report, data, tcfg.seed))

    if context is not None:
        params, config, report = train_final(data, None, model_overrides, tcfg)
        result.wae = evaluate_model(params, config, data, report)
        if checkpoint_dir is not None:
            result.checkpoints.append(_save(Path(checkpoint_dir) / f"wae_seed{seed}.ckpt", params, config, report, data, tcfg.seed))
    logger.info(
        "seed %d: CWAE(%s) %.4f, WAE %.4f",
        seed,
        context or NO_CONTEXT,
        result.cwae.roc.aucroc,
        result.wae.roc.aucroc,
    )
    return result


def evaluate_context(
    data: EncodedTable,
    context: str | None,
    model_overrides: dict,
    train_overrides: dict,
    seeds: list[int],
    workers: int = 1,
    checkpoint_dir: str | Path | None = None,
) -> list[SeedResult]:
    """
    Runs evaluate_seed for every seed and returns the results in seed order.

    context: str | None
        conditioning column, None for the unconditioned model only
    workers: int
        seeds evaluated in parallel
    """
    if context is not None and context not in data.schema.names:
        raise ValidationError(f"unknown context column {context!r}")
    jobs = [(data, context, model_overrides, train_overrides, seed, checkpoint_dir) for seed in seeds]
    quiet = progress_disabled(logger)
    results = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(evaluate_seed, job): job[4] for job in jobs}
            with tqdm(total=len(futures), desc=f"Seeds ({context or NO_CONTEXT})", disable=quiet) as pbar:
                for future in as_completed(futures):
                    results.append(future.result())
                    pbar.set_postfix(seed=futures[future])
                    pbar.update(1)
    else:
        for job in tqdm(jobs, desc=f"Seeds ({context or NO_CONTEXT})", disable=quiet):
            results.append(evaluate_seed(job))
    return sorted(results, key=lambda r: r.seed)


def mean_std(values: list[float]) -> tuple[float, float]:
    """Mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))
