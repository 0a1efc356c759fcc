"""
Context selection by validation loss.

Each candidate column gets a fresh model trained for a single epoch. Its score
is the joint validation loss -log P(content, context) =
-log P(content | context) - log P(context), the second term taken from the
add-one smoothed train distribution of the column. The unconditioned model is
evaluated alongside and wins when no column helps.

The conditional term is by default the predictive one: the decoder is fed prior
draws instead of the encoded row, so a model cannot lower it by copying content
through the code. "reconstruction" scores the encoded rows instead.
"""

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from hashlib import sha256
from pathlib import Path
import logging
import time

import numpy as np
import yaml
from tqdm import tqdm

from common.errors import NumericalDivergenceError, SelectionError, StorageError, ValidationError
from common.logs import progress_disabled
from data.encode import EncodedTable, Split
from data.splits import ContextDistribution, context_distribution
from model.cwae import ModelConfig
from training.trainer import TrainConfig, fresh_params, predictive_nll, train, validation_nll

logger = logging.getLogger(__name__)

NO_CONTEXT = "NO_CONTEXT"
PREDICTIVE = "predictive"
RECONSTRUCTION = "reconstruction"
SCORES = (PREDICTIVE, RECONSTRUCTION)

# one epoch is about 40 steps on a couple of thousand rows at this batch size
SWEEP_TRAIN = TrainConfig(epochs=1, batch_size=32, learning_rate=1e-2)


@dataclass
class CandidateResult:
    """
    conditional_nll: float
        mean -log P(content | context) over validation rows after one epoch
    context_nll: float
        mean -log P(context) over validation rows, 0 for NO_CONTEXT
    val_curve: list[float]
        joint validation loss after each epoch, only longer than one entry
        when extra curve epochs were requested
    """

    candidate: str
    conditional_nll: float | None = None
    context_nll: float | None = None
    joint_loss: float | None = None
    seed: int = 0
    failed: bool = False
    error: str = ""
    val_curve: list[float] = field(default_factory=list)
    train_seconds: float = 0.0

    def sort_key(self) -> tuple:
        loss = self.joint_loss if self.joint_loss is not None else float("inf")
        return (self.failed, loss, self.candidate == NO_CONTEXT, self.candidate)

    def to_dict(self) -> dict:
        payload = {
            "candidate": self.candidate,
            "conditional_nll": self.conditional_nll,
            "context_nll": self.context_nll,
            "joint_loss": self.joint_loss,
            "seed": self.seed,
            "failed": self.failed,
        }
        if self.failed:
            payload["error"] = self.error
        if len(self.val_curve) > 1:
            payload["val_curve"] = self.val_curve
        return payload


@dataclass
class SelectionReport:
    results: list[CandidateResult]
    chosen: str
    seed: int
    score: str = PREDICTIVE

    def result(self, candidate: str) -> CandidateResult:
        for r in self.results:
            if r.candidate == candidate:
                return r
        raise KeyError(candidate)

    @property
    def chosen_column(self) -> str | None:
        return None if self.chosen == NO_CONTEXT else self.chosen

    def curves(self) -> dict[str, list[float]]:
        return {r.candidate: r.val_curve for r in self.results if r.val_curve}

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen,
            "seed": self.seed,
            "score": self.score,
            "candidates": [r.to_dict() for r in self.results],
        }


def derive_seed(base_seed: int, name: str) -> int:
    """Deterministic 32-bit seed for a named sub-run of `base_seed`."""
    digest = sha256(f"{base_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def joint_val_loss(
    conditional_nll: float,
    ctx_dist: ContextDistribution | None,
    val_context_values: np.ndarray | None = None,
) -> float:
    """
    conditional_nll + mean(-log P(c)) over the validation context values. With
    no distribution (the unconditioned model) the conditional term is returned.
    """
    if ctx_dist is None:
        return float(conditional_nll)
    values = np.asarray(val_context_values, dtype=np.int64)
    if values.size == 0:
        return float(conditional_nll)
    return float(conditional_nll + np.mean(ctx_dist.neg_log(values)))


def _conditional_nll(params, config: ModelConfig, data: EncodedTable, score: str, prior_samples: int, prior_seed: int) -> float:
    if score == PREDICTIVE:
        return predictive_nll(params, config, data, n_samples=prior_samples, seed=prior_seed)
    return validation_nll(params, config, data)


def evaluate_candidate(args) -> CandidateResult:
    """
    Trains one candidate and scores it. Runs inside pool workers, so it takes
    a single tuple: (data, candidate, model_overrides, tcfg, curve_epochs,
    score, prior_samples, prior_seed).
    """
    data, candidate, model_overrides, tcfg, curve_epochs, score, prior_samples, prior_seed = args
    column = None if candidate == NO_CONTEXT else candidate
    config = ModelConfig.for_context(data.schema, column, **model_overrides).with_seed(tcfg.seed)
    result = CandidateResult(candidate=candidate, seed=tcfg.seed)

    ctx_dist = None if column is None else context_distribution(data, column)
    val_context = None if column is None else data.column(column, Split.VAL)
    context_nll = 0.0 if ctx_dist is None else joint_val_loss(0.0, ctx_dist, val_context)

    started = time.perf_counter()
    try:
        params = fresh_params(config, data)
        params, report = train(params, config, replace(tcfg, epochs=1), data)
        conditional = _conditional_nll(params, config, data, score, prior_samples, prior_seed)
        result.conditional_nll = conditional
        result.context_nll = context_nll
        result.joint_loss = conditional + context_nll
        result.val_curve = [result.joint_loss]
        # extra epochs feed the loss-curve plot only; the one-epoch value above is the score
        if curve_epochs > 1:
            optimizer = report.optimizer
            for epoch in range(1, curve_epochs):
                epoch_cfg = replace(tcfg, epochs=1, seed=derive_seed(tcfg.seed, f"curve-{epoch}"))
                params, report = train(params, config, epoch_cfg, data, optimizer=optimizer)
                optimizer = report.optimizer
                conditional = _conditional_nll(params, config, data, score, prior_samples, prior_seed)
                result.val_curve.append(conditional + context_nll)
    except NumericalDivergenceError as e:
        if result.joint_loss is None:
            result.failed = True
            result.error = e.message
        else:
            logger.warning("curve for %s stopped early: %s", candidate, e.message)
    result.train_seconds = time.perf_counter() - started
    return result


def select_context(
    data: EncodedTable,
    candidates: list[str] | None = None,
    model_overrides: dict | None = None,
    tcfg: TrainConfig | None = None,
    seed: int = 0,
    include_no_context: bool = True,
    workers: int = 1,
    curve_epochs: int = 0,
    score: str = PREDICTIVE,
    prior_samples: int = 64,
) -> SelectionReport:
    """
    Runs the one-epoch sweep and returns the candidates ordered by joint loss.

    data: EncodedTable
        split dataset with non-empty train and val splits
    candidates: list[str] | None
        columns to try, defaults to the schema's candidate list or every column
    model_overrides: dict | None
        ModelConfig fields applied to every candidate model
    tcfg: TrainConfig | None
        batch size and learning rate of the sweep; epochs is forced to 1 and
        the seed replaced by one derived from (seed, candidate)
    seed: int
        base seed of the sweep
    include_no_context: bool
        also evaluate the unconditioned model
    workers: int
        candidate models trained in parallel
    curve_epochs: int
        when > 1, keep training each candidate to this many epochs to record a
        validation curve for plotting
    score: str
        "predictive" scores the decoder on prior draws, "reconstruction" on
        the encoded validation rows
    prior_samples: int
        prior draws per row for the predictive score, shared by all candidates
    """
    if candidates is None:
        candidates = list(data.schema.candidate_context_columns) or data.schema.names
    candidates = list(dict.fromkeys(candidates))
    unknown = [c for c in candidates if c not in data.schema.names]
    if unknown:
        raise ValidationError(f"unknown candidate column(s) {unknown}")
    if not candidates and not include_no_context:
        raise ValidationError("no context candidates to evaluate")
    if not np.any(data.mask(Split.VAL)):
        raise ValidationError("context selection needs a non-empty validation split")
    if score not in SCORES:
        raise ValidationError(f"unknown selection score {score!r}, expected one of {list(SCORES)}")
    if prior_samples < 1:
        raise ValidationError("prior_samples must be positive")

    tcfg = tcfg if tcfg is not None else SWEEP_TRAIN
    overrides = {k: v for k, v in (model_overrides or {}).items() if k not in ("context_columns", "content_columns", "seed")}
    names = candidates + ([NO_CONTEXT] if include_no_context else [])
    prior_seed = derive_seed(seed, "prior")
    jobs = [
        (data, name, overrides, replace(tcfg, epochs=1, seed=derive_seed(seed, name)), curve_epochs, score, prior_samples, prior_seed)
        for name in names
    ]

    results = []
    quiet = progress_disabled(logger)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(evaluate_candidate, job): job[1] for job in jobs}
            with tqdm(total=len(futures), desc="Context candidates", disable=quiet) as pbar:
                for future in as_completed(futures):
                    result = future.result()
                    results.append(result)
                    pbar.set_postfix(candidate=result.candidate)
                    pbar.update(1)
    else:
        for job in tqdm(jobs, desc="Context candidates", disable=quiet):
            results.append(evaluate_candidate(job))

    for r in results:
        if r.failed:
            logger.warning("candidate %s diverged and is excluded: %s", r.candidate, r.error)
        else:
            logger.info(
                "candidate %-24s joint %.5f (conditional %.5f + context %.5f) in %.1fs",
                r.candidate,
                r.joint_loss,
                r.conditional_nll,
                r.context_nll,
                r.train_seconds,
            )

    results.sort(key=CandidateResult.sort_key)
    if all(r.failed for r in results):
        raise SelectionError("every context candidate diverged", hint="lower the sweep learning rate")
    report = SelectionReport(results=results, chosen=results[0].candidate, seed=seed, score=score)
    logger.info("selected context: %s", report.chosen)
    return report


def write_selection_report(report: SelectionReport, path: str | Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(report.to_dict(), sort_keys=False), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write selection report {path}: {e}") from e
