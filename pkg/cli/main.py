from argparse import ArgumentParser
from pathlib import Path
import logging
import sys

import pandas as pd

from cli.run_config import RunConfig, RunSummary, load_run_config, read_summary, write_yaml
from common.errors import CtxadError, ValidationError
from common.logs import configure_logging, step_banner
from complexity.metrics import compute_metrics
from complexity.ranking import read_raw_scores, scale_and_rank, write_complexity_csv
from data.encode import EncodedTable, decode_value
from data.manifest import DatasetManifest, load_manifest, write_manifest
from data.process_data import ingest, prepare_dataset
from data.schema import schema_fingerprint
from data.synthetic import LABEL_COLUMN, independent_frame, planted_candidates, planted_context_frame
from data.utils import format_stats, load_encoded
from evaluation.pipeline import evaluate_context, mean_std, train_final
from evaluation.plots import auc_delta_rows, emit_plot_data, loss_curve_rows, threshold_rows
from evaluation.variance import variance_decomposition
from model.optim import AdamState
from selection.context import NO_CONTEXT, derive_seed, select_context, write_selection_report
from training.checkpoint import Checkpoint, save_checkpoint

logger = logging.getLogger(__name__)


def parse_args(argv: list[str] | None = None):
    """
    Parses a users command line arguments.
    """
    parser = ArgumentParser(
        prog="ctxad",
        description="Context-conditioned anomaly detection for categorical tables: ingest datasets, \
              select a context column, train and evaluate models and rank dataset complexity.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable)")
    parser.add_argument("-q", "--quiet", action="count", default=0, help="Warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    def dataset_args(p):
        p.add_argument("--manifest", help="Dataset manifest YAML (defaults to the run config's)")
        p.add_argument("--data", help="Encoded dataset written by ingest, used instead of re-encoding the manifest")
        p.add_argument("--config", help="Run configuration YAML")
        p.add_argument("--out-dir", help="Output directory (default: config, $CTXAD_OUT_DIR, runs/)")

    p = sub.add_parser("ingest", help="Encode and split a dataset, print its statistics")
    p.add_argument("--manifest", required=True, action="append", help="Dataset manifest YAML (repeatable)")
    p.add_argument("--out-dir", help="Output directory")

    p = sub.add_parser("synth", help="Write a synthetic CSV with its manifest")
    p.add_argument("--kind", choices=["planted", "independent"], default="planted")
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--anomaly-rate", type=float, default=0.05, help="Planted kind only")
    p.add_argument("--name", help="Dataset name (default synthetic_<kind>)")
    p.add_argument("--out-dir", help="Output directory")

    p = sub.add_parser("select-context", help="One-epoch context sweep")
    dataset_args(p)
    p.add_argument("--seed", type=int, help="Sweep seed (default: first configured seed)")
    p.add_argument("--candidates", nargs="+", help="Restrict the candidate columns")
    p.add_argument("--workers", type=int, help="Candidates trained in parallel")

    p = sub.add_parser("train", help="Train one final model and save its checkpoint")
    dataset_args(p)
    p.add_argument("--context", default="none", help="Context column, 'auto' or 'none'")
    p.add_argument("--seed", type=int, help="Training seed (default: first configured seed)")

    p = sub.add_parser("evaluate", help="Train CWAE and WAE per seed and report grid AUCROC")
    dataset_args(p)
    p.add_argument("--context", default="auto", help="Context column, 'auto' or 'none'")
    p.add_argument("--seeds", type=int, nargs="+", help="Seeds (default: configured seeds)")
    p.add_argument("--sweep-best", action="store_true", help="Also evaluate every candidate context fully")
    p.add_argument("--workers", type=int, help="Seeds evaluated in parallel")

    p = sub.add_parser("complexity", help="Complexity metrics, scaled and ranked across datasets")
    p.add_argument("--data", nargs="+", default=[], help="Encoded datasets")
    p.add_argument("--manifest", nargs="+", default=[], help="Dataset manifests")
    p.add_argument("--raw-scores", help="CSV of raw metric scores used instead of computing them")
    p.add_argument("--out-dir", help="Output directory")

    p = sub.add_parser("report", help="Collect evaluation summaries into one table")
    p.add_argument("summaries", nargs="+", help="evaluation.yaml files")
    p.add_argument("--complexity", help="Complexity CSV to join avg_scaled from")
    p.add_argument("--out-dir", help="Output directory")
    return parser.parse_args(argv)


def _load_dataset(args, config: RunConfig) -> tuple[str, EncodedTable]:
    if getattr(args, "data", None):
        path = Path(args.data)
        return path.stem, load_encoded(path)
    manifest_path = args.manifest or config.manifest
    if not manifest_path:
        raise ValidationError("no dataset given", hint="pass --data, --manifest or set manifest in the run config")
    manifest = load_manifest(manifest_path)
    return manifest.name, prepare_dataset(manifest)


def _resolve_context(data: EncodedTable, choice: str, config: RunConfig, seed: int, out_dir: Path):
    """Returns (context column or None, selection report or None)."""
    if choice == "none":
        return None, None
    if choice != "auto":
        if choice not in data.schema.names:
            raise ValidationError(f"unknown context column {choice!r}")
        return choice, None
    report = _run_selection(data, config, seed, None, config.workers, out_dir)
    return report.chosen_column, report


def _run_selection(data: EncodedTable, config: RunConfig, seed: int, candidates, workers: int, out_dir: Path):
    report = select_context(
        data,
        candidates=candidates,
        model_overrides=config.model,
        tcfg=config.selection_train_config(),
        seed=seed,
        workers=workers,
        curve_epochs=config.curve_epochs,
        score=config.selection_score,
        prior_samples=config.prior_samples,
    )
    write_selection_report(report, out_dir / "selection.yaml")
    emit_plot_data([loss_curve_rows(report.curves())], out_dir / "selection_curves.csv")
    return report


def cmd_ingest(args) -> None:
    out_dir = RunConfig().resolved_out_dir(args.out_dir)
    for idx, manifest_path in enumerate(args.manifest):
        logger.info("___________ Dataset %d / %d: %s ___________", idx + 1, len(args.manifest), manifest_path)
        _, stats = ingest(manifest_path, out_dir)
        print(format_stats(stats))


def cmd_synth(args) -> None:
    out_dir = RunConfig().resolved_out_dir(args.out_dir)
    name = args.name or f"synthetic_{args.kind}"
    if args.kind == "planted":
        frame = planted_context_frame(n_rows=args.rows, seed=args.seed, anomaly_rate=args.anomaly_rate)
        candidates = tuple(planted_candidates())
    else:
        frame = independent_frame(n_rows=args.rows, seed=args.seed)
        candidates = None
    csv_path = out_dir / f"{name}.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(csv_path, index=False, lineterminator="\n")
    manifest = DatasetManifest(
        name=name,
        path=csv_path,
        label_column=LABEL_COLUMN,
        context_candidates=candidates,
        seed=args.seed,
        notes=f"synthetic {args.kind} table, {args.rows} rows, seed {args.seed}",
    )
    write_manifest(manifest, out_dir / f"{name}.yaml")
    logger.info("synthetic dataset written to %s", csv_path)


def cmd_select_context(args) -> None:
    config = load_run_config(args.config)
    name, data = _load_dataset(args, config)
    out_dir = config.resolved_out_dir(args.out_dir) / name
    seed = args.seed if args.seed is not None else config.seeds[0]
    workers = args.workers or config.workers
    report = _run_selection(data, config, seed, args.candidates, workers, out_dir)
    print(f"{name}: selected context {report.chosen}")


def cmd_train(args) -> None:
    config = load_run_config(args.config)
    name, data = _load_dataset(args, config)
    out_dir = config.resolved_out_dir(args.out_dir) / name
    seed = args.seed if args.seed is not None else config.seeds[0]
    context, _ = _resolve_context(data, args.context, config, seed, out_dir)

    tcfg = config.train_config(derive_seed(seed, "final"))
    params, model_config, report = train_final(data, context, config.model, tcfg)
    tag = context or NO_CONTEXT
    checkpoint = Checkpoint(
        config=model_config,
        fingerprint=schema_fingerprint(data.schema),
        params=params,
        optimizer=report.optimizer if report.optimizer is not None else AdamState(),
        seed=tcfg.seed,
        epoch=len(report.train_total),
    )
    save_checkpoint(out_dir / "checkpoints" / f"cwae_{tag}_seed{seed}.ckpt", checkpoint)
    write_yaml({"dataset": name, "context": tag, "seed": seed, **report.to_dict()}, out_dir / f"train_{tag}_seed{seed}.yaml")
    emit_plot_data([loss_curve_rows({tag: report.val_recon}), loss_curve_rows({tag: report.train_total}, prefix="train_loss")],
                   out_dir / f"train_curves_{tag}_seed{seed}.csv")


def cmd_evaluate(args) -> None:
    config = load_run_config(args.config)
    name, data = _load_dataset(args, config)
    out_dir = config.resolved_out_dir(args.out_dir) / name
    seeds = list(args.seeds) if args.seeds else list(config.seeds)
    workers = args.workers or config.workers

    step_banner(logger, 1, 3, "Choosing the context")
    context, selection = _resolve_context(data, args.context, config, seeds[0], out_dir)
    variance = None if context is None else variance_decomposition(data, context).summary()

    step_banner(logger, 2, 3, f"Training and scoring over {len(seeds)} seeds")
    results = evaluate_context(data, context, config.model, config.train, seeds, workers, out_dir / "checkpoints")
    cwae_mean, cwae_std = mean_std([r.cwae.roc.aucroc for r in results])
    wae_mean, wae_std = mean_std([r.wae.roc.aucroc for r in results])

    best_context, best_mean = None, None
    if args.sweep_best:
        step_banner(logger, 3, 3, "Evaluating every candidate context")
        sweep = {}
        for candidate in data.schema.candidate_context_columns:
            sweep_results = evaluate_context(data, candidate, config.model, config.train, seeds, workers)
            sweep[candidate] = mean_std([r.cwae.roc.aucroc for r in sweep_results])[0]
        sweep[NO_CONTEXT] = wae_mean
        best_context = min(sweep, key=lambda c: (-sweep[c], c == NO_CONTEXT, c))
        best_mean = sweep[best_context]
    else:
        step_banner(logger, 3, 3, "Writing reports")

    first = results[0].cwae.thresholds
    decode = None
    if context is not None:
        spec = data.schema.column(context)
        decode = lambda index: decode_value(spec, index)  # noqa: E731
    paths = {
        "thresholds": emit_plot_data([threshold_rows(first, decode)], out_dir / "thresholds.csv").name,
        "curves": emit_plot_data(
            [loss_curve_rows({f"cwae_seed{r.seed}": r.cwae.report.val_recon for r in results})]
            + [loss_curve_rows({f"wae_seed{r.seed}": r.wae.report.val_recon for r in results})],
            out_dir / "loss_curves.csv",
        ).name,
    }
    if selection is not None:
        paths["selection"] = "selection.yaml"

    summary = RunSummary(
        dataset=name,
        context=context or NO_CONTEXT,
        per_seed=[r.to_dict() for r in results],
        cwae_mean=cwae_mean,
        cwae_std=cwae_std,
        wae_mean=wae_mean,
        wae_std=wae_std,
        selection=None if selection is None else selection.chosen,
        best_context=best_context,
        best_mean=best_mean,
        variance=variance,
        paths=paths,
    )
    write_yaml(summary.to_dict(), out_dir / "evaluation.yaml")
    print(f"{name}: CWAE({summary.context}) {cwae_mean:.4f} +- {cwae_std:.4f}, WAE {wae_mean:.4f} +- {wae_std:.4f}")


def cmd_complexity(args) -> None:
    out_dir = RunConfig().resolved_out_dir(args.out_dir)
    if args.raw_scores:
        raw = read_raw_scores(args.raw_scores)
    else:
        rows = {}
        for path in args.data:
            rows[Path(path).stem] = compute_metrics(load_encoded(path))
        for path in args.manifest:
            manifest = load_manifest(path)
            rows[manifest.name] = compute_metrics(prepare_dataset(manifest))
        raw = pd.DataFrame.from_dict(rows, orient="index")
    report = scale_and_rank(raw)
    write_complexity_csv(report, out_dir / "complexity.csv")
    print(report[["avg_scaled", "rank"]].to_string(float_format=lambda v: f"{v:.3f}"))


def cmd_report(args) -> None:
    out_dir = RunConfig().resolved_out_dir(args.out_dir)
    summaries = sorted((read_summary(p) for p in args.summaries), key=lambda s: s.dataset)
    complexity = None
    if args.complexity:
        complexity = pd.read_csv(args.complexity, index_col="dataset")["avg_scaled"]
    rows = []
    for s in summaries:
        avg_scaled = s.complexity_avg_scaled
        if complexity is not None and s.dataset in complexity.index:
            avg_scaled = float(complexity[s.dataset])
        rows.append(
            {
                "dataset": s.dataset,
                "context": s.context,
                "cwae_mean": s.cwae_mean,
                "cwae_std": s.cwae_std,
                "wae_mean": s.wae_mean,
                "wae_std": s.wae_std,
                "best_context": s.best_context,
                "best_mean": s.best_mean,
                "avg_scaled": avg_scaled,
            }
        )
    table = pd.DataFrame(rows, columns=["dataset", "context", "cwae_mean", "cwae_std", "wae_mean", "wae_std", "best_context", "best_mean", "avg_scaled"])
    out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_dir / "results.csv", index=False, lineterminator="\n", float_format="%.6f")
    emit_plot_data([auc_delta_rows({s.dataset: s.cwae_mean - s.wae_mean for s in summaries})], out_dir / "auc_delta.csv")
    print(table.to_string(index=False))


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "select-context": cmd_select_context,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "complexity": cmd_complexity,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.verbose - args.quiet)
    try:
        COMMANDS[args.command](args)
    except CtxadError as e:
        logger.error("%s", e.message)
        if e.hint:
            logger.error("hint: %s", e.hint)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
