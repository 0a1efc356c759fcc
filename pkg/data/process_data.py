from argparse import ArgumentParser
from pathlib import Path
import logging

from common.logs import configure_logging, step_banner
from data.encode import FIT, EncodedTable, encode_table
from data.manifest import DatasetManifest, load_manifest
from data.schema import infer_schema
from data.splits import split_dataset
from data.utils import dataset_stats, format_stats, read_raw_table, save_encoded

logger = logging.getLogger(__name__)


def parse_args():
    """
    Parses a users command line arguments.
    """
    parser = ArgumentParser(
        description="Reads each manifest's CSV, bins and encodes its features, splits \
              it into anomaly-free train/val and a mixed test set and saves the result."
    )
    parser.add_argument("manifests", nargs="+", help="Dataset manifest YAML files")
    parser.add_argument("--out_dir", help="Where encoded datasets are written", default="runs/encoded")
    return parser.parse_args()


def prepare_dataset(manifest: DatasetManifest) -> EncodedTable:
    """
    Runs infer -> encode -> split for one manifest.

    manifest: DatasetManifest
        dataset declaration
    """
    step_banner(logger, 1, 3, f"Reading {manifest.path.name}")
    raw = read_raw_table(manifest.path)

    step_banner(logger, 2, 3, "Inferring schema and encoding")
    schema = infer_schema(
        raw,
        numeric_bins=manifest.numeric_bins,
        label_column=manifest.label_column,
        positive_label=manifest.positive_label,
        candidate_context_columns=None if manifest.context_candidates is None else list(manifest.context_candidates),
        drop_columns=list(manifest.drop_columns),
    )
    table = encode_table(raw, schema, vocab_source=FIT)

    step_banner(logger, 3, 3, "Splitting")
    return split_dataset(table, manifest.val_fraction, manifest.test_fraction, manifest.seed)


def ingest(manifest_path: str | Path, out_dir: str | Path) -> tuple[Path, dict]:
    """
    Encodes the manifest's dataset into `out_dir`/<name>.enc and returns the
    output path with its descriptive statistics.

    manifest_path: str | Path
        dataset manifest
    out_dir: str | Path
        output directory
    """
    manifest = load_manifest(manifest_path)
    table = prepare_dataset(manifest)
    output = Path(out_dir) / f"{manifest.name}.enc"
    save_encoded(table, output)
    return output, dataset_stats(manifest.name, table)


def main() -> None:
    args = parse_args()
    configure_logging()

    for idx, manifest_path in enumerate(args.manifests):
        logger.info("___________ Dataset %d / %d: %s ___________", idx + 1, len(args.manifests), manifest_path)
        _, stats = ingest(manifest_path, args.out_dir)
        print(format_stats(stats))


if __name__ == "__main__":
    main()
