from dataclasses import dataclass, field
from pathlib import Path
import logging

import yaml

from common.errors import StorageError, ValidationError
from data.splits import DEFAULT_TEST_FRACTION, DEFAULT_VAL_FRACTION

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetManifest:
    """
    Declares how one dataset is read, labelled and split.

    name: str
        short dataset name used for output files (eg. cmc)
    path: Path
        CSV location, resolved against the manifest's directory
    label_column: str
        anomaly label column
    positive_label: str
        raw literal that marks an anomaly
    context_candidates: tuple[str, ...] | None
        restricts context selection; None means every feature column
    """

    name: str
    path: Path
    label_column: str
    positive_label: str = "1"
    context_candidates: tuple[str, ...] | None = None
    numeric_bins: int = 10
    val_fraction: float = DEFAULT_VAL_FRACTION
    test_fraction: float = DEFAULT_TEST_FRACTION
    seed: int = 0
    drop_columns: tuple[str, ...] = field(default=())
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "path": str(self.path),
            "label_column": self.label_column,
            "positive_label": self.positive_label,
            "context_candidates": None if self.context_candidates is None else list(self.context_candidates),
            "numeric_bins": self.numeric_bins,
            "val_fraction": self.val_fraction,
            "test_fraction": self.test_fraction,
            "seed": self.seed,
            "drop_columns": list(self.drop_columns),
            "notes": self.notes,
        }


REQUIRED_KEYS = ("name", "path", "label_column")


def load_manifest(path: str | Path) -> DatasetManifest:
    """
    Reads a YAML dataset manifest.

    path: str | Path
        manifest file location
    """
    path = Path(path)
    try:
        payload = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise StorageError(f"cannot read manifest {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ValidationError(f"manifest {path} is not valid YAML: {e}") from e

    if not isinstance(payload, dict):
        raise ValidationError(f"manifest {path} must be a mapping")
    missing = [k for k in REQUIRED_KEYS if not payload.get(k)]
    if missing:
        raise ValidationError(f"manifest {path} is missing {missing}")

    candidates = payload.get("context_candidates")
    try:
        manifest = DatasetManifest(
            name=str(payload["name"]),
            path=(path.parent / payload["path"]).resolve(),
            label_column=str(payload["label_column"]),
            positive_label=str(payload.get("positive_label", "1")),
            context_candidates=None if candidates is None else tuple(str(c) for c in candidates),
            numeric_bins=int(payload.get("numeric_bins", 10)),
            val_fraction=float(payload.get("val_fraction", DEFAULT_VAL_FRACTION)),
            test_fraction=float(payload.get("test_fraction", DEFAULT_TEST_FRACTION)),
            seed=int(payload.get("seed", 0)),
            drop_columns=tuple(str(c) for c in payload.get("drop_columns") or ()),
            notes=str(payload.get("notes", "")),
        )
    except (TypeError, ValueError) as e:
        raise ValidationError(f"manifest {path}: {e}") from e
    logger.debug("loaded manifest %s -> %s", manifest.name, manifest.path)
    return manifest


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Writes `manifest` as YAML with its CSV path made relative to `path`'s directory when possible."""
    path = Path(path)
    payload = manifest.to_dict()
    try:
        payload["path"] = str(Path(manifest.path).resolve().relative_to(path.parent.resolve()))
    except ValueError:
        pass
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(payload, sort_keys=False), encoding="utf-8")
