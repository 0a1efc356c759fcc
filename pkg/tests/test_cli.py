from pathlib import Path

import pytest
import yaml

from cli.main import main
from cli.run_config import OUT_DIR_ENV, RunConfig, load_run_config
from common.errors import ValidationError
from complexity.metrics import METRICS
from selection.context import NO_CONTEXT, PREDICTIVE, SWEEP_TRAIN

REPO = Path(__file__).resolve().parents[1]

RUN = {
    "model": {"embed_dim": 4, "encoder_hidden": [8], "latent_dim": 3, "decoder_hidden": [8]},
    "train": {"epochs": 2, "batch_size": 32},
    "selection": {"batch_size": 32},
    "seeds": [0, 1],
}


@pytest.fixture
def workspace(tmp_path):
    """Synthetic planted dataset with its manifest and a quick run config."""
    assert main(["-q", "synth", "--rows", "300", "--seed", "2", "--anomaly-rate", "0.1", "--out-dir", str(tmp_path)]) == 0
    manifest = tmp_path / "synthetic_planted.yaml"
    config = tmp_path / "run.yaml"
    config.write_text(yaml.safe_dump({**RUN, "manifest": manifest.name}), encoding="utf-8")
    return tmp_path, manifest, config


def test_ingest_writes_encoded_file_and_stats(workspace, capsys):
    tmp_path, manifest, _ = workspace
    out = tmp_path / "encoded"
    assert main(["ingest", "--manifest", str(manifest), "--out-dir", str(out)]) == 0
    first = (out / "synthetic_planted.enc").read_bytes()
    assert "synthetic_planted" in capsys.readouterr().out
    assert main(["-q", "ingest", "--manifest", str(manifest), "--out-dir", str(out)]) == 0
    assert (out / "synthetic_planted.enc").read_bytes() == first


def test_select_context_with_one_candidate(workspace):
    tmp_path, _, config = workspace
    argv = ["-q", "select-context", "--config", str(config), "--candidates", "region", "--out-dir", str(tmp_path / "out")]
    assert main(argv) == 0
    path = tmp_path / "out" / "synthetic_planted" / "selection.yaml"
    report = yaml.safe_load(path.read_text())
    assert sorted(c["candidate"] for c in report["candidates"]) == sorted(["region", NO_CONTEXT])
    first = path.read_bytes()
    assert main(argv) == 0
    assert path.read_bytes() == first


def test_evaluate_without_context(workspace):
    tmp_path, _, config = workspace
    out = tmp_path / "out"
    argv = ["-q", "evaluate", "--config", str(config), "--context", "none", "--out-dir", str(out)]
    assert main(argv) == 0
    summary_path = out / "synthetic_planted" / "evaluation.yaml"
    summary = yaml.safe_load(summary_path.read_text())
    assert summary["context"] == NO_CONTEXT
    assert summary["variance"] is None
    assert [s["seed"] for s in summary["per_seed"]] == [0, 1]
    for entry in summary["per_seed"]:
        assert entry["cwae_aucroc"] == entry["wae_aucroc"]
    first = summary_path.read_bytes()
    assert main(argv) == 0
    assert summary_path.read_bytes() == first


def test_evaluate_records_variance_given_context(workspace):
    tmp_path, _, config = workspace
    out = tmp_path / "out"
    argv = ["-q", "evaluate", "--config", str(config), "--context", "region", "--seeds", "0", "--out-dir", str(out)]
    assert main(argv) == 0
    variance = yaml.safe_load((out / "synthetic_planted" / "evaluation.yaml").read_text())["variance"]
    assert variance["total"] == pytest.approx(variance["within"] + variance["between"], rel=1e-9)
    # region fixes the content modes, so it explains a visible share of the spread
    assert 0.0 < variance["within_ratio"] < 1.0
    assert variance["between"] > 0.0


def test_evaluate_auto_runs_selection_first(workspace):
    tmp_path, _, config = workspace
    out = tmp_path / "out"
    assert main(["-q", "evaluate", "--config", str(config), "--seeds", "0", "--out-dir", str(out)]) == 0
    run_dir = out / "synthetic_planted"
    summary = yaml.safe_load((run_dir / "evaluation.yaml").read_text())
    selection = yaml.safe_load((run_dir / "selection.yaml").read_text())
    assert summary["selection"] == selection["chosen"]
    assert (run_dir / "thresholds.csv").read_text().startswith("series,x,y\n")
    assert any(run_dir.joinpath("checkpoints").iterdir())

    assert main(["-q", "report", str(run_dir / "evaluation.yaml"), "--out-dir", str(out)]) == 0
    assert (out / "results.csv").read_text().splitlines()[1].startswith("synthetic_planted,")
    assert (out / "auc_delta.csv").exists()


def test_train_writes_checkpoint(workspace):
    tmp_path, _, config = workspace
    out = tmp_path / "out"
    assert main(["-q", "train", "--config", str(config), "--context", "region", "--seed", "4", "--out-dir", str(out)]) == 0
    assert (out / "synthetic_planted" / "checkpoints" / "cwae_region_seed4.ckpt").stat().st_size > 0


def test_missing_label_column_exits_with_validation_code(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\nx,y\n", encoding="utf-8")
    (tmp_path / "bad.yaml").write_text(yaml.safe_dump({"name": "bad", "path": "bad.csv", "label_column": "label"}))
    assert main(["-q", "ingest", "--manifest", str(tmp_path / "bad.yaml"), "--out-dir", str(tmp_path)]) == 2


def test_unknown_context_exits_with_validation_code(workspace):
    tmp_path, _, config = workspace
    argv = ["-q", "train", "--config", str(config), "--context", "nope", "--out-dir", str(tmp_path)]
    assert main(argv) == 2


def test_complexity_from_raw_scores(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text(
        "dataset," + ",".join(METRICS) + "\nbank,0.210,2.015,0.343,1.000\ncmc,0.038,1.579,0.348,0.000\n"
        "spotify,0.500,46.264,0.442,0.123\n",
        encoding="utf-8",
    )
    assert main(["-q", "complexity", "--raw-scores", str(raw), "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "complexity.csv").read_text().splitlines()
    assert lines[0].startswith("dataset,k_vcc_raw,k_vcc_scaled,k_vcc_rank")
    assert len(lines) == 4


def test_complexity_needs_two_datasets(workspace):
    tmp_path, manifest, _ = workspace
    assert main(["-q", "complexity", "--manifest", str(manifest), "--out-dir", str(tmp_path)]) == 2


def test_run_config_rules(tmp_path, monkeypatch):
    with pytest.raises(ValidationError):
        RunConfig(seeds=())
    with pytest.raises(ValidationError):
        RunConfig(model={"seed": 3})
    with pytest.raises(ValidationError):
        RunConfig(selection={"epochs": 5})
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
    assert RunConfig().resolved_out_dir() == tmp_path / "env"
    assert RunConfig().resolved_out_dir(str(tmp_path / "flag")) == tmp_path / "flag"
    assert RunConfig(selection={"learning_rate": 0.01}).selection_train_config().epochs == 1
    with pytest.raises(ValidationError):
        RunConfig(selection={"score": "elbo"})
    with pytest.raises(ValidationError):
        RunConfig(selection={"prior_samples": 0})
    sweep = RunConfig(train={"batch_size": 512}).selection_train_config()
    assert (sweep.batch_size, sweep.learning_rate) == (SWEEP_TRAIN.batch_size, SWEEP_TRAIN.learning_rate)
    assert RunConfig(selection={"batch_size": 8}).selection_train_config().batch_size == 8


def test_default_config_loads():
    config = load_run_config(REPO / "configs" / "default.yaml")
    assert config.seeds == (0, 1, 2, 3, 4)
    assert Path(config.manifest).name == "cmc.yaml"
    assert config.selection_score == PREDICTIVE
    assert config.selection_train_config() == SWEEP_TRAIN


@pytest.mark.slow
def test_contextual_model_beats_baseline_on_sf(tmp_path):
    name = "sf"
    manifest = REPO / "manifests" / f"{name}.yaml"
    csv = REPO / "datasets" / f"{name}.csv"
    if not csv.exists():
        pytest.skip(f"{csv} not available")
    assert main(["-q", "evaluate", "--manifest", str(manifest), "--out-dir", str(tmp_path)]) == 0
    summary = yaml.safe_load((tmp_path / name / "evaluation.yaml").read_text())
    assert summary["cwae_mean"] > summary["wae_mean"]
