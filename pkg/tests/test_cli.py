import json
import os

import pytest

from demandnet.cli import main

SMALL_RUN = {
    "cell": "gru",
    "tau": 8,
    "hidden": 8,
    "layers": 1,
    "horizons": [6],
    "kappa": 4,
    "include_statics": False,
    "optimize_p": False,
    "effects_width": 8,
    "effects_train": {"optimizer": "sgd", "learning_rate": 0.05,
                      "epochs": 5, "batch_size": 128},
    "forecaster_train": {"optimizer": "adam", "learning_rate": 3e-3,
                         "epochs": 2, "batch_size": 64},
    "eval_methods": ["ar"],
    "eval_seeds": [0],
    "curve_points": 11,
    "synth": {"series_count": 4, "length": 90},
}


def _write_config(directory) -> str:
    path = os.path.join(directory, "run.json")
    with open(path, "w") as fh:
        json.dump(SMALL_RUN, fh)
    return path


def _run(*argv) -> int:
    return main(list(argv))


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """One tiny end-to-end run shared by the artifact checks."""
    root = tmp_path_factory.mktemp("cli")
    cfg = _write_config(root)
    out = os.path.join(root, "artifacts")
    for command in ("synth", "select-features", "train-effects", "effects-curve",
                    "train", "forecast", "evaluate"):
        assert _run(command, "--config", cfg, "--out", out) == 0, command
    return out


def test_pipeline_writes_every_artifact(pipeline_dir):
    expected = [
        "data.csv", "sidecar.csv", "manifest.json",
        "static_screening.csv",
        "effects.npz", "effects_training.json",
        "curve_policy.csv", "curve_policy_poly.json",
        "forecaster.npz", "forecaster_training.json",
        "forecast.csv",
        "evaluation.csv", "evaluation_denormalized.csv", "evaluation_table.txt",
    ]
    for name in expected:
        assert os.path.exists(os.path.join(pipeline_dir, name)), name


def test_every_command_drops_a_replay_config(pipeline_dir):
    for command in ("synth", "select-features", "train-effects", "effects-curve",
                    "train", "forecast", "evaluate"):
        path = os.path.join(pipeline_dir, f"config.{command}.json")
        with open(path) as fh:
            payload = json.load(fh)
        assert payload["command"] == command
        assert payload["config"]["tau"] == 8


def test_forecast_rows_are_one_indexed_steps(pipeline_dir):
    with open(os.path.join(pipeline_dir, "forecast.csv")) as fh:
        lines = fh.read().strip().split("\n")
    assert lines[0] == "series_id,step,mean,sd,var_vs_truth,p_used,kappa"
    assert len(lines) == 1 + 6
    steps = [int(row.split(",")[1]) for row in lines[1:]]
    assert steps == list(range(1, 7))
    for row in lines[1:]:
        fields = row.split(",")
        assert fields[0] == "S00"
        assert float(fields[2]) == float(fields[2])
        assert int(fields[6]) == 4


def test_evaluation_csv_header(pipeline_dir):
    with open(os.path.join(pipeline_dir, "evaluation.csv")) as fh:
        header = fh.readline().strip()
    assert header == "protocol,method,horizon,mae,rmse,sd,seeds"


def test_screening_report_lists_every_static(pipeline_dir):
    with open(os.path.join(pipeline_dir, "static_screening.csv")) as fh:
        lines = fh.read().strip().split("\n")
    assert lines[0] == "feature,correlation,retained,reason"
    assert len(lines) > 1


def test_curve_polynomial_sidecar_is_replayable(pipeline_dir):
    with open(os.path.join(pipeline_dir, "curve_policy_poly.json")) as fh:
        payload = json.load(fh)
    assert payload["feature"] == "policy"
    assert len(payload["coefficients_ascending"]) == payload["degree"] + 1


def test_synth_is_byte_deterministic(tmp_path):
    cfg = _write_config(tmp_path)
    a = os.path.join(tmp_path, "a")
    b = os.path.join(tmp_path, "b")
    assert _run("synth", "--config", cfg, "--out", a) == 0
    assert _run("synth", "--config", cfg, "--out", b) == 0
    for name in ("data.csv", "sidecar.csv"):
        with open(os.path.join(a, name), "rb") as fh:
            first = fh.read()
        with open(os.path.join(b, name), "rb") as fh:
            second = fh.read()
        assert first == second, name


def test_seed_flag_changes_the_data(tmp_path):
    cfg = _write_config(tmp_path)
    a = os.path.join(tmp_path, "a")
    b = os.path.join(tmp_path, "b")
    assert _run("synth", "--config", cfg, "--out", a, "--seed", "0") == 0
    assert _run("synth", "--config", cfg, "--out", b, "--seed", "1") == 0
    with open(os.path.join(a, "data.csv"), "rb") as fh:
        first = fh.read()
    with open(os.path.join(b, "data.csv"), "rb") as fh:
        second = fh.read()
    assert first != second


def test_ingest_accepts_generated_csvs(pipeline_dir, tmp_path, capsys):
    out = os.path.join(tmp_path, "ingested")
    code = _run(
        "ingest", "--out", out,
        "--set", f"data_csv={os.path.join(pipeline_dir, 'data.csv')}",
        "--set", f"sidecar_csv={os.path.join(pipeline_dir, 'sidecar.csv')}",
    )
    assert code == 0
    with open(os.path.join(out, "manifest.json")) as fh:
        manifest = json.load(fh)
    assert manifest["series_ids"] == ["S00", "S01", "S02", "S03"]


def test_ingest_without_data_csv_fails(tmp_path, capsys):
    assert _run("ingest", "--out", str(tmp_path)) == 2
    assert "data_csv" in capsys.readouterr().err


def test_missing_manifest_names_the_producing_command(tmp_path, capsys):
    assert _run("select-features", "--out", str(tmp_path / "empty")) == 2
    err = capsys.readouterr().err
    assert "demandnet synth" in err
    assert "demandnet ingest" in err


def test_forecast_requires_a_trained_checkpoint(tmp_path, capsys):
    assert _run("forecast", "--out", str(tmp_path / "empty")) == 2
    assert "demandnet train" in capsys.readouterr().err


def test_effects_curve_requires_effects_checkpoint(tmp_path, capsys):
    assert _run("effects-curve", "--out", str(tmp_path / "empty")) == 2
    assert "demandnet train-effects" in capsys.readouterr().err


def test_unknown_override_key_exits_with_usage_error(tmp_path, capsys):
    assert _run("synth", "--out", str(tmp_path), "--set", "kapa=10") == 2
    err = capsys.readouterr().err
    assert "unknown config key" in err
    assert "kappa" in err


def test_unknown_series_is_a_config_error(pipeline_dir, tmp_path, capsys):
    cfg = _write_config(tmp_path)
    code = _run("forecast", "--config", cfg, "--out", pipeline_dir,
                "--set", "forecast_series=NOPE")
    assert code == 2
    assert "NOPE" in capsys.readouterr().err
