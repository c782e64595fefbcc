import json

import pytest

from photon_detector_app import pipeline
from photon_detector_app.main import EXIT_DIAGNOSTIC, EXIT_INVALID, EXIT_OK, build_parser, main
from tests.conftest import tiny_experiment


@pytest.fixture
def config_path(write_config):
    return write_config(tiny_experiment())


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_simulate_then_metrics(tmp_path, config_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(config_path), "--out-dir", str(out), "--seed", "3"]) == EXIT_OK
    assert pipeline.load_manifest(out).base_seed == 3

    assert main(["metrics", "--run-dir", str(out), "--thresholds", "1.0, 2.0"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["y_thr"] in (1.0, 2.0)
    assert summary["base_seed"] == 3

    assert main(["roc", "--run-dir", str(out), "--threshold", "2.0"]) == EXIT_OK
    assert main(["histogram", "--run-dir", str(out)]) == EXIT_OK


def test_zero_trajectories_is_invalid(tmp_path, config_path, capsys):
    out = tmp_path / "run"
    code = main(["simulate", "--config", str(config_path), "--n-traj", "0", "--out-dir", str(out)])
    assert code == EXIT_INVALID
    assert not out.exists()
    assert "run.n_traj" in capsys.readouterr().err


def test_invalid_config_reports_fields(tmp_path, write_config, capsys):
    data = tiny_experiment()
    data["detector"]["eta_h"] = 1.5
    path = write_config(data, "bad.yaml")
    assert main(["simulate", "--config", str(path), "--out-dir", str(tmp_path / "x")]) == EXIT_INVALID
    assert "detector.ideal.eta_h" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == EXIT_INVALID


def test_metrics_on_empty_directory(tmp_path):
    assert main(["metrics", "--run-dir", str(tmp_path)]) == EXIT_INVALID


def test_unknown_figure(tmp_path):
    assert main(["reproduce", "--figure", "fig9", "--out-dir", str(tmp_path)]) == EXIT_INVALID


def test_reproduce_command_prints_written_files(tmp_path, small_presets, capsys):
    out = tmp_path / "fig4b"
    code = main(["reproduce", "--figure", "fig4b", "--n-traj", "2", "--seed", "5", "--out-dir", str(out)])
    assert code == EXIT_OK
    printed = capsys.readouterr().out.split()
    assert printed == [str(out / f"fig4b_ideal_n4_thr{y}.csv") for y in ("2.5", "3.8", "5")]
    assert pipeline.load_manifest(out / "ideal_n4").base_seed == 5


def test_truncation_breach_exits_with_diagnostic(tmp_path, write_config):
    path = write_config(tiny_experiment(truncation={"dim_A": 3, "dim_B": 2, "dim_C": 2}), "small.yaml")
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(path), "--out-dir", str(out), "--n-traj", "2"]) == EXIT_DIAGNOSTIC
    manifest = pipeline.load_manifest(out)
    assert manifest.status == "success"
    assert not manifest.truncation_ok
    assert any("dim_A" in note for note in manifest.notes)


def test_optimize_command(tmp_path, write_config, capsys):
    data = tiny_experiment(n_absorbers=2, deltas_in_kB_units=[0.3, -0.3])
    data["optimization"] = {"budget": 4, "restarts": 0, "surrogate_window_in_inverse_kB": 10.0}
    path = write_config(data, "opt.yaml")
    assert main(["optimize", "--config", str(path), "--out-dir", str(tmp_path / "opt")]) == EXIT_OK
    assert capsys.readouterr().out.startswith("INCOMPLETE")
    assert (tmp_path / "opt" / "optimization_best.json").exists()
