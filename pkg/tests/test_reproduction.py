"""Desk-scale reproductions of the headline numbers; run with `pytest -m slow` / `-m heavy`."""

import math

import pytest

from photon_detector.presets import get_preset
from photon_detector_app import pipeline
from photon_detector_app.models import ExperimentConfig


def _run(tmp_path, preset: str, n_traj: int, name: str | None = None, **run_overrides):
    data = get_preset(preset)
    data["run"].update(n_traj=n_traj, **run_overrides)
    config = ExperimentConfig.model_validate(data)
    out = tmp_path / (name or preset)
    manifest = pipeline.simulate(config, out_dir=out)
    assert not manifest.n_failed or not any(manifest.n_failed.values())
    run = pipeline.load_run(out)
    return run, pipeline.summarize_run(run)


@pytest.mark.slow
def test_single_absorber_operating_point(tmp_path):
    _, s = _run(tmp_path, "ideal_n1", 1000)
    assert s.eta == pytest.approx(0.79, abs=0.04)
    assert s.fidelity == pytest.approx(0.82, abs=0.04)
    assert 0.7e-3 <= s.gamma_dark <= 2.8e-3


@pytest.mark.slow
def test_fidelity_grows_with_absorbers(tmp_path):
    fid = []
    for preset in ("ideal_n1", "ideal_n2", "ideal_n3"):
        _, s = _run(tmp_path, preset, 500)
        fid.append(s)
    for lo, hi in zip(fid, fid[1:]):
        sigma = math.hypot(lo.fidelity_error, hi.fidelity_error)
        assert hi.fidelity - lo.fidelity > 3 * sigma


@pytest.mark.slow
def test_pure_and_mixed_solvers_agree_on_clicks(tmp_path):
    _, pure = _run(tmp_path, "ideal_n1", 500, name="pure", solver="pure")
    _, mixed = _run(tmp_path, "ideal_n1", 500, name="mixed", solver="mixed")
    sigma = math.hypot(pure.eta_error, mixed.eta_error)
    assert abs(pure.eta - mixed.eta) < 3 * sigma + 1e-12


@pytest.mark.slow
def test_halving_dt_keeps_efficiency(tmp_path):
    _, coarse = _run(tmp_path, "ideal_n1", 500, name="coarse")
    data = get_preset("ideal_n1")
    data["run"]["n_traj"] = 500
    data["grid"]["dt_in_inverse_kB"] /= 2
    data["grid"]["record_stride"] *= 2
    pipeline.simulate(ExperimentConfig.model_validate(data), out_dir=tmp_path / "fine")
    fine = pipeline.summarize_run(pipeline.load_run(tmp_path / "fine"), [coarse.y_thr])
    assert abs(fine.eta - coarse.eta) < 3 * math.hypot(fine.eta_error, coarse.eta_error)


@pytest.mark.heavy
def test_four_absorber_ensemble(tmp_path):
    run, s = _run(tmp_path, "ideal_n4", 300)
    assert s.eta == pytest.approx(0.92, abs=0.05)
    points = pipeline.roc_rows(run, run.config.thresholds())
    assert max(p.eta for p in points) >= 0.9
    gammas = [p.gamma_dark for p in points]
    assert gammas == sorted(gammas)


@pytest.mark.heavy
def test_dispersive_implementation(tmp_path):
    _, s = _run(tmp_path, "dispersive_n4", 300)
    assert s.tau_m == 2.0
    assert s.eta == pytest.approx(0.92, abs=0.05)
    assert s.fidelity == pytest.approx(0.96, abs=0.03)
