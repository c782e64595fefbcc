import math

import numpy as np
import pytest
import yaml

from photon_detector.model import DetectorConfig, Truncation
from photon_detector_app.config import get_settings


@pytest.fixture
def single_cfg() -> DetectorConfig:
    """N=1 ideal detector small enough for dense algebra."""
    return DetectorConfig(
        n_absorbers=1,
        kappa_A=0.2,
        kappa_B=1.0,
        kappa_C=0.1,
        g_z=0.3,
        truncation=Truncation(dim_A=6),
    )


@pytest.fixture
def cascade_oracle():
    """Closed-form single-excitation populations of the g_z = 0 cascade.

    <c^dag c> = exp(-kC t); the absorber amplitude obeys
    db/dt = -kB/2 b - sqrt(kB kC) c.
    """

    def populations(t, kappa_B: float, kappa_C: float):
        t = np.asarray(t, dtype=float)
        a, b = kappa_C / 2, kappa_B / 2
        n_c = np.exp(-kappa_C * t)
        if math.isclose(a, b):
            beta = -math.sqrt(kappa_B * kappa_C) * t * np.exp(-a * t)
        else:
            beta = -math.sqrt(kappa_B * kappa_C) * (np.exp(-a * t) - np.exp(-b * t)) / (b - a)
        return n_c, beta**2

    return populations


def tiny_experiment(**detector) -> dict:
    """Ideal N=1 experiment mapping that runs in seconds."""
    block = {
        "regime": "ideal",
        "n_absorbers": 1,
        "kappa_A_in_kB_units": 0.2,
        "kappa_C_in_kB_units": 0.1,
        "g_z_in_kB_units": 0.3,
        "deltas_in_kB_units": [0.0],
        "eta_h": 1.0,
        "truncation": {"dim_A": 12, "dim_B": 2, "dim_C": 2},
    }
    block.update(detector)
    return {
        "detector": block,
        "grid": {"t_end_in_inverse_kB": 20.0, "dt_in_inverse_kB": 0.01, "record_stride": 5},
        "run": {"n_traj": 6, "base_seed": 7, "solver": "auto"},
        "detection": {"threshold_grid": {"start": 1.0, "stop": 3.0, "step": 0.5}},
    }


@pytest.fixture
def experiment_dict() -> dict:
    return tiny_experiment()


@pytest.fixture
def write_config(tmp_path):
    def write(data: dict, name: str = "experiment.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
        return path

    return write


@pytest.fixture
def settings_env(monkeypatch):
    """Apply PHOTON_DETECTOR_* variables and rebuild the cached Settings."""

    def apply(**values):
        for key, value in values.items():
            monkeypatch.setenv(f"PHOTON_DETECTOR_{key.upper()}", str(value))
        get_settings.cache_clear()
        return get_settings()

    yield apply
    get_settings.cache_clear()


SMALL_GRIDS = {
    "ideal": {"t_end_in_inverse_kB": 50.0, "dt_in_inverse_kB": 0.02, "record_stride": 5},
    "dispersive": {"t_end_us": 1.0, "dt_us": 0.0003, "record_stride": 10},
}


@pytest.fixture
def small_presets(monkeypatch, settings_env):
    """Figure recipes run against shortened, coarsely truncated copies of the presets."""
    from photon_detector import presets
    from photon_detector_app import pipeline

    settings_env(truncation_tolerance=1.0)

    def shrunk(name: str) -> dict:
        data = presets.get_preset(name)
        regime = data["detector"]["regime"]
        data["detector"]["truncation"]["dim_A"] = 4 if regime == "ideal" else 3
        data["grid"] = dict(SMALL_GRIDS[regime])
        if regime == "dispersive":
            data["detection"]["tau_m_us"] = 1.0
        return data

    monkeypatch.setattr(pipeline, "get_preset", shrunk)
