import math

import numpy as np
import pytest
from pydantic import ValidationError

from photon_detector.errors import InvalidDecoherenceError, MisconfigurationError, ShapeMismatchError
from photon_detector.hilbert import HilbertSpace, expectation
from photon_detector.model import (
    DetectorConfig,
    DispersiveParams,
    Truncation,
    Variant,
    build_dispersive,
    build_ensemble,
    build_model,
    build_single_absorber,
    initial_state,
    max_rate,
)


def dispersive_cfg(n=2, T1=30.0, T2=30.0, **kw):
    two_pi = 2 * math.pi
    return DetectorConfig(
        n_absorbers=n,
        kappa_A=two_pi * 2.0,
        kappa_B=two_pi * 10.0,
        kappa_C=two_pi * 1.0,
        variant=Variant.DISPERSIVE,
        dispersive=DispersiveParams(chi=two_pi * 0.4, alpha=5.0, T1=T1, T2=T2),
        truncation=Truncation(dim_A=4),
        **kw,
    )


def test_deltas_default_to_resonance():
    cfg = DetectorConfig(n_absorbers=3, kappa_A=0.2, kappa_B=1.0, kappa_C=0.1)
    assert cfg.deltas == (0.0, 0.0, 0.0)
    assert cfg.dim_A == 15


def test_detuning_count_checked():
    with pytest.raises(ValidationError):
        DetectorConfig(n_absorbers=2, kappa_A=0.2, kappa_B=1.0, kappa_C=0.1, deltas=(0.1,))


def test_subsystem_order():
    cfg = DetectorConfig(n_absorbers=2, kappa_A=0.2, kappa_B=1.0, kappa_C=0.1, truncation=Truncation(dim_A=3))
    assert cfg.space().labels == ("C", "B1", "B2", "A")
    assert cfg.space().dims == (2, 2, 2, 3)


def test_builder_dispatch(single_cfg):
    assert build_model(single_cfg).config is single_cfg
    ens = single_cfg.model_copy(update={"n_absorbers": 2, "deltas": (0.5, -0.5)})
    assert len(build_model(ens).space.labels) == 4
    with pytest.raises(MisconfigurationError):
        build_single_absorber(ens)
    with pytest.raises(MisconfigurationError):
        build_ensemble(dispersive_cfg())


def test_single_absorber_channels(single_cfg):
    model = build_single_absorber(single_cfg)
    assert model.H.is_hermitian()
    assert [ch.name for ch in model.channels] == ["homodyne", "cascade_output"]
    assert model.monitored.name == "homodyne"
    assert model.measurement_rate == pytest.approx(math.sqrt(0.2))
    assert set(model.observables) >= {"Y_A", "X_A", "N_B", "n_A", "n_C", "n_bright", "n_B1"}


def test_qnd_commutation(single_cfg):
    """N_B commutes with the measurement coupling."""
    cfg = single_cfg.model_copy(update={"kappa_B": 0.0, "kappa_C": 0.0})
    model = build_model(cfg)
    assert model.H.commutator(model.observable("N_B")).norm() < 1e-12


def test_initial_states(single_cfg):
    model = build_model(single_cfg)
    psi = initial_state(single_cfg, model.space)
    assert expectation(psi, model.observable("n_C")).real == pytest.approx(1.0)
    vac_cfg = single_cfg.model_copy(update={"with_photon": False})
    vac = initial_state(vac_cfg, model.space)
    assert expectation(vac, model.observable("n_C")).real == pytest.approx(0.0)
    with pytest.raises(ShapeMismatchError):
        initial_state(single_cfg, HilbertSpace.of(("C", 2), ("A", 2)))


def test_top_level_mask(single_cfg):
    model = build_model(single_cfg)
    mask = model.top_level_mask
    assert mask.sum() == model.space.total_dim // single_cfg.dim_A


def test_dispersive_g_z_is_derived():
    cfg = dispersive_cfg()
    assert cfg.g_z == pytest.approx(2 * (2 * math.pi * 0.4) * 5.0)
    assert cfg.dim_A == 4


def test_dispersive_g_z_mismatch_rejected():
    with pytest.raises(ValidationError):
        dispersive_cfg(g_z=1.0)


def test_t2_above_two_t1_rejected():
    with pytest.raises(ValidationError):
        dispersive_cfg(T1=10.0, T2=30.0)


def test_negative_dephasing_reaches_builder():
    cfg = dispersive_cfg()
    bad = cfg.model_copy(update={"dispersive": DispersiveParams(chi=cfg.dispersive.chi, alpha=5.0, T1=10.0, T2=30.0)})
    with pytest.raises(InvalidDecoherenceError):
        build_dispersive(bad)


def test_dispersive_channels():
    model = build_dispersive(dispersive_cfg(n=2))
    names = [ch.name for ch in model.channels]
    assert names[:2] == ["homodyne", "cascade_output"]
    assert {"relax_B1", "relax_B2", "dephase_B1", "dephase_B2"} <= set(names)
    assert model.H.is_hermitian()


def test_infinite_coherence_drops_channels():
    model = build_dispersive(dispersive_cfg(n=1, T1=None, T2=None))
    assert [ch.name for ch in model.channels] == ["homodyne", "cascade_output"]


def test_t2_limit_has_no_dephasing():
    # T2 = 2 T1 leaves relaxation only
    model = build_dispersive(dispersive_cfg(n=1, T1=20.0, T2=40.0))
    names = [ch.name for ch in model.channels]
    assert "relax_B1" in names
    assert not any(n.startswith("dephase") for n in names)


def test_max_rate(single_cfg):
    assert max_rate(single_cfg) == pytest.approx(1.0)
    cfg = dispersive_cfg()
    assert max_rate(cfg) == pytest.approx(2 * math.pi * 10.0)


def test_cascade_is_unidirectional(single_cfg):
    """The source decays at kappa_C regardless of the absorber."""
    from photon_detector.solvers.master import lindblad_rhs

    model = build_model(single_cfg)
    rho = initial_state(single_cfg, model.space).to_density()
    drho = lindblad_rhs(model, rho)
    n_c = model.observable("n_C").to_dense()
    rate = np.trace(n_c @ drho).real
    assert rate == pytest.approx(-single_cfg.kappa_C)
