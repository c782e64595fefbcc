import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import trapezoid

from photon_detector.detection import (
    DetectionResult,
    MatchedFilter,
    build_filter,
    crossing_histogram,
    detect,
    detect_batch,
    filter_batch,
    filter_signal,
    first_crossing_times,
    photon_waveform,
    window_slice,
)
from photon_detector.errors import EmptyInputError, FilterConstructionError, ShapeMismatchError
from photon_detector.solvers.grid import ExpectationTraces

DT = 0.1


@pytest.fixture
def bump():
    t = np.arange(200) * DT
    return t * np.exp(-t / 3.0)


def test_filter_has_unit_norm(bump):
    f = build_filter(bump, DT)
    assert np.sum(f.samples**2) * f.dt == pytest.approx(1.0)
    assert len(f) == bump.size


def test_filter_from_traces(bump):
    traces = ExpectationTraces(times=np.arange(bump.size) * DT, values={"Y_A": bump})
    f = build_filter(traces)
    assert f.dt == pytest.approx(DT)
    assert_allclose(f.samples, build_filter(bump, DT).samples)


def test_zero_trace_rejected():
    with pytest.raises(FilterConstructionError):
        build_filter(np.zeros(10), DT)
    with pytest.raises(FilterConstructionError):
        MatchedFilter(np.ones(10), DT)


def test_impulse_response_is_the_filter(bump):
    f = build_filter(bump, DT)
    impulse = np.zeros(bump.size)
    impulse[0] = 1.0 / DT
    assert_allclose(filter_signal(impulse, f), f.samples, atol=1e-12)


def test_filter_is_causal(bump):
    f = build_filter(bump, DT)
    J = np.zeros(bump.size)
    J[50] = 1.0
    out = filter_signal(J, f)
    assert np.max(np.abs(out[:50])) < 1e-12


def test_batch_matches_single_rows(bump):
    f = build_filter(bump, DT)
    J = np.random.default_rng(0).standard_normal((3, bump.size))
    batch = filter_batch(J, f)
    for row, out in zip(J, batch):
        assert_allclose(filter_signal(row, f), out, atol=1e-12)


def test_filter_rejects_mismatched_dt(bump):
    f = build_filter(bump, DT)
    with pytest.raises(ShapeMismatchError):
        filter_signal(bump, f, dt=0.2)
    with pytest.raises(ShapeMismatchError):
        filter_signal(np.zeros((2, 2, 2)), f)


def test_filtered_white_noise_has_unit_variance(bump):
    f = build_filter(bump, DT)
    rng = np.random.default_rng(1)
    J = rng.standard_normal((4000, bump.size)) / np.sqrt(DT)
    out = filter_batch(J, f)
    assert out[:, -1].var() == pytest.approx(1.0, rel=0.1)


def test_settling_index(bump):
    f = build_filter(bump, DT)
    k = f.settling_index(0.99)
    cumulative = np.cumsum(f.samples**2) * DT
    assert cumulative[k] >= 0.99
    assert cumulative[k - 1] < 0.99


def test_detect_first_crossing():
    filtered = np.array([0.0, 1.0, 2.5, 3.5, 2.0, 4.0])
    res = detect(filtered, 3.0, DT)
    assert res.clicked
    assert res.tau_c == pytest.approx(3 * DT)
    assert res.max_filtered == pytest.approx(4.0)
    miss = detect(filtered, 5.0, DT)
    assert not miss.clicked and miss.tau_c is None


def test_detect_respects_window():
    filtered = np.array([0.0, 5.0, 0.0, 0.0, 4.0, 0.0])
    res = detect(filtered, 3.0, DT, window=(0.2, 0.5))
    assert res.tau_c == pytest.approx(0.4)
    with pytest.raises(EmptyInputError):
        window_slice(6, DT, (0.21, 0.29))
    with pytest.raises(ValueError):
        detect(filtered, 0.0, DT)


def test_detect_batch_matches_detect():
    rows = np.random.default_rng(2).normal(size=(5, 40)) * 2
    batch = detect_batch(rows, 2.5, DT)
    assert batch == [detect(r, 2.5, DT) for r in rows]


def test_first_crossing_times_inf_without_click():
    rows = np.array([[0.0, 4.0, 0.0], [0.0, 0.0, 0.0]])
    tau = first_crossing_times(rows, 3.0, DT)
    assert tau[0] == pytest.approx(DT)
    assert np.isinf(tau[1])


def test_histogram_unit_area():
    rng = np.random.default_rng(3)
    results = [DetectionResult(True, float(t), 5.0) for t in rng.exponential(10.0, 500)]
    results += [DetectionResult(False, None, 1.0)] * 20
    hist = crossing_histogram(results, bin_width=2.0)
    assert hist.n_clicks == 500
    assert hist.area() == pytest.approx(1.0)
    shifted = crossing_histogram(results, bin_width=2.0, offset=1.0)
    assert_allclose(shifted.centers, hist.centers - 1.0)
    assert_allclose(shifted.density, hist.density)


def test_histogram_keeps_clicks_on_off_grid_sample_times():
    results = [DetectionResult(True, k * 0.03, 5.0) for k in (260, 273, 310)]
    hist = crossing_histogram(results, bin_width=0.1)
    assert hist.n_clicks == 3
    assert hist.area() == pytest.approx(1.0, abs=1e-12)
    assert hist.density.sum() * 0.1 * 3 == pytest.approx(3.0)
    taus = np.array([r.tau_c for r in results])
    assert hist.edges[0] <= taus.min() and taus.max() < hist.edges[-1] + 1e-12


def test_histogram_area_exact_for_random_sample_spacings():
    rng = np.random.default_rng(11)
    for dt, bw in [(0.003, 0.03), (0.05, 2.0), (0.03, 0.1), (0.007, 0.21)]:
        idx = rng.integers(0, 50_000, size=200)
        hist = crossing_histogram([DetectionResult(True, float(i * dt), 5.0) for i in idx], bin_width=bw)
        assert hist.area() == pytest.approx(1.0, abs=1e-12)


def test_empty_histogram():
    hist = crossing_histogram([DetectionResult(False, None, 0.0)], bin_width=1.0)
    assert hist.empty
    assert hist.area() == 0.0
    with pytest.raises(ValueError):
        crossing_histogram([], bin_width=0.0)


def test_photon_waveform_is_a_density():
    t = np.linspace(0, 200, 20001)
    w = photon_waveform(t, 0.1)
    assert trapezoid(w, t) == pytest.approx(1.0, rel=1e-3)
    assert photon_waveform(np.array([-1.0]), 0.1)[0] == 0.0
