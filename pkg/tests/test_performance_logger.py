import pytest

from photon_detector.utils.performance_logger import PerformanceTracker, get_tracker


def test_measure_accumulates():
    tracker = PerformanceTracker()
    for _ in range(2):
        with tracker.measure("simulate[signal]", items=5):
            pass
    assert tracker.items["simulate[signal]"] == 10
    assert tracker.timings["simulate[signal]"] >= 0.0
    assert "simulate[signal]" in tracker.get_summary()


def test_measure_records_on_error():
    tracker = PerformanceTracker()
    with pytest.raises(RuntimeError):
        with tracker.measure("metrics"):
            raise RuntimeError
    assert "metrics" in tracker.timings
    assert not tracker.start_times


def test_end_without_start_and_reset():
    tracker = PerformanceTracker()
    assert tracker.end("never") == 0.0
    assert tracker.get_summary() == "No timing data available"
    assert get_tracker() is get_tracker()
