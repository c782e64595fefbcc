"""Performance logging utility for tracking simulation stage times."""

import logging
import time
from contextlib import contextmanager
from typing import Dict, Optional

logger = logging.getLogger(__name__)


class PerformanceTracker:
    """Track wall-clock time (and optional item counts) per labeled stage."""

    def __init__(self):
        self.timings: Dict[str, float] = {}
        self.items: Dict[str, int] = {}
        self.start_times: Dict[str, float] = {}

    def start(self, label: str) -> None:
        """Start timing for a labeled stage."""
        self.start_times[label] = time.perf_counter()
        logger.info("[%s] started", label)

    def end(self, label: str, items: int | None = None) -> float:
        """End timing for a labeled stage and return its duration."""
        if label not in self.start_times:
            logger.warning("No start time found for label: %s", label)
            return 0.0

        duration = time.perf_counter() - self.start_times.pop(label)
        self.timings[label] = self.timings.get(label, 0.0) + duration
        if items is not None:
            self.items[label] = self.items.get(label, 0) + int(items)
            rate = items / duration if duration > 0 else float("inf")
            logger.info("[%s] completed in %.2fs (%d items, %.2f/s)", label, duration, items, rate)
        else:
            logger.info("[%s] completed in %.2fs", label, duration)
        return duration

    @contextmanager
    def measure(self, label: str, items: int | None = None):
        """Context manager for measuring a stage."""
        self.start(label)
        try:
            yield
        finally:
            self.end(label, items)

    def get_summary(self) -> str:
        """Formatted table of all timings, slowest first."""
        if not self.timings:
            return "No timing data available"

        lines = ["\n" + "=" * 72, "PERFORMANCE SUMMARY", "=" * 72]
        total_time = sum(self.timings.values())

        for label, duration in sorted(self.timings.items(), key=lambda x: x[1], reverse=True):
            percentage = (duration / total_time * 100) if total_time > 0 else 0
            extra = ""
            if label in self.items and duration > 0:
                extra = f"  {self.items[label] / duration:8.2f} items/s"
            lines.append(f"  {label:40s} {duration:8.2f}s ({percentage:5.1f}%){extra}")

        lines.append("-" * 72)
        lines.append(f"  {'TOTAL':40s} {total_time:8.2f}s (100.0%)")
        lines.append("=" * 72 + "\n")
        return "\n".join(lines)

    def reset(self) -> None:
        self.timings.clear()
        self.items.clear()
        self.start_times.clear()


# Global tracker instance
_global_tracker: Optional[PerformanceTracker] = None


def get_tracker() -> PerformanceTracker:
    """Get or create the global performance tracker."""
    global _global_tracker
    if _global_tracker is None:
        _global_tracker = PerformanceTracker()
    return _global_tracker


def log_performance_summary() -> None:
    logger.info(get_tracker().get_summary())
