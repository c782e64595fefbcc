"""
Run-directory file formats.

Currents go to .npy (trajectory x sample, float64) because the format has no
timestamps and re-runs stay byte-identical; CSV mirrors are optional.
Floats in CSV are written with %.17g so they round-trip exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np

from photon_detector.detection import CrossingHistogram
from photon_detector.errors import MissingArtifactError
from photon_detector.solvers.grid import ExpectationTraces, TrajectoryRecord

logger = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(obj: Any) -> str:
    """sha256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def sha256_file(path: str | Path, block: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(block), b""):
            h.update(chunk)
    return h.hexdigest()


def inventory(directory: str | Path, names: Iterable[str]) -> Dict[str, str]:
    directory = Path(directory)
    return {name: sha256_file(directory / name) for name in sorted(names) if (directory / name).exists()}


def require(path: str | Path) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"missing artifact: {path}")
    return path


def write_json(path: str | Path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")


def read_json(path: str | Path) -> Any:
    with open(require(path), "r", encoding="utf-8") as f:
        return json.load(f)


class CurrentStore:
    """Preallocated .npy file filled chunk by chunk."""

    def __init__(self, path: str | Path, n_traj: int, n_samples: int):
        self.path = Path(path)
        self._array = np.lib.format.open_memmap(
            self.path, mode="w+", dtype=np.float64, shape=(n_traj, n_samples)
        )

    def write(self, records: Sequence[TrajectoryRecord]) -> None:
        for r in records:
            # failed trajectories stay NaN so the row index keeps matching the seed index
            self._array[r.index] = r.J if r.ok else np.nan

    def close(self) -> None:
        self._array.flush()
        del self._array


def load_currents(path: str | Path, drop_failed: bool = True) -> np.ndarray:
    data = np.load(require(path))
    if drop_failed:
        data = data[~np.isnan(data).any(axis=1)]
    return data


def write_currents_csv(path: str | Path, currents: np.ndarray, times: np.ndarray) -> None:
    """Concatenated stream: one row per (trajectory, sample)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["trajectory", "t", "J"])
        for k, row in enumerate(np.atleast_2d(currents)):
            w.writerows([k, _fmt(t), _fmt(j)] for t, j in zip(times, row))


def write_traces_csv(path: str | Path, traces: ExpectationTraces) -> None:
    names = traces.names
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t"] + names)
        for i, t in enumerate(traces.times):
            w.writerow([_fmt(t)] + [_fmt(traces.values[n][i]) for n in names])


def read_traces_csv(path: str | Path) -> ExpectationTraces:
    with open(require(path), "r", newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    table = np.array(body, dtype=float).reshape(len(body), len(header))
    return ExpectationTraces(
        times=table[:, 0],
        values={name: table[:, i] for i, name in enumerate(header) if i > 0},
    )


def write_failures_csv(path: str | Path, failures: Sequence[Mapping[str, Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["ensemble", "trajectory", "seed", "error"])
        for row in failures:
            w.writerow([row["ensemble"], row["trajectory"], row["seed"], row["error"]])


def write_rows_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Generic table writer; floats get the exact format."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def read_rows_csv(path: str | Path) -> List[Dict[str, str]]:
    with open(require(path), "r", newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_histogram_csv(
    path: str | Path,
    hist: CrossingHistogram,
    waveform: np.ndarray | None = None,
    label: str | None = None,
) -> None:
    header = (["series"] if label is not None else []) + ["bin_center", "density"]
    if waveform is not None:
        header.append("photon_waveform")
    rows = []
    for i, (c, d) in enumerate(zip(hist.centers, hist.density)):
        row = ([label] if label is not None else []) + [float(c), float(d)]
        if waveform is not None:
            row.append(float(waveform[i]))
        rows.append(row)
    write_rows_csv(path, header, rows)
    if hist.empty:
        logger.warning("Wrote empty histogram to %s (no clicks)", path)
