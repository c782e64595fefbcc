"""
Run orchestration behind the CLI subcommands.

A run directory holds:
  manifest.json          written first (status "running"), finalized at the end
  config.resolved.json   the validated experiment config
  me_traces.csv          unconditional master-equation traces (filter source)
  signal_J.npy / vacuum_J.npy
  signal_currents.csv / vacuum_currents.csv   only with output.write_csv
  failures.csv           only when a trajectory aborted
and, after `metrics`: metrics.json, roc.csv, histogram.csv.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np

from photon_detector import __version__
from photon_detector.artifacts import (
    CurrentStore,
    config_hash,
    inventory,
    load_currents,
    read_json,
    read_traces_csv,
    require,
    write_currents_csv,
    write_failures_csv,
    write_histogram_csv,
    write_json,
    write_rows_csv,
    write_traces_csv,
)
from photon_detector.detection import (
    CrossingHistogram,
    MatchedFilter,
    build_filter,
    crossing_histogram,
    detect_batch,
    filter_batch,
    photon_waveform,
)
from photon_detector.errors import EmptyInputError, MisconfigurationError
from photon_detector.metrics import WINDOW_STEP_FACTOR, MetricsSummary, RocPoint, roc_curve, summarize
from photon_detector.model import build_model, initial_state
from photon_detector.optimizer import OptimizationResult, optimize
from photon_detector.presets import get_figure, get_preset
from photon_detector.solvers.ensemble import EnsembleJob, iter_ensemble_chunks
from photon_detector.solvers.master import DEFAULT_OBSERVABLES, solve_master
from photon_detector.utils.performance_logger import get_tracker
from photon_detector_app.config import get_settings
from photon_detector_app.models import ExperimentConfig, FigureRow, RunManifest, ThresholdGrid

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
RESOLVED_CONFIG = "config.resolved.json"
ME_TRACES = "me_traces.csv"
FAILURES = "failures.csv"
METRICS = "metrics.json"
ROC = "roc.csv"
HISTOGRAM = "histogram.csv"
OPT_LOG = "optimization_log.csv"
OPT_BEST = "optimization_best.json"

# signal and vacuum ensembles draw from disjoint seed families
ENSEMBLE_SEED_OFFSET = {"signal": 0, "vacuum": 1}

ROC_HEADER = ["y_thr", "gamma_dark", "gamma_dark_error", "eta", "eta_error", "method", "is_upper_bound"]
FIGURE_HEADER = list(FigureRow.model_fields)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _current_name(ensemble: str) -> str:
    return f"{ensemble}_J.npy"


def _resolve_dir(config: ExperimentConfig, out_dir: str | Path | None, default_name: str) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    if config.output.directory:
        return Path(config.output.directory)
    return Path(get_settings().output_root) / default_name


def physics_only(resolved: Dict[str, Any]) -> Dict[str, Any]:
    """Resolved config minus the output block; this is what config_hash covers."""
    return {k: v for k, v in resolved.items() if k != "output"}


def _start_manifest(run_dir: Path, resolved: Dict[str, Any], base_seed: int, command: str) -> RunManifest:
    manifest = RunManifest(
        config_hash=config_hash(physics_only(resolved)),
        base_seed=base_seed,
        tool_version=__version__,
        command=command,
        started_at=_now(),
    )
    write_json(run_dir / MANIFEST, manifest.model_dump(mode="json"))
    return manifest


def _finish_manifest(run_dir: Path, manifest: RunManifest, status: str, **update: Any) -> RunManifest:
    names = [p.name for p in run_dir.iterdir() if p.is_file() and p.name != MANIFEST]
    manifest = manifest.model_copy(
        update={"status": status, "finished_at": _now(), "inventory": inventory(run_dir, names), **update}
    )
    write_json(run_dir / MANIFEST, manifest.model_dump(mode="json"))
    return manifest


def load_manifest(run_dir: str | Path) -> RunManifest:
    return RunManifest.model_validate(read_json(Path(run_dir) / MANIFEST))


# --- simulate ---------------------------------------------------------------


@dataclass
class EnsembleOutcome:
    n_traj: int
    n_failed: int
    max_top_level_pop: float
    failures: List[Dict[str, Any]]


def _run_ensemble_to_disk(
    config: ExperimentConfig,
    ensemble: str,
    run_dir: Path,
    max_workers: int,
) -> EnsembleOutcome:
    settings = get_settings()
    cfg = config.detector_config(with_photon=(ensemble == "signal"))
    model = build_model(cfg)
    grid = config.time_grid()
    n_traj = config.run.n_traj
    job = EnsembleJob(
        model=model,
        grid=grid,
        base_seed=config.run.base_seed + ENSEMBLE_SEED_OFFSET[ensemble],
        solver=config.run.solver,
        state0=initial_state(cfg, model.space),
        state_tolerance=settings.state_tolerance,
        validity_check_stride=settings.validity_check_stride,
        truncation_tolerance=settings.truncation_tolerance,
    )

    store = CurrentStore(run_dir / _current_name(ensemble), n_traj, grid.n_records)
    failures: List[Dict[str, Any]] = []
    max_top = 0.0
    try:
        with get_tracker().measure(f"simulate[{ensemble}]", items=n_traj):
            for chunk in iter_ensemble_chunks(job, n_traj, max_workers, settings.batch_chunk_size):
                store.write(chunk)
                for r in chunk:
                    if r.ok:
                        max_top = max(max_top, r.max_top_level_pop)
                    else:
                        failures.append({"ensemble": ensemble, "trajectory": r.index, "seed": r.seed, "error": r.error})
    finally:
        store.close()

    if config.output.write_csv:
        currents = np.load(run_dir / _current_name(ensemble))
        write_currents_csv(run_dir / f"{ensemble}_currents.csv", currents, grid.times)
    if failures:
        logger.warning("%s ensemble: %d of %d trajectories failed", ensemble, len(failures), n_traj)
    return EnsembleOutcome(n_traj=n_traj, n_failed=len(failures), max_top_level_pop=max_top, failures=failures)


def simulate(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    max_workers: int | None = None,
    command: str = "simulate",
) -> RunManifest:
    """Run the configured signal/vacuum ensembles and write a complete run directory."""
    settings = get_settings()
    workers = settings.max_workers if max_workers is None else max_workers
    run_dir = _resolve_dir(config, out_dir, f"run_{config.run.base_seed}")
    run_dir.mkdir(parents=True, exist_ok=True)

    resolved = config.model_dump(mode="json")
    # 1) manifest 먼저 기록 (status=running)
    manifest = _start_manifest(run_dir, resolved, config.run.base_seed, command)
    logger.info("Run %s -> %s (config %s)", command, run_dir, manifest.config_hash[:12])

    try:
        write_json(run_dir / RESOLVED_CONFIG, resolved)

        # 2) unconditional traces for the matched filter
        cfg = config.detector_config(with_photon=True)
        model = build_model(cfg)
        with get_tracker().measure("simulate[master]"):
            traces = solve_master(
                model,
                initial_state(cfg, model.space),
                config.time_grid(),
                DEFAULT_OBSERVABLES,
                truncation_tolerance=settings.truncation_tolerance,
            )
        write_traces_csv(run_dir / ME_TRACES, traces)

        # 3) trajectory ensembles, streamed to .npy chunk by chunk
        ensembles = [name for name, on in (("signal", config.run.signal), ("vacuum", config.run.vacuum)) if on]
        outcomes = {name: _run_ensemble_to_disk(config, name, run_dir, workers) for name in ensembles}
    except Exception:
        _finish_manifest(run_dir, manifest, "error")
        raise

    failures = [f for o in outcomes.values() for f in o.failures]
    if failures:
        write_failures_csv(run_dir / FAILURES, failures)

    max_top = max([traces.max_top_level_pop] + [o.max_top_level_pop for o in outcomes.values()])
    truncation_ok = max_top < settings.truncation_tolerance
    notes = []
    if not truncation_ok:
        notes.append(
            f"top Fock level of A reached {max_top:.3g} (tolerance {settings.truncation_tolerance:.1g}); increase dim_A"
        )
    manifest = _finish_manifest(
        run_dir,
        manifest,
        "success",
        n_traj={name: o.n_traj for name, o in outcomes.items()},
        n_failed={name: o.n_failed for name, o in outcomes.items()},
        max_top_level_pop=max_top,
        truncation_ok=truncation_ok,
        notes=notes,
    )
    logger.info("Run finished: %s", run_dir)
    return manifest


# --- analysis of a stored run ----------------------------------------------


@dataclass
class FilteredRun:
    """Stored currents of a run, passed through its matched filter."""

    run_dir: Path
    config: ExperimentConfig
    manifest: RunManifest
    matched_filter: MatchedFilter
    signal: np.ndarray
    vacuum: np.ndarray

    @property
    def dt(self) -> float:
        return self.matched_filter.dt

    @property
    def stationary_from(self) -> int:
        return self.matched_filter.settling_index()


def load_run(run_dir: str | Path) -> FilteredRun:
    run_dir = Path(run_dir)
    for name in (MANIFEST, RESOLVED_CONFIG, ME_TRACES, _current_name("signal"), _current_name("vacuum")):
        require(run_dir / name)
    config = ExperimentConfig.model_validate(read_json(run_dir / RESOLVED_CONFIG))
    manifest = load_manifest(run_dir)
    f = build_filter(read_traces_csv(run_dir / ME_TRACES), name="Y_A")
    sig = load_currents(run_dir / _current_name("signal"))
    vac = load_currents(run_dir / _current_name("vacuum"))
    if sig.shape[0] == 0 or vac.shape[0] == 0:
        raise EmptyInputError(f"{run_dir}: no successful signal or vacuum trajectories")
    return FilteredRun(
        run_dir=run_dir,
        config=config,
        manifest=manifest,
        matched_filter=f,
        signal=filter_batch(sig, f),
        vacuum=filter_batch(vac, f),
    )


def summarize_run(run: FilteredRun, thresholds: Sequence[float] | None = None) -> MetricsSummary:
    return summarize(
        run.signal,
        run.vacuum,
        list(thresholds) if thresholds else run.config.thresholds(),
        run.dt,
        tau_m=run.config.tau_m(),
        stationary_from=run.stationary_from,
        window_step=WINDOW_STEP_FACTOR * run.config.time_grid().dt,
        config_hash=run.manifest.config_hash,
        base_seed=run.manifest.base_seed,
    )


def roc_rows(run: FilteredRun, thresholds: Sequence[float]) -> List[RocPoint]:
    # full record for both axes, as for Gamma_dark in summarize
    return roc_curve(run.signal, run.vacuum, thresholds, run.dt, stationary_from=run.stationary_from)


def _roc_table(points: Sequence[RocPoint]) -> List[List[Any]]:
    return [
        [p.y_thr, p.gamma_dark, p.gamma_dark_error, p.eta, p.eta_error, p.method.value, p.is_upper_bound]
        for p in points
    ]


def run_histogram(run: FilteredRun, y_thr: float, tau_m: float | None = None) -> CrossingHistogram:
    window = (0.0, tau_m) if tau_m is not None else None
    results = detect_batch(run.signal, y_thr, run.dt, window)
    return crossing_histogram(results, run.config.histogram_bin(), run.config.histogram_offset())


def _waveform(run: FilteredRun, hist: CrossingHistogram) -> np.ndarray:
    return photon_waveform(hist.centers, run.config.detector_config().kappa_C)


def _add_to_inventory(run: FilteredRun, names: Sequence[str]) -> None:
    manifest = load_manifest(run.run_dir)
    manifest.inventory.update(inventory(run.run_dir, names))
    write_json(run.run_dir / MANIFEST, manifest.model_dump(mode="json"))


def metrics(run_dir: str | Path, thresholds: Sequence[float] | None = None) -> MetricsSummary:
    """metrics.json + roc.csv + histogram.csv (at the chosen operating point)."""
    run = load_run(run_dir)
    grid = list(thresholds) if thresholds else run.config.thresholds()
    with get_tracker().measure("metrics"):
        summary = summarize_run(run, grid)
        points = roc_rows(run, grid)
        hist = run_histogram(run, summary.y_thr, summary.tau_m)

    write_json(run.run_dir / METRICS, summary.model_dump(mode="json"))
    write_rows_csv(run.run_dir / ROC, ROC_HEADER, _roc_table(points))
    write_histogram_csv(run.run_dir / HISTOGRAM, hist, _waveform(run, hist))
    _add_to_inventory(run, [METRICS, ROC, HISTOGRAM])
    return summary


def roc(run_dir: str | Path, thresholds: Sequence[float] | None = None) -> List[RocPoint]:
    run = load_run(run_dir)
    points = roc_rows(run, list(thresholds) if thresholds else run.config.thresholds())
    write_rows_csv(run.run_dir / ROC, ROC_HEADER, _roc_table(points))
    _add_to_inventory(run, [ROC])
    return points


def histogram(run_dir: str | Path, threshold: float | None = None) -> CrossingHistogram:
    """Click-time histogram at `threshold`, or at the fidelity-optimal one when omitted."""
    run = load_run(run_dir)
    if threshold is None:
        summary = summarize_run(run)
        threshold, tau_m = summary.y_thr, summary.tau_m
    else:
        tau_m = run.config.tau_m()
    hist = run_histogram(run, threshold, tau_m)
    write_histogram_csv(run.run_dir / HISTOGRAM, hist, _waveform(run, hist))
    _add_to_inventory(run, [HISTOGRAM])
    return hist


# --- optimize ---------------------------------------------------------------


def run_optimization(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    command: str = "optimize",
) -> OptimizationResult:
    problem = config.optimization_problem()
    run_dir = _resolve_dir(config, out_dir, f"optimize_{problem.search_seed}")
    run_dir.mkdir(parents=True, exist_ok=True)
    resolved = config.model_dump(mode="json")
    manifest = _start_manifest(run_dir, resolved, problem.search_seed, command)
    try:
        write_json(run_dir / RESOLVED_CONFIG, resolved)
        with get_tracker().measure("optimize", items=problem.budget):
            result = optimize(problem)
    except Exception:
        _finish_manifest(run_dir, manifest, "error")
        raise

    n = result.best_config.n_absorbers
    header = ["iteration", "restart"] + [f"delta_{i + 1}" for i in range(n)] + ["g_z", "score"]
    write_rows_csv(
        run_dir / OPT_LOG,
        header,
        ([e.iteration, e.restart, *e.deltas, e.g_z, e.score] for e in result.evaluations),
    )
    write_json(
        run_dir / OPT_BEST,
        {
            "status": result.status.value,
            "objective": result.objective.value,
            "best_score": result.best_score,
            "deltas": list(result.best_deltas),
            "g_z": result.best_config.g_z,
            "n_evaluations": len(result.evaluations),
        },
    )
    _finish_manifest(run_dir, manifest, "success", notes=[f"optimizer status {result.status.value}"])
    logger.info("Optimization %s: best score %s at deltas=%s", result.status.value, result.best_score, result.best_deltas)
    return result


# --- reproduce --------------------------------------------------------------


@dataclass
class FigureOutcome:
    figure: str
    out_dir: Path
    files: List[str]
    runs: Dict[str, RunManifest]

    @property
    def diagnostic_failure(self) -> bool:
        return any(m.diagnostic_failure for m in self.runs.values())


def _preset_config(name: str, n_traj: int | None, base_seed: int | None, run_dir: Path, eta_h: float | None = None) -> ExperimentConfig:
    config = ExperimentConfig.model_validate(get_preset(name))
    return config.with_overrides(base_seed=base_seed, n_traj=n_traj, directory=str(run_dir), eta_h=eta_h)


def _figure_row(preset: str, config: ExperimentConfig, s: MetricsSummary) -> FigureRow:
    return FigureRow(
        preset=preset,
        n_absorbers=config.detector.n_absorbers,
        eta_h=config.detector.eta_h,
        eta=s.eta,
        eta_error=s.eta_error,
        gamma_dark=s.gamma_dark,
        gamma_dark_error=s.gamma_dark_error,
        tau_m=s.tau_m,
        fidelity=s.fidelity,
        fidelity_error=s.fidelity_error,
        y_thr=s.y_thr,
        method_dark=s.method_dark.value,
    )


def reproduce(
    figure: str,
    out_dir: str | Path | None = None,
    n_traj: int | None = None,
    base_seed: int | None = None,
    max_workers: int | None = None,
    with_dispersive: bool = False,
) -> FigureOutcome:
    """Run the built-in parameter sets of a figure recipe and write plottable CSVs."""
    recipe = get_figure(figure)
    kind = recipe["kind"]
    root = Path(out_dir) if out_dir is not None else Path(get_settings().output_root) / figure
    root.mkdir(parents=True, exist_ok=True)
    runs: Dict[str, RunManifest] = {}
    files: List[str] = []
    cache: Dict[str, FilteredRun] = {}

    def run_preset(name: str, eta_h: float | None = None) -> FilteredRun:
        key = name if eta_h is None else f"{name}_etah{eta_h:g}"
        if key not in cache:
            config = _preset_config(name, n_traj, base_seed, root / key, eta_h)
            runs[key] = simulate(config, max_workers=max_workers, command=f"reproduce {figure}")
            cache[key] = load_run(root / key)
        return cache[key]

    presets: List[str] = list(recipe.get("presets", []))
    logger.info("Reproducing %s (%s) over %s", figure, kind, presets)

    if kind == "fidelity_vs_n":
        if with_dispersive and recipe.get("dispersive_preset"):
            presets.append(recipe["dispersive_preset"])
        rows = []
        for name in presets:
            run = run_preset(name)
            rows.append(_figure_row(name, run.config, summarize_run(run)).as_row())
        files.append(f"{figure}.csv")
        write_rows_csv(root / files[-1], FIGURE_HEADER, rows)

    elif kind == "roc":
        thresholds = ThresholdGrid(**recipe["threshold_grid"]).values() if "threshold_grid" in recipe else None
        rows = []
        for name in presets:
            run = run_preset(name)
            best = summarize_run(run)
            points = roc_rows(run, thresholds or run.config.thresholds())
            rows += [[name, *row, p.y_thr == best.y_thr] for p, row in zip(points, _roc_table(points))]
        files.append(f"{figure}.csv")
        write_rows_csv(root / files[-1], ["preset"] + ROC_HEADER + ["operating_point"], rows)

    elif kind in ("histograms_vs_n", "histograms_vs_threshold"):
        for name in presets:
            run = run_preset(name)
            best = summarize_run(run)
            thresholds = recipe.get("thresholds") or [best.y_thr]
            for y in thresholds:
                hist = run_histogram(run, float(y), best.tau_m)
                files.append(f"{figure}_{name}_thr{float(y):g}.csv")
                write_histogram_csv(root / files[-1], hist, _waveform(run, hist), label=f"{name}@{float(y):g}")

    elif kind == "efficiency_vs_eta_h":
        rows = []
        for name in presets:
            for eta_h in recipe["eta_h"]:
                run = run_preset(name, float(eta_h))
                rows.append(_figure_row(name, run.config, summarize_run(run)).as_row())
        files.append(f"{figure}.csv")
        write_rows_csv(root / files[-1], FIGURE_HEADER, rows)

    else:
        raise MisconfigurationError(f"figure {figure!r} has unknown kind {kind!r}")

    write_json(
        root / MANIFEST,
        {
            "figure": figure,
            "kind": kind,
            "tool_version": __version__,
            "runs": {k: m.config_hash for k, m in runs.items()},
            "inventory": inventory(root, files),
        },
    )
    return FigureOutcome(figure=figure, out_dir=root, files=files, runs=runs)
