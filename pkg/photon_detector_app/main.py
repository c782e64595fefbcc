"""
Command-line front-end.

    python -m photon_detector_app.main simulate --config cfg.yaml --n-traj 500
    python -m photon_detector_app.main metrics --run-dir runs/ideal_n1
    python -m photon_detector_app.main reproduce --figure fig3a --n-traj 200

Exit codes: 0 success, 1 invalid input or missing artifacts, 2 numerical
diagnostics (truncation breach, aborted trajectories).
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Sequence

from dotenv import load_dotenv
from pydantic import ValidationError

from photon_detector.errors import PhotonDetectorError
from photon_detector.presets import get_preset, list_figures, list_presets
from photon_detector.utils.performance_logger import log_performance_summary
from photon_detector_app import pipeline
from photon_detector_app.config import get_settings
from photon_detector_app.models import ExperimentConfig, load_experiment_config

load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DIAGNOSTIC = 2


def _load_config(ref: str) -> ExperimentConfig:
    """A YAML path, or the name of a built-in preset."""
    path = Path(ref)
    if path.exists() or ref not in list_presets():
        return load_experiment_config(path)
    return ExperimentConfig.model_validate(get_preset(ref))


def _thresholds(args: argparse.Namespace) -> List[float] | None:
    if getattr(args, "thresholds", None):
        return [float(v) for v in args.thresholds.split(",") if v.strip()]
    if getattr(args, "threshold", None) is not None:
        return [args.threshold]
    return None


def _config_with_overrides(args: argparse.Namespace) -> ExperimentConfig:
    config = _load_config(args.config)
    return config.with_overrides(base_seed=args.seed, n_traj=args.n_traj, directory=args.out_dir)


def cmd_simulate(args: argparse.Namespace) -> int:
    manifest = pipeline.simulate(_config_with_overrides(args), max_workers=args.threads, command="simulate")
    if manifest.diagnostic_failure:
        for note in manifest.notes:
            logger.error(note)
        logger.error("Run finished with diagnostics: n_failed=%s", manifest.n_failed)
        return EXIT_DIAGNOSTIC
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    summary = pipeline.metrics(args.run_dir, _thresholds(args))
    print(summary.model_dump_json(indent=2))
    return EXIT_DIAGNOSTIC if pipeline.load_manifest(args.run_dir).diagnostic_failure else EXIT_OK


def cmd_roc(args: argparse.Namespace) -> int:
    points = pipeline.roc(args.run_dir, _thresholds(args))
    logger.info("Wrote %d ROC points to %s", len(points), Path(args.run_dir) / pipeline.ROC)
    return EXIT_OK


def cmd_histogram(args: argparse.Namespace) -> int:
    hist = pipeline.histogram(args.run_dir, args.threshold)
    logger.info("Histogram: %d clicks in %d bins", hist.n_clicks, len(hist.density))
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    if args.out_dir is not None:
        config = config.with_overrides(directory=args.out_dir)
    result = pipeline.run_optimization(config)
    print(f"{result.status.value} best_score={result.best_score} deltas={list(result.best_deltas)}")
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    outcome = pipeline.reproduce(
        args.figure,
        out_dir=args.out_dir,
        n_traj=args.n_traj,
        base_seed=args.seed,
        max_workers=args.threads,
        with_dispersive=args.with_dispersive,
    )
    for name in outcome.files:
        print(outcome.out_dir / name)
    return EXIT_DIAGNOSTIC if outcome.diagnostic_failure else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photon-detector", description="Continuous itinerant-photon detector simulations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run signal and vacuum trajectory ensembles")
    p.add_argument("--config", required=True, help="experiment YAML file or preset name")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-traj", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="worker processes")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_simulate)

    for name, func, help_text in (
        ("metrics", cmd_metrics, "efficiency, dark counts, fidelity, ROC and histogram of a run"),
        ("roc", cmd_roc, "ROC curve of a run"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--run-dir", required=True)
        p.add_argument("--threshold", type=float, default=None)
        p.add_argument("--thresholds", default=None, help="comma-separated threshold grid")
        p.set_defaults(func=func)

    p = sub.add_parser("histogram", help="click-time histogram of a run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--threshold", type=float, default=None, help="defaults to the fidelity-optimal threshold")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("optimize", help="detuning search from the config's optimization block")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("reproduce", help="built-in figure recipes as CSV bundles")
    p.add_argument("--figure", required=True, help=f"one of {', '.join(list_figures())}")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-traj", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--with-dispersive", action="store_true", help="fig3a: add the dispersive N=4 point")
    p.set_defaults(func=cmd_reproduce)
    return parser


def _report_validation(e: ValidationError) -> None:
    print(f"invalid configuration ({e.error_count()} error(s)):", file=sys.stderr)
    for err in e.errors():
        loc = ".".join(str(part) for part in err["loc"]) or "<root>"
        print(f"  {loc}: {err['msg']}", file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    settings = get_settings()
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except ValidationError as e:
        _report_validation(e)
        return EXIT_INVALID
    except (PhotonDetectorError, FileNotFoundError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_INVALID
    if settings.environment != "prod":
        log_performance_summary()
    return code


if __name__ == "__main__":
    sys.exit(main())
