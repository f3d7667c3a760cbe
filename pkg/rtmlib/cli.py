"""
Command-line harness: simulate synthetic data, run an inversion, sweep one
experimental parameter, and plot the results.

Every command exits with 0 on success. On failure a one-line JSON error report is
written to stderr and the exit code is 1.
"""

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Final, Optional

import rtmlib
from rtmlib import artifacts, experiment, plotting
from rtmlib.config import RunConfig, config_digest, load_run_config, with_overrides
from rtmlib.errors import ConfigError, RtmError
from rtmlib.impl.pool import ChunkPool
from rtmlib.serializers import record_serializer

logger = logging.getLogger(__name__)

LOG_FORMAT: Final = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@dataclass(frozen=True)
class ErrorReport:
    error: str
    message: str
    # Dotted config key and YAML line, for configuration errors.
    path: str = ""
    line: Optional[int] = None
    source: str = ""


_ERROR_SERIALIZER: Final = record_serializer(ErrorReport)


def error_report(error: Exception) -> ErrorReport:
    if isinstance(error, ConfigError):
        return ErrorReport(
            error=type(error).__name__,
            message=error.reason,
            path=error.dotted_path,
            line=error.line,
            source=error.source,
        )
    return ErrorReport(error=type(error).__name__, message=str(error))


def _configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level.upper())
    logging.captureWarnings(True)


def _load_config(args: argparse.Namespace) -> RunConfig:
    return with_overrides(
        load_run_config(args.config), seed=args.seed, workers=args.workers
    )


def _manifest(
    command: str,
    config: RunConfig,
    truth_source: str,
    out_dir: Path,
    files: Sequence[Path],
    forward_evaluations: Sequence[int] = (),
) -> Path:
    manifest = artifacts.RunManifest(
        command=command,
        version=rtmlib.__version__,
        config=config,
        config_sha256=config_digest(config),
        truth_source=truth_source,
        files=tuple(sorted(str(f.relative_to(out_dir)) for f in files)),
        forward_evaluations=tuple(forward_evaluations),
        created_at=artifacts.now_iso(),
    )
    return artifacts.write_manifest(out_dir / artifacts.MANIFEST_JSON, manifest)


def cmd_simulate(args: argparse.Namespace) -> None:
    config = _load_config(args)
    out_dir = Path(args.out)
    data = experiment.simulate_data(config, Path(args.config).parent)
    files = experiment.write_data(out_dir, data)
    _manifest("simulate", config, data.truth_source, out_dir, files)


def cmd_run(args: argparse.Namespace) -> None:
    config = _load_config(args)
    out_dir = Path(args.out)
    data_dir = Path(args.data) if args.data else out_dir
    base_dir = Path(args.config).parent
    data = experiment.load_data(data_dir, config)
    with ChunkPool(config.workers) as pool:
        outcomes = experiment.run_repeats(config, data, pool=pool, base_dir=base_dir)
    files = experiment.write_outcomes(out_dir, outcomes, data)
    per_repeat = [o.cost.forward_evaluations for o in outcomes]
    evaluations = [sum(per_time) for per_time in zip(*per_repeat)]
    _manifest("run", config, data.truth_source, out_dir, files, evaluations)


def cmd_sweep(args: argparse.Namespace) -> None:
    config = _load_config(args)
    out_dir = Path(args.out)
    with ChunkPool(config.workers) as pool:
        experiment.run_sweep(
            config, out_dir, pool=pool, base_dir=Path(args.config).parent
        )
    files = sorted(out_dir.glob("sweep_*.csv"))
    _manifest("sweep", config, f"prior:{config.seed}", out_dir, files)


def cmd_plot(args: argparse.Namespace) -> None:
    kind = plotting.PlotKind(args.kind)
    out = Path(args.out) if args.out else Path(args.input) / f"{kind.value}.png"
    plotting.plot(kind, args.input, out)


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config", type=Path, required=True, help="Path to YAML configuration"
    )
    parser.add_argument("--out", type=Path, required=True, help="Output directory")
    parser.add_argument("--seed", type=int, help="Override the master seed")
    parser.add_argument(
        "--workers", type=int, help="Processes used for forward evaluations"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtm-inversion",
        description="Bayesian inversion of permeability from resin-injection data",
    )
    parser.add_argument(
        "--log-level",
        default="info",
        choices=["debug", "info", "warning", "error"],
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {rtmlib.__version__}"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Generate synthetic data")
    _add_run_options(simulate)
    simulate.set_defaults(handler=cmd_simulate)

    run = commands.add_parser("run", help="Run SMC or REnKA on observation files")
    _add_run_options(run)
    run.add_argument(
        "--data",
        type=Path,
        help="Directory written by 'simulate' (defaults to --out)",
    )
    run.set_defaults(handler=cmd_run)

    sweep = commands.add_parser("sweep", help="Sweep one experimental parameter")
    _add_run_options(sweep)
    sweep.set_defaults(handler=cmd_sweep)

    plot = commands.add_parser("plot", help="Plot a run or sweep directory")
    plot.add_argument(
        "--kind", choices=[k.value for k in plotting.PlotKind], required=True
    )
    plot.add_argument("--input", type=Path, required=True)
    plot.add_argument(
        "--out", type=Path, help="Image file (defaults to <input>/<kind>.png)"
    )
    plot.set_defaults(handler=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    try:
        args.handler(args)
    except (RtmError, OSError) as e:
        logger.debug("command failed", exc_info=True)
        report = _ERROR_SERIALIZER.to_json(error_report(e), readable=True)
        print(json.dumps(report), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
