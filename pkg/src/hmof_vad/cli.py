"""CLI entry points for hmof-vad.

Usage::

    hmof-vad <command> [--config PATH] [--set section.key=value]... [--force] [--print-config]

Commands: train, detect, eval, synth, bench, ablate.

Exit codes:
- 0: Success
- 1: Unexpected error
- 2: Configuration error
- 3: Data error
- 4: Model error
- 130: Interrupted by SIGINT/Ctrl+C (128 + 2)
"""

import argparse
import logging
import sys
import uuid
from pathlib import Path

from hmof_vad.foundation import orchestrator
from hmof_vad.foundation.config import PipelineConfig, apply_overrides, load_config, render_config
from hmof_vad.util.errors import ConfigError, DataError, HmofError, ModelError, StageError
from hmof_vad.util.logging import configure_logging, log_event, run_id_scope

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MODEL = 4
EXIT_SIGINT = 130  # 128 + SIGINT(2)

COMMANDS = ("train", "detect", "eval", "synth", "bench", "ablate")


def _is_cancellation(exc: BaseException) -> bool:
    """Check if exception represents an interrupt, possibly inside a group."""
    if isinstance(exc, KeyboardInterrupt):
        return True
    if isinstance(exc, BaseExceptionGroup):
        return any(_is_cancellation(sub) for sub in exc.exceptions)
    return False


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the documented exit code."""
    if isinstance(exc, StageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, ModelError):
        return EXIT_MODEL
    if _is_cancellation(exc):
        return EXIT_SIGINT
    return EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmof-vad", description="HMOF video anomaly detection pipeline")
    parser.add_argument("command", choices=COMMANDS, help="Pipeline command to run")
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="Configuration file: YAML (.yaml/.yml) or flat 'section.key = value' text",
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one setting (repeatable)",
    )
    parser.add_argument("--force", action="store_true", help="Overwrite existing models")
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="Print the fully resolved configuration and exit",
    )
    return parser


def resolve_config(config_path: Path | None, overrides: list[str]) -> PipelineConfig:
    """Load the config file and apply ``--set`` overrides."""
    return apply_overrides(load_config(config_path), overrides)


def _run_command(command: str, config: PipelineConfig, *, force: bool) -> None:
    if command == "train":
        manifest = orchestrator.run_train(config, force=force)
        print(f"delta = {manifest.model.delta!r}")
        print(f"alpha = {manifest.model.alpha!r}")
        print(f"models written to {config.paths.model_dir}")
    elif command == "detect":
        summary = orchestrator.run_detect(config)
        print(f"{summary.n_abnormal}/{summary.n_frames} frames abnormal (alpha={summary.alpha!r}, beta={summary.beta})")
        print(f"results written to {summary.out_dir}")
    elif command == "eval":
        report = orchestrator.run_eval(config)
        print(report.summary(), end="")
    elif command == "synth":
        synth = orchestrator.run_synth(config)
        print(f"train frames: {synth.train_dir}")
        print(f"test frames:  {synth.test_dir} ({synth.n_abnormal} abnormal)")
        print(f"ground truth: {synth.gt_path}")
    elif command == "bench":
        bench = orchestrator.run_bench(config)
        print(bench.timings.table(), end="")
        verdict = "within" if bench.within_budget else "over"
        print(f"budget {bench.budget_s:.3f} s/frame: {verdict}")
        if bench.threaded_fps is not None:
            print(f"throughput with {bench.workers} workers: {bench.threaded_fps:.1f} frames/s")
    else:
        rows = orchestrator.run_ablate(config, force=force)
        print(orchestrator.ablation_table(rows), end="")


def _report_failure(command: str, exc: BaseException) -> int:
    code = exit_code_for(exc)
    if isinstance(exc, StageError):
        message = str(exc.cause)
    elif isinstance(exc, HmofError):
        message = str(exc)
    elif _is_cancellation(exc):
        message = "interrupted"
    else:
        message = f"{type(exc).__name__}: {exc}"
    log_event(
        logger,
        logging.ERROR,
        f"{command} failed: {message}",
        event="command_failed",
        command=command,
        stage=exc.stage if isinstance(exc, StageError) else None,
        exit_code=code,
        error_type=type(exc).__name__,
    )
    print(f"{command}: {message}", file=sys.stderr)
    return code


def cli_main(argv: list[str] | None = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)

    try:
        config = resolve_config(args.config, args.overrides)
    except ConfigError as e:
        print(f"{args.command}: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.print_config:
        print(render_config(config), end="")
        return EXIT_OK

    configure_logging(config.run.log_level)
    with run_id_scope(f"{args.command}-{uuid.uuid4().hex[:8]}"):
        log_event(logger, logging.INFO, f"Starting {args.command}", event="command_start", command=args.command)
        try:
            _run_command(args.command, config, force=args.force)
        except (Exception, KeyboardInterrupt) as e:
            return _report_failure(args.command, e)
        log_event(logger, logging.INFO, f"{args.command} finished", event="command_done", command=args.command)
    return EXIT_OK


def main() -> None:
    """Entry point for poetry scripts.

    Uses sys.exit() directly to ensure correct exit code.
    """
    try:
        code = cli_main()
        sys.exit(code)
    except BaseException as e:
        if _is_cancellation(e):
            sys.exit(EXIT_SIGINT)
        raise
