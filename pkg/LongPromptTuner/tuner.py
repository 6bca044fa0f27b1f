import argparse
import asyncio
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from dotenv import load_dotenv

from configuration import load_config
from errors import TunerError
from evaluation.errors import DatasetInvalid, DatasetNotFound
from harness import cli
from harness.errors import ConfigError, RunAlreadyComplete
from llm.errors import GatewayError

load_dotenv(Path(__file__).resolve().parent.parent / ".secrets")

_logger = logging.getLogger("tuner")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_BACKEND = 4
EXIT_RUN = 5


def _setup_logging(level: str = "INFO") -> None:
    """Set up a basic logging configuration."""
    # Create a stream handler that logs to stdout (12-factor app)
    stream_handler = logging.StreamHandler(stream=sys.stdout)
    stream_handler.setLevel(level)
    formatter = logging.Formatter(fmt="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    stream_handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    root_logger.addHandler(stream_handler)
    root_logger.setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tuner", description="Optimize long prompts with critic and actor feedback."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    optimize = commands.add_parser("optimize", help="Run an optimization.")
    optimize.add_argument("--config", type=Path, required=True, help="Run configuration (TOML).")
    optimize.add_argument("--resume", type=Path, metavar="RUN_DIR", help="Continue this run.")
    optimize.add_argument(
        "--dry-run",
        action="store_true",
        help="Validate the configuration and print the prompt outline, without generating.",
    )

    resume = commands.add_parser("resume", help="Continue a run from its latest checkpoint.")
    resume.add_argument("run_dir", type=Path)

    report = commands.add_parser("report", help="Report on a run directory.")
    report.add_argument("kind", choices=["diff", "actions", "compare", "curve"])
    report.add_argument("run_dir", type=Path)
    report.add_argument("--candidate", help="Candidate id (default: the best ranked one).")
    report.add_argument("--parent", help="Diff against this candidate instead of the parent.")

    validate = commands.add_parser("validate-config", help="Validate a run configuration.")
    validate.add_argument("config", type=Path)

    parse = commands.add_parser("parse", help="Print the outline of a prompt file.")
    parse.add_argument("prompt", type=Path)
    return parser


async def _run(args: argparse.Namespace) -> str:
    match args.command:
        case "optimize" if args.resume is not None:
            return cli.summarize(await cli.resume(args.resume))
        case "optimize":
            loaded = load_config(args.config)
            if args.dry_run:
                return cli.dry_run(loaded)
            return cli.summarize(await cli.optimize(loaded))
        case "resume":
            return cli.summarize(await cli.resume(args.run_dir))
        case "report":
            match args.kind:
                case "diff":
                    return await cli.report_diff(args.run_dir, args.candidate, args.parent)
                case "actions":
                    return await cli.report_actions(args.run_dir)
                case "compare":
                    return await cli.report_compare(args.run_dir, args.candidate)
                case "curve":
                    return await cli.report_curve_text(args.run_dir)
        case "validate-config":
            loaded = load_config(args.config)
            return f"{loaded.path} is valid\n"
        case "parse":
            return cli.outline(cli.read_prompt(args.prompt))
    raise AssertionError(f"Unhandled command {args.command}")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = "INFO"
    if getattr(args, "config", None) is not None:
        try:
            level = load_config(args.config).config.log.LOG_LEVEL
        except ConfigError:
            pass
    _setup_logging(level)

    try:
        output = asyncio.run(_run(args))
    except RunAlreadyComplete as e:
        _logger.info("%s, nothing to do", e)
        return EXIT_OK
    except ConfigError as e:
        _logger.critical("Configuration error: %s", e)
        return EXIT_CONFIG
    except (DatasetNotFound, DatasetInvalid) as e:
        _logger.critical("%s: %s", type(e).__name__, e)
        return EXIT_DATASET
    except GatewayError as e:
        _logger.critical("Backend error (%s): %s", type(e).__name__, e)
        return EXIT_BACKEND
    except TunerError as e:
        _logger.critical("Run error (%s): %s", type(e).__name__, e)
        return EXIT_RUN
    except KeyboardInterrupt:
        _logger.info("Received KeyboardInterrupt, exiting...")
        return EXIT_RUN

    sys.stdout.write(output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
