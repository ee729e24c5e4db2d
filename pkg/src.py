"""Command-line entry point: ``sepstab construct|verify|certify|channel-bound``."""
import argparse
import logging
import logging.config
import sys
from pathlib import Path
from typing import NoReturn, Optional, Sequence

import structlog

from app.config import get_settings
from app.schemas.errors import ErrorDetail, ErrorResponse
from app.services.config_io import config_for_mode, load_config
from app.services.errors import SepStabError
from app.services.runner import emit_report, run
from app.telemetry import configure_telemetry

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_ERROR = 2

MODES = ("construct", "verify", "certify", "channel-bound")


def configure_logging() -> None:
    """Configure structured logging on stderr; stdout carries only reports."""

    settings = get_settings()
    timestamper = structlog.processors.TimeStamper(fmt="iso", key="timestamp")
    renderer = (
        structlog.dev.ConsoleRenderer(colors=False)
        if settings.log_format == "console"
        else structlog.processors.JSONRenderer()
    )
    logging_config = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "structlog": {
                "()": structlog.stdlib.ProcessorFormatter,
                "processor": renderer,
                "foreign_pre_chain": [
                    structlog.contextvars.merge_contextvars,
                    structlog.processors.add_log_level,
                    timestamper,
                ],
            }
        },
        "handlers": {
            "default": {
                "class": "logging.StreamHandler",
                "formatter": "structlog",
                "stream": "ext://sys.stderr",
            }
        },
        "root": {
            "handlers": ["default"],
            "level": settings.log_level.upper(),
        },
    }

    logging.config.dictConfig(logging_config)
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            timestamper,
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def _emit_error(error: ErrorDetail) -> None:
    sys.stderr.write(ErrorResponse(error=error).model_dump_json(exclude_none=True) + "\n")


class _Parser(argparse.ArgumentParser):
    """Report usage errors as a single JSON line like every other failure."""

    def error(self, message: str) -> "NoReturn":  # type: ignore[override]
        _emit_error(ErrorDetail(code="usage_error", message=message))
        sys.exit(EXIT_ERROR)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="sepstab",
        description="Separable stabilizer projectors, LOCC fidelity certification and channel bounds.",
    )
    subcommands = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sub = subcommands.add_parser(mode, help=f"run the {mode} experiment")
        sub.add_argument("--config", required=True, type=Path, help="experiment document (JSON)")
        sub.add_argument("--format", choices=("human", "machine"), default="human", help="report format")
        sub.add_argument("--out", type=Path, default=None, help="write the report here instead of stdout")
        sub.add_argument("--timing", action="store_true", help="include per-phase timings in the report")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    configure_telemetry()
    logger = structlog.get_logger("cli")

    try:
        config = config_for_mode(load_config(args.config), args.mode)
        report = run(config, base_dir=args.config.parent)
        text = emit_report(report, args.format, include_timing=args.timing)
        if args.out is not None:
            try:
                args.out.write_text(text, encoding="utf-8")
            except OSError as exc:
                raise SepStabError(message=f"cannot write report to {args.out}: {exc.strerror}", code="io_error") from exc
        else:
            sys.stdout.write(text)
    except SepStabError as exc:
        logger.error("run_failed", code=exc.code, message=exc.message)
        _emit_error(ErrorDetail(**exc.to_dict()))
        return EXIT_ERROR
    except Exception as exc:  # pragma: no cover
        logger.exception("run_crashed")
        _emit_error(ErrorDetail(code="internal_error", message=str(exc) or type(exc).__name__))
        return EXIT_ERROR

    return EXIT_OK if report.passed else EXIT_CHECKS_FAILED


if __name__ == "__main__":
    sys.exit(main())
