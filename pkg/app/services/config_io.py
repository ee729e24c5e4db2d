"""Reading and writing experiment documents."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import structlog
from pydantic import ValidationError

from app.config import get_settings
from app.schemas.experiment import ExperimentConfig, KrausDocument, Mode
from app.services.channels import KrausChannel
from app.services.errors import ConfigParseError, ConfigValidationError

logger = structlog.get_logger(__name__)

# Inline amplitudes whose norm is further than this from one are reported on load.
AMPLITUDE_WARN_TOL = 1e-6


def _decode(text: str, source: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(
            message=f"{source} is not valid JSON: {exc.msg}.",
            line=exc.lineno,
            column=exc.colno,
        ) from exc


def _validation_error(exc: ValidationError, source: str) -> ConfigValidationError:
    first = exc.errors()[0]
    location = ".".join(str(part) for part in first.get("loc", ()))
    message = first.get("msg", "invalid value")
    return ConfigValidationError(
        message=f"{source}: {message}" + (f" (at {location})" if location else ""),
        field=location or None,
    )


def _normalise_amplitudes(config: ExperimentConfig) -> ExperimentConfig:
    amplitudes = config.target.amplitudes
    if amplitudes is None:
        return config
    norm = math.sqrt(sum(re * re + im * im for re, im in amplitudes))
    if norm == 0.0:
        raise ConfigValidationError(message="target amplitudes are all zero", field="target.amplitudes")
    if norm == 1.0:
        return config
    if abs(norm - 1.0) > AMPLITUDE_WARN_TOL:
        logger.warning("config_amplitudes_renormalized", norm=norm)
    scaled = [(re / norm, im / norm) for re, im in amplitudes]
    target = config.target.model_copy(update={"amplitudes": scaled})
    return config.model_copy(update={"target": target})


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment document; inline amplitudes come back normalised."""

    data = _decode(text, "config")
    if not isinstance(data, dict):
        raise ConfigValidationError(message="config must be a JSON object")
    settings = get_settings()
    data.setdefault("epsilon", settings.default_epsilon)
    data.setdefault("delta", settings.default_delta)
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise _validation_error(exc, "config") from exc
    return _normalise_amplitudes(config)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(message=f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_config(text)


def dump_config(config: ExperimentConfig) -> str:
    return config.model_dump_json(by_alias=True, exclude_none=True, indent=2)


def config_for_mode(config: ExperimentConfig, mode: Mode) -> ExperimentConfig:
    """Re-validate ``config`` for ``mode``; the requested mode wins over the document's."""

    if config.mode is not None and config.mode != mode:
        logger.warning("config_mode_overridden", config_mode=config.mode, mode=mode)
    data: Dict[str, Any] = config.model_dump()
    data["mode"] = mode
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise _validation_error(exc, "config") from exc


def load_kraus_file(path: Union[str, Path], base_dir: Optional[Path] = None) -> KrausChannel:
    """Read a Kraus document; relative paths resolve against ``base_dir`` when given."""

    resolved = Path(path)
    if base_dir is not None and not resolved.is_absolute():
        resolved = base_dir / resolved
    try:
        text = resolved.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(message=f"cannot read Kraus file {resolved}: {exc.strerror}") from exc
    try:
        document = KrausDocument.model_validate(_decode(text, "Kraus file"))
    except ValidationError as exc:
        raise _validation_error(exc, "Kraus file") from exc
    try:
        matrices = [np.array([[complex(re, im) for re, im in row] for row in matrix]) for matrix in document.kraus]
    except ValueError as exc:
        raise ConfigValidationError(message="Kraus file: matrices have ragged rows", field="kraus") from exc
    return KrausChannel.from_arrays(matrices)
