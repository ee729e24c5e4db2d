"""Orchestration of a single experiment run and report rendering."""
from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
import structlog

from app.config import get_settings
from app.schemas.experiment import ExperimentConfig, NoiseSpec
from app.schemas.reports import Report, VerificationReport
from app.services.certify import certify, exact_pass_probabilities, fidelity_lower_bound
from app.services.channels import KrausChannel, apply_channel, builtin_noise, corollary_bound_sampled
from app.services.config_io import load_kraus_file
from app.services.errors import DimensionCapError, InvalidParametersError
from app.services.linalg import TOL_STAB, DensityMatrix, Ket, permute_factors, projector_rank, schmidt_decompose
from app.services.multipartite import StabilizerFamily, build_family, fidelity_bound_multipartite, verify_family
from app.services.stabilizer import (
    BipartiteStabilizer,
    ConjugateBasis,
    build_stabilizer,
    custom_conjugate_basis,
    verify_stabilizer,
)
from app.services.states import state_from_target, white_noise_mixture
from app.telemetry import get_meter, get_tracer

logger = structlog.get_logger(__name__)
tracer = get_tracer(__name__)
meter = get_meter(__name__)
run_duration_histogram = meter.create_histogram(
    name="sepstab_run_duration_ms",
    unit="ms",
    description="Wall-clock duration of one experiment run.",
)
failed_checks_counter = meter.create_counter(
    name="sepstab_failed_checks",
    description="Number of failed verification checks across runs.",
)

ReportFormat = Literal["human", "machine"]
Construction = Union[BipartiteStabilizer, StabilizerFamily]

SIGNIFICANT_DIGITS = 12


@contextmanager
def _phase(name: str, timing: Dict[str, float]) -> Iterator[None]:
    with tracer.start_as_current_span(f"sepstab.{name}"):
        start = time.perf_counter()
        try:
            yield
        finally:
            timing[name] = time.perf_counter() - start


def _conjugate_basis(config: ExperimentConfig) -> Optional[ConjugateBasis]:
    if config.conjugate_basis == "fourier":
        return None
    return custom_conjugate_basis(np.array(config.conjugate_basis, dtype=np.float64))


def _is_bipartite(config: ExperimentConfig, psi: Ket) -> bool:
    return psi.n_parties == 2 and config.party_order in (None, [0, 1])


def _construct(config: ExperimentConfig, psi: Ket) -> Construction:
    conj = _conjugate_basis(config)
    if _is_bipartite(config, psi):
        return build_stabilizer(psi, conj)
    return build_family(psi, order=config.party_order, bases=[conj])


def _verify(construction: Construction) -> VerificationReport:
    if isinstance(construction, BipartiteStabilizer):
        return verify_stabilizer(construction)
    return verify_family(construction)


def _channel_from_noise(noise: NoiseSpec, dim: int, base_dir: Optional[Path]) -> KrausChannel:
    if noise.kraus_file is not None:
        return load_kraus_file(noise.kraus_file, base_dir)
    if noise.name == "white":
        raise InvalidParametersError(message="white noise is a global mixture, not a local channel")
    return builtin_noise(noise.name, dim, noise.p)


def _noisy_state(config: ExperimentConfig, psi: Ket, base_dir: Optional[Path]) -> DensityMatrix:
    noise = config.noise
    if noise is None:
        return DensityMatrix.from_ket(psi)
    if noise.name == "white":
        return white_noise_mixture(psi, noise.p)
    factor = noise.factor if noise.factor is not None else psi.n_parties - 1
    channel = _channel_from_noise(noise, psi.dims[factor], base_dir)
    return apply_channel(channel, DensityMatrix.from_ket(psi), factor)


def _projector_ranks(construction: Construction) -> Dict[str, int]:
    if isinstance(construction, BipartiteStabilizer):
        return {"P": projector_rank(construction.P), "Q": projector_rank(construction.Q)}
    return {str(word): projector_rank(projector) for word, projector in construction.leaves()}


def _schmidt_coefficients(construction: Construction) -> List[float]:
    if isinstance(construction, BipartiteStabilizer):
        return [float(value) for value in construction.schmidt.coefficients]
    ordered = permute_factors(construction.target, construction.order)
    return [float(value) for value in schmidt_decompose(ordered, 1).coefficients]


def _exact_bounds(rho: DensityMatrix, construction: Construction) -> Dict[str, float]:
    if isinstance(construction, BipartiteStabilizer):
        bound = fidelity_lower_bound(rho, construction)
    else:
        bound = fidelity_bound_multipartite(rho, construction)
    bounds = {f"pass_{name}": value for name, value in exact_pass_probabilities(rho, construction).items()}
    bounds["exact_bound"] = bound
    bounds["fidelity_sq"] = rho.fidelity_sq(construction.target)
    return bounds


def run(config: ExperimentConfig, base_dir: Optional[Path] = None) -> Report:
    """Execute ``config`` and collect everything its mode reports."""

    mode = config.mode or "construct"
    dims = config.resolved_dims or []
    cap = get_settings().dim_cap
    if math.prod(dims) > cap:
        raise DimensionCapError(message=f"Total dimension {math.prod(dims)} exceeds the cap of {cap}.")

    timing: Dict[str, float] = {}
    started = time.perf_counter()
    with structlog.contextvars.bound_contextvars(mode=mode, seed=config.seed):
        logger.info("run_started", dims=dims)
        psi = state_from_target(config.target, dims, config.seed)

        with _phase("construct", timing):
            construction = _construct(config, psi)
        with _phase("verify", timing):
            verification = _verify(construction)

        residual = dict(verification.residuals)
        checks = dict(verification.checks)
        bounds: Dict[str, float] = {}
        estimate = None
        channel = None

        if mode in ("verify", "certify"):
            rho = _noisy_state(config, psi, base_dir)
            bounds = _exact_bounds(rho, construction)
            checks["bound_below_fidelity"] = bounds["exact_bound"] <= bounds["fidelity_sq"] + TOL_STAB
            if mode == "certify":
                with _phase("certify", timing):
                    estimate = certify(
                        rho,
                        construction,
                        config.epsilon,
                        config.delta,
                        np.random.default_rng(config.seed),
                        samples=config.samples,
                        rescaled=config.rescaled,
                    )
                bounds["fidelity_lower_bound"] = estimate.fidelity_lower_bound
                bounds["confidence_adjusted_bound"] = estimate.confidence_adjusted_bound

        if mode == "channel-bound":
            if not isinstance(construction, BipartiteStabilizer) or config.noise is None:
                raise InvalidParametersError(message="channel-bound needs a bipartite target and a channel")
            with _phase("channel_bound", timing):
                chan = _channel_from_noise(config.noise, psi.dims[1], base_dir)
                channel = corollary_bound_sampled(
                    chan, construction, config.epsilon, config.delta, np.random.default_rng(config.seed)
                )
            bounds["bound"] = channel.bound
            if channel.ent_fidelity_sq is not None:
                bounds["ent_fidelity_sq"] = channel.ent_fidelity_sq
                checks["bound_below_ent_fidelity"] = channel.bound <= channel.ent_fidelity_sq + TOL_STAB
            if channel.sampled is not None:
                bounds["adjusted_bound"] = channel.sampled.adjusted_bound

        failed = [name for name, ok in checks.items() if not ok]
        duration_ms = (time.perf_counter() - started) * 1000
        run_duration_histogram.record(duration_ms, attributes={"mode": mode})
        if failed:
            failed_checks_counter.add(len(failed), attributes={"mode": mode})
        logger.info("run_completed", passed=not failed, failed=failed, duration_ms=duration_ms)

    return Report(
        mode=mode,
        config=config,
        residual=residual,
        checks=checks,
        passed=not failed,
        schmidt_coefficients=_schmidt_coefficients(construction),
        projector_ranks=_projector_ranks(construction),
        bounds=bounds,
        estimate=estimate,
        channel=channel,
        timing=timing,
    )


def _round(value: Any) -> Any:
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        return float(f"{value:.{SIGNIFICANT_DIGITS}g}") if math.isfinite(value) else value
    if isinstance(value, dict):
        return {key: _round(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_round(item) for item in value]
    return value


def _format_number(value: float) -> str:
    return f"{value:#.{SIGNIFICANT_DIGITS}g}"


def _table(header: Tuple[str, ...], rows: List[Tuple[str, ...]]) -> List[str]:
    widths = [max([len(cell) for cell in column]) for column in zip(header, *rows)]
    return ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in (header, *rows)]


def _human(report: Report, include_timing: bool) -> str:
    lines = [f"mode: {report.mode}", f"passed: {'yes' if report.passed else 'no'}", ""]
    rows = [
        (name, _format_number(value), "ok" if report.checks.get(name, True) else "FAIL")
        for name, value in report.residual.items()
    ]
    rows += [(name, "-", "ok" if ok else "FAIL") for name, ok in report.checks.items() if name not in report.residual]
    lines += _table(("check", "value", "status"), rows)

    if report.schmidt_coefficients:
        lines += ["", "schmidt coefficients: " + ", ".join(_format_number(v) for v in report.schmidt_coefficients)]
    if report.projector_ranks:
        lines += [""] + _table(("projector", "rank"), [(k, str(v)) for k, v in report.projector_ranks.items()])
    if report.bounds:
        lines += [""] + _table(("bound", "value"), [(k, _format_number(v)) for k, v in report.bounds.items()])
    if report.estimate is not None:
        estimate = report.estimate
        lines += ["", f"samples per test: {estimate.samples_per_test}  epsilon: {_format_number(estimate.epsilon)}"]
        lines += _table(("test", "pass rate"), [(k, _format_number(v)) for k, v in estimate.pass_rates.items()])
    if report.channel is not None and report.channel.sampled is not None:
        sampled = report.channel.sampled
        lines += ["", f"probe samples per term: {sampled.samples_per_term}"]
    if include_timing and report.timing:
        lines += [""] + _table(("phase", "seconds"), [(k, _format_number(v)) for k, v in report.timing.items()])
    return "\n".join(lines) + "\n"


def emit_report(report: Report, fmt: ReportFormat = "human", include_timing: bool = False) -> str:
    """Render ``report``; the machine form is a versioned JSON document with 12 significant digits."""

    if fmt == "human":
        return _human(report, include_timing)
    payload = report.model_dump(mode="json", by_alias=True, exclude_none=True)
    if not include_timing:
        payload.pop("timing", None)
    return json.dumps(_round(payload), indent=2) + "\n"


def parse_report(text: str) -> Report:
    return Report.model_validate_json(text)
