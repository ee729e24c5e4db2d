"""Optional OpenTelemetry tracer and meter for CLI runs.

Without the OpenTelemetry SDK installed every helper returns no-op objects, so
instrumented code paths never need to check for availability themselves.
"""
from __future__ import annotations

from typing import Any

import structlog

from app.config import get_settings

try:
    from opentelemetry import metrics, trace
    from opentelemetry.sdk.metrics import MeterProvider
    from opentelemetry.sdk.metrics.export import ConsoleMetricExporter, PeriodicExportingMetricReader
    from opentelemetry.sdk.resources import Resource
    from opentelemetry.sdk.trace import TracerProvider
    from opentelemetry.sdk.trace.export import ConsoleSpanExporter, SimpleSpanProcessor
except ImportError:  # pragma: no cover - optional dependency guard
    metrics = None  # type: ignore[assignment]
    trace = None  # type: ignore[assignment]
    MeterProvider = None  # type: ignore[assignment]
    ConsoleMetricExporter = None  # type: ignore[assignment]
    PeriodicExportingMetricReader = None  # type: ignore[assignment]
    Resource = None  # type: ignore[assignment]
    TracerProvider = None  # type: ignore[assignment]
    ConsoleSpanExporter = None  # type: ignore[assignment]
    SimpleSpanProcessor = None  # type: ignore[assignment]


_OPENTELEMETRY_AVAILABLE = all(item is not None for item in (metrics, trace, MeterProvider, TracerProvider, Resource))

SERVICE_NAME = "sepstab"

logger = structlog.get_logger(__name__)


class _NoopSpan:
    def __enter__(self) -> "_NoopSpan":
        return self

    def __exit__(self, *exc_info: object) -> bool:
        return False

    def set_attribute(self, *args: Any, **kwargs: Any) -> None:
        return None


class _NoopTracer:
    def start_as_current_span(self, *args: Any, **kwargs: Any) -> _NoopSpan:
        return _NoopSpan()


class _NoopHistogram:
    def record(self, *args: Any, **kwargs: Any) -> None:
        return None


class _NoopCounter:
    def add(self, *args: Any, **kwargs: Any) -> None:
        return None


class _NoopMeter:
    def create_histogram(self, *args: Any, **kwargs: Any) -> _NoopHistogram:
        return _NoopHistogram()

    def create_counter(self, *args: Any, **kwargs: Any) -> _NoopCounter:
        return _NoopCounter()


_telemetry_configured = False


def configure_telemetry() -> None:
    """Install console exporters when ``otel_console_export`` is enabled."""

    global _telemetry_configured
    if _telemetry_configured:
        return
    _telemetry_configured = True

    if not _OPENTELEMETRY_AVAILABLE:
        logger.debug("telemetry_disabled", reason="opentelemetry_not_installed")
        return
    if not get_settings().otel_console_export:
        logger.debug("telemetry_disabled", reason="console_export_off")
        return

    resource = Resource.create({"service.name": SERVICE_NAME})
    tracer_provider = TracerProvider(resource=resource)
    tracer_provider.add_span_processor(SimpleSpanProcessor(ConsoleSpanExporter()))
    trace.set_tracer_provider(tracer_provider)

    reader = PeriodicExportingMetricReader(ConsoleMetricExporter())
    metrics.set_meter_provider(MeterProvider(resource=resource, metric_readers=[reader]))
    logger.info("telemetry_configured", exporter="console")


def get_tracer(name: str = SERVICE_NAME) -> Any:
    if _OPENTELEMETRY_AVAILABLE:
        return trace.get_tracer(name)  # type: ignore[union-attr]
    return _NoopTracer()


def get_meter(name: str = SERVICE_NAME) -> Any:
    if _OPENTELEMETRY_AVAILABLE:
        return metrics.get_meter(name)  # type: ignore[union-attr]
    return _NoopMeter()
