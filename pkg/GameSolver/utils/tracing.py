"""
OpenTelemetry tracing configuration for solver runs.

Features:
- Trace and span setup around sweeps, extraction, verification and CLI commands
- Console exporter for local inspection
- OTLP exporter when a collector endpoint is configured
- No-op spans when tracing is disabled or never set up
"""

import logging
import os
from contextlib import nullcontext
from typing import Optional

from opentelemetry import trace
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor, ConsoleSpanExporter, SimpleSpanProcessor
from opentelemetry.trace import Status, StatusCode

logger = logging.getLogger(__name__)

# Global tracer instance
_tracer: Optional[trace.Tracer] = None


def setup_tracing(service_name: str = "GameSolver") -> Optional[trace.Tracer]:
    """
    Configure OpenTelemetry tracing for a solver process.

    Args:
        service_name: Name of the service for tracing

    Returns:
        Tracer instance or None if tracing is disabled or setup fails
    """
    global _tracer

    try:
        enable_tracing = os.getenv('GAMESOLVER_ENABLE_TRACING', 'true').lower() == 'true'
        if not enable_tracing:
            logger.info("Tracing is disabled")
            return None

        resource = Resource.create({
            "service.name": service_name,
            "service.version": os.getenv('SERVICE_VERSION', '1.0.0'),
            "deployment.environment": os.getenv('ENVIRONMENT', 'development')
        })
        tracer_provider = TracerProvider(resource=resource)

        if os.getenv('GAMESOLVER_TRACE_CONSOLE', 'false').lower() == 'true':
            tracer_provider.add_span_processor(SimpleSpanProcessor(ConsoleSpanExporter()))
            logger.info("Console span exporter configured")

        endpoint = os.getenv('OTEL_EXPORTER_OTLP_ENDPOINT')
        if endpoint:
            try:
                from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter

                tracer_provider.add_span_processor(BatchSpanProcessor(OTLPSpanExporter(endpoint=endpoint)))
                logger.info(f"OTLP trace exporter configured: {endpoint}")
            except ImportError:
                logger.warning("OTLP exporter not installed")
            except Exception as e:
                logger.error(f"Failed to configure OTLP exporter: {str(e)}")

        trace.set_tracer_provider(tracer_provider)
        _tracer = trace.get_tracer(__name__)

        logger.info(f"OpenTelemetry tracing initialized for service: {service_name}")
        return _tracer

    except Exception as e:
        logger.error(f"Failed to initialize tracing: {str(e)}")
        return None


def get_tracer() -> Optional[trace.Tracer]:
    """Get the global tracer instance, or None if tracing is not set up."""
    return _tracer


def create_span(name: str, attributes: Optional[dict] = None):
    """
    Create a new span for tracing operations.

    Args:
        name: Name of the span
        attributes: Optional dictionary of attributes to add to the span

    Returns:
        Span context manager or dummy context if tracing is disabled

    Usage:
        with create_span("backward_sweep", {"time_nodes": 5}):
            ...
    """
    if _tracer is None:
        return nullcontext()
    return _tracer.start_as_current_span(name, attributes=attributes or {})


def add_span_attributes(**kwargs):
    """Add attributes to the current active span."""
    current_span = trace.get_current_span()
    if current_span and current_span.is_recording():
        current_span.set_attributes(kwargs)


def add_span_event(name: str, attributes: Optional[dict] = None):
    """
    Add an event to the current active span.

    Args:
        name: Name of the event
        attributes: Optional dictionary of attributes for the event
    """
    current_span = trace.get_current_span()
    if current_span and current_span.is_recording():
        current_span.add_event(name, attributes or {})


def set_span_error(exception: Exception):
    """
    Mark the current span as error with exception details.

    Args:
        exception: The exception that occurred
    """
    current_span = trace.get_current_span()
    if current_span and current_span.is_recording():
        current_span.set_status(Status(StatusCode.ERROR, str(exception)))
        current_span.record_exception(exception)


def get_trace_context() -> dict:
    """
    Get the current trace context, written into run manifests.

    Returns:
        Dictionary with trace_id and span_id, empty when no span is recording
    """
    current_span = trace.get_current_span()
    if current_span and current_span.is_recording():
        span_context = current_span.get_span_context()
        return {
            'trace_id': format(span_context.trace_id, '032x'),
            'span_id': format(span_context.span_id, '016x'),
        }
    return {}
