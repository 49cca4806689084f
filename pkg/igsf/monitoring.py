# igsf/monitoring.py
"""
Centralized monitoring: structured JSON logging, Prometheus metrics, optional Sentry.

Env vars:
- PROMETHEUS_ENABLED (default: true)
- SENTRY_DSN (optional)
- LOG_AS_JSON (default: true)
- LOG_LEVEL (default: INFO)
- ENVIRONMENT (default: development)
"""

import os
import logging
import time
from pathlib import Path
from typing import Union

from prometheus_client import (
    CollectorRegistry, Counter, Histogram, Gauge,
    generate_latest, write_to_textfile,
)

# Optional imports; degrade gracefully if not installed
try:
    from pythonjsonlogger import jsonlogger
    _HAS_JSON_LOGGER = True
except ImportError:
    _HAS_JSON_LOGGER = False

try:
    import sentry_sdk
    _HAS_SENTRY = True
except ImportError:
    _HAS_SENTRY = False

# --- ENV flags
PROMETHEUS_ENABLED = os.getenv("PROMETHEUS_ENABLED", "true").lower() in ("1", "true", "yes")
SENTRY_DSN = os.getenv("SENTRY_DSN", None)
LOG_AS_JSON = os.getenv("LOG_AS_JSON", "true").lower() in ("1", "true", "yes")
ENVIRONMENT = os.getenv("ENVIRONMENT", "development")


# --- Logger setup
def setup_logger(name: str = "igsf", level: int = None) -> logging.Logger:
    level = logging.getLevelName(os.getenv("LOG_LEVEL", "INFO")) if level is None else level
    logger = logging.getLogger(name)
    logger.setLevel(level)
    if not logger.handlers:
        handler = logging.StreamHandler()
        if LOG_AS_JSON and _HAS_JSON_LOGGER:
            fmt = jsonlogger.JsonFormatter(
                "%(asctime)s %(levelname)s %(name)s %(message)s"
            )
            handler.setFormatter(fmt)
        logger.addHandler(handler)
    return logger


logger = setup_logger()

# --- Sentry (optional)
if SENTRY_DSN and _HAS_SENTRY:
    sentry_sdk.init(dsn=SENTRY_DSN, environment=ENVIRONMENT)
    logger.info("Sentry initialized")


# --- Prometheus metrics
# Own registry: metrics.prom holds run metrics only, no process collectors.
REGISTRY = CollectorRegistry()

FILTER_STEPS = Counter(
    "igsf_filter_steps_total",
    "Assimilation steps completed",
    ["filter"],
    registry=REGISTRY,
)

JITTER_ESCALATIONS = Counter(
    "igsf_jitter_escalations_total",
    "Cholesky factorizations that needed diagonal jitter",
    ["site"],
    registry=REGISTRY,
)

DEGENERATE_WEIGHTS = Counter(
    "igsf_degenerate_weights_total",
    "Weight updates whose likelihoods all underflowed",
    ["filter"],
    registry=REGISTRY,
)

RESAMPLES = Counter(
    "igsf_resamples_total",
    "Particle filter resampling events",
    ["filter"],
    registry=REGISTRY,
)

RUNS = Counter(
    "igsf_runs_total",
    "Monte Carlo runs",
    ["experiment", "status"],
    registry=REGISTRY,
)

RUN_LATENCY = Histogram(
    "igsf_run_latency_seconds",
    "Wall time of one Monte Carlo run (all filters)",
    ["experiment"],
    registry=REGISTRY,
)

LAST_RUN_STEPS = Gauge(
    "igsf_last_run_steps",
    "Time steps in the last completed run",
    registry=REGISTRY,
)


# --- Helper wrappers (never crash a run)
def inc_filter_step(filter_name: str):
    try:
        FILTER_STEPS.labels(filter=filter_name).inc()
    except Exception:
        pass


def inc_jitter_escalation(site: str):
    try:
        JITTER_ESCALATIONS.labels(site=site).inc()
    except Exception:
        pass


def inc_degenerate_weights(filter_name: str):
    try:
        DEGENERATE_WEIGHTS.labels(filter=filter_name).inc()
    except Exception:
        pass


def inc_resample(filter_name: str):
    try:
        RESAMPLES.labels(filter=filter_name).inc()
    except Exception:
        pass


def observe_run(start_ts: float, experiment: str, status: str):
    try:
        RUN_LATENCY.labels(experiment=experiment).observe(time.time() - start_ts)
        RUNS.labels(experiment=experiment, status=status).inc()
    except Exception:
        pass


def set_last_run_steps(n: int):
    try:
        LAST_RUN_STEPS.set(n)
    except Exception:
        pass


def prometheus_metrics_text() -> bytes:
    """Current registry in the Prometheus exposition format."""
    try:
        return generate_latest(REGISTRY)
    except Exception:
        return b""


def write_metrics_textfile(path: Union[str, Path]) -> bool:
    """Dump the registry for a node-exporter textfile collector. Returns False when disabled."""
    if not PROMETHEUS_ENABLED:
        return False
    try:
        write_to_textfile(str(path), REGISTRY)
        return True
    except Exception:
        logger.warning("Could not write metrics textfile", extra={"path": str(path)})
        return False
