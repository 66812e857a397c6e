#!/usr/bin/env python3
"""
📊 Solver metrics
Prometheus counters for Newton iterations, time steps and energy decay.

The collectors live in a private registry so that repeated imports (tests,
worker processes) never collide with the default global registry.
"""

from pathlib import Path
from typing import Union

import structlog
from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram
from prometheus_client import write_to_textfile

logger = structlog.get_logger(__name__)

registry = CollectorRegistry()

newton_iterations_total = Counter(
    "newton_iterations_total",
    "Total Newton-Raphson iterations performed",
    registry=registry,
)
time_steps_total = Counter(
    "time_steps_total",
    "Time steps attempted by the adaptive stepper",
    ["outcome"],
    registry=registry,
)
newton_solve_seconds = Histogram(
    "newton_solve_seconds",
    "Wall time of one Newton solve",
    registry=registry,
)
relative_energy = Gauge(
    "relative_energy",
    "Most recent discrete relative energy",
    registry=registry,
)


def write_metrics(path: Union[str, Path]) -> Path:
    """Write the registry in the Prometheus text format"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(target), registry)
    logger.debug("Metrics written", path=str(target))
    return target
