"""Per-segment throughput measurement and adaptive exponential smoothing."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import InvalidMeasurementError


def measure_segment_bandwidth(bitrate: float, duration: float, t_start: float, t_end: float) -> float:
    """Throughput seen by one segment download, in kbps."""
    elapsed = t_end - t_start
    if not elapsed > 0:
        raise InvalidMeasurementError(f"non-positive download duration {elapsed!r}")
    if not (bitrate > 0 and duration > 0):
        raise InvalidMeasurementError("bitrate and segment duration must be positive")
    return bitrate * duration / elapsed


def smoothing_weight(measured: float, amended: float, u0: float) -> float:
    """Weight given to the latest measurement.

    The normalized disagreement ``u = |measured - amended| / measured`` is
    pushed through a decreasing logistic centred on ``u0``, so a large
    disagreement shifts trust toward the smoothed history.
    """
    if not measured > 0:
        raise InvalidMeasurementError("measured bandwidth must be positive")
    u = abs(measured - amended) / measured
    z = u - u0
    # written to avoid overflow in exp for large u
    if z >= 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


@dataclass
class EstimatorState:
    last_measured: float = 0.0
    last_amended: float = 0.0
    initialized: bool = False


def update_estimate(state: EstimatorState, new_measurement: float, u0: float) -> float:
    """Fold a fresh measurement into ``state`` and return the amended bandwidth.

    The amended value for this step blends the *previous* measurement with
    the previous amended value; ``new_measurement`` only takes effect on the
    next call. The first call seeds both values with the measurement.
    """
    if not new_measurement > 0:
        raise InvalidMeasurementError("measurement must be positive")
    if not state.initialized:
        state.last_measured = new_measurement
        state.last_amended = new_measurement
        state.initialized = True
        return new_measurement
    w = smoothing_weight(state.last_measured, state.last_amended, u0)
    amended = w * state.last_measured + (1.0 - w) * state.last_amended
    state.last_amended = amended
    state.last_measured = new_measurement
    return amended
