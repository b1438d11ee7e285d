"""Multi-client adaptive bitrate streaming over a shared bottleneck."""

from .adapter import POLICIES, AdaptationDecision, decide_next, make_policy
from .core import (
    DEFAULT_LADDER_KBPS,
    BitrateLadder,
    ClientState,
    DashSimError,
    InvalidMeasurementError,
    PolicyParams,
    SimulationHorizonError,
    StalledDownloadError,
    UndefinedMetricError,
    ValidationError,
)
from .estimator import EstimatorState, measure_segment_bandwidth, update_estimate
from .metrics import MetricsReport, summarize
from .netsim import CapacitySchedule, ClientArrival, SessionLog, load_trace, run_scenario
from .prober import ProberState, probe_update

__version__ = "0.1.0"

__all__ = [
    "POLICIES", "AdaptationDecision", "decide_next", "make_policy",
    "DEFAULT_LADDER_KBPS", "BitrateLadder", "ClientState", "DashSimError",
    "InvalidMeasurementError", "PolicyParams", "SimulationHorizonError",
    "StalledDownloadError", "UndefinedMetricError", "ValidationError",
    "EstimatorState", "measure_segment_bandwidth", "update_estimate",
    "MetricsReport", "summarize",
    "CapacitySchedule", "ClientArrival", "SessionLog", "load_trace", "run_scenario",
    "ProberState", "probe_update",
]
