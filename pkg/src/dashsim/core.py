"""Domain types shared by the estimator, prober, policies and simulator.

All bitrates are carried as float kbps, all times as float seconds.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional, Sequence

import numpy as np

DEFAULT_LADDER_KBPS: tuple[float, ...] = (
    235.0, 375.0, 560.0, 750.0, 1050.0, 1750.0,
    2350.0, 3000.0, 3850.0, 4300.0, 5800.0,
)
DEFAULT_SEGMENT_DURATION = 2.0


class DashSimError(Exception):
    """Base class for every error raised by this package."""


class InvalidMeasurementError(DashSimError, ValueError):
    pass


class StalledDownloadError(DashSimError, ValueError):
    pass


class SimulationHorizonError(DashSimError):
    pass


class UndefinedMetricError(DashSimError, ValueError):
    pass


class ValidationError(DashSimError, ValueError):
    """A parameter set or config violates a documented invariant.

    ``field`` names the offending attribute so callers can report it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class BitrateLadder:
    rates: tuple[float, ...] = DEFAULT_LADDER_KBPS

    def __post_init__(self) -> None:
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        if not rates:
            raise ValidationError("ladder", "must contain at least one rate")
        if any(r <= 0 for r in rates):
            raise ValidationError("ladder", "rates must be positive")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValidationError("ladder", "rates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.rates)

    def __contains__(self, rate: object) -> bool:
        return rate in self.rates

    def __iter__(self):
        return iter(self.rates)

    @property
    def v_min(self) -> float:
        return self.rates[0]

    @property
    def v_max(self) -> float:
        return self.rates[-1]

    def index(self, rate: float) -> int:
        return self.rates.index(rate)


# strict comparisons treat rates this close (relative) to ``bw`` as equal to it,
# so a throughput of 2999.9999999 measured against a 3000 share is not "above"
STRICT_RTOL = 1e-9


def ladder_floor(ladder: BitrateLadder, bw: float, strict: bool = False) -> Optional[float]:
    """Largest ladder rate <= ``bw`` (``<`` if strict), or None when there is none."""
    if strict:
        i = bisect.bisect_left(ladder.rates, bw * (1.0 - STRICT_RTOL))
    else:
        i = bisect.bisect_right(ladder.rates, bw)
    return ladder.rates[i - 1] if i > 0 else None


def ladder_ceiling(ladder: BitrateLadder, bw: float, strict: bool = False) -> Optional[float]:
    """Smallest ladder rate >= ``bw`` (``>`` if strict), or None when there is none."""
    if strict:
        i = bisect.bisect_right(ladder.rates, bw * (1.0 + STRICT_RTOL))
    else:
        i = bisect.bisect_left(ladder.rates, bw)
    return ladder.rates[i] if i < len(ladder.rates) else None


@dataclass(frozen=True)
class SegmentSpec:
    index: int
    bitrate: float
    duration: float = DEFAULT_SEGMENT_DURATION

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValidationError("segment_duration", "must be positive")
        if self.index < 0:
            raise ValidationError("index", "must be nonnegative")

    @property
    def size_kb(self) -> float:
        return self.bitrate * self.duration


SELECTION_MODES = ("accept-reject", "normalized")


@dataclass(frozen=True)
class PolicyParams:
    """Tunables of the rate controller.

    Buffer thresholds are in seconds of video, ``delta_kbps`` in kbps, and
    ``n_min``/``n0``/``n_max`` in segments. ``q_ref`` defaults to the
    midpoint of ``q_low`` and ``q_high``.
    """

    q_low: float = 5.0
    q_high: float = 25.0
    q_max_buffer: float = 30.0
    q_ref: Optional[float] = None
    alpha: float = 1.25
    delta_kbps: float = 32.0
    u0: float = 0.5
    epsilon: float = 1.0
    n_min: int = 1
    n_max: int = 15
    n0: int = 10
    selection: str = "accept-reject"

    def __post_init__(self) -> None:
        if self.q_ref is None:
            object.__setattr__(self, "q_ref", (self.q_low + self.q_high) / 2.0)
        self.validate()

    def validate(self) -> None:
        if not 0 < self.q_low:
            raise ValidationError("q_low", "must be positive")
        if not self.q_low < self.q_ref < self.q_high:
            raise ValidationError("q_ref", "must lie strictly between q_low and q_high")
        if not self.q_high <= self.q_max_buffer:
            raise ValidationError("q_high", "must not exceed q_max_buffer")
        # the back-off diverges for alpha > 2
        if not 1.0 < self.alpha <= 2.0:
            raise ValidationError("alpha", f"must be in (1, 2], got {self.alpha}")
        if not self.delta_kbps > 0:
            raise ValidationError("delta_kbps", "must be positive")
        if not self.epsilon >= 1.0:
            raise ValidationError("epsilon", "must be >= 1")
        if not 1 <= self.n_min < self.n0 < self.n_max:
            raise ValidationError("n0", "need 1 <= n_min < n0 < n_max")
        if self.selection not in SELECTION_MODES:
            raise ValidationError("selection", f"must be one of {SELECTION_MODES}")

    def with_overrides(self, overrides: dict[str, Any] | None) -> "PolicyParams":
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        for key in overrides:
            if key not in known:
                raise ValidationError(key, "unknown policy parameter")
        base = {f.name: getattr(self, f.name) for f in fields(self)}
        # a derived q_ref must follow overridden thresholds
        if "q_ref" not in overrides and ("q_low" in overrides or "q_high" in overrides):
            base["q_ref"] = None
        base.update(overrides)
        return PolicyParams(**base)

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def client_stream(seed: int, client_id: int) -> np.random.Generator:
    """Counter-based random stream keyed by ``(seed, client_id)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(client_id)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class ClientState:
    """Per-client control state, advanced at every segment completion."""

    estimated_bw: float = 0.0
    smoothed_bw: float = 0.0
    probed_bw: float = 0.0
    buffer: float = 0.0
    last_bitrate: Optional[float] = None
    run_length: int = 0
    next_index: int = 0
    segment_duration: float = DEFAULT_SEGMENT_DURATION
    rng: np.random.Generator = field(default_factory=lambda: client_stream(0, 0))

    def record_bitrate(self, bitrate: float) -> None:
        if bitrate == self.last_bitrate:
            self.run_length += 1
        else:
            self.run_length = 1
        self.last_bitrate = bitrate
        self.next_index += 1

    def copy(self) -> "ClientState":
        return replace(self)


def as_ladder(rates: Sequence[float] | BitrateLadder | None) -> BitrateLadder:
    if rates is None:
        return BitrateLadder()
    if isinstance(rates, BitrateLadder):
        return rates
    return BitrateLadder(tuple(rates))
