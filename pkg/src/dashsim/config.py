"""Scenario files: a YAML document describing one simulated session.

Schema (every key except ``capacity`` and ``clients`` is optional)::

    name: two-client-3000-1500-4000
    horizon: 650.0              # seconds
    segment_duration: 2.0       # seconds
    seed: 0
    ladder: [235, 375, ...]     # kbps, defaults to the built-in ladder
    strict_formulas: false
    output_dir: out
    params: {alpha: 1.25}       # overrides applied to every client
    capacity:
      breakpoints: [[0, 3000], [230, 1500]]   # or: trace: file.csv
      end: null                 # optional end of the schedule
    clients:
      - {id: 1, join_time: 0, policy: fairshare, segments: null, params: {}}

A ``trace`` path is resolved relative to the scenario file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .adapter import POLICIES
from .core import DEFAULT_LADDER_KBPS, DEFAULT_SEGMENT_DURATION, BitrateLadder, DashSimError, PolicyParams, ValidationError
from .netsim import CapacitySchedule, ClientArrival, load_trace

_TOP_KEYS = {
    "name", "horizon", "segment_duration", "seed", "ladder", "strict_formulas",
    "output_dir", "params", "capacity", "clients",
}
_CLIENT_KEYS = {"id", "join_time", "policy", "segments", "params", "seed"}
_CAPACITY_KEYS = {"breakpoints", "trace", "end"}


class ConfigParseError(DashSimError):
    """The scenario file is unreadable or is not the documented shape."""


@dataclass(frozen=True)
class ClientConfig:
    id: int
    join_time: float = 0.0
    policy: str = "fairshare"
    segments: Optional[int] = None
    params: tuple[tuple[str, Any], ...] = ()
    seed: Optional[int] = None

    def to_arrival(self) -> ClientArrival:
        return ClientArrival(self.id, self.join_time, self.policy, dict(self.params), self.segments, self.seed)


@dataclass(frozen=True)
class ScenarioConfig:
    clients: tuple[ClientConfig, ...]
    breakpoints: tuple[tuple[float, float], ...] = ()
    trace: Optional[str] = None
    capacity_end: Optional[float] = None
    name: str = "scenario"
    horizon: float = 300.0
    segment_duration: float = DEFAULT_SEGMENT_DURATION
    seed: int = 0
    ladder: tuple[float, ...] = DEFAULT_LADDER_KBPS
    strict_formulas: bool = False
    output_dir: str = "out"
    params: tuple[tuple[str, Any], ...] = ()
    base_dir: Optional[str] = field(default=None, compare=False)

    def policy_params(self) -> PolicyParams:
        return PolicyParams().with_overrides(dict(self.params))

    def bitrate_ladder(self) -> BitrateLadder:
        return BitrateLadder(self.ladder)

    def schedule(self) -> CapacitySchedule:
        if self.trace is not None:
            path = Path(self.trace)
            if not path.is_absolute() and self.base_dir:
                path = Path(self.base_dir) / path
            return load_trace(path, self.capacity_end)
        return CapacitySchedule(self.breakpoints, self.capacity_end)

    def arrivals(self) -> list[ClientArrival]:
        return [c.to_arrival() for c in self.clients]

    def validate(self) -> None:
        """Check every invariant up front so a bad file fails before any simulation."""
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValidationError("horizon", "must be a positive number of seconds")
        if not self.segment_duration > 0:
            raise ValidationError("segment_duration", "must be positive")
        if self.seed < 0:
            raise ValidationError("seed", "must be nonnegative")
        if (self.trace is None) == (not self.breakpoints):
            raise ValidationError("capacity", "give exactly one of breakpoints or trace")
        self.bitrate_ladder()
        base = self.policy_params()
        self.schedule()
        if not self.clients:
            raise ValidationError("clients", "at least one client is required")
        ids = [c.id for c in self.clients]
        if len(set(ids)) != len(ids):
            raise ValidationError("clients", "client ids must be unique")
        for c in self.clients:
            if c.policy not in POLICIES:
                raise ValidationError("policy", f"unknown policy {c.policy!r}; choose from {sorted(POLICIES)}")
            c.to_arrival()
            base.with_overrides(dict(c.params))

    def with_updates(self, **changes: Any) -> "ScenarioConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return ScenarioConfig(**data)

    def to_dict(self) -> dict[str, Any]:
        capacity: dict[str, Any] = {}
        if self.trace is not None:
            capacity["trace"] = self.trace
        else:
            capacity["breakpoints"] = [[t, c] for t, c in self.breakpoints]
        capacity["end"] = self.capacity_end
        return {
            "name": self.name,
            "horizon": self.horizon,
            "segment_duration": self.segment_duration,
            "seed": self.seed,
            "ladder": list(self.ladder),
            "strict_formulas": self.strict_formulas,
            "output_dir": self.output_dir,
            "params": dict(self.params),
            "capacity": capacity,
            "clients": [
                {"id": c.id, "join_time": c.join_time, "policy": c.policy, "segments": c.segments,
                 "params": dict(c.params), "seed": c.seed}
                for c in self.clients
            ],
        }


def _require(cond: bool, where: str, message: str) -> None:
    if not cond:
        raise ConfigParseError(f"{where}: {message}")


def _number(value: Any, where: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), where, "expected a number")
    return float(value)


def _integer(value: Any, where: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), where, "expected an integer")
    return int(value)


def _mapping(value: Any, where: str) -> tuple[tuple[str, Any], ...]:
    if value is None:
        return ()
    _require(isinstance(value, Mapping), where, "expected a mapping")
    return tuple(sorted((str(k), v) for k, v in value.items()))


def _unknown(data: Mapping, allowed: set[str], where: str) -> None:
    extra = sorted(set(data) - allowed)
    _require(not extra, where, f"unknown keys {extra}")


def config_from_dict(data: Any, base_dir: Optional[str] = None) -> ScenarioConfig:
    """Build a config from parsed YAML, rejecting anything off-schema."""
    _require(isinstance(data, Mapping), "scenario", "top level must be a mapping")
    _unknown(data, _TOP_KEYS, "scenario")
    _require("capacity" in data, "capacity", "missing")
    _require("clients" in data, "clients", "missing")

    cap = data["capacity"]
    _require(isinstance(cap, Mapping), "capacity", "expected a mapping")
    _unknown(cap, _CAPACITY_KEYS, "capacity")
    breakpoints: tuple[tuple[float, float], ...] = ()
    if "breakpoints" in cap:
        raw = cap["breakpoints"]
        _require(isinstance(raw, list), "capacity.breakpoints", "expected a list of [time, kbps] pairs")
        pts = []
        for i, p in enumerate(raw):
            _require(isinstance(p, list) and len(p) == 2, f"capacity.breakpoints[{i}]", "expected [time, kbps]")
            pts.append((_number(p[0], f"capacity.breakpoints[{i}]"), _number(p[1], f"capacity.breakpoints[{i}]")))
        breakpoints = tuple(pts)
    trace = cap.get("trace")
    _require(trace is None or isinstance(trace, str), "capacity.trace", "expected a path")
    end = cap.get("end")
    end = None if end is None else _number(end, "capacity.end")

    raw_clients = data["clients"]
    _require(isinstance(raw_clients, list), "clients", "expected a list")
    clients = []
    for i, c in enumerate(raw_clients):
        where = f"clients[{i}]"
        _require(isinstance(c, Mapping), where, "expected a mapping")
        _unknown(c, _CLIENT_KEYS, where)
        _require("id" in c, where, "missing id")
        segments = c.get("segments")
        seed = c.get("seed")
        policy = c.get("policy", "fairshare")
        _require(isinstance(policy, str), f"{where}.policy", "expected a name")
        clients.append(ClientConfig(
            id=_integer(c["id"], f"{where}.id"),
            join_time=_number(c.get("join_time", 0.0), f"{where}.join_time"),
            policy=policy,
            segments=None if segments is None else _integer(segments, f"{where}.segments"),
            params=_mapping(c.get("params"), f"{where}.params"),
            seed=None if seed is None else _integer(seed, f"{where}.seed"),
        ))

    ladder = data.get("ladder", list(DEFAULT_LADDER_KBPS))
    _require(isinstance(ladder, list), "ladder", "expected a list of kbps values")
    strict = data.get("strict_formulas", False)
    _require(isinstance(strict, bool), "strict_formulas", "expected true or false")
    name = data.get("name", "scenario")
    output_dir = data.get("output_dir", "out")
    return ScenarioConfig(
        clients=tuple(clients),
        breakpoints=breakpoints,
        trace=trace,
        capacity_end=end,
        name=str(name),
        horizon=_number(data.get("horizon", 300.0), "horizon"),
        segment_duration=_number(data.get("segment_duration", DEFAULT_SEGMENT_DURATION), "segment_duration"),
        seed=_integer(data.get("seed", 0), "seed"),
        ladder=tuple(_number(v, "ladder") for v in ladder),
        strict_formulas=strict,
        output_dir=str(output_dir),
        params=_mapping(data.get("params"), "params"),
        base_dir=base_dir,
    )


def parse_config(text: str, base_dir: Optional[str] = None) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"invalid YAML: {exc}") from None
    return config_from_dict(data, base_dir)


def bundled_scenarios() -> list[str]:
    root = resources.files("dashsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config_path(name_or_path: str) -> Path:
    """A filesystem path if one exists, otherwise a bundled scenario name."""
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = resources.files("dashsim") / "scenarios" / f"{name_or_path}.yaml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigParseError(
        f"{name_or_path}: no such file or bundled scenario (bundled: {', '.join(bundled_scenarios())})"
    )


def load_config(name_or_path: str) -> ScenarioConfig:
    path = resolve_config_path(name_or_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path.parent))


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None)
