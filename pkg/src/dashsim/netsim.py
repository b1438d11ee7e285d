"""Discrete-event fluid simulation of DASH clients sharing one bottleneck.

Every flow that is downloading at a given instant receives an equal share
of the instantaneous capacity. There is no packet loss, slow start or RTT:
a flow's progress is the integral of its share. Idle periods (sleeping
before a request, or having left the session) are OFF periods, during
which the remaining flows split the capacity between themselves.
"""

from __future__ import annotations

import bisect
import csv
import heapq
import io
import math
import re
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, TextIO

from .adapter import Policy, make_policy
from .core import (
    BitrateLadder,
    ClientState,
    DashSimError,
    PolicyParams,
    SimulationHorizonError,
    ValidationError,
    client_stream,
)
from .estimator import EstimatorState, measure_segment_bandwidth, update_estimate
from .prober import ProberState, probe_update

# completions closer than this to another event are treated as simultaneous
TIME_EPS = 1e-9


class TraceParseError(DashSimError, ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class CapacitySchedule:
    """Piecewise-constant, right-continuous bottleneck capacity in kbps.

    ``end`` optionally bounds the schedule; asking for capacity past it is
    a horizon error.
    """

    breakpoints: tuple[tuple[float, float], ...]
    end: Optional[float] = None

    def __post_init__(self) -> None:
        bps = tuple((float(t), float(c)) for t, c in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        if not bps:
            raise ValidationError("capacity", "schedule needs at least one breakpoint")
        if bps[0][0] != 0.0:
            raise ValidationError("capacity", "first breakpoint must be at t=0")
        for (t0, _), (t1, _) in zip(bps, bps[1:]):
            if not t1 > t0:
                raise ValidationError("capacity", f"breakpoint times must increase ({t0} then {t1})")
        for t, c in bps:
            if not c > 0:
                raise ValidationError("capacity", f"capacity at t={t} must be positive")
        if self.end is not None and not self.end > bps[-1][0]:
            raise ValidationError("capacity", "schedule end must follow the last breakpoint")
        object.__setattr__(self, "_times", tuple(t for t, _ in bps))

    @classmethod
    def constant(cls, capacity: float, end: Optional[float] = None) -> "CapacitySchedule":
        return cls(((0.0, capacity),), end)

    @property
    def times(self) -> tuple[float, ...]:
        return self._times  # type: ignore[attr-defined]

    def capacity_at(self, t: float) -> float:
        if self.end is not None and t >= self.end:
            raise SimulationHorizonError(f"capacity schedule ends at {self.end} s, asked for t={t}")
        i = bisect.bisect_right(self.times, t) - 1
        return self.breakpoints[max(i, 0)][1]

    def next_change_after(self, t: float) -> float:
        i = bisect.bisect_right(self.times, t)
        if i < len(self.times):
            return self.times[i]
        return self.end if self.end is not None else math.inf

    def integral(self, t1: float, t2: float) -> float:
        """Kilobits the link can carry over ``[t1, t2]``."""
        total = 0.0
        t = t1
        while t < t2:
            nxt = min(self.next_change_after(t), t2)
            total += self.capacity_at(t) * (nxt - t)
            t = nxt
        return total


def fair_share_progress(active_flows: Iterable[Any], capacity: float, t1: float, t2: float) -> dict[Any, float]:
    """Kilobits delivered to each flow over an interval with fixed capacity and membership."""
    flows = list(active_flows)
    if not flows:
        return {}
    if not t2 > t1:
        raise ValueError("interval must have positive length")
    each = capacity * (t2 - t1) / len(flows)
    return {f: each for f in flows}


def next_completion_time(residual_kb: float, n_active: int, schedule: CapacitySchedule, t_now: float) -> float:
    """Time at which a flow with ``residual_kb`` left finishes, membership held fixed."""
    if not residual_kb > 0:
        raise ValueError("residual must be positive")
    if n_active < 1:
        raise ValueError("the flow itself must be active")
    t = t_now
    left = residual_kb
    while True:
        share = schedule.capacity_at(t) / n_active
        nxt = schedule.next_change_after(t)
        if t + left / share <= nxt:
            return t + left / share
        if math.isinf(nxt):  # pragma: no cover - unreachable, last piece is unbounded
            return t + left / share
        left -= share * (nxt - t)
        t = nxt


@dataclass(frozen=True)
class ClientArrival:
    client_id: int
    join_time: float = 0.0
    policy: str = "fairshare"
    params: Mapping[str, Any] = field(default_factory=dict)
    segments: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.join_time < 0:
            raise ValidationError("join_time", "must be nonnegative")
        if self.segments is not None and self.segments < 1:
            raise ValidationError("segments", "must be at least 1")


# tie-break priority for events at the same instant
EVENT_PRIORITY = {
    "capacity-change": 0,
    "client-join": 1,
    "segment-complete": 2,
    "sleep-end": 3,
    "client-finish": 4,
}


@dataclass(frozen=True, order=True)
class SimEvent:
    time: float
    priority: int
    client_id: int
    kind: str = field(compare=False)

    @classmethod
    def make(cls, time: float, kind: str, client_id: int = -1) -> "SimEvent":
        return cls(time, EVENT_PRIORITY[kind], client_id, kind)


@dataclass(frozen=True)
class SegmentRecord:
    client_id: int
    segment: int
    bitrate_kbps: float
    t_start: float
    t_end: float
    sleep_s: float
    buffer_after_s: float
    measured_kbps: float
    amended_kbps: float
    probed_kbps: float
    underflow: bool
    stall_s: float
    overflow: bool
    solo_s: float
    zone: str


SESSION_COLUMNS = tuple(f.name for f in fields(SegmentRecord))


@dataclass
class ClientSummary:
    client_id: int
    policy: str
    join_time: float
    target_segments: int
    finish_time: Optional[float] = None
    max_buffer: float = 30.0


@dataclass
class SessionLog:
    horizon: float
    segment_duration: float
    ladder: BitrateLadder
    schedule: CapacitySchedule
    clients: dict[int, ClientSummary] = field(default_factory=dict)
    records: dict[int, list[SegmentRecord]] = field(default_factory=dict)
    delivered_kb: float = 0.0
    busy_capacity_kb: float = 0.0
    end_time: float = 0.0

    def all_records(self) -> list[SegmentRecord]:
        out = [r for recs in self.records.values() for r in recs]
        out.sort(key=lambda r: (r.t_end, r.client_id, r.segment))
        return out

    @property
    def conservation_error(self) -> float:
        if self.busy_capacity_kb == 0.0:
            return 0.0
        return abs(self.delivered_kb - self.busy_capacity_kb) / self.busy_capacity_kb

    @property
    def underflow_events(self) -> int:
        return sum(r.underflow for recs in self.records.values() for r in recs)

    @property
    def overflow_events(self) -> int:
        return sum(r.overflow for recs in self.records.values() for r in recs)

    def capacity_timeline(self) -> list[tuple[float, float]]:
        return [(t, c) for t, c in self.schedule.breakpoints if t < self.horizon]

    def write_csv(self, out: TextIO) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(SESSION_COLUMNS)
        for rec in self.all_records():
            w.writerow([_fmt(v) for v in astuple(rec)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_session_csv(source: str | Path | TextIO) -> list[dict[str, Any]]:
    """Parse a sessions CSV back into typed rows."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_session_csv(fh)
    types = {f.name: f.type for f in fields(SegmentRecord)}
    rows = []
    for raw in csv.DictReader(source):
        row: dict[str, Any] = {}
        for k, v in raw.items():
            t = types[k]
            if t == "int":
                row[k] = int(v)
            elif t == "bool":
                row[k] = v == "1"
            elif t == "float":
                row[k] = float(v)
            else:
                row[k] = v
        rows.append(row)
    return rows


_SPLIT = re.compile(r"[,\s;]+")


def load_trace(path: str | Path, end: Optional[float] = None) -> CapacitySchedule:
    """Read a two-column ``time_s, capacity_kbps`` trace.

    Blank lines and ``#`` comments are skipped; a non-numeric first data
    line is taken as a header.
    """
    with open(path) as fh:
        return parse_trace(fh.read(), end=end)


def parse_trace(text: str, end: Optional[float] = None) -> CapacitySchedule:
    points: list[tuple[float, float]] = []
    seen_data = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        cols = [c for c in _SPLIT.split(line) if c]
        try:
            t, c = float(cols[0]), float(cols[1])
        except (ValueError, IndexError):
            if not seen_data and not points:
                seen_data = True
                continue
            raise TraceParseError(lineno, f"expected two numeric columns, got {line!r}") from None
        seen_data = True
        if len(cols) > 2:
            raise TraceParseError(lineno, f"expected two columns, got {len(cols)}")
        if not c > 0:
            raise TraceParseError(lineno, f"capacity must be positive, got {c}")
        if points and not t > points[-1][0]:
            raise TraceParseError(lineno, f"time {t} does not follow {points[-1][0]}")
        if not points and t != 0.0:
            raise TraceParseError(lineno, "trace must start at t=0")
        points.append((t, c))
    if not points:
        raise TraceParseError(0, "trace contains no data")
    return CapacitySchedule(tuple(points), end)


class _Client:
    """Mutable per-client simulation bookkeeping."""

    def __init__(self, arrival: ClientArrival, policy: Policy, params: PolicyParams,
                 seed: int, tau: float, target: int):
        self.arrival = arrival
        self.id = arrival.client_id
        self.policy = policy
        self.params = params
        self.tau = tau
        self.target = target
        stream_seed = seed if arrival.seed is None else arrival.seed
        self.state = ClientState(segment_duration=tau, rng=client_stream(stream_seed, arrival.client_id))
        self.estimator = EstimatorState()
        self.prober = ProberState()
        self.downloading = False
        self.residual = 0.0
        self.bitrate = 0.0
        self.t_start = 0.0
        self.sleep = 0.0
        self.zone = ""
        self.solo = 0.0
        self.playing = False
        self.decided_at = 0.0
        self.done = 0
        self.finished = False


def run_scenario(
    schedule: CapacitySchedule,
    arrivals: Sequence[ClientArrival],
    ladder: BitrateLadder,
    horizon: float,
    seed: int = 0,
    params: Optional[PolicyParams] = None,
    segment_duration: float = 2.0,
    max_events: int = 10_000_000,
) -> SessionLog:
    """Run every client until it has fetched its segments or ``horizon`` is reached.

    Downloads still in flight at the horizon are dropped from the log but
    counted for conservation accounting.
    """
    if not horizon > 0:
        raise ValidationError("horizon", "must be positive")
    if not segment_duration > 0:
        raise ValidationError("segment_duration", "must be positive")
    if schedule.end is not None and horizon > schedule.end:
        raise SimulationHorizonError(f"horizon {horizon} s outlasts the capacity schedule ({schedule.end} s)")
    ids = [a.client_id for a in arrivals]
    if len(set(ids)) != len(ids):
        raise ValidationError("clients", "client ids must be unique")
    base = params if params is not None else PolicyParams()
    tau = segment_duration
    default_target = max(1, int(round(horizon / tau)))

    log = SessionLog(horizon=horizon, segment_duration=tau, ladder=ladder, schedule=schedule)
    clients: dict[int, _Client] = {}
    heap: list[SimEvent] = []
    for t, _ in schedule.breakpoints[1:]:
        if t <= horizon:
            heapq.heappush(heap, SimEvent.make(t, "capacity-change"))
    for a in arrivals:
        p = base.with_overrides(dict(a.params))
        c = _Client(a, make_policy(a.policy, p, ladder), p, seed, tau, a.segments or default_target)
        clients[a.client_id] = c
        log.clients[a.client_id] = ClientSummary(a.client_id, a.policy, a.join_time, c.target,
                                                 max_buffer=p.q_max_buffer)
        log.records[a.client_id] = []
        if a.join_time <= horizon:
            heapq.heappush(heap, SimEvent.make(a.join_time, "client-join", a.client_id))

    completed_kb = 0.0
    busy_spans: list[list[float]] = []
    t = 0.0

    def start_download(c: _Client, now: float) -> None:
        c.downloading = True
        c.t_start = now
        c.residual = c.bitrate * tau
        c.solo = 0.0

    def apply_decision(c: _Client, now: float, decision) -> None:
        if decision.next_bitrate not in ladder:
            raise DashSimError(f"policy {c.policy.name} chose {decision.next_bitrate}, not a ladder rate")
        if decision.sleep < 0:
            raise DashSimError(f"policy {c.policy.name} returned a negative sleep")
        c.bitrate = decision.next_bitrate
        c.sleep = decision.sleep
        c.zone = decision.zone
        c.decided_at = now
        if decision.sleep > 0:
            heapq.heappush(heap, SimEvent.make(now + decision.sleep, "sleep-end", c.id))
        else:
            start_download(c, now)

    def complete(c: _Client, now: float) -> None:
        nonlocal completed_kb
        c.downloading = False
        c.residual = 0.0
        completed_kb += c.bitrate * tau
        p = c.params
        measured = measure_segment_bandwidth(c.bitrate, tau, c.t_start, now)
        amended = update_estimate(c.estimator, measured, p.u0)
        probed = probe_update(c.prober, amended, p.alpha, p.delta_kbps)
        stall = 0.0
        if c.playing:
            q = c.state.buffer - (now - c.decided_at)
            if q < 0.0:
                stall = -q
                q = 0.0
        else:
            q = 0.0
            c.playing = True
        q += tau
        overflow = q > p.q_max_buffer
        if overflow:
            q = p.q_max_buffer
        st = c.state
        st.estimated_bw = measured
        st.smoothed_bw = amended
        st.probed_bw = probed
        st.buffer = q
        log.records[c.id].append(SegmentRecord(
            client_id=c.id,
            segment=st.next_index,
            bitrate_kbps=c.bitrate,
            t_start=c.t_start,
            t_end=now,
            sleep_s=c.sleep,
            buffer_after_s=q,
            measured_kbps=measured,
            amended_kbps=amended,
            probed_kbps=probed,
            underflow=stall > 0.0,
            stall_s=stall,
            overflow=overflow,
            solo_s=c.solo,
            zone=c.zone,
        ))
        st.record_bitrate(c.bitrate)
        c.done += 1
        if c.done >= c.target:
            heapq.heappush(heap, SimEvent.make(now, "client-finish", c.id))
            return
        apply_decision(c, now, c.policy.decide(st))

    events = 0
    while True:
        events += 1
        if events > max_events:
            raise SimulationHorizonError(f"exceeded {max_events} events before reaching the horizon")
        active = [c for c in clients.values() if c.downloading]
        n = len(active)
        t_static = heap[0].time if heap else math.inf
        share = 0.0
        completions: list[tuple[float, _Client]] = []
        if n:
            share = schedule.capacity_at(t) / n
            completions = [(t + c.residual / share, c) for c in active]
        t_next = min([t_static] + [tc for tc, _ in completions])
        if math.isinf(t_next) or t_next > horizon:
            t_next = horizon
            stop = True
        else:
            stop = False
        dt = t_next - t
        if n and dt > 0:
            for c in active:
                c.residual -= share * dt
                if n == 1:
                    c.solo += dt
            if busy_spans and busy_spans[-1][1] == t:
                busy_spans[-1][1] = t_next
            else:
                busy_spans.append([t, t_next])
        t = t_next
        if stop:
            break

        candidates: list[tuple[tuple[int, int], str, Optional[_Client]]] = []
        if heap and heap[0].time <= t + TIME_EPS:
            ev = heap[0]
            candidates.append(((ev.priority, ev.client_id), "static", None))
        for tc, c in completions:
            if tc <= t + TIME_EPS:
                candidates.append(((EVENT_PRIORITY["segment-complete"], c.id), "complete", c))
        candidates.sort(key=lambda x: x[0])
        _, src, who = candidates[0]
        if src == "complete":
            complete(who, t)
            continue
        ev = heapq.heappop(heap)
        c = clients.get(ev.client_id)
        if ev.kind == "client-join":
            apply_decision(c, t, c.policy.first_decision(c.state))
        elif ev.kind == "sleep-end":
            start_download(c, t)
        elif ev.kind == "client-finish":
            c.finished = True
            log.clients[c.id].finish_time = t

    in_flight = sum(c.bitrate * tau - c.residual for c in clients.values() if c.downloading)
    log.delivered_kb = completed_kb + in_flight
    log.busy_capacity_kb = math.fsum(schedule.integral(a, b) for a, b in busy_spans)
    log.end_time = t
    return log


__all__ = [
    "CapacitySchedule", "ClientArrival", "SimEvent", "SegmentRecord", "SessionLog", "ClientSummary",
    "SESSION_COLUMNS", "EVENT_PRIORITY", "TraceParseError", "fair_share_progress",
    "next_completion_time", "run_scenario", "load_trace", "parse_trace", "read_session_csv",
]
