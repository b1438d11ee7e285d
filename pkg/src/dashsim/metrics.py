"""Inefficiency, instability and unfairness of a streaming session.

``strict`` switches to literal alternative readings: inefficiency
``|sum(v) / b|`` and instability weights ``k - d`` with ``k`` the newest
segment index. They are kept for auditing only; the defaults measure the
gap from full use of the link and a recency-weighted switch magnitude.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence, TextIO

from .core import UndefinedMetricError
from .netsim import CapacitySchedule, SessionLog

DEFAULT_WINDOW = 10


def inefficiency(bitrates: Sequence[float], capacity: float, strict: bool = False) -> float:
    if not capacity > 0:
        raise UndefinedMetricError("capacity must be positive")
    ratio = math.fsum(bitrates) / capacity
    return abs(ratio) if strict else abs(1.0 - ratio)


def instability_window(
    bitrates: Sequence[float], d0: int = DEFAULT_WINDOW, strict: bool = False, k: Optional[int] = None
) -> tuple[float, bool]:
    """Weighted recent switching of one client, plus a flag for a short window.

    ``bitrates`` runs oldest to newest. Only the newest ``d0 + 1`` values
    are used. Weights are ``d0 - d`` for a switch ``d`` segments back, or
    ``k - d`` in strict mode where ``k`` is the newest segment index.
    """
    if len(bitrates) < 2:
        raise UndefinedMetricError("instability needs at least two bitrates")
    if d0 < 2:
        # with d0 = 1 every denominator weight is zero
        raise ValueError("window must span at least two segments")
    window = list(bitrates[-(d0 + 1):])
    m = min(d0, len(window) - 1)
    if strict:
        newest = len(bitrates) - 1 if k is None else k
        weight = lambda d: newest - d  # noqa: E731
    else:
        weight = lambda d: d0 - d  # noqa: E731
    v = lambda d: window[-1 - d]  # noqa: E731
    num = math.fsum(abs(v(d) - v(d + 1)) * weight(d) for d in range(m))
    den = math.fsum(v(d) * weight(d) for d in range(1, m + 1))
    if den == 0.0:
        if num == 0.0:
            return 0.0, m < d0
        raise UndefinedMetricError("instability weights sum to zero over this window")
    return num / den, m < d0


def instability(
    bitrates: Sequence[float], d0: int = DEFAULT_WINDOW, strict: bool = False, k: Optional[int] = None
) -> float:
    return instability_window(bitrates, d0, strict, k)[0]


def jain_index(values: Sequence[float]) -> float:
    if not values:
        raise UndefinedMetricError("Jain index of an empty set")
    if any(x < 0 for x in values):
        raise ValueError("Jain index needs nonnegative values")
    sq = math.fsum(x * x for x in values)
    if sq == 0.0:
        raise UndefinedMetricError("Jain index of all-zero values")
    s = math.fsum(values)
    return min(s * s / (len(values) * sq), 1.0)


def unfairness(values: Sequence[float]) -> float:
    """``sqrt(1 - jain)``, with ``1 - jain`` computed from deviations so equal rates give exactly 0."""
    jain_index(values)
    # pvariance works in exact rationals, so identical rates give exactly zero
    dev = len(values) * statistics.pvariance(values)
    return math.sqrt(min(dev / math.fsum(x * x for x in values), 1.0))


@dataclass(frozen=True)
class EpochMetrics:
    time: float
    capacity_kbps: float
    n_active: int
    aggregate_kbps: float
    inefficiency: float
    instability: float
    unfairness: float  # NaN with fewer than two active clients


EPOCH_COLUMNS = tuple(f.name for f in fields(EpochMetrics))


@dataclass
class MetricsReport:
    epochs: list[EpochMetrics]
    mean_inefficiency: float
    mean_instability: float
    mean_unfairness: float
    instability_by_client: dict[int, float]
    mean_bitrate_by_client: dict[int, float]
    underflow_events: int
    overflow_events: int
    conservation_error: float
    strict_formulas: bool = False
    extra: dict[str, str] = field(default_factory=dict)

    def summary(self) -> dict[str, str]:
        out = {
            "mean_inefficiency": _num(self.mean_inefficiency),
            "mean_instability": _num(self.mean_instability),
            "mean_unfairness": _num(self.mean_unfairness),
            "underflow_events": str(self.underflow_events),
            "overflow_events": str(self.overflow_events),
            "conservation_error": _num(self.conservation_error),
            "strict_formulas": "1" if self.strict_formulas else "0",
            "epochs": str(len(self.epochs)),
        }
        for cid in sorted(self.mean_bitrate_by_client):
            out[f"client_{cid}_mean_bitrate_kbps"] = _num(self.mean_bitrate_by_client[cid])
        for cid in sorted(self.instability_by_client):
            out[f"client_{cid}_mean_instability"] = _num(self.instability_by_client[cid])
        out.update(self.extra)
        return out

    def write_summary(self, out: TextIO) -> None:
        for k, v in self.summary().items():
            out.write(f"{k} = {v}\n")

    def write_csv(self, out: TextIO) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(EPOCH_COLUMNS)
        for e in self.epochs:
            w.writerow([_num(x) if isinstance(x, float) else str(x) for x in asdict(e).values()])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def _weighted_mean(values: Sequence[float], weights: Sequence[float]) -> float:
    pairs = [(v, w) for v, w in zip(values, weights) if not math.isnan(v)]
    if not pairs:
        return math.nan
    total = math.fsum(w for _, w in pairs)
    if total <= 0.0:
        return math.fsum(v for v, _ in pairs) / len(pairs)
    return math.fsum(v * w for v, w in pairs) / total


def summarize(
    log: SessionLog,
    schedule: Optional[CapacitySchedule] = None,
    d0: int = DEFAULT_WINDOW,
    strict: bool = False,
) -> MetricsReport:
    """Sample every metric at each segment-completion epoch.

    At an epoch each active client contributes the bitrate of its most
    recently completed segment. A client is active from its first to its
    last completion (or to the end of the run if it never finished).
    Scalar means weight each sample by the time until the next epoch.
    """
    schedule = schedule or log.schedule
    recs = {cid: rs for cid, rs in log.records.items() if rs}
    if not recs:
        raise UndefinedMetricError("session log has no completed segments")
    spans = {}
    for cid, rs in recs.items():
        finished = log.clients[cid].finish_time is not None
        spans[cid] = (rs[0].t_end, rs[-1].t_end if finished else log.end_time)
    times = sorted({r.t_end for rs in recs.values() for r in rs})
    cursor = {cid: -1 for cid in recs}
    epochs: list[EpochMetrics] = []
    per_client: dict[int, list[tuple[int, float]]] = {cid: [] for cid in recs}
    for i, t in enumerate(times):
        rates = []
        inst = []
        for cid, rs in recs.items():
            j = cursor[cid]
            while j + 1 < len(rs) and rs[j + 1].t_end <= t:
                j += 1
            cursor[cid] = j
            lo, hi = spans[cid]
            if j < 0 or not lo <= t <= hi:
                continue
            rates.append(rs[j].bitrate_kbps)
            if j >= 1:
                history = [r.bitrate_kbps for r in rs[max(0, j - d0): j + 1]]
                try:
                    val = instability(history, d0, strict, k=rs[j].segment)
                except UndefinedMetricError:
                    val = math.nan
                inst.append(val)
                per_client[cid].append((i, val))
        cap = schedule.capacity_at(t)
        ok_inst = [x for x in inst if not math.isnan(x)]
        epochs.append(EpochMetrics(
            time=t,
            capacity_kbps=cap,
            n_active=len(rates),
            aggregate_kbps=math.fsum(rates),
            inefficiency=inefficiency(rates, cap, strict) if rates else math.nan,
            instability=math.fsum(ok_inst) / len(ok_inst) if ok_inst else math.nan,
            unfairness=unfairness(rates) if len(rates) >= 2 else math.nan,
        ))
    weights = [b - a for a, b in zip(times, times[1:])] + [max(log.end_time - times[-1], 0.0)]
    solo = [w if e.n_active >= 1 else 0.0 for e, w in zip(epochs, weights)]
    multi = [w if e.n_active >= 2 else 0.0 for e, w in zip(epochs, weights)]
    multi_vals = [e.unfairness if e.n_active >= 2 else math.nan for e in epochs]
    by_client = {
        cid: _weighted_mean([v for _, v in pts], [weights[i] for i, _ in pts])
        for cid, pts in per_client.items()
    }
    return MetricsReport(
        epochs=epochs,
        mean_inefficiency=_weighted_mean([e.inefficiency for e in epochs], solo),
        mean_instability=_weighted_mean([e.instability for e in epochs], solo),
        mean_unfairness=_weighted_mean(multi_vals, multi),
        instability_by_client=by_client,
        mean_bitrate_by_client={
            cid: math.fsum(r.bitrate_kbps for r in rs) / len(rs) for cid, rs in recs.items()
        },
        underflow_events=log.underflow_events,
        overflow_events=log.overflow_events,
        conservation_error=log.conservation_error,
        strict_formulas=strict,
    )
