"""Per-client bitrate decisions.

The fair-share controller splits the buffer into three zones. Below ``q_low``
and above ``q_high`` it picks the ladder rate just under / just over the
latest measured throughput. In between it draws the next bitrate at random,
weighting every candidate by buffer pressure, quality, switch amplitude and
the length of the current run at one bitrate. Sleeping before a request is
only allowed once the top rate is selected.

Three simplified baselines share the same plumbing. They are rough
approximations written for comparison only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    BitrateLadder,
    ClientState,
    PolicyParams,
    StalledDownloadError,
    ValidationError,
    ladder_ceiling,
    ladder_floor,
)


@dataclass(frozen=True)
class AdaptationDecision:
    next_bitrate: float
    sleep: float = 0.0
    zone: str = ""


@dataclass(frozen=True)
class CandidateProbability:
    candidate: float
    raw_score: float
    normalized_prob: float


def sigmoid(x: float, x_min: float, x_max: float, x0: float) -> float:
    if x < x_min:
        return 0.0
    if x > x_max:
        return 1.0
    return 1.0 / (1.0 + math.exp(x0 - x))


def sgn(x: float) -> int:
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0


def candidate_score(
    v_k: float,
    v_prev: float,
    q_prev: float,
    n_prev: int,
    params: PolicyParams,
    ladder: BitrateLadder,
) -> float:
    """Unnormalized preference for switching from ``v_prev`` to ``v_k``."""
    if v_k not in ladder or v_prev not in ladder:
        raise ValueError(f"bitrates must be ladder members, got {v_k}, {v_prev}")
    s = sgn(v_k - v_prev)
    f_q = sigmoid(q_prev, params.q_low, params.q_high, params.q_ref)
    c1 = (1 + s) / 2 * f_q + (1 - s) / 2 * (1.0 - f_q)
    span = math.log(ladder.v_max - ladder.v_min + params.epsilon)
    if span == 0.0:
        # single-rate ladder: quality and amplitude terms are degenerate
        c2 = c3 = 1.0
    else:
        c2 = math.log(v_k - ladder.v_min + params.epsilon) / span
        c3 = 1.0 - math.log(abs(v_k - v_prev) + params.epsilon) / span
    c4 = sigmoid(n_prev, params.n_min, params.n_max, params.n0)
    return c1 * c2 * c3 * c4


def candidate_set(ladder: BitrateLadder, probed_bw: float, v_prev: float) -> list[float]:
    """Every rate up to the first one at or above the probed bandwidth.

    Holding ``v_prev`` is possible only while it stays inside that bound; a
    rate above it is left behind once the probe backs off.
    """
    top = ladder_ceiling(ladder, probed_bw)
    if top is None:
        top = ladder.v_max
    return [r for r in ladder.rates if r <= top]


def candidate_distribution(
    state: ClientState, params: PolicyParams, ladder: BitrateLadder, probed_bw: float
) -> list[CandidateProbability]:
    """Selection probability of every candidate for the next segment.

    In ``normalized`` mode the scores are rescaled to sum to one. In
    ``accept-reject`` mode each switch target keeps its score as an absolute
    probability and holding the current rate takes whatever mass is left;
    the switch scores are only rescaled when they sum past one, or when the
    current rate is not a candidate.
    """
    v_prev = state.last_bitrate
    cands = candidate_set(ladder, probed_bw, v_prev)
    scores = [
        candidate_score(v, v_prev, state.buffer, state.run_length, params, ladder) for v in cands
    ]
    if params.selection == "normalized" or v_prev not in cands:
        pool = scores
    else:
        pool = [0.0 if v == v_prev else s for v, s in zip(cands, scores)]
    total = math.fsum(pool)
    if total <= 0.0:
        fallback = v_prev if v_prev in cands else cands[-1]
        return [CandidateProbability(v, s, 1.0 if v == fallback else 0.0) for v, s in zip(cands, scores)]
    if params.selection == "normalized" or v_prev not in cands or total > 1.0:
        return [CandidateProbability(v, s, p / total) for v, s, p in zip(cands, scores, pool)]
    return [
        CandidateProbability(v, s, 1.0 - total if v == v_prev else p)
        for v, s, p in zip(cands, scores, pool)
    ]


def probabilistic_select(
    state: ClientState, params: PolicyParams, ladder: BitrateLadder, probed_bw: float
) -> float:
    """Draw the next bitrate from :func:`candidate_distribution`."""
    dist = candidate_distribution(state, params, ladder, probed_bw)
    assert dist, "candidate set always contains the lowest rate"
    if len(dist) == 1:
        return dist[0].candidate
    u = state.rng.random()
    acc = 0.0
    chosen = None
    for c in dist:
        if c.normalized_prob <= 0.0:
            continue
        chosen = c.candidate
        acc += c.normalized_prob
        if u < acc:
            break
    return chosen


def threshold_select(
    state: ClientState, bw: float, params: PolicyParams, ladder: BitrateLadder
) -> float:
    """Underflow / overflow guard used outside the ``[q_low, q_high]`` band.

    A low buffer takes the highest rate strictly below ``bw`` and a high
    buffer the lowest rate strictly above it, so the buffer is always
    pushed back toward the band. A rate equal to the estimate would download
    in exactly real time and leave the buffer where it is.
    """
    if state.buffer < params.q_low:
        v = ladder_floor(ladder, bw, strict=True)
        return ladder.v_min if v is None else v
    if state.buffer > params.q_high:
        v = ladder_ceiling(ladder, bw, strict=True)
        return ladder.v_max if v is None else v
    raise ValueError(f"buffer {state.buffer} is inside the probabilistic band")


def advance_buffer(q_start: float, tau: float, v: float, b: float, tau_s: float, q_cap: float) -> float:
    """Buffered video time after sleeping ``tau_s`` then fetching one segment at ``b`` kbps."""
    if not b > 0:
        raise StalledDownloadError("download throughput is zero")
    q = q_start + tau - (v / b) * tau - tau_s
    return min(max(q, 0.0), q_cap)


def _predicted_buffer(q: float, tau: float, v: float, bw: float) -> float:
    if bw <= 0:
        return q
    return q + tau * (1.0 - v / bw)


def decide_next(state: ClientState, params: PolicyParams, ladder: BitrateLadder) -> AdaptationDecision:
    """One fair-share decision; estimator and prober must already be updated.

    The guard zones react to the latest measurement rather than the smoothed
    estimate, which lags a capacity drop by several segments.
    """
    q = state.buffer
    if q < params.q_low or q > params.q_high:
        v = threshold_select(state, state.estimated_bw, params, ladder)
        zone = "low" if q < params.q_low else "high"
    else:
        v = probabilistic_select(state, params, ladder, state.probed_bw)
        zone = "prob"
    sleep = 0.0
    if v == ladder.v_max:
        excess = _predicted_buffer(q, state.segment_duration, v, state.smoothed_bw) - params.q_max_buffer
        sleep = max(excess, 0.0)
    return AdaptationDecision(v, sleep, zone)


def baseline_rate_policy(
    state: ClientState, ladder: BitrateLadder, target_buffer: float = 15.0
) -> AdaptationDecision:
    """Highest rate under the amended estimate; sleeps off any buffer above target."""
    v = ladder_floor(ladder, state.smoothed_bw)
    if v is None:
        v = ladder.v_min
    excess = _predicted_buffer(state.buffer, state.segment_duration, v, state.smoothed_bw) - target_buffer
    return AdaptationDecision(v, max(excess, 0.0), "rate")


class Policy:
    """A per-client controller. One instance per client, never shared."""

    name = ""
    approximation = False

    def __init__(self, params: PolicyParams, ladder: BitrateLadder):
        self.params = params
        self.ladder = ladder

    def first_decision(self, state: ClientState) -> AdaptationDecision:
        # no estimate exists yet
        return AdaptationDecision(self.ladder.v_min, 0.0, "startup")

    def decide(self, state: ClientState) -> AdaptationDecision:
        raise NotImplementedError


class FairSharePolicy(Policy):
    name = "fairshare"

    def decide(self, state):
        return decide_next(state, self.params, self.ladder)


class RateBasedPolicy(Policy):
    name = "rate"
    approximation = True
    target_buffer = 15.0

    def decide(self, state):
        return baseline_rate_policy(state, self.ladder, self.target_buffer)


class AIMDPolicy(Policy):
    """Additive-increase / multiplicative-decrease probe, loosely PANDA-shaped."""

    name = "aimd"
    approximation = True

    def __init__(self, params, ladder, kappa: float = 70.0, mu: float = 0.85,
                 margin: float = 0.9, target_buffer: float = 20.0):
        super().__init__(params, ladder)
        self.kappa = kappa
        self.mu = mu
        self.margin = margin
        self.target_buffer = target_buffer
        self.x = 0.0

    def decide(self, state):
        return baseline_aimd_policy(state, self.ladder, self)


def baseline_aimd_policy(state: ClientState, ladder: BitrateLadder, policy: AIMDPolicy) -> AdaptationDecision:
    measured = state.estimated_bw
    if policy.x < measured:
        policy.x += policy.kappa * state.segment_duration
    else:
        policy.x = measured * policy.mu
    v = ladder_floor(ladder, policy.x * policy.margin)
    if v is None:
        v = ladder.v_min
    excess = _predicted_buffer(state.buffer, state.segment_duration, v, measured) - policy.target_buffer
    return AdaptationDecision(v, max(excess, 0.0), "aimd")


class FestiveLikePolicy(Policy):
    """Randomized buffer target with one-step-up gradual switching."""

    name = "festive-like"
    approximation = True
    target_buffer = 15.0
    jitter = 2.0
    safety = 0.85

    def decide(self, state):
        target = self.target_buffer + state.rng.uniform(-self.jitter, self.jitter)
        desired = ladder_floor(self.ladder, self.safety * state.smoothed_bw)
        if desired is None:
            desired = self.ladder.v_min
        v = desired
        prev = state.last_bitrate
        if prev is not None and desired > prev:
            v = self.ladder.rates[self.ladder.index(prev) + 1]
        excess = _predicted_buffer(state.buffer, state.segment_duration, v, state.smoothed_bw) - target
        return AdaptationDecision(v, max(excess, 0.0), "festive")


POLICIES: dict[str, type[Policy]] = {
    cls.name: cls for cls in (FairSharePolicy, RateBasedPolicy, AIMDPolicy, FestiveLikePolicy)
}


def make_policy(name: str, params: PolicyParams, ladder: BitrateLadder) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValidationError("policy", f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    return cls(params, ladder)


def policy_label(name: str) -> str:
    cls = POLICIES[name]
    return f"{name} (approximation)" if cls.approximation else name


__all__ = [
    "AdaptationDecision", "CandidateProbability", "sigmoid", "sgn", "candidate_score",
    "candidate_set", "candidate_distribution", "probabilistic_select", "threshold_select",
    "advance_buffer", "decide_next", "baseline_rate_policy", "baseline_aimd_policy",
    "Policy", "FairSharePolicy", "RateBasedPolicy", "AIMDPolicy", "FestiveLikePolicy",
    "POLICIES", "make_policy", "policy_label",
]

