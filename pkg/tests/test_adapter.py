import math
from collections import Counter

import numpy as np
import pytest

from oracles import score as oracle_score
from dashsim.adapter import (
    AIMDPolicy,
    FestiveLikePolicy,
    FairSharePolicy,
    advance_buffer,
    baseline_aimd_policy,
    baseline_rate_policy,
    candidate_distribution,
    candidate_score,
    candidate_set,
    decide_next,
    make_policy,
    policy_label,
    probabilistic_select,
    sgn,
    sigmoid,
    threshold_select,
)
from dashsim.core import BitrateLadder, ClientState, PolicyParams, StalledDownloadError, ValidationError, client_stream

LADDER = BitrateLadder()
P = PolicyParams()


def state(**kw):
    kw.setdefault("rng", client_stream(0, 1))
    return ClientState(**kw)


def test_sigmoid_values():
    assert sigmoid(10, 1, 15, 10) == 0.5
    assert sigmoid(0, 1, 15, 10) == 0.0
    assert sigmoid(16, 1, 15, 10) == 1.0
    assert sigmoid(12, 1, 15, 10) == pytest.approx(0.8807970780, abs=1e-10)


def test_sgn():
    assert (sgn(5), sgn(0), sgn(-3)) == (1, 0, -1)


def test_score_hold_at_midpoints():
    v = 3000.0
    c2 = math.log(v - 235 + 1) / math.log(5800 - 235 + 1)
    assert candidate_score(v, v, 15.0, 10, P, LADDER) == pytest.approx(0.25 * c2, rel=1e-12)


def test_score_top_rate_has_full_quality_term():
    # hold at the top rate: only the buffer and run-length halves remain
    assert candidate_score(5800.0, 5800.0, 15.0, 10, P, LADDER) == pytest.approx(0.25, rel=1e-12)


def test_score_against_oracle():
    got = candidate_score(2350.0, 1750.0, 20.0, 12, P, LADDER)
    assert got == pytest.approx(oracle_score(2350.0, 1750.0, 20.0, 12, LADDER.rates), rel=1e-12)
    # hand-evaluated: 0.99331 * 0.88786 * 0.25808 * 0.88080
    assert got == pytest.approx(0.2004778854, rel=1e-9)


def test_score_rejects_off_ladder():
    with pytest.raises(ValueError):
        candidate_score(2000.0, 1750.0, 20.0, 12, P, LADDER)


def test_candidate_set_from_probe():
    assert candidate_set(LADDER, 1600.0, 1050.0) == [235.0, 375.0, 560.0, 750.0, 1050.0, 1750.0]
    assert candidate_set(LADDER, 9000.0, 5800.0) == list(LADDER.rates)
    # the current rate drops out once it exceeds the probe bound
    assert 3850.0 not in candidate_set(LADDER, 2500.0, 3850.0)


def test_single_candidate_is_certain():
    s = state(buffer=15.0, last_bitrate=235.0, run_length=3)
    assert probabilistic_select(s, P, LADDER, 100.0) == 235.0


def test_uniform_scores_give_uniform_draws(monkeypatch):
    import dashsim.adapter as A

    monkeypatch.setattr(A, "candidate_score", lambda *a, **k: 0.3)
    params = PolicyParams(selection="normalized")
    s = state(buffer=15.0, last_bitrate=1050.0, run_length=10, rng=client_stream(123, 0))
    n = 100_000
    counts = Counter(probabilistic_select(s, params, LADDER, 1600.0) for _ in range(n))
    m = 6
    sigma = math.sqrt(n * (1 / m) * (1 - 1 / m))
    assert set(counts) == set(candidate_set(LADDER, 1600.0, 1050.0))
    for c in counts.values():
        assert abs(c - n / m) <= 3 * sigma


def test_accept_reject_keeps_leftover_on_current_rate():
    s = state(buffer=15.0, last_bitrate=1050.0, run_length=10)
    dist = candidate_distribution(s, P, LADDER, 1600.0)
    total = sum(d.normalized_prob for d in dist)
    assert total == pytest.approx(1.0, rel=1e-12)
    hold = next(d for d in dist if d.candidate == 1050.0)
    switches = [d for d in dist if d.candidate != 1050.0]
    for d in switches:
        assert d.normalized_prob == d.raw_score
    assert hold.normalized_prob == pytest.approx(1 - sum(d.raw_score for d in switches))


def test_short_run_almost_never_switches():
    s = state(buffer=15.0, last_bitrate=1050.0, run_length=1)
    dist = candidate_distribution(s, P, LADDER, 1600.0)
    hold = next(d for d in dist if d.candidate == 1050.0)
    assert hold.normalized_prob > 0.999


def test_normalized_mode_sums_scores():
    params = PolicyParams(selection="normalized")
    s = state(buffer=15.0, last_bitrate=1050.0, run_length=10)
    dist = candidate_distribution(s, params, LADDER, 1600.0)
    raw = sum(d.raw_score for d in dist)
    for d in dist:
        assert d.normalized_prob == pytest.approx(d.raw_score / raw)


@pytest.mark.parametrize("q, bw, expected", [(3.0, 2000.0, 1750.0), (28.0, 2000.0, 2350.0), (3.0, 100.0, 235.0),
                                             (28.0, 9000.0, 5800.0), (3.0, 3000.0, 2350.0), (28.0, 3000.0, 3850.0)])
def test_threshold_select(q, bw, expected):
    assert threshold_select(state(buffer=q), bw, P, LADDER) == expected


def test_threshold_select_refuses_band():
    with pytest.raises(ValueError):
        threshold_select(state(buffer=15.0), 2000.0, P, LADDER)


def test_advance_buffer():
    assert advance_buffer(10.0, 2.0, 3000.0, 3000.0, 0.0, 30.0) == 10.0
    assert advance_buffer(10.0, 2.0, 1500.0, 3000.0, 0.0, 30.0) == 11.0
    assert advance_buffer(1.0, 2.0, 4000.0, 1000.0, 0.0, 30.0) == 0.0
    assert advance_buffer(29.0, 2.0, 1000.0, 4000.0, 0.0, 30.0) == 30.0
    with pytest.raises(StalledDownloadError):
        advance_buffer(1.0, 2.0, 4000.0, 0.0, 0.0, 30.0)


def test_zone_dispatch():
    low = decide_next(state(buffer=3.0, estimated_bw=2000.0, smoothed_bw=2000.0, probed_bw=2000.0,
                            last_bitrate=1050.0, run_length=3), P, LADDER)
    assert low.zone == "low" and low.next_bitrate == 1750.0
    mid = decide_next(state(buffer=15.0, estimated_bw=2000.0, smoothed_bw=2000.0, probed_bw=2000.0,
                            last_bitrate=1050.0, run_length=3), P, LADDER)
    assert mid.zone == "prob"


def test_sleep_only_at_top_rate():
    d = decide_next(state(buffer=29.5, estimated_bw=8000.0, smoothed_bw=8000.0, probed_bw=8000.0,
                          last_bitrate=5800.0, run_length=5), P, LADDER)
    assert d.next_bitrate == 5800.0
    assert d.sleep == pytest.approx(0.05, abs=1e-12)
    d = decide_next(state(buffer=29.5, estimated_bw=3000.0, smoothed_bw=3000.0, probed_bw=3000.0,
                          last_bitrate=3000.0, run_length=5), P, LADDER)
    assert d.next_bitrate == 3850.0 and d.sleep == 0.0


def test_rate_baseline():
    d = baseline_rate_policy(state(buffer=10.0, smoothed_bw=2000.0), LADDER)
    assert (d.next_bitrate, d.sleep) == (1750.0, 0.0)
    d = baseline_rate_policy(state(buffer=16.0, smoothed_bw=2000.0), LADDER)
    assert d.sleep == pytest.approx(16.0 + 2.0 * (1 - 1750 / 2000) - 15.0)


def test_aimd_ramps_then_clips():
    pol = AIMDPolicy(P, LADDER)
    s = state(buffer=10.0, estimated_bw=2000.0)
    xs, vs = [], []
    for _ in range(40):
        d = baseline_aimd_policy(s, LADDER, pol)
        xs.append(pol.x)
        vs.append(d.next_bitrate)
    # linear ramp of kappa * tau per step
    assert xs[:3] == [140.0, 280.0, 420.0]
    # the first rate is the bottom rung until x clears it with margin
    assert vs[0] == 235.0
    assert all(v == 235.0 for x, v in zip(xs, vs) if x < 375.0 / 0.9)
    # reaching the measurement triggers a multiplicative cut
    i = next(i for i, x in enumerate(xs) if x >= 2000.0)
    assert xs[i + 1] == pytest.approx(2000.0 * 0.85)


def test_aimd_reacts_to_drop():
    pol = AIMDPolicy(P, LADDER)
    pol.x = 3000.0
    baseline_aimd_policy(state(buffer=10.0, estimated_bw=1000.0), LADDER, pol)
    assert pol.x == pytest.approx(850.0)


def test_festive_like_steps_up_one_rung():
    pol = FestiveLikePolicy(P, LADDER)
    d = pol.decide(state(buffer=10.0, smoothed_bw=8000.0, last_bitrate=1050.0))
    assert d.next_bitrate == 1750.0


def test_registry():
    assert isinstance(make_policy("fairshare", P, LADDER), FairSharePolicy)
    assert policy_label("aimd") == "aimd (approximation)"
    assert policy_label("fairshare") == "fairshare"
    with pytest.raises(ValidationError):
        make_policy("bola", P, LADDER)


def test_first_request_uses_lowest_rate():
    d = make_policy("fairshare", P, LADDER).first_decision(state())
    assert d.next_bitrate == 235.0 and d.sleep == 0.0
