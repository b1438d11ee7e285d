import pytest

from dashsim.core import (
    DEFAULT_LADDER_KBPS,
    BitrateLadder,
    ClientState,
    PolicyParams,
    SegmentSpec,
    ValidationError,
    client_stream,
    ladder_ceiling,
    ladder_floor,
)

LADDER = BitrateLadder()
SMALL = BitrateLadder((235, 375, 560))


def test_default_ladder_has_eleven_rates():
    assert len(LADDER) == 11
    assert LADDER.v_min == 235.0 and LADDER.v_max == 5800.0
    assert LADDER.rates == DEFAULT_LADDER_KBPS


@pytest.mark.parametrize("bw, expected", [(3000, 3000.0), (100, None), (6000, 5800.0), (3001, 3000.0)])
def test_floor(bw, expected):
    assert ladder_floor(LADDER, bw) == expected


def test_floor_small_ladder():
    assert ladder_floor(SMALL, 400) == 375.0


@pytest.mark.parametrize("bw, expected", [(3000, 3000.0), (6000, None), (100, 235.0), (2999, 3000.0)])
def test_ceiling(bw, expected):
    assert ladder_ceiling(LADDER, bw) == expected


def test_ceiling_small_ladder():
    assert ladder_ceiling(SMALL, 400) == 560.0


def test_strict_variants_skip_exact_rates():
    assert ladder_floor(LADDER, 3000, strict=True) == 2350.0
    assert ladder_ceiling(LADDER, 3000, strict=True) == 3850.0
    # float noise around a rung counts as the rung itself
    assert ladder_floor(LADDER, 3000.0000001, strict=True) == 2350.0
    assert ladder_ceiling(LADDER, 2999.9999999, strict=True) == 3850.0
    assert ladder_floor(LADDER, 235, strict=True) is None


@pytest.mark.parametrize("rates", [(), (0, 100), (300, 200), (100, 100)])
def test_ladder_rejects_bad_rates(rates):
    with pytest.raises(ValidationError):
        BitrateLadder(rates)


def test_policy_defaults():
    p = PolicyParams()
    assert (p.q_low, p.q_high, p.q_max_buffer, p.q_ref) == (5.0, 25.0, 30.0, 15.0)
    assert (p.alpha, p.delta_kbps, p.u0, p.epsilon) == (1.25, 32.0, 0.5, 1.0)
    assert (p.n_min, p.n_max, p.n0) == (1, 15, 10)


@pytest.mark.parametrize("alpha", [1.0, 0.5, 2.01, 3.0])
def test_alpha_outside_range_names_field(alpha):
    with pytest.raises(ValidationError) as exc:
        PolicyParams(alpha=alpha)
    assert exc.value.field == "alpha"


def test_alpha_two_is_allowed():
    assert PolicyParams(alpha=2.0).alpha == 2.0


@pytest.mark.parametrize("kw, field", [
    ({"q_low": 20, "q_high": 10}, "q_ref"),
    ({"q_high": 40}, "q_high"),
    ({"n0": 20}, "n0"),
    ({"selection": "greedy"}, "selection"),
    ({"epsilon": 0.5}, "epsilon"),
    ({"delta_kbps": 0}, "delta_kbps"),
])
def test_invalid_params(kw, field):
    with pytest.raises(ValidationError) as exc:
        PolicyParams(**kw)
    assert exc.value.field == field


def test_overrides_recompute_reference_buffer():
    p = PolicyParams().with_overrides({"q_low": 7, "q_high": 21})
    assert p.q_ref == 14.0
    assert PolicyParams().with_overrides({"q_ref": 12}).q_ref == 12
    with pytest.raises(ValidationError):
        PolicyParams().with_overrides({"nope": 1})


def test_segment_spec():
    assert SegmentSpec(0, 3000.0).size_kb == 6000.0
    with pytest.raises(ValidationError):
        SegmentSpec(0, 3000.0, duration=0)


def test_client_streams_are_independent_and_reproducible():
    a = client_stream(7, 1).random(5)
    b = client_stream(7, 1).random(5)
    c = client_stream(7, 2).random(5)
    assert list(a) == list(b)
    assert list(a) != list(c)


def test_run_length_tracking():
    s = ClientState()
    for v, n in [(235, 1), (235, 2), (375, 1), (375, 2), (375, 3)]:
        s.record_bitrate(v)
        assert s.run_length == n
    assert s.next_index == 5
