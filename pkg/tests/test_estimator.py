import math

import pytest

from dashsim.core import InvalidMeasurementError
from dashsim.estimator import EstimatorState, measure_segment_bandwidth, smoothing_weight, update_estimate


@pytest.mark.parametrize("v, elapsed, expected", [(2350, 2.0, 2350.0), (3000, 4.0, 1500.0), (235, 0.1, 4700.0)])
def test_measurement(v, elapsed, expected):
    assert measure_segment_bandwidth(v, 2.0, 10.0, 10.0 + elapsed) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("t_end", [10.0, 9.0])
def test_non_positive_elapsed(t_end):
    with pytest.raises(InvalidMeasurementError):
        measure_segment_bandwidth(1000, 2.0, 10.0, t_end)


@pytest.mark.parametrize("amended, expected", [
    (500.0, 0.5),
    (1000.0, 1.0 / (1.0 + math.exp(-0.5))),
    (0.0, 1.0 / (1.0 + math.exp(0.5))),
])
def test_weight(amended, expected):
    assert smoothing_weight(1000.0, amended, 0.5) == pytest.approx(expected, rel=1e-12)


def test_weight_values_frozen():
    assert smoothing_weight(1000.0, 1000.0, 0.5) == pytest.approx(0.6224593312, abs=1e-10)
    assert smoothing_weight(1000.0, 0.0, 0.5) == pytest.approx(0.3775406688, abs=1e-10)


def test_weight_survives_huge_disagreement():
    w = smoothing_weight(1.0, 1e12, 0.5)
    assert 0.0 <= w < 1e-100


def test_first_measurement_seeds():
    st = EstimatorState()
    assert update_estimate(st, 2000.0, 0.5) == 2000.0


def test_fixed_point():
    st = EstimatorState(1000.0, 1000.0, True)
    assert update_estimate(st, 5000.0, 0.5) == 1000.0


def test_one_step_lag():
    st = EstimatorState(2000.0, 1000.0, True)
    assert update_estimate(st, 123.0, 0.5) == pytest.approx(1500.0, rel=1e-12)
    assert st.last_measured == 123.0


def test_rejects_zero_measurement():
    with pytest.raises(InvalidMeasurementError):
        update_estimate(EstimatorState(), 0.0, 0.5)
