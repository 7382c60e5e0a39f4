import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import default_array
from poisloc.errors import ExclusionViolation
from poisloc.geometry import (
    ParameterRectangle,
    PlanePoint,
    SensorArray,
    delay,
    direction_frame,
    i3_determinant,
    validate_identifiability,
)


def test_plane_point_rejects_non_finite():
    with pytest.raises(ValueError):
        PlanePoint(float("nan"), 0.0)
    with pytest.raises(ValueError):
        PlanePoint(0.0, float("inf"))


def test_rectangle_bounds_ordered():
    with pytest.raises(ValueError):
        ParameterRectangle(1.0, -1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        ParameterRectangle(0.0, 1.0, 0.0, 0.0)
    box = ParameterRectangle(-1.0, 1.0, -2.0, 2.0)
    assert box.area == 8.0
    assert box.centroid == PlanePoint(0.0, 0.0)


def test_sensor_array_rejects_duplicates_and_bad_scalars():
    box = ParameterRectangle(-1, 1, -1, 1)
    with pytest.raises(ValueError):
        SensorArray([(0, 5), (0, 5), (5, 0)], 1.0, 1.0, box, 10.0)
    with pytest.raises(ValueError):
        SensorArray([(0, 5), (5, 0)], 1.0, 1.0, box, 10.0)
    with pytest.raises(ValueError):
        SensorArray([(0, 5), (5, 0), (5, 5)], 0.0, 1.0, box, 10.0)


def test_delay_examples(std_array):
    assert delay(std_array, 0, PlanePoint(0.0, 0.0)) == 8.5
    assert delay(std_array, 1, PlanePoint(0.0, 8.5)) == 0.0
    box = ParameterRectangle(-1, 1, -1, 1)
    arr = SensorArray([(0, 0), (5, 0), (0, 5)], 2.0, 0.1, box, 10.0)
    assert delay(arr, 0, PlanePoint(0.3, -0.4)) == pytest.approx(0.25, abs=1e-15)


def test_direction_frame_default(std_array):
    f = direction_frame(std_array, PlanePoint(0.0, 0.0))
    h = math.sqrt(2) / 2
    np.testing.assert_allclose(f.m, [[1, 0], [0, 1], [-h, -h]], atol=1e-15)
    np.testing.assert_allclose(f.m.sum(axis=0), [0.29289321881345254] * 2, atol=1e-12)
    np.testing.assert_allclose(f.rho, std_array.nu * f.tau)


def test_direction_frame_exclusion(std_array):
    with pytest.raises(ExclusionViolation):
        direction_frame(std_array, PlanePoint(0.0, 8.0))


def test_validate_default_passes(std_array, std_model):
    rep = validate_identifiability(std_array, std_model)
    assert rep.ok
    assert [c.name for c in rep.checks] == ["I1", "I2", "I3", "delay_window"]


def test_validate_collinear_fails_i3():
    box = ParameterRectangle(5, 6, 5, 6)
    arr = SensorArray([(0, 0), (1, 1), (2, 2)], 1.0, 0.1, box, 100.0)
    rep = validate_identifiability(arr)
    assert not rep["I3"].passed
    assert i3_determinant((0, 0), (1, 1), (2, 2)) == 0


def test_validate_short_horizon_fails_delay_window():
    rep = validate_identifiability(default_array(horizon=5.0))
    assert not rep["delay_window"].passed
    assert rep["I1"].passed and rep["I3"].passed


def test_validate_warns_for_small_tabulated_signal(std_array):
    from poisloc.signal import SignalModel, Tabulated

    rep = validate_identifiability(std_array, SignalModel(1.0, Tabulated([0, 1, 2], [0.001, 0.5, 1.0])))
    assert rep.ok
    assert any("0.01*lambda0" in w for w in rep.warnings)


def test_validate_rejects_jumpy_table(std_array):
    from poisloc.signal import SignalModel, Tabulated

    knots = np.linspace(0, 1, 11)
    vals = np.where(knots < 0.5, 1.0, 5.0)
    rep = validate_identifiability(std_array, SignalModel(1.0, Tabulated(knots, vals)))
    assert not rep["I2"].passed


def test_i1_fails_when_balls_cover_box():
    box = ParameterRectangle(-1, 1, -1, 1)
    arr = SensorArray([(0, 0), (3, 0), (0, 3)], 1.0, 2.0, box, 10.0)
    assert not validate_identifiability(arr)["I1"].passed


coord = st.floats(-0.99, 0.99, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(coord, coord)
def test_delay_times_speed_is_distance(x, y):
    arr = default_array(nu=1.7)
    tau = arr.delays(x, y)
    d = np.array([math.dist(s, (x, y)) for s in arr.positions])
    assert np.all(tau > 0)
    np.testing.assert_allclose(arr.nu * tau, d, rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 20.0), coord, coord)
def test_direction_frame_scale_consistent(c, x, y):
    a = default_array()
    b = SensorArray([(c * sx, c * sy) for sx, sy in a.positions], c * a.nu, c * a.epsilon,
                    ParameterRectangle(-c, c, -c, c), a.horizon)
    fa = direction_frame(a, PlanePoint(x, y))
    fb = direction_frame(b, PlanePoint(c * x, c * y))
    np.testing.assert_allclose(fa.m, fb.m, atol=1e-12)
    np.testing.assert_allclose(fa.tau, fb.tau, rtol=1e-12)
    np.testing.assert_allclose(np.hypot(fa.m[:, 0], fa.m[:, 1]), 1.0, atol=1e-12)


pt = st.tuples(st.floats(-10, 10), st.floats(-10, 10))


@given(pt, pt, pt)
def test_i3_determinant_relabeling(p1, p2, p3):
    d = i3_determinant(p1, p2, p3)
    tol = 1e-9 * (1 + abs(d))
    assert i3_determinant(p2, p3, p1) == pytest.approx(d, abs=tol)
    assert i3_determinant(p2, p1, p3) == pytest.approx(-d, abs=tol)


def test_more_than_three_sensors_accepted():
    box = ParameterRectangle(-1, 1, -1, 1)
    arr = SensorArray([(8, 0), (0, 8), (-8, 0), (0, -8)], 1.0, 1.0, box, 12.0)
    assert arr.size == 4
    assert validate_identifiability(arr).ok
