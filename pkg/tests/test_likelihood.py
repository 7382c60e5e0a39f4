import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import constant_model, loglr_right, default_array
from poisloc.errors import ExclusionViolation, FormError
from poisloc.geometry import ParameterRectangle, PlanePoint, SensorArray
from poisloc.likelihood import expected_half_lr, hellinger, log_lr, log_lr_constant, log_lr_field
from poisloc.signal import SignalModel, Tabulated
from poisloc.simulate import EventRecord, SimulationSeed, sample_events

THETA0 = PlanePoint(0.0, 0.0)
C_JUMP = (math.sqrt(3.0) - 1.0) ** 2


def one_sensor_setup():
    # sensor 0 sits 2.5 from the origin; only its record is supplied
    box = ParameterRectangle(-1, 1, -1, 1)
    arr = SensorArray([(2.5, 0.0), (0.0, 9.0), (-9.0, 0.0)], 1.0, 0.5, box, 10.0)
    return arr, [EventRecord(0, [3.0, 5.0])]


def test_single_sensor_example():
    arr, recs = one_sensor_setup()
    m = constant_model(1.0)
    v = log_lr(m, arr, THETA0, recs)
    expected = 2 * math.log(3) - 2 * 7.5
    assert v.left == v.right
    assert v.right == pytest.approx(expected, abs=1e-12)
    assert v.right == pytest.approx(-12.80278, abs=1e-5)
    assert log_lr_constant(m, arr, THETA0, recs).right == pytest.approx(expected, abs=1e-12)


def test_no_events_compensator_only(std_array, std_model):
    recs = [EventRecord(j, []) for j in range(3)]
    v = log_lr(std_model, std_array, THETA0, recs)
    assert v.right == pytest.approx(-9.0, abs=1e-12)
    assert v.left == v.right


def test_event_exactly_at_delay(std_array, std_model):
    recs = [EventRecord(0, [1.0, 8.5, 9.0]), EventRecord(1, []), EventRecord(2, [])]
    v = log_lr(std_model, std_array, THETA0, recs)
    assert v.right - v.left == pytest.approx(math.log(3.0), abs=1e-12)
    c = log_lr_constant(std_model, std_array, THETA0, recs)
    assert c.right - c.left == pytest.approx(math.log(3.0), abs=1e-12)


def test_all_delays_after_events(std_array, std_model):
    recs = [EventRecord(j, [0.5, 1.0]) for j in range(3)]
    theta = PlanePoint(0.3, -0.2)
    taus = std_array.delays(theta.x, theta.y)
    v = log_lr_constant(std_model, std_array, theta, recs)
    assert v.right == pytest.approx(-2.0 * np.sum(10.0 - taus), abs=1e-12)


def test_constant_form_required(std_array):
    m = SignalModel(1.0, Tabulated([0, 1], [2, 2]))
    with pytest.raises(FormError):
        log_lr_constant(m, std_array, THETA0, [])


def test_exclusion_enforced(std_array, std_model):
    with pytest.raises(ExclusionViolation):
        log_lr(std_model, default_array(epsilon=9.0), THETA0, [])
    with pytest.raises(ExclusionViolation):
        hellinger(std_model, default_array(epsilon=9.0), THETA0, THETA0)


def test_closed_form_agrees_with_general_100_pairs(std_array):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(100):
        n = float(rng.choice([1, 5, 20, 100]))
        m = constant_model(n)
        recs = sample_events(m, std_array, THETA0, SimulationSeed(77, i))
        theta = PlanePoint(*rng.uniform(-1, 1, 2))
        a = log_lr(m, std_array, theta, recs)
        b = log_lr_constant(m, std_array, theta, recs)
        worst = max(worst, abs(a.left - b.left), abs(a.right - b.right))
    assert worst < 1e-10


def test_flat_table_matches_constant(std_array):
    # a tabulated signal equal to lambda1 everywhere goes through the general path
    m_c = constant_model(10.0)
    m_t = SignalModel(1.0, Tabulated([0.0, 3.0], [2.0, 2.0]), 10.0)
    recs = sample_events(m_c, std_array, THETA0, SimulationSeed(4))
    rng = np.random.default_rng(0)
    px, py = rng.uniform(-1, 1, (2, 50))
    lc, rc = log_lr_field(m_c, std_array, recs, px, py)
    lt, rt = log_lr_field(m_t, std_array, recs, px, py)
    np.testing.assert_allclose(rt, rc, atol=1e-9)
    np.testing.assert_allclose(lt, lc, atol=1e-9)


def test_field_matches_pointwise(std_array):
    m = SignalModel(1.0, Tabulated([0.0, 0.5, 2.0], [3.0, 1.0, 1.5]), 5.0)
    recs = sample_events(m, std_array, THETA0, SimulationSeed(8))
    rng = np.random.default_rng(1)
    px, py = rng.uniform(-1, 1, (2, 30))
    left, right = log_lr_field(m, std_array, recs, px, py)
    for i in range(px.size):
        v = log_lr(m, std_array, PlanePoint(px[i], py[i]), recs)
        assert v.left == pytest.approx(left[i], abs=1e-9)
        assert v.right == pytest.approx(right[i], abs=1e-9)


def test_field_matches_direct_counting_oracle(std_array):
    m = constant_model(50.0)
    recs = sample_events(m, std_array, THETA0, SimulationSeed(12))
    X, Y = np.meshgrid(np.linspace(-1, 1, 41), np.linspace(-1, 1, 37))
    _, right = log_lr_field(m, std_array, recs, X, Y)
    np.testing.assert_allclose(right, loglr_right(m, std_array, recs, X, Y), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(7.2, 9.8), st.integers(0, 2), st.booleans())
def test_crossing_event_circle_drops_by_log_ratio(t_event, j, tabulated):
    arr = default_array()
    if tabulated:
        m = SignalModel(1.0, Tabulated([0.0, 1.0], [1.5, 0.5]), 3.0)
        jump = math.log1p(1.5)
    else:
        m = constant_model(3.0)
        jump = math.log(3.0)
    # point on the circle |theta_j - theta| = nu * t_event along the ray to the origin
    sx, sy = arr.positions[j]
    d = math.hypot(sx, sy)
    theta = PlanePoint(sx - sx / d * t_event, sy - sy / d * t_event)
    tau = arr.delays(theta.x, theta.y)[j]
    recs = [EventRecord(k, [float(tau)] if k == j else []) for k in range(3)]
    v = log_lr(m, arr, theta, recs)
    assert v.right - v.left == pytest.approx(jump, abs=1e-12)


def test_hellinger_examples():
    arr, _ = one_sensor_setup()
    m = constant_model(1.0)
    a = PlanePoint(0.0, 0.0)
    b = PlanePoint(-0.5, 0.0)  # sensor 0 delay 2.5 -> 3.0; others shift too
    ta = arr.delays(a.x, a.y)
    tb = arr.delays(b.x, b.y)
    assert abs(tb[0] - ta[0]) == pytest.approx(0.5)
    assert hellinger(m, arr, a, b) == pytest.approx(C_JUMP * np.sum(np.abs(ta - tb)), abs=1e-14)
    assert C_JUMP * 0.5 == pytest.approx(0.267949, abs=1e-6)
    assert hellinger(m, arr, a, a) == 0.0
    assert hellinger(constant_model(2.0), arr, a, b) == pytest.approx(2 * hellinger(m, arr, a, b), rel=1e-14)


def test_hellinger_quadrature_matches_closed_form(std_array):
    m_c = constant_model(3.0)
    m_t = SignalModel(1.0, Tabulated([0.0, 4.0], [2.0, 2.0]), 3.0)
    rng = np.random.default_rng(5)
    for _ in range(10):
        a = PlanePoint(*rng.uniform(-1, 1, 2))
        b = PlanePoint(*rng.uniform(-1, 1, 2))
        assert hellinger(m_t, std_array, a, b) == pytest.approx(hellinger(m_c, std_array, a, b), abs=1e-9)


def test_hellinger_quadrature_ramp():
    # single sensor with a ramp signal: compare against a fine trapezoid
    arr = SensorArray([(2.0, 0.0), (0.0, 9.0), (-9.0, 0.0)], 1.0, 0.5, ParameterRectangle(-1, 1, -1, 1), 10.0)
    form = Tabulated([0.0, 2.0], [0.5, 3.0])
    m = SignalModel(1.0, form, 1.0)
    a, b = PlanePoint(0.0, 0.0), PlanePoint(-0.4, 0.0)
    t = np.linspace(0, 10, 2_000_001)
    total = 0.0
    for j in range(3):
        ta = arr.delays(a.x, a.y)[j]
        tb = arr.delays(b.x, b.y)[j]
        fa = np.where(t >= ta, form(t - ta), 0.0) + 1.0
        fb = np.where(t >= tb, form(t - tb), 0.0) + 1.0
        total += np.trapezoid((np.sqrt(fa) - np.sqrt(fb)) ** 2, t)
    assert hellinger(m, arr, a, b) == pytest.approx(total, abs=1e-5)


def test_expected_half_lr_examples(std_array):
    m = constant_model(1.0)
    assert expected_half_lr(m, std_array, THETA0, (0.0, 0.0)) == 1.0
    u = np.array([0.5, 0.0])  # along m_1: tau_1 shifts by 0.5
    h = hellinger(m, std_array, THETA0, PlanePoint(0.5, 0.0))
    assert expected_half_lr(m, std_array, THETA0, u) == pytest.approx(math.exp(-0.5 * h), rel=1e-14)
    assert 0 < expected_half_lr(m, std_array, THETA0, u) < 1


@pytest.mark.parametrize("j", [0, 1, 2])
def test_expected_half_lr_monotone_along_rays(std_array, j):
    from poisloc.geometry import direction_frame

    m = constant_model(10.0)
    mj = direction_frame(std_array, THETA0).m[j]
    vals = [expected_half_lr(m, std_array, THETA0, s * mj) for s in (0.5, 1.0, 2.0, 4.0, 8.0)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def lipschitz_ratios(n, pairs=1000, radius=10.0, seed=0):
    arr = default_array()
    m = constant_model(n)
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < pairs:
        u, v = rng.uniform(-radius, radius, (2, 2))
        if np.linalg.norm(u) + np.linalg.norm(v) > radius or np.allclose(u, v):
            continue
        h = hellinger(m, arr, THETA0 + u / n, THETA0 + v / n)
        out.append(h / np.linalg.norm(u - v))
    return np.array(out)


def test_lipschitz_ratio_bounded_and_stable():
    meds = []
    for n in (10, 100, 1000):
        r = lipschitz_ratios(n)
        assert r.max() < 2 * np.median(r)
        meds.append(np.median(r))
    assert max(meds) / min(meds) < 1.1


def fitted_kappa(n, grid=41):
    arr = default_array()
    m = constant_model(n)
    rmax = 0.5 * n
    s = np.linspace(-rmax, rmax, grid)
    kap = np.inf
    for ux in s:
        for uy in s:
            r = math.hypot(ux, uy)
            if r == 0 or r > rmax:
                continue
            val = expected_half_lr(m, arr, THETA0, (ux, uy))
            kap = min(kap, -math.log(val) / r)
    return kap


@pytest.mark.parametrize("n", [1, 10, 100])
def test_exponential_bound_kappa(n):
    assert fitted_kappa(n) > 0.05
