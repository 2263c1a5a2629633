import numpy as np
import pytest
import scipy.linalg
import scipy.signal
from hypothesis import given, settings, strategies as st

from turretaim.lti import (NoCrossoverError, SimulationResult, SingularFrequencyError, StateSpace,
                           TransferFunction, UnstableSystemError, c2d_zoh, close_unity, freq_response,
                           h2_norm_discrete, is_stable, margins, minreal, series, settling_time,
                           simulate, simulate_held, ss_to_tf, tf_c2d_zoh, tf_to_ss)
from turretaim.pid import LeadController, lead_tf
from turretaim.turret import TurretParams, axis_tfs, derived, linearize


def _direct(tf, w):
    s = 1j * np.asarray(w, dtype=float)
    return np.polyval(tf.num, s) / np.polyval(tf.den, s)


stable_poles = st.lists(st.floats(min_value=0.1, max_value=20.0), min_size=1, max_size=4)


# --- transfer functions ---------------------------------------------------

def test_leading_zeros_trimmed():
    tf = TransferFunction([0.0, 0.0, 2.0], [0.0, 1.0, 3.0])
    assert tf.num.tolist() == [2.0]
    assert tf.den.tolist() == [1.0, 3.0]


def test_zero_denominator_rejected():
    with pytest.raises(ValueError):
        TransferFunction([1.0], [0.0, 0.0])


def test_series_of_integrators():
    s2 = series(TransferFunction([1], [1, 0]), TransferFunction([1], [1, 0]))
    assert np.allclose(s2.num, [1.0]) and np.allclose(s2.den, [1.0, 0.0, 0.0])


def test_series_with_identity_is_unchanged():
    a = TransferFunction([2.0, 1.0], [1.0, 3.0, 2.0])
    out = series(a, TransferFunction([1.0], [1.0]))
    assert np.allclose(out.num, a.num) and np.allclose(out.den, a.den)


def test_series_rejects_mixed_domains():
    with pytest.raises(ValueError):
        series(TransferFunction([1], [1, 1]), TransferFunction([1], [1, -0.5], dt=0.1))


def test_close_unity_integrator():
    closed, err = close_unity(TransferFunction([1.0], [1.0, 0.0]))
    assert np.allclose(closed.num, [1.0]) and np.allclose(closed.den, [1.0, 1.0])
    assert np.allclose(err.num, [1.0, 0.0]) and np.allclose(err.den, [1.0, 1.0])


def test_error_tf_vanishes_at_dc_for_type1_loop():
    _, err = close_unity(TransferFunction([3.0], [1.0, 2.0, 0.0]))
    assert err.dcgain() == 0.0


@given(stable_poles, st.floats(min_value=0.01, max_value=100.0))
def test_closed_plus_error_is_one(poles, w):
    loop = TransferFunction([5.0], np.poly(-np.asarray(poles)))
    closed, err = close_unity(loop)
    assert abs(_direct(closed, w) + _direct(err, w) - 1.0) < 1e-9


def test_minreal_cancels_common_factor():
    tf = TransferFunction(np.polymul([1, 2], [1, 3]), np.polymul([1, 2], [1, 5, 1]))
    red = minreal(tf)
    assert red.den.size == 3
    assert np.allclose(_direct(red, 0.7), _direct(tf, 0.7))


# --- frequency response ---------------------------------------------------

def test_integrator_response():
    mag, ph = freq_response(TransferFunction([1.0], [1.0, 0.0]), 1.0)
    assert mag == pytest.approx(1.0) and ph == pytest.approx(-90.0)


def test_azimuth_plant_closed_form(params):
    d = derived(params)
    w = 11.184
    mag, ph = freq_response(axis_tfs(params)[0], w)
    assert mag == pytest.approx(d.A1 / (w * np.hypot(w, d.c1)), rel=1e-12)
    assert ph == pytest.approx(-90.0 - np.degrees(np.arctan(w / d.c1)), abs=1e-10)
    assert mag == pytest.approx(9.98e-8, rel=2e-3)
    assert ph == pytest.approx(-176.16, abs=0.01)


def test_lead_peak_phase_identity():
    c = LeadController(2120360.0, 0.42, 0.045)
    w = 1.0 / (np.sqrt(c.gamma) * c.T_D)
    _, ph = freq_response(lead_tf(c), w)
    assert ph == pytest.approx(np.degrees(np.arcsin((1 - c.gamma) / (1 + c.gamma))), abs=1e-9)


def test_singular_frequency_reported():
    with pytest.raises(SingularFrequencyError):
        freq_response(TransferFunction([1.0], [1.0, 0.0, 4.0]), 2.0)


def test_phase_is_continuous_along_sweep(params):
    g = axis_tfs(params)[1]
    loop = series(TransferFunction([1.0], [1.0, 1.0]), g)
    w = np.logspace(-3, 3, 2000)
    _, ph = freq_response(loop, w)
    assert np.all(np.abs(np.diff(ph)) < 5.0)
    assert ph[-1] == pytest.approx(-270.0, abs=0.5)
    ref = np.degrees(np.unwrap(np.angle(_direct(loop, w))))
    assert np.allclose(ph - ph[0], ref - ref[0], atol=1e-8)


@given(stable_poles, st.floats(min_value=0.01, max_value=100.0))
def test_magnitude_matches_direct_evaluation(poles, w):
    tf = TransferFunction([2.0, 1.0], np.poly(-np.asarray(poles)))
    mag, _ = freq_response(tf, w)
    assert mag == pytest.approx(abs(_direct(tf, w)), rel=1e-10)


# --- realizations -----------------------------------------------------------

def test_first_order_canonical_form():
    ss = tf_to_ss(TransferFunction([1.0], [1.0, 1.0]))
    assert np.allclose(ss.A, [[-1.0]]) and np.allclose(ss.B, [[1.0]])
    assert np.allclose(ss.C, [[1.0]]) and np.allclose(ss.D, [[0.0]])


def test_improper_tf_rejected():
    with pytest.raises(ValueError):
        tf_to_ss(TransferFunction([1.0, 0.0, 0.0], [1.0, 1.0]))


def test_roundtrip_preserves_elevation_plant(params):
    g2 = axis_tfs(params)[1]
    back = ss_to_tf(tf_to_ss(g2))
    w = np.logspace(-2, 2, 400)
    assert np.max(np.abs(_direct(back, w) - _direct(g2, w)) / np.abs(_direct(g2, w))) < 1e-9


def test_roundtrip_four_decades_biproper():
    tf = TransferFunction([3.0, 2.0, 1.0], [1.0, 4.0, 5.0])
    back = ss_to_tf(tf_to_ss(tf))
    w = np.logspace(-2, 2, 400)
    assert np.max(np.abs(_direct(back, w) - _direct(tf, w))) < 1e-9


def test_turret_state_space_matches_axis_tfs(params):
    ss = linearize(params)
    w = np.logspace(-2, 2, 200)
    for j, g in enumerate(axis_tfs(params)):
        chan = ss_to_tf(ss, input=j, output=j)
        dev = np.abs(_direct(chan, w) - _direct(g, w)) / np.abs(_direct(g, w))
        assert np.max(dev) < 1e-9
    cross = ss_to_tf(ss, input=0, output=1)
    assert np.allclose(cross.num, 0.0)


def test_state_space_dimension_checks():
    with pytest.raises(ValueError):
        StateSpace(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), np.zeros((1, 1)))


# --- discretization and simulation ----------------------------------------

def test_zoh_integrator():
    d = c2d_zoh(StateSpace([[0.0]], [[1.0]], [[1.0]], [[0.5]]), 0.01)
    assert d.A[0, 0] == pytest.approx(1.0) and d.B[0, 0] == pytest.approx(0.01)
    assert d.D[0, 0] == 0.5 and d.dt == 0.01


def test_zoh_azimuth_velocity_decay(params):
    d = c2d_zoh(linearize(params), 0.01)
    c1 = derived(params).c1
    assert d.A[1, 1] == pytest.approx(np.exp(-c1 * 0.01), rel=1e-14)
    assert d.A[1, 1] == pytest.approx(0.99252, abs=5e-6)


@settings(max_examples=30)
@given(stable_poles, st.floats(min_value=0.001, max_value=0.1))
def test_zoh_matches_scipy(poles, h):
    ss = tf_to_ss(TransferFunction([1.0, 2.0], np.poly(-np.asarray(poles + [0.3]))))
    ours = c2d_zoh(ss, h)
    Ad, Bd, _, _, _ = scipy.signal.cont2discrete((ss.A, ss.B, ss.C, ss.D), h, method="zoh")
    assert np.allclose(ours.A, Ad, atol=1e-12) and np.allclose(ours.B, Bd, atol=1e-12)


def test_zoh_exact_at_samples_for_first_order():
    a, h = 2.5, 0.01
    d = c2d_zoh(StateSpace([[-a]], [[a]], [[1.0]], [[0.0]]), h)
    res = simulate(d, np.ones(301))
    exact = 1.0 - np.exp(-a * res.times)
    assert np.max(np.abs(res.outputs[:, 0] - exact) / np.maximum(exact, 1e-300)) < 1e-9


def test_simulate_zero_input():
    d = c2d_zoh(linearize(TurretParams()), 0.01)
    res = simulate(d, np.zeros((50, 2)))
    assert isinstance(res, SimulationResult)
    assert np.all(res.outputs == 0.0) and np.allclose(np.diff(res.times), 0.01)


def test_simulate_rejects_channel_mismatch():
    d = c2d_zoh(linearize(TurretParams()), 0.01)
    with pytest.raises(ValueError):
        simulate(d, np.zeros((5, 3)))


def test_simulate_matches_dlsim(rng):
    d = c2d_zoh(tf_to_ss(TransferFunction([1.0, 1.0], [1.0, 3.0, 2.0])), 0.05)
    u = rng.normal(size=200)
    ours = simulate(d, u).outputs[:, 0]
    _, ref, _ = scipy.signal.dlsim((d.A, d.B, d.C, d.D, d.dt), u)
    assert np.allclose(ours, ref[:, 0], atol=1e-12)


@given(st.floats(min_value=-1e3, max_value=1e3), st.floats(min_value=-10, max_value=10))
def test_simulation_is_linear(alpha, beta):
    d = c2d_zoh(tf_to_ss(TransferFunction([1.0], [1.0, 0.8, 2.0])), 0.02)
    u1 = np.sin(np.arange(100) * 0.3)
    u2 = np.cos(np.arange(100) * 0.11)
    y1, y2 = simulate(d, u1).outputs, simulate(d, u2).outputs
    y = simulate(d, alpha * u1 + beta * u2).outputs
    assert np.allclose(y, alpha * y1 + beta * y2, atol=1e-9 * (1 + abs(alpha) + abs(beta)))


def test_simulate_held_matches_simulate():
    d = c2d_zoh(linearize(TurretParams()), 0.01)
    lev = np.array([[1.0, -2.0], [0.3, 0.5]])
    batch = simulate_held(d, lev, 40)
    for i in range(2):
        single = simulate(d, np.tile(lev[i], (41, 1))).outputs
        assert np.allclose(batch[:, i, :], single, rtol=1e-13, atol=0.0)


# --- settling time -----------------------------------------------------------

def test_settling_constant_signal():
    t = np.arange(10) * 0.1
    assert settling_time(np.ones(10), 1.0, times=t) == 0.0


def test_settling_first_order():
    t = np.arange(0, 10.0001, 0.001)
    ts = settling_time(1 - np.exp(-t), 1.0, times=t)
    assert ts == pytest.approx(np.log(1000.0), abs=1e-3)


def test_settling_not_reached_reports_none():
    t = np.arange(0, 1.0, 0.01)
    assert settling_time(1 - np.exp(-t), 1.0, times=t) is None


def test_settling_accepts_simulation_result():
    t = np.arange(0, 10.0, 0.01)
    res = SimulationResult(t, np.column_stack([1 - np.exp(-2 * t)]))
    assert settling_time(res, 1.0) == pytest.approx(np.log(1000) / 2, abs=0.011)


# --- margins ------------------------------------------------------------------

def test_margins_integrator():
    rep = margins(TransferFunction([1.0], [1.0, 0.0]))
    assert rep.omega_gc == pytest.approx(1.0, rel=1e-10)
    assert rep.phase_margin == pytest.approx(90.0, abs=1e-8)


@given(st.floats(min_value=0.5, max_value=500.0))
def test_margins_second_order_closed_form(K):
    rep = margins(TransferFunction([K], [1.0, 1.0, 0.0]))
    w = np.sqrt((-1 + np.sqrt(1 + 4 * K ** 2)) / 2)  # w^2 (w^2 + 1) = K^2
    assert rep.omega_gc == pytest.approx(w, rel=1e-9)
    assert rep.phase_margin == pytest.approx(90 - np.degrees(np.arctan(w)), abs=1e-7)


def test_margins_no_crossing():
    with pytest.raises(NoCrossoverError):
        margins(TransferFunction([1e-9], [1.0, 1.0]))


# --- H2 norm ------------------------------------------------------------------

def _lyap_h2(dtf):
    d = tf_to_ss(dtf)
    W = scipy.linalg.solve_discrete_lyapunov(d.A, d.B @ d.B.T)
    return np.sqrt(((d.C @ W @ d.C.T) + d.D @ d.D.T)[0, 0] / dtf.dt)


def test_h2_identity():
    assert h2_norm_discrete(TransferFunction([1.0], [1.0], dt=0.02)) == pytest.approx(np.sqrt(50), rel=1e-6)


@settings(max_examples=25)
@given(st.lists(st.floats(min_value=-0.95, max_value=0.95), min_size=1, max_size=4),
       st.floats(min_value=0.005, max_value=0.1))
def test_h2_matches_lyapunov(poles, h):
    tf = TransferFunction([0.5, 1.0], np.poly(poles), dt=h)
    if tf.num.size > tf.den.size:
        return
    assert h2_norm_discrete(tf) == pytest.approx(_lyap_h2(tf), rel=1e-6)


def test_h2_matches_impulse_energy():
    tf = tf_c2d_zoh(TransferFunction([1.0], [2.0, 3.0, 1.0]), 0.02)
    d = tf_to_ss(tf)
    imp = simulate(StateSpace(d.A, d.B, d.C, d.D, dt=0.02), np.r_[1.0, np.zeros(20000)]).outputs[:, 0]
    assert h2_norm_discrete(tf) == pytest.approx(np.sqrt(50 * np.sum(imp ** 2)), rel=1e-6)


def test_h2_rejects_unstable():
    with pytest.raises(UnstableSystemError):
        h2_norm_discrete(TransferFunction([1.0], [1.0, -1.2], dt=0.1))


def test_is_stable_both_domains():
    assert is_stable(TransferFunction([1], [1, 2]))
    assert not is_stable(TransferFunction([1], [1, -2]))
    assert is_stable(TransferFunction([1], [1, -0.5], dt=0.1))
