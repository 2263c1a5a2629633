import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from turretaim.experiments import mpc_settling_times, mpc_step_response
from turretaim.lti import StateSpace, c2d_zoh, simulate
from turretaim.mpc import (MpcConfig, MpcController, MpcState, QpProblem, build_prediction,
                           build_qp, closed_loop_batch, closed_loop_sim, mpc_step, observer_gain,
                           solve_qp)
from turretaim.turret import TurretParams, linearize

TS = 0.01


@pytest.fixture(scope="module")
def model():
    return c2d_zoh(linearize(TurretParams()), TS)


@pytest.fixture(scope="module")
def ctrl(model):
    return MpcController(model, MpcConfig())


def _objective(qp, z):
    return 0.5 * z @ qp.H @ z + qp.f @ z


def _enumerate_qp(qp):
    """Best KKT point over every subset of constraints taken as equalities."""
    n, k = qp.H.shape[0], qp.G.shape[0]
    best = None
    for r in range(min(n, k) + 1):
        for W in itertools.combinations(range(k), r):
            W = list(W)
            K = np.block([[qp.H, qp.G[W].T], [qp.G[W], np.zeros((r, r))]])
            try:
                sol = np.linalg.solve(K, np.concatenate([-qp.f, qp.h[W]]))
            except np.linalg.LinAlgError:
                continue
            z, lam = sol[:n], sol[n:]
            if np.all(qp.G @ z <= qp.h + 1e-9) and np.all(lam >= -1e-9):
                if best is None or _objective(qp, z) < _objective(qp, best) - 1e-12:
                    best = z
    return best


# --- QP solver ----------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=2, max_value=4),
       st.integers(min_value=1, max_value=6))
def test_active_set_matches_enumeration(seed, n, k):
    r = np.random.default_rng(seed)
    M = r.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    qp = QpProblem(H, r.normal(size=n) * 3, r.normal(size=(k, n)), r.uniform(0.1, 1.0, size=k))
    sol = solve_qp(qp)
    ref = _enumerate_qp(qp)
    assert sol.converged
    assert np.all(qp.G @ sol.z <= qp.h + 1e-9)
    assert _objective(qp, sol.z) == pytest.approx(_objective(qp, ref), rel=1e-9, abs=1e-12)
    assert np.allclose(sol.z, ref, atol=1e-7)


def test_unconstrained_matches_normal_equations(ctrl, model):
    state = MpcState(np.zeros(4), np.zeros(2))
    qp = ctrl.qp(state, [0.5, 0.3])
    sol = solve_qp(qp)
    assert sol.active == (len(qp.h) - 1,) or sol.active == ()
    # dense least-squares oracle built directly from the stacked prediction
    P = ctrl.pred
    wy = np.tile(np.array([100.0, 75.0]) ** 2, P.p)
    wdu = np.tile(np.array([1.4e-4, 1.4e-4]) ** 2, P.m)
    A = np.vstack([np.sqrt(wy)[:, None] * P.G_du, np.diag(np.sqrt(wdu))])
    b = np.concatenate([np.sqrt(wy) * np.tile([0.5, 0.3], P.p), np.zeros(P.m * 2)])
    du = np.linalg.lstsq(A, b, rcond=None)[0]
    assert np.allclose(sol.z[:-1], du, rtol=1e-8, atol=1e-8 * np.abs(du).max())
    assert sol.z[-1] == pytest.approx(0.0, abs=1e-12)


def test_slack_one_dimensional_instance():
    # min (z - 3)^2 + rho eps^2  s.t.  z - eps <= 1, eps >= 0
    for rho, eps_star in ((1.0, 1.0), (4.0, 0.4)):
        qp = QpProblem(np.diag([2.0, 2.0 * rho]), np.array([-6.0, 0.0]),
                       np.array([[1.0, -1.0], [0.0, -1.0]]), np.array([1.0, 0.0]), slack_index=1)
        sol = solve_qp(qp)
        assert sol.z[1] == pytest.approx(eps_star, rel=1e-10)
        assert sol.z[0] == pytest.approx(1.0 + eps_star, rel=1e-10)


def test_slack_never_negative(ctrl):
    for ref in ([0.0, 0.0], [7.0, 4.0], [-1.0, -1.0], [3.0, 1.0]):
        sol = solve_qp(ctrl.qp(MpcState(np.zeros(4), np.zeros(2)), ref))
        assert sol.z[-1] >= 0.0


def test_slack_tight_when_positive(ctrl):
    qp = ctrl.qp(MpcState(np.zeros(4), np.zeros(2)), [8.0, 1.0])
    sol = solve_qp(qp)
    assert sol.z[-1] > 0
    res = qp.G[:-1] @ sol.z - qp.h[:-1]
    assert np.max(res) == pytest.approx(0.0, abs=1e-9)


def test_zero_is_optimal_at_rest(ctrl):
    sol = solve_qp(ctrl.qp(MpcState(np.zeros(4), np.zeros(2)), [0.0, 0.0]))
    assert np.allclose(sol.z, 0.0, atol=1e-12)


def test_infeasible_start_rejected():
    qp = QpProblem(np.eye(1), np.zeros(1), np.array([[1.0]]), np.array([-1.0]))
    with pytest.raises(ValueError):
        solve_qp(qp)


def test_no_magnitude_term_with_zero_input_weight(ctrl):
    base = ctrl.qp(MpcState(np.zeros(4), np.zeros(2)), [1.0, 1.0])
    other = ctrl.qp(MpcState(np.zeros(4), np.array([1e4, 1e4])), [1.0, 1.0])
    assert np.array_equal(base.H, other.H)


# --- prediction ---------------------------------------------------------------

def test_scalar_integrator_one_step():
    d = StateSpace([[1.0]], [[TS]], [[1.0]], [[0.0]], dt=TS)
    P = build_prediction(d, 1, 1)
    assert P.Phi[0, 0] == 1.0 and P.G_prev[0, 0] == pytest.approx(TS) and P.G_du[0, 0] == pytest.approx(TS)


def test_decision_vector_size(ctrl):
    qp = ctrl.qp(MpcState(np.zeros(4), np.zeros(2)), [1.0, 1.0])
    assert qp.H.shape == (9, 9) and qp.slack_index == 8


def test_moves_held_beyond_control_horizon(ctrl):
    P = ctrl.pred
    U = P.U_du.reshape(P.p, 2, -1)
    assert np.array_equal(U[P.m - 1], U[-1])
    assert np.all(U[P.m:] == U[P.m - 1])


def test_prediction_rejects_continuous_model():
    with pytest.raises(ValueError):
        build_prediction(linearize(TurretParams()), 10, 2)
    with pytest.raises(ValueError):
        build_prediction(c2d_zoh(linearize(TurretParams()), TS), 3, 4)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_prediction_equals_realized_outputs(model, seed):
    r = np.random.default_rng(seed)
    P = build_prediction(model, 100, 4)
    x0 = r.normal(size=4) * [1, 0.1, 0.5, 0.1]
    u_prev = r.normal(size=2) * 1e4
    du = r.normal(size=8) * 1e4
    U = (P.U_prev @ u_prev + P.U_du @ du).reshape(P.p, 2)
    real = StateSpace(model.A, model.B, model.C, model.D, dt=TS)
    y = np.empty((P.p, 2))
    x = x0.copy()
    for i in range(P.p):
        x = model.A @ x + model.B @ U[i]
        y[i] = model.C @ x
    pred = (P.Phi @ x0 + P.G_prev @ u_prev + P.G_du @ du).reshape(P.p, 2)
    assert np.max(np.abs(pred - y)) <= 1e-9 * max(1.0, np.abs(y).max())
    # simulate() on the same inputs gives the identical trajectory
    sim = simulate(StateSpace(real.A, real.B, real.C, real.D, dt=TS), U, x0).outputs[1:]
    assert np.allclose(sim[:P.p - 1], y[:-1], rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("p,m", [(1, 1), (3, 3), (5, 5), (5, 2)])
def test_first_move_matches_batch_least_squares(model, p, m):
    cfg = MpcConfig(p=p, m=m, y_min=(-np.inf, -np.inf), y_max=(np.inf, np.inf))
    c = MpcController(model, cfg)
    r = np.random.default_rng(p * 10 + m)
    x0 = r.normal(size=4) * 0.1
    u0 = r.normal(size=2) * 100
    ref = np.array([0.4, 0.2])
    # columns of the free-move response obtained by direct simulation
    def run(du):
        x, u, ys = x0.copy(), u0.copy(), []
        for i in range(p):
            if i < m:
                u = u + du[2 * i:2 * i + 2]
            x = model.A @ x + model.B @ u
            ys.append(model.C @ x)
        return np.concatenate(ys)
    free = run(np.zeros(2 * m))
    cols = np.column_stack([run(e) - free for e in np.eye(2 * m)])
    wy = np.tile(np.array(cfg.w_y) ** 2, p)
    wdu = np.tile(np.array(cfg.w_du) ** 2, m)
    A = np.vstack([np.sqrt(wy)[:, None] * cols, np.diag(np.sqrt(wdu))])
    b = np.concatenate([np.sqrt(wy) * (np.tile(ref, p) - free), np.zeros(2 * m)])
    du = np.linalg.lstsq(A, b, rcond=None)[0]
    got = c.moves_batch(x0[None], u0[None], np.tile(ref, p)[None])[0]
    assert np.allclose(got[:2], du[:2], rtol=1e-7, atol=1e-9 * np.abs(du).max())
    sol = solve_qp(c.qp(MpcState(x0, u0), ref))
    assert np.allclose(sol.z[:2], du[:2], rtol=1e-7, atol=1e-9 * np.abs(du).max())


# --- observer and closed loop -----------------------------------------------

def test_observer_poles(model, ctrl):
    L = observer_gain(model, 0.5)
    E = (np.eye(4) - L @ model.C) @ model.A
    assert np.allclose(np.linalg.eigvals(E), 0.5, atol=1e-6)
    assert np.array_equal(L, ctrl.L)


def test_observer_correction_zero_in_nominal_loop(model):
    c = MpcController(model, MpcConfig())
    state = c.initial_state()
    x = np.zeros(4)
    for k in range(200):
        y = model.C @ x
        before = state.x_hat.copy()
        assert np.allclose(c.correct(before, y), before, atol=1e-13)
        assert np.allclose(before, x, atol=1e-12)
        u = mpc_step(c, state, y, [1.0, 0.5])
        x = model.A @ x + model.B @ u


def test_zero_reference_gives_zero(model, ctrl):
    res = closed_loop_sim(model, ctrl, [0.0, 0.0], 1.0)
    assert np.all(res.outputs == 0) and np.all(res.inputs == 0)


def test_batch_matches_single_runs(model):
    c = MpcController(model, MpcConfig())
    sp = np.array([[1.0, 0.3], [2.0, 0.1]])
    batch = closed_loop_batch(model, c, sp, 300)
    for i in range(2):
        single = closed_loop_sim(model, MpcController(model, MpcConfig()), sp[i], 3.0).outputs
        assert np.allclose(batch[:, i], single, rtol=1e-10, atol=1e-12)


def test_settling_times():
    az, el = mpc_settling_times()
    assert az == pytest.approx(1.4, rel=0.15)
    assert el == pytest.approx(0.94, rel=0.15)


def test_constraint_activates_beyond_bound(model):
    c = MpcController(model, MpcConfig())
    y = closed_loop_batch(model, c, [[6.6, 1.0]], 500)[:, 0]
    assert c.qp_solves > 0
    assert y[:, 0].max() < 6.6
    # steady state balances p * w_y^2 * (0.3 - eps)^2 against rho * eps^2
    track = 100 * 100.0 ** 2
    eps = 0.3 * track / (track + 1e5)
    assert y[-1, 0] == pytest.approx(6.3 + eps, abs=0.02)
    finals = []
    for rho in (1e7, 1e9, 1e12):
        stiff = MpcController(model, MpcConfig(rho_eps=rho))
        y = closed_loop_batch(model, stiff, [[6.6, 1.0]], 500)[:, 0]
        finals.append(y[-1, 0])
        assert y[:, 0].max() < 6.6
    assert finals[0] > finals[1] > finals[2] > 6.3
    assert finals[2] < 6.3 + 1e-5


def test_tracking_cost_eventually_decreasing():
    t, y = mpc_step_response(setpoint=(1.0, 1.0), duration=8.0)
    cost = (100.0 * (y[:, 0] - 1)) ** 2 + (75.0 * (y[:, 1] - 1)) ** 2
    # the tail rings through zero; resolve errors down to ~1e-10 rad
    tail = cost[t >= 4.0]
    assert np.all(np.diff(tail) <= 1e-20 * cost[0])
    envelope = cost[: 800].reshape(8, 100).max(axis=1)
    assert np.all(np.diff(envelope[:6]) < 0)
    assert cost[-1] < 1e-20


def test_config_validation():
    with pytest.raises(ValueError):
        MpcConfig(p=3, m=4)
    with pytest.raises(ValueError):
        MpcConfig(rho_eps=0.0)
    with pytest.raises(ValueError):
        MpcConfig(observer_pole=1.0)
    cfg = MpcConfig()
    assert (cfg.p, cfg.m, cfg.w_y, cfg.rho_eps, cfg.y_max) == (100, 4, (100.0, 75.0), 1e5, (6.3, 3.1))
