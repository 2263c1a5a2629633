"""Linear model predictive control with move blocking and a soft output envelope.

The decision vector is ``z = [du_0, ..., du_{m-1}, eps]`` where ``du_l`` are
input increments (one per input channel) over the free moves; beyond the
control horizon the input is held at its last free value. The cost tracks
scaled output errors over the prediction horizon, penalizes scaled input
increments (and optionally input magnitudes) and adds ``rho_eps * eps**2``.
Output bounds are softened by the single slack ``eps`` through the ECR
vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .lti import SimulationResult, StateSpace


def _pair(v) -> Tuple[float, ...]:
    return tuple(float(x) for x in np.atleast_1d(v))


@dataclass(frozen=True)
class MpcConfig:
    p: int = 100
    m: int = 4
    Ts: float = 0.01
    w_y: Tuple[float, ...] = (1.0e2, 7.5e1)
    w_du: Tuple[float, ...] = (1.4e-4, 1.4e-4)
    w_u: Tuple[float, ...] = (0.0, 0.0)
    s_y: Tuple[float, ...] = (1.0, 1.0)  # rad
    s_u: Tuple[float, ...] = (1.0, 1.0)  # N*m
    y_min: Tuple[float, ...] = (0.0, 0.0)  # rad
    y_max: Tuple[float, ...] = (6.3, 3.1)  # rad
    V_y_min: Tuple[float, ...] = (1.0, 1.0)
    V_y_max: Tuple[float, ...] = (1.0, 1.0)
    rho_eps: float = 1.0e5
    observer_pole: float = 0.5

    def __post_init__(self):
        for name in ("w_y", "w_du", "w_u", "s_y", "s_u", "y_min", "y_max", "V_y_min", "V_y_max"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        if not 1 <= self.m <= self.p:
            raise ValueError(f"need 1 <= m <= p, got m={self.m}, p={self.p}")
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        for name in ("w_y", "w_du", "w_u", "V_y_min", "V_y_max"):
            if any(v < 0 for v in getattr(self, name)):
                raise ValueError(f"{name} must be non-negative")
        for name in ("s_y", "s_u"):
            if any(v <= 0 for v in getattr(self, name)):
                raise ValueError(f"{name} must be positive")
        if not self.rho_eps > 0:
            raise ValueError("rho_eps must be positive")
        if not 0 <= self.observer_pole < 1:
            raise ValueError("observer_pole must lie in [0, 1)")


@dataclass
class Prediction:
    """Stacked predictions ``Y = Phi x + G_prev u_prev + G_du du`` for k+1..k+p.

    ``Y`` is time-major (all outputs at k+1, then k+2, ...); ``U = U_prev u_prev
    + U_du du`` stacks the applied inputs for k..k+p-1 the same way.
    """

    Phi: np.ndarray
    G_prev: np.ndarray
    G_du: np.ndarray
    U_prev: np.ndarray
    U_du: np.ndarray
    p: int
    m: int


def build_prediction(dss: StateSpace, p: int, m: int) -> Prediction:
    if not dss.is_discrete:
        raise ValueError("prediction model must be discrete")
    if not 1 <= m <= p:
        raise ValueError(f"need 1 <= m <= p, got m={m}, p={p}")
    if np.any(dss.D):
        raise ValueError("prediction model must be strictly proper (D = 0)")
    A, B, C = dss.A, dss.B, dss.C
    n, nu, ny = dss.n_states, dss.n_inputs, dss.n_outputs
    Phi = np.empty((p * ny, n))
    markov = []  # C A^i B
    Ai = np.eye(n)
    for i in range(p):
        markov.append(C @ Ai @ B)
        Ai = Ai @ A
        Phi[i * ny:(i + 1) * ny] = C @ Ai
    Gam = np.zeros((p * ny, p * nu))
    for i in range(1, p + 1):
        for j in range(i):
            Gam[(i - 1) * ny:i * ny, j * nu:(j + 1) * nu] = markov[i - 1 - j]
    U_du = np.zeros((p * nu, m * nu))
    eye = np.eye(nu)
    for j in range(p):
        for l in range(min(j, m - 1) + 1):
            U_du[j * nu:(j + 1) * nu, l * nu:(l + 1) * nu] = eye
    U_prev = np.tile(eye, (p, 1))
    return Prediction(Phi, Gam @ U_prev, Gam @ U_du, U_prev, U_du, p, m)


@dataclass
class QpProblem:
    """min 0.5 z'Hz + f'z  subject to  G z <= h."""

    H: np.ndarray
    f: np.ndarray
    G: np.ndarray
    h: np.ndarray
    slack_index: Optional[int] = None


@dataclass
class QpSolution:
    z: np.ndarray
    active: Tuple[int, ...]
    iterations: int
    converged: bool
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class MpcState:
    x_hat: np.ndarray
    u_prev: np.ndarray

    @classmethod
    def zero(cls, n: int, nu: int) -> "MpcState":
        return cls(np.zeros(n), np.zeros(nu))


# --------------------------------------------------------------------------
# QP


def _weights(cfg: MpcConfig, ny: int, nu: int):
    wy = (np.asarray(cfg.w_y[:ny]) / np.asarray(cfg.s_y[:ny])) ** 2
    wdu = (np.asarray(cfg.w_du[:nu]) / np.asarray(cfg.s_u[:nu])) ** 2
    wu = (np.asarray(cfg.w_u[:nu]) / np.asarray(cfg.s_u[:nu])) ** 2
    return (np.tile(wy, cfg.p), np.tile(wdu, cfg.m), np.tile(wu, cfg.p))


def _stack_ref(ref, p: int, ny: int) -> np.ndarray:
    ref = np.asarray(ref, dtype=float)
    if ref.ndim == 1:
        if ref.size != ny:
            raise ValueError(f"reference must have {ny} channels")
        return np.tile(ref, p)
    if ref.shape[1] != ny:
        raise ValueError(f"reference must have {ny} channels")
    if ref.shape[0] < p:
        ref = np.vstack([ref, np.repeat(ref[-1:], p - ref.shape[0], axis=0)])
    return ref[:p].reshape(-1)


def _constraint_rows(cfg: MpcConfig, pred: Prediction, ny: int):
    """Rows (G_du part, slack coefficient, bound) for the soft output envelope."""
    s_y = np.tile(np.asarray(cfg.s_y[:ny]), cfg.p)
    y_max = np.tile(np.asarray(cfg.y_max[:ny]), cfg.p)
    y_min = np.tile(np.asarray(cfg.y_min[:ny]), cfg.p)
    v_max = np.tile(np.asarray(cfg.V_y_max[:ny]), cfg.p)
    v_min = np.tile(np.asarray(cfg.V_y_min[:ny]), cfg.p)
    upper = np.isfinite(y_max)
    lower = np.isfinite(y_min)
    return s_y, y_min, y_max, v_min, v_max, upper, lower


def build_qp(state: MpcState, ref, cfg: MpcConfig, pred: Prediction) -> QpProblem:
    """Dense QP for one control interval given the (corrected) state estimate."""
    ny = pred.Phi.shape[0] // pred.p
    nu = pred.U_prev.shape[1]
    nz = pred.m * nu + 1
    R = _stack_ref(ref, pred.p, ny)
    wy, wdu, wu = _weights(cfg, ny, nu)
    free = pred.Phi @ state.x_hat + pred.G_prev @ state.u_prev
    u_free = pred.U_prev @ state.u_prev

    H = np.zeros((nz, nz))
    H[:-1, :-1] = 2.0 * (pred.G_du.T @ (wy[:, None] * pred.G_du) + np.diag(wdu)
                         + pred.U_du.T @ (wu[:, None] * pred.U_du))
    H[-1, -1] = 2.0 * cfg.rho_eps
    f = np.zeros(nz)
    f[:-1] = -2.0 * pred.G_du.T @ (wy * (R - free)) + 2.0 * pred.U_du.T @ (wu * u_free)

    s_y, y_min, y_max, v_min, v_max, upper, lower = _constraint_rows(cfg, pred, ny)
    rows, rhs = [], []
    if np.any(upper):
        Gu = np.hstack([pred.G_du[upper] / s_y[upper, None], -v_max[upper, None]])
        rows.append(Gu)
        rhs.append((y_max[upper] - free[upper]) / s_y[upper])
    if np.any(lower):
        Gl = np.hstack([-pred.G_du[lower] / s_y[lower, None], -v_min[lower, None]])
        rows.append(Gl)
        rhs.append((free[lower] - y_min[lower]) / s_y[lower])
    slack_row = np.zeros((1, nz))
    slack_row[0, -1] = -1.0
    rows.append(slack_row)
    rhs.append(np.zeros(1))
    return QpProblem(H, f, np.vstack(rows), np.concatenate(rhs), slack_index=nz - 1)


def _feasible_start(qp: QpProblem) -> np.ndarray:
    z = np.zeros(qp.H.shape[0])
    viol = qp.G @ z - qp.h
    if np.all(viol <= 0):
        return z
    if qp.slack_index is None:
        raise ValueError("no feasible starting point: zero is infeasible and no slack is declared")
    coef = -qp.G[:, qp.slack_index]
    need = viol > 0
    if np.any(coef[need] <= 0):
        raise ValueError("constraints violated at zero cannot be relaxed by the slack")
    z[qp.slack_index] = np.max(viol[need] / coef[need]) * (1 + 1e-12)
    return z


def _kkt_step(H, g, Gw):
    n = H.shape[0]
    k = Gw.shape[0]
    if k == 0:
        return np.linalg.solve(H, -g), np.zeros(0)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = Gw.T
    K[n:, :n] = Gw
    rhs = np.concatenate([-g, np.zeros(k)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def solve_qp(qp: QpProblem, z0=None, max_iter: int = 200, tol: float = 1e-10) -> QpSolution:
    """Primal active-set method for a strictly convex QP.

    Variables are rescaled internally by ``1/sqrt(diag H)``; the slack
    penalty and the increment weights differ by ~13 orders of magnitude in
    the turret problem. If the iteration limit is hit the last (feasible)
    iterate is returned with ``converged=False``.
    """
    H = np.asarray(qp.H, dtype=float)
    d = np.diag(H).copy()
    d[d <= 0] = 1.0
    scale = 1.0 / np.sqrt(d)
    Hs = H * scale[:, None] * scale[None, :]
    fs = qp.f * scale
    Gs = qp.G * scale[None, :]
    row_norm = np.linalg.norm(Gs, axis=1)
    row_norm[row_norm == 0] = 1.0
    Gs = Gs / row_norm[:, None]
    hs = qp.h / row_norm

    z = (np.asarray(z0, dtype=float) if z0 is not None else _feasible_start(qp)) / scale
    if np.any(Gs @ z - hs > 1e-9 * (1 + np.abs(hs))):
        raise ValueError("starting point is infeasible")
    W: List[int] = []
    lam = np.zeros(0)
    at_min = False  # a full unblocked step lands on the subspace minimizer
    for it in range(1, max_iter + 1):
        g = Hs @ z + fs
        step, lam = _kkt_step(Hs, g, Gs[W])
        if at_min or np.linalg.norm(step) <= tol * (1 + np.linalg.norm(z)):
            at_min = False
            if not W or np.min(lam) >= -tol:
                mult = np.zeros(len(hs))
                if W:
                    mult[W] = lam / row_norm[W]
                return QpSolution(z * scale, tuple(sorted(W)), it, True, mult)
            W.pop(int(np.argmin(lam)))
            continue
        Gp = Gs @ step
        slack = hs - Gs @ z
        alpha, block = 1.0, None
        for i in np.flatnonzero(Gp > tol):
            if i in W:
                continue
            a = max(slack[i], 0.0) / Gp[i]
            if a < alpha:
                alpha, block = a, int(i)
        z = z + alpha * step
        if block is not None:
            W.append(block)
        else:
            at_min = True
    return QpSolution(z * scale, tuple(sorted(W)), max_iter, False)


# --------------------------------------------------------------------------
# observer


def _ackermann_observer(A: np.ndarray, c: np.ndarray, pole: float) -> np.ndarray:
    # eig(A - l c) all at `pole`
    n = A.shape[0]
    O = np.vstack([c @ np.linalg.matrix_power(A, i) for i in range(n)])
    coeffs = np.poly(np.full(n, pole))
    phi = sum(coeffs[i] * np.linalg.matrix_power(A, n - i) for i in range(n + 1))
    e_n = np.zeros(n)
    e_n[-1] = 1.0
    return phi @ np.linalg.solve(O, e_n)


def observer_gain(dss: StateSpace, pole: float) -> np.ndarray:
    """Corrector gain L placing every eigenvalue of ``(I - L C) A`` at ``pole``.

    The model must split into decoupled blocks each seen by exactly one
    output (true for the turret); each block gets an Ackermann design.
    """
    A, C = dss.A, dss.C
    n, ny = dss.n_states, dss.n_outputs
    adj = (np.abs(A) + np.abs(A.T)) > 0
    label = -np.ones(n, dtype=int)
    comp = 0
    for s in range(n):
        if label[s] >= 0:
            continue
        stack = [s]
        label[s] = comp
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adj[i]):
                if label[j] < 0:
                    label[j] = comp
                    stack.append(j)
        comp += 1
    L = np.zeros((n, ny))
    for k in range(comp):
        idx = np.flatnonzero(label == k)
        outs = [j for j in range(ny) if np.any(C[j, idx])]
        if len(outs) != 1 or np.any(C[outs[0], np.setdiff1d(np.arange(n), idx)]):
            raise ValueError("observer design needs one output per decoupled state block")
        Ab = A[np.ix_(idx, idx)]
        cb = C[outs[0], idx] @ Ab
        L[idx, outs[0]] = _ackermann_observer(Ab, cb, pole)
    return L


# --------------------------------------------------------------------------
# controller


class MpcController:
    """Receding-horizon controller built around a discrete internal model."""

    def __init__(self, model: StateSpace, cfg: MpcConfig):
        if not model.is_discrete or not np.isclose(model.dt, cfg.Ts):
            raise ValueError("internal model must be discrete with sample time cfg.Ts")
        self.model = model
        self.cfg = cfg
        self.pred = build_prediction(model, cfg.p, cfg.m)
        ny, nu = model.n_outputs, model.n_inputs
        self.ny, self.nu, self.n = ny, nu, model.n_states
        wy, wdu, wu = _weights(cfg, ny, nu)
        P = self.pred
        M = P.G_du.T @ (wy[:, None] * P.G_du) + np.diag(wdu) + P.U_du.T @ (wu[:, None] * P.U_du)
        self._K_ref = np.linalg.solve(M, P.G_du.T * wy[None, :])
        self._K_u = np.linalg.solve(M, P.U_du.T @ (wu[:, None] * P.U_prev))
        s_y, y_min, y_max, _, _, _, _ = _constraint_rows(cfg, P, ny)
        self._y_lo = np.where(np.isfinite(y_min), y_min, -np.inf).reshape(P.p, ny)
        self._y_hi = np.where(np.isfinite(y_max), y_max, np.inf).reshape(P.p, ny)
        self._uniform_bounds = bool(np.all(self._y_lo == self._y_lo[0]) and np.all(self._y_hi == self._y_hi[0]))
        self._check_bounds = bool(np.isfinite(self._y_lo).any() or np.isfinite(self._y_hi).any())
        # du = R K_ref' - X Dx' - U Du'; predicted outputs fold into one map
        Dx = self._K_ref @ P.Phi
        Du = self._K_ref @ P.G_prev + self._K_u
        self._du_map = np.vstack([-Dx.T, -Du.T])
        y_map = np.vstack([(P.Phi - P.G_du @ Dx).T, (P.G_prev - P.G_du @ Du).T, P.G_du.T])
        # output-major columns so horizon reductions run over contiguous memory
        self._y_map = np.ascontiguousarray(
            y_map.reshape(-1, P.p, ny).transpose(0, 2, 1).reshape(-1, P.p * ny))
        self.L = observer_gain(model, cfg.observer_pole)
        self.qp_solves = 0

    def initial_state(self) -> MpcState:
        return MpcState.zero(self.n, self.nu)

    def correct(self, x_pred: np.ndarray, y: np.ndarray) -> np.ndarray:
        return x_pred + (y - x_pred @ self.model.C.T) @ self.L.T

    def reference_gain(self, R: np.ndarray) -> np.ndarray:
        """``R K_ref'``; reusable across steps when the stacked reference is fixed."""
        return np.asarray(R, dtype=float) @ self._K_ref.T

    def moves_batch(self, X: np.ndarray, U_prev: np.ndarray, R: np.ndarray,
                    ref_gain: np.ndarray | None = None) -> np.ndarray:
        """Optimal increments for N corrected estimates; R is (N, p*ny) stacked."""
        P = self.pred
        Rg = self.reference_gain(R) if ref_gain is None else ref_gain
        XU = np.hstack([X, U_prev])
        du = Rg + XU @ self._du_map
        if self._check_bounds:
            y_pred = (np.hstack([XU, Rg]) @ self._y_map).reshape(-1, self.ny, P.p)
            if self._uniform_bounds:
                bad = np.flatnonzero(np.any(y_pred.min(axis=2) < self._y_lo[0], axis=1)
                                     | np.any(y_pred.max(axis=2) > self._y_hi[0], axis=1))
            else:
                bad = np.flatnonzero(np.any((y_pred < self._y_lo.T) | (y_pred > self._y_hi.T),
                                            axis=(1, 2)))
            for i in bad:
                qp = build_qp(MpcState(X[i], U_prev[i]), R[i].reshape(P.p, self.ny), self.cfg, P)
                du[i] = solve_qp(qp).z[:-1]
                self.qp_solves += 1
        return du

    def step_batch(self, X_pred, U_prev, Y, R, ref_gain=None):
        """One control interval for N loops; returns (u, next predicted estimates)."""
        X = self.correct(X_pred, Y)
        du = self.moves_batch(X, U_prev, R, ref_gain)
        u = U_prev + du[:, :self.nu]
        return u, X @ self.model.A.T + u @ self.model.B.T

    def step(self, state: MpcState, measurement, ref) -> np.ndarray:
        """Correct ``state`` in place with ``measurement``, solve, return u(k)."""
        R = _stack_ref(ref, self.cfg.p, self.ny)[None, :]
        u, x_next = self.step_batch(state.x_hat[None, :], state.u_prev[None, :],
                                    np.asarray(measurement, dtype=float)[None, :], R)
        state.x_hat = x_next[0]
        state.u_prev = u[0]
        return u[0]

    def qp(self, state: MpcState, ref) -> QpProblem:
        return build_qp(state, ref, self.cfg, self.pred)


def mpc_step(controller: MpcController, state: MpcState, measurement, ref) -> np.ndarray:
    return controller.step(state, measurement, ref)


def closed_loop_sim(plant: StateSpace, controller: MpcController, ref, T: float) -> SimulationResult:
    """Run the controller against ``plant`` for ``T`` seconds from rest.

    ``ref`` is either a constant output vector or an array (K, ny) of
    references indexed by step; the horizon sees ref[k+1 .. k+p].
    """
    if not plant.is_discrete or not np.isclose(plant.dt, controller.cfg.Ts):
        raise ValueError("plant must be discrete with the controller sample time")
    h = plant.dt
    n_steps = int(round(T / h))
    ny, p = controller.ny, controller.cfg.p
    ref = np.asarray(ref, dtype=float)
    if ref.ndim == 1:
        ref = np.tile(ref, (n_steps + p + 1, 1))
    elif ref.shape[0] < n_steps + p + 1:
        ref = np.vstack([ref, np.repeat(ref[-1:], n_steps + p + 1 - ref.shape[0], axis=0)])
    x = np.zeros(plant.n_states)
    state = controller.initial_state()
    ys = np.empty((n_steps + 1, ny))
    us = np.empty((n_steps + 1, controller.nu))
    xs = np.empty((n_steps + 1, plant.n_states))
    for k in range(n_steps + 1):
        y = plant.C @ x
        ys[k], xs[k] = y, x
        us[k] = controller.step(state, y, ref[k + 1:k + 1 + p])
        x = plant.A @ x + plant.B @ us[k]
    return SimulationResult(np.arange(n_steps + 1) * h, ys, xs, us)


def closed_loop_batch(plant: StateSpace, controller: MpcController, setpoints,
                      n_steps: int) -> np.ndarray:
    """Outputs (n_steps+1, N, ny) of N step-reference runs from rest."""
    setpoints = np.atleast_2d(np.asarray(setpoints, dtype=float))
    N = setpoints.shape[0]
    R = np.tile(setpoints, (1, controller.cfg.p))
    Rg = controller.reference_gain(R)
    X = np.zeros((N, plant.n_states))
    Xh = np.zeros((N, controller.n))
    U = np.zeros((N, controller.nu))
    AT, BT, CT = plant.A.T, plant.B.T, plant.C.T
    out = np.empty((n_steps + 1, N, controller.ny))
    for k in range(n_steps + 1):
        Y = X @ CT
        out[k] = Y
        U, Xh = controller.step_batch(Xh, U, Y, R, Rg)
        X = X @ AT + U @ BT
    return out
