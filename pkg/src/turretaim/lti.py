"""Linear time-invariant systems kernel.

Transfer functions and state-space realizations (continuous or discrete),
zero-order-hold discretization, fixed-step simulation, frequency response,
gain-crossover/phase-margin measurement, settling time and the discrete
H2 norm. Polynomials are plain 1-D numpy arrays, highest degree first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg


class SingularFrequencyError(ValueError):
    """Frequency response requested at a pole of the system."""


class NoCrossoverError(ValueError):
    """Loop gain never crosses unity inside the scanned band."""


class UnstableSystemError(ValueError):
    """Operation requires a stable system."""


def _as_poly(coeffs) -> np.ndarray:
    p = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if p.ndim != 1:
        raise ValueError("polynomial coefficients must be one-dimensional")
    nz = np.flatnonzero(p)
    if nz.size == 0:
        return np.zeros(1)
    return p[nz[0]:].copy()


def _same_domain(a_dt, b_dt) -> None:
    if (a_dt is None) != (b_dt is None):
        raise ValueError("cannot combine continuous and discrete systems")
    if a_dt is not None and not np.isclose(a_dt, b_dt, rtol=1e-12, atol=0.0):
        raise ValueError(f"sample times differ: {a_dt} vs {b_dt}")


@dataclass(frozen=True)
class TransferFunction:
    """Rational SISO transfer function ``num/den``.

    ``dt`` is None for continuous time, otherwise the sample time in seconds.
    """

    num: np.ndarray
    den: np.ndarray
    dt: Optional[float] = None

    def __post_init__(self):
        num, den = _as_poly(self.num), _as_poly(self.den)
        if not np.any(den):
            raise ValueError("denominator is identically zero")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("sample time must be positive")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def is_discrete(self) -> bool:
        return self.dt is not None

    @property
    def is_proper(self) -> bool:
        return len(self.num) <= len(self.den)

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def zeros(self) -> np.ndarray:
        return np.roots(self.num)

    def __call__(self, x):
        """Evaluate at complex point(s) ``x`` (s or z)."""
        x = np.asarray(x, dtype=complex)
        return np.polyval(self.num, x) / np.polyval(self.den, x)

    def __mul__(self, other):
        if isinstance(other, TransferFunction):
            return series(self, other)
        return TransferFunction(np.asarray(other, dtype=float) * self.num, self.den, self.dt)

    __rmul__ = __mul__

    def dcgain(self) -> float:
        point = 1.0 if self.is_discrete else 0.0
        return float(np.real(self(point)))


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: Optional[float] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n or C.shape[1] != n:
            raise ValueError(f"inconsistent dimensions: A {A.shape}, B {B.shape}, C {C.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError(f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("sample time must be positive")
        for name, val in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, val)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.dt is not None


@dataclass
class SimulationResult:
    times: np.ndarray
    outputs: np.ndarray  # (K, p)
    states: Optional[np.ndarray] = None  # (K, n)
    inputs: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class MarginReport:
    omega_gc: float  # rad/s
    phase_margin: float  # deg

    @property
    def gain_crossover(self) -> float:
        """Gain crossover in Hz."""
        return self.omega_gc / (2 * np.pi)


# --------------------------------------------------------------------------
# frequency response


def _poly_phase(p: np.ndarray, s: np.ndarray) -> np.ndarray:
    # sum of per-factor angles; continuous in s = jw for roots off the positive imaginary axis
    roots = np.roots(p)
    phase = np.zeros(s.shape)
    if p[0] < 0:
        phase += np.pi
    for r in roots:
        phase += np.angle(s - r)
    return phase


def freq_response(sys: TransferFunction, omega) -> Tuple[np.ndarray, np.ndarray]:
    """Magnitude and phase (degrees) of a continuous system at ``omega`` rad/s.

    The phase is assembled factor by factor so it stays on one continuous
    branch (a type-2 loop starts near -180 deg, not +180 deg). When
    ``omega`` is an increasing sweep the result is additionally unwrapped.
    """
    if sys.is_discrete:
        raise ValueError("freq_response expects a continuous-time system")
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(w <= 0):
        raise ValueError("omega must be positive")
    s = 1j * w
    den_val = np.polyval(sys.den, s)
    scale = np.max(np.abs(sys.den)) * np.maximum(1.0, np.abs(s)) ** (len(sys.den) - 1)
    if np.any(np.abs(den_val) <= 1e-14 * scale):
        bad = w[np.argmin(np.abs(den_val))]
        raise SingularFrequencyError(f"system has a pole on the imaginary axis at omega={bad:g}")
    mag = np.abs(np.polyval(sys.num, s) / den_val)
    phase = _poly_phase(sys.num, s) - _poly_phase(sys.den, s)
    if w.size > 1 and np.all(np.diff(w) > 0):
        phase = np.unwrap(phase)
    phase = np.degrees(phase)
    if np.ndim(omega) == 0:
        return mag[0], phase[0]
    return mag, phase


# --------------------------------------------------------------------------
# interconnection


def series(a: TransferFunction, b: TransferFunction) -> TransferFunction:
    _same_domain(a.dt, b.dt)
    return TransferFunction(np.polymul(a.num, b.num), np.polymul(a.den, b.den), a.dt)


def close_unity(loop: TransferFunction) -> Tuple[TransferFunction, TransferFunction]:
    """Unity negative feedback around ``loop``: (L/(1+L), 1/(1+L))."""
    if not loop.is_proper:
        raise ValueError("loop transfer function must be proper")
    char = np.polyadd(loop.den, loop.num)
    return (TransferFunction(loop.num, char, loop.dt),
            TransferFunction(loop.den, char, loop.dt))


def minreal(tf: TransferFunction, tol: float = 1e-7) -> TransferFunction:
    """Cancel numerator/denominator roots that coincide within ``tol`` (relative)."""
    zs = list(np.roots(tf.num)) if len(tf.num) > 1 else []
    ps = list(np.roots(tf.den))
    keep_z = []
    for z in zs:
        dist = [abs(z - p) for p in ps]
        if dist and min(dist) <= tol * max(1.0, abs(z)):
            ps.pop(int(np.argmin(dist)))
        else:
            keep_z.append(z)
    gain = tf.num[0] / tf.den[0]
    num = gain * np.real(np.poly(keep_z)) if keep_z else np.array([gain])
    den = np.real(np.poly(ps)) if ps else np.array([1.0])
    return TransferFunction(num, den, tf.dt)


# --------------------------------------------------------------------------
# realizations


def tf_to_ss(tf: TransferFunction) -> StateSpace:
    """Controllable canonical realization."""
    if not tf.is_proper:
        raise ValueError("improper transfer function has no state-space realization")
    den = tf.den / tf.den[0]
    num = tf.num / tf.den[0]
    n = len(den) - 1
    num = np.concatenate([np.zeros(n + 1 - len(num)), num])
    D = np.array([[num[0]]])
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), D, tf.dt)
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = (num[1:] - num[0] * den[1:]).reshape(1, n)
    return StateSpace(A, B, C, D, tf.dt)


def ss_to_tf(ss: StateSpace, input: int = 0, output: int = 0) -> TransferFunction:
    """Transfer function of one input/output channel (no cancellation)."""
    b = ss.B[:, input:input + 1]
    c = ss.C[output:output + 1, :]
    d = ss.D[output, input]
    if ss.n_states == 0:
        return TransferFunction([d], [1.0], ss.dt)
    den = np.poly(ss.A)
    num = np.poly(ss.A - b @ c) + (d - 1.0) * den
    num[np.abs(num) < 1e-14 * np.max(np.abs(num))] = 0.0
    return TransferFunction(np.real(num), np.real(den), ss.dt)


def c2d_zoh(ss: StateSpace, h: float) -> StateSpace:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if ss.is_discrete:
        raise ValueError("system is already discrete")
    if h <= 0:
        raise ValueError("sample time must be positive")
    n, m = ss.n_states, ss.n_inputs
    M = np.zeros((n + m, n + m))
    M[:n, :n] = ss.A
    M[:n, n:] = ss.B
    E = linalg.expm(M * h)
    return StateSpace(E[:n, :n], E[:n, n:], ss.C, ss.D, h)


def tf_c2d_zoh(tf: TransferFunction, h: float) -> TransferFunction:
    return ss_to_tf(c2d_zoh(tf_to_ss(tf), h))


# --------------------------------------------------------------------------
# simulation


def simulate(dsys: StateSpace, u, x0=None) -> SimulationResult:
    """Iterate ``x[k+1] = Ad x[k] + Bd u[k]``, ``y[k] = C x[k] + D u[k]``."""
    if not dsys.is_discrete:
        raise ValueError("simulate expects a discrete-time system; discretize first")
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[1] != dsys.n_inputs:
        raise ValueError(f"input has {u.shape[1]} channels, system has {dsys.n_inputs}")
    n = dsys.n_states
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    K = u.shape[0]
    xs = np.empty((K, n))
    for k in range(K):
        xs[k] = x
        x = dsys.A @ x + dsys.B @ u[k]
    ys = xs @ dsys.C.T + u @ dsys.D.T
    return SimulationResult(np.arange(K) * dsys.dt, ys, xs, u)


def simulate_held(dsys: StateSpace, levels, n_steps: int) -> np.ndarray:
    """Responses of many zero-state runs, each driven by a constant input.

    ``levels`` has shape (N, m); returns outputs of shape (n_steps + 1, N, p)
    sampled at k = 0..n_steps.
    """
    levels = np.atleast_2d(np.asarray(levels, dtype=float))
    if levels.shape[1] != dsys.n_inputs:
        raise ValueError(f"levels have {levels.shape[1]} channels, system has {dsys.n_inputs}")
    N = levels.shape[0]
    X = np.zeros((N, dsys.n_states))
    drive = levels @ dsys.B.T
    feed = levels @ dsys.D.T
    AT, CT = dsys.A.T, dsys.C.T
    out = np.empty((n_steps + 1, N, dsys.n_outputs))
    for k in range(n_steps + 1):
        out[k] = X @ CT + feed
        X = X @ AT + drive
    return out


def settling_time(y, final: float, band: float = 0.001, times=None) -> Optional[float]:
    """Earliest sample time after which ``|y - final| <= band*|final|`` holds.

    ``y`` is a SimulationResult (first output channel) or an array paired
    with ``times``. Returns None when the response has not settled by the
    end of the horizon.
    """
    if isinstance(y, SimulationResult):
        times, values = y.times, y.outputs[:, 0]
    else:
        values = np.asarray(y, dtype=float)
        if times is None:
            raise ValueError("times are required when y is an array")
        times = np.asarray(times, dtype=float)
    tol = band * abs(final) if final != 0 else band
    outside = np.flatnonzero(np.abs(values - final) > tol)
    if outside.size == 0:
        return float(times[0])
    last = outside[-1]
    if last == len(values) - 1:
        return None
    return float(times[last + 1])


# --------------------------------------------------------------------------
# margins


def margins(loop: TransferFunction, w_min: float = 1e-3, w_max: float = 1e3,
            n_points: int = 2000) -> MarginReport:
    """Gain crossover and phase margin of a continuous loop gain.

    A logarithmic sweep brackets the unity-gain crossing, bisection on
    log|L| refines it, and PM = 180 + angle(L(j w_gc)).
    """
    w = np.logspace(np.log10(w_min), np.log10(w_max), n_points)
    mag, _ = freq_response(loop, w)
    lm = np.log(mag)
    idx = np.flatnonzero(np.sign(lm[:-1]) != np.sign(lm[1:]))
    if idx.size == 0:
        raise NoCrossoverError(f"|L| does not cross 1 between {w_min:g} and {w_max:g} rad/s")
    lo, hi = np.log(w[idx[0]]), np.log(w[idx[0] + 1])
    f_lo = np.log(freq_response(loop, np.exp(lo))[0])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = np.log(freq_response(loop, np.exp(mid))[0])
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    w_gc = float(np.exp(0.5 * (lo + hi)))
    _, ph = freq_response(loop, w_gc)
    return MarginReport(w_gc, float(180.0 + ph))


# --------------------------------------------------------------------------
# H2 norm


def is_stable(sys) -> bool:
    poles = sys.poles() if isinstance(sys, TransferFunction) else np.linalg.eigvals(sys.A)
    if sys.dt is not None:
        return bool(np.all(np.abs(poles) < 1.0))
    return bool(np.all(poles.real < 0.0))


def _simpson_h2(dtf: TransferFunction, h: float, n_intervals: int) -> float:
    theta = np.linspace(-np.pi, np.pi, n_intervals + 1)
    z = np.exp(1j * theta)
    g = np.abs(np.polyval(dtf.num, z) / np.polyval(dtf.den, z)) ** 2
    wts = np.ones(n_intervals + 1)
    wts[1:-1:2] = 4.0
    wts[2:-1:2] = 2.0
    integral = (2 * np.pi / n_intervals) / 3.0 * np.dot(wts, g)
    # d(omega) = d(theta)/h over [-pi/h, pi/h]
    return float(np.sqrt(integral / (2 * np.pi * h)))


def h2_norm_discrete(dtf: TransferFunction, h: Optional[float] = None,
                     n_intervals: int = 2 ** 14, rtol: float = 1e-6,
                     max_doublings: int = 8) -> float:
    """sqrt((1/2pi) * integral over [-pi/h, pi/h] of |H(e^{jwh})|^2 dw).

    Composite Simpson quadrature; the grid is doubled until two successive
    estimates agree to ``rtol``.
    """
    if not dtf.is_discrete:
        raise ValueError("h2_norm_discrete expects a discrete-time transfer function")
    h = dtf.dt if h is None else h
    if not is_stable(dtf):
        raise UnstableSystemError("H2 norm requires all poles strictly inside the unit circle")
    prev = _simpson_h2(dtf, h, n_intervals)
    for _ in range(max_doublings):
        n_intervals *= 2
        cur = _simpson_h2(dtf, h, n_intervals)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    raise RuntimeError(f"H2 quadrature did not converge to rtol={rtol}")


def integrator(dt: Optional[float] = None) -> TransferFunction:
    return TransferFunction([1.0], [1.0, 0.0], dt)
