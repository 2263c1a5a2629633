"""Two-body gun turret: platform (azimuth) and barrel (elevation).

State ordering is ``x = [theta, theta_dot, alpha, alpha_dot]``, inputs are
the motor torques ``u = [T1, T2]`` in N*m and outputs ``y = [theta, alpha]``
in radians.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .lti import StateSpace, TransferFunction

AXES = ("azimuth", "elevation")


@dataclass(frozen=True)
class TurretParams:
    """Physical constants. ``J1``/``J2`` override the rigid-body estimate when set."""

    m1: float = 8.67e3  # kg, platform
    m2: float = 4.97e3  # kg, barrel
    b1: float = 6.00e4  # N*m*s, platform bearing damping
    b2: float = 6.00e4  # N*m*s, barrel bearing damping
    R: float = 2.70  # m, platform radius
    L: float = 5.40  # m, barrel length
    g: float = 9.81
    J1: Optional[float] = None
    J2: Optional[float] = None

    def __post_init__(self):
        for name in ("m1", "m2", "b1", "b2", "R", "L", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        for name in ("J1", "J2"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be strictly positive, got {val}")


@dataclass(frozen=True)
class DerivedCoeffs:
    J1: float
    J2: float
    A1: float
    c1: float
    A2: float
    c2: float


@dataclass(frozen=True)
class Perturbation:
    """Relative parameter error ``p_hat = p * (1 + epsilon)``."""

    target: str  # "damping" | "inertia"
    axis: str = "both"  # "azimuth" | "elevation" | "both"
    epsilon: float = 0.1

    def __post_init__(self):
        if self.target not in ("damping", "inertia"):
            raise ValueError(f"unknown perturbation target {self.target!r}")
        if self.axis not in ("azimuth", "elevation", "both"):
            raise ValueError(f"unknown axis {self.axis!r}")
        if not self.epsilon > -1:
            raise ValueError(f"epsilon must be > -1, got {self.epsilon}")


def moments_of_inertia(p: TurretParams) -> Tuple[float, float]:
    """Platform and barrel inertias (disk + rod about its end)."""
    J2 = p.J2 if p.J2 is not None else p.m2 * p.L ** 2 / 3.0
    J1 = p.J1 if p.J1 is not None else 0.5 * p.m1 * p.R ** 2 + J2
    return J1, J2


def J_alpha(p: TurretParams, alpha: float) -> float:
    """Elevation-dependent platform inertia about the vertical axis."""
    J2 = p.m2 * p.L ** 2 / 3.0
    return 0.5 * p.m1 * p.R ** 2 + J2 * np.cos(alpha) ** 2


def derived(p: TurretParams) -> DerivedCoeffs:
    J1, J2 = moments_of_inertia(p)
    return DerivedCoeffs(J1, J2, 1.0 / J1, p.b1 / J1, 1.0 / J2, p.b2 / J2)


def gravity_torque(p: TurretParams) -> float:
    return 0.5 * p.m2 * p.g * p.L


def equilibrium_input(p: TurretParams) -> np.ndarray:
    return np.array([0.0, gravity_torque(p)])


def nonlinear_rhs(p: TurretParams, x, u) -> np.ndarray:
    J1, J2 = moments_of_inertia(p)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.array([
        x[1],
        -(p.b1 / J1) * x[1] + u[0] / J1,
        x[3],
        -(p.b2 / J2) * x[3] - gravity_torque(p) / J2 * np.cos(x[2]) + u[1] / J2,
    ])


def jacobians(p: TurretParams, x0=None, u0=None):
    """Analytic (A, B) of ``nonlinear_rhs`` at an arbitrary operating point."""
    J1, J2 = moments_of_inertia(p)
    x0 = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float)
    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[1, 1] = -p.b1 / J1
    A[2, 3] = 1.0
    A[3, 2] = gravity_torque(p) / J2 * np.sin(x0[2])
    A[3, 3] = -p.b2 / J2
    B = np.zeros((4, 2))
    B[1, 0] = 1.0 / J1
    B[3, 1] = 1.0 / J2
    return A, B


def linearize(p: TurretParams) -> StateSpace:
    """Small-deviation model about x0 = 0 with the gravity-balancing input."""
    A, B = jacobians(p, np.zeros(4), equilibrium_input(p))
    C = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    return StateSpace(A, B, C, np.zeros((2, 2)))


def axis_tfs(p: TurretParams) -> Tuple[TransferFunction, TransferFunction]:
    """Per-axis plants ``A_i / (s (s + c_i))`` for azimuth and elevation."""
    d = derived(p)
    return (TransferFunction([d.A1], [1.0, d.c1, 0.0]),
            TransferFunction([d.A2], [1.0, d.c2, 0.0]))


def axis_tf(p: TurretParams, axis: str) -> TransferFunction:
    return axis_tfs(p)[AXES.index(axis)]


def apply_perturbation(p: TurretParams, pert: Perturbation) -> TurretParams:
    """Scale damping or inertia of the selected axes by ``1 + epsilon``.

    Inertias are scaled directly, leaving masses and geometry untouched.
    """
    f = 1.0 + pert.epsilon
    az = pert.axis in ("azimuth", "both")
    el = pert.axis in ("elevation", "both")
    if pert.target == "damping":
        return replace(p, b1=p.b1 * f if az else p.b1, b2=p.b2 * f if el else p.b2)
    J1, J2 = moments_of_inertia(p)
    return replace(p, J1=J1 * f if az else J1, J2=J2 * f if el else J2)
