"""Frequency-domain synthesis of lead and PI+lead compensators.

Both designs place the compensator's maximum phase lead at the requested
gain-crossover frequency and pick the gain that makes the loop magnitude
unity there. The PI+lead variant adds a fixed phase allowance for the lag
of the PI factor, whose zero sits a decade below crossover.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .lti import MarginReport, TransferFunction, freq_response, margins, series


class DesignInfeasible(ValueError):
    def __init__(self, phi_add: float):
        self.phi_add = phi_add
        super().__init__(f"required phase lead {phi_add:.3f} deg is outside (0, 90) deg")


@dataclass(frozen=True)
class DesignSpec:
    omega_gc: float  # rad/s
    pm: float  # deg

    def __post_init__(self):
        if not self.omega_gc > 0:
            raise ValueError("omega_gc must be positive")
        if not 0 < self.pm < 90:
            raise ValueError("pm must lie in (0, 90) degrees")

    @classmethod
    def from_hz(cls, f_gc: float, pm: float) -> "DesignSpec":
        return cls(2 * np.pi * f_gc, pm)


def _check_common(K_P, T_D, gamma):
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if not T_D > 0:
        raise ValueError(f"T_D must be positive, got {T_D}")
    if not K_P > 0:
        raise ValueError(f"K_P must be positive, got {K_P}")


@dataclass(frozen=True)
class LeadController:
    K_P: float
    T_D: float
    gamma: float

    def __post_init__(self):
        _check_common(self.K_P, self.T_D, self.gamma)

    def tf(self) -> TransferFunction:
        return lead_tf(self)


@dataclass(frozen=True)
class PiLeadController:
    K_P: float
    T_D: float
    T_I: float
    gamma: float

    def __post_init__(self):
        _check_common(self.K_P, self.T_D, self.gamma)
        if not self.T_I > 0:
            raise ValueError(f"T_I must be positive, got {self.T_I}")

    def tf(self) -> TransferFunction:
        return pilead_tf(self)


Controller = Union[LeadController, PiLeadController]


def lead_tf(c: LeadController) -> TransferFunction:
    """K_P (T_D s + 1) / (gamma T_D s + 1)."""
    return TransferFunction([c.K_P * c.T_D, c.K_P], [c.gamma * c.T_D, 1.0])


def pilead_tf(c: PiLeadController) -> TransferFunction:
    """K_P (s + 1/T_I)/s * (T_D s + 1)/(gamma T_D s + 1)."""
    num = np.polymul([c.K_P * c.T_D, c.K_P], [1.0, 1.0 / c.T_I])
    den = np.polymul([c.gamma * c.T_D, 1.0], [1.0, 0.0])
    return TransferFunction(num, den)


def controller_tf(c: Controller) -> TransferFunction:
    return c.tf()


def _lead_parameters(plant: TransferFunction, spec: DesignSpec, extra_phase: float):
    mag, phase = freq_response(plant, spec.omega_gc)
    phi_add = spec.pm - 180.0 - phase + extra_phase
    if not 0.0 < phi_add < 90.0:
        raise DesignInfeasible(float(phi_add))
    s = np.sin(np.radians(phi_add))
    gamma = (1.0 - s) / (1.0 + s)
    T_D = 1.0 / (np.sqrt(gamma) * spec.omega_gc)
    K_P = np.sqrt(gamma) / mag
    return float(K_P), float(T_D), float(gamma)


def design_lead(plant: TransferFunction, spec: DesignSpec) -> LeadController:
    K_P, T_D, gamma = _lead_parameters(plant, spec, 0.0)
    return LeadController(K_P, T_D, gamma)


def design_pilead(plant: TransferFunction, spec: DesignSpec, pi_phase_allowance: float = 6.0,
                  integral_decades: float = 1.0) -> PiLeadController:
    """Lead design with extra phase, then the PI zero a decade below crossover."""
    K_P, T_D, gamma = _lead_parameters(plant, spec, pi_phase_allowance)
    T_I = 10.0 ** integral_decades / spec.omega_gc
    return PiLeadController(K_P, T_D, T_I, gamma)


def scale_gain(c: Controller, factor: float) -> Controller:
    if not factor > 0:
        raise ValueError("gain factor must be positive")
    return replace(c, K_P=c.K_P * factor)


def verify_design(c: Controller, plant: TransferFunction) -> MarginReport:
    return margins(series(controller_tf(c), plant))


def max_phase_lead(gamma: float) -> float:
    """Peak phase (deg) of a lead factor, reached at 1/(sqrt(gamma) T_D)."""
    return float(np.degrees(np.arcsin((1.0 - gamma) / (1.0 + gamma))))
