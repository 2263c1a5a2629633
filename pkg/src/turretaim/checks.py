"""Tolerance checks against reference results, used by ``--check``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

from .experiments import (Experiment1Result, Experiment2Result, Experiment4Result,
                          Experiment5Result, mpc_settling_times, pid_settling_time)
from .mpc import MpcConfig
from .pid import DesignSpec, PiLeadController, design_lead, design_pilead, verify_design
from .turret import TurretParams, axis_tfs

# Rounded reference controller parameters with their measured margins.
REFERENCE_GAINS = {
    "lead_azimuth": {"K_P": 2120360.0, "T_D": 0.42, "T_I": None, "gamma": 0.045,
                     "f_gc": 1.78, "pm": 70.0},
    "pilead_azimuth": {"K_P": 6507863.0, "T_D": 0.32, "T_I": 0.45, "gamma": 0.020,
                       "f_gc": 4.19, "pm": 70.7},
    "pilead_elevation": {"K_P": 1387706.0, "T_D": 0.45, "T_I": 0.78, "gamma": 0.030,
                         "f_gc": 2.06, "pm": 70.3},
}

# Per-unit error |mu/mu_r| at a 2 s firing time, by controller, case and axis.
REFERENCE_CONSTANTS = {
    "pid": {"N": (9.6e-4, 9.9e-4), "DC": (9.5e-4, 1.8e-3), "MI": (1.0e-3, 1.8e-4)},
    "mpc": {"N": (2.2e-5, 3.1e-7), "DC": (2.7e-5, 3.1e-7), "MI": (9.8e-5, 4.6e-6)},
}

REFERENCE_SETTLING = {"pid": (2.0, 2.0), "mpc": (1.4, 0.94)}
REFERENCE_WHITE = {"norm": (0.1149, 0.1074), "sigma": (0.01625, 0.01519)}
REFERENCE_RAMP_LEAD = 5.03  # mils


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _rel(value: float, ref: float) -> float:
    return abs(value - ref) / abs(ref)


def _within(name: str, value: Optional[float], ref: float, rtol: float = None, atol: float = None) -> Check:
    if value is None:
        return Check(name, False, f"undefined (reference {ref:.6g})")
    ok = (rtol is None or _rel(value, ref) <= rtol) and (atol is None or abs(value - ref) <= atol)
    tol = f"{100 * rtol:g}%" if rtol is not None else f"+/-{atol:g}"
    return Check(name, ok, f"{value:.6g} vs {ref:.6g} ({tol})")


def check_design(params: TurretParams = TurretParams()) -> List[Check]:
    """Lead and PI+lead synthesis at the reference crossovers, plus margins of the rounded gains."""
    g_az, g_el = axis_tfs(params)
    out = []
    for name, plant, pm_tol in (("lead_azimuth", g_az, 0.5), ("pilead_elevation", g_el, 1.0)):
        ref = REFERENCE_GAINS[name]
        spec = DesignSpec.from_hz(ref["f_gc"], 70.0)
        c = design_lead(plant, spec) if name == "lead_azimuth" else design_pilead(plant, spec)
        rep = verify_design(c, plant)
        out += [_within(f"{name} K_P", c.K_P, ref["K_P"], rtol=0.01),
                _within(f"{name} gamma", c.gamma, ref["gamma"], rtol=0.05),
                _within(f"{name} T_D", c.T_D, ref["T_D"], rtol=0.03),
                _within(f"{name} crossover [Hz]", rep.gain_crossover, ref["f_gc"], rtol=0.02),
                _within(f"{name} PM [deg]", rep.phase_margin, ref["pm"], atol=pm_tol)]
    ref = REFERENCE_GAINS["pilead_azimuth"]
    rep = verify_design(PiLeadController(ref["K_P"], ref["T_D"], ref["T_I"], ref["gamma"]), g_az)
    out += [_within("reference pilead_azimuth crossover [Hz]", rep.gain_crossover, ref["f_gc"], rtol=0.02),
            _within("reference pilead_azimuth PM [deg]", rep.phase_margin, ref["pm"], atol=0.5)]
    return out


def check_settling(controllers, params: TurretParams = TurretParams(), cfg: MpcConfig = MpcConfig()) -> List[Check]:
    g_az, g_el = axis_tfs(params)
    out = [_within("PID azimuth settling [s]", pid_settling_time(controllers.lead_azimuth, g_az),
                   REFERENCE_SETTLING["pid"][0], atol=0.05),
           _within("PID elevation settling [s]", pid_settling_time(controllers.pilead_elevation, g_el),
                   REFERENCE_SETTLING["pid"][1], atol=0.05)]
    for axis, ts, ref in zip(("azimuth", "elevation"), mpc_settling_times(params, cfg),
                             REFERENCE_SETTLING["mpc"]):
        out.append(_within(f"MPC {axis} settling [s]", ts, ref, rtol=0.15))
    return out


def check_exp1(res: Experiment1Result) -> List[Check]:
    out = []
    nom = res.trials.get("N")
    if res.controller == "pid" and nom is not None:
        az, el = nom.stats(2.0, 0), nom.stats(2.0, 1)
        out += [_within("PID mu_az(2 s) [mils]", az.mu, -1.2, atol=0.03),
                _within("PID sigma_az(2 s) [mils]", az.sigma, 0.58, atol=0.02),
                _within("PID mu_el(2 s) [mils]", el.mu, -0.31, atol=0.01)]
        for j, ax in enumerate(("azimuth", "elevation")):
            k_mu, k_sig = res.constants(2.0)["N"][ax]
            out.append(_within(f"PID k_{ax} N", k_mu, REFERENCE_CONSTANTS["pid"]["N"][j], rtol=0.02))
        for case, ts in res.trials.items():
            for j, ax in enumerate(("azimuth", "elevation")):
                k_mu, k_sig = res.constants(2.0)[case][ax]
                ok = k_mu is not None and k_sig is not None and abs(k_mu - k_sig) <= 1e-12 * k_sig
                out.append(Check(f"PID linearity {case} {ax}", ok, f"|mu/mu_r|={k_mu!r} sigma/sigma_r={k_sig!r}"))
                for t in ts.firing_times:
                    if t <= 4.0:
                        out.append(_within(f"PID c_v {case} {ax} t_f={t:g}", ts.stats(t, j).cv, 0.49, atol=0.01))
    if res.controller == "mpc":
        for case in res.trials:
            for j, ax in enumerate(("azimuth", "elevation")):
                k_mu, _ = res.constants(2.0)[case][ax]
                ref = REFERENCE_CONSTANTS["mpc"][case][j]
                ok = k_mu is not None and ref / 3 <= k_mu <= ref * 3
                out.append(Check(f"MPC k_{ax} {case}", ok, f"{k_mu:.3g} vs {ref:.3g} (factor 3)"))
                pid_ref = REFERENCE_CONSTANTS["pid"][case][j]
                out.append(Check(f"MPC below PID {case} {ax}", k_mu is not None and k_mu < pid_ref,
                                 f"{k_mu:.3g} vs PID {pid_ref:.3g} (ratio {k_mu / pid_ref:.2g})"))
    return out


def check_exp2(res: Experiment2Result, t: float = 6.0) -> List[Check]:
    out = []
    n = len(res.trials)
    for j, ax in enumerate(("azimuth", "elevation")):
        s, ns = res.trials.stats(t, j), res.trials.noise_stats(j)
        out.append(Check(f"{ax} sigma(t_f={t:g}) [mils]", 0.095 <= s.sigma <= 0.115, f"{s.sigma:.4g} in [0.095, 0.115]"))
        gap, lim = abs(s.mu - ns.mu), 3 * s.sigma / n ** 0.5
        out.append(Check(f"{ax} |mu_out - mu_noise| [mils]", gap < lim, f"{gap:.3g} < {lim:.3g}"))
    return out


def check_exp4(res: Experiment4Result) -> List[Check]:
    out = []
    for j, a in enumerate(res.axes):
        out += [_within(f"{a.axis} sigma_e theory [mils]", a.sigma_theory, REFERENCE_WHITE["sigma"][j], rtol=0.02),
                _within(f"{a.axis} ||H||_2", a.norm, REFERENCE_WHITE["norm"][j], rtol=0.02),
                _within(f"{a.axis} sigma_hat vs theory", a.sigma_hat, a.sigma_theory, rtol=0.02),
                _within(f"{a.axis} ||H_hat||_2 vs ||H||_2", a.norm_hat, a.norm, rtol=0.015),
                Check(f"{a.axis} KS vs normal", a.ks_pvalue > 0.01, f"p = {a.ks_pvalue:.3g} > 0.01")]
    return out


def check_exp5(res: Experiment5Result) -> List[Check]:
    lead = res.track("lead_azimuth")
    out = [_within("lead e_ss simulated [mils]", lead.e_ss, REFERENCE_RAMP_LEAD, rtol=0.01),
           _within("lead e_ss velocity constant [mils]", lead.e_ss_theory, REFERENCE_RAMP_LEAD, rtol=0.01)]
    for name in ("pilead_azimuth", "pilead_elevation"):
        tr = res.track(name)
        out.append(Check(f"{name} |e(t_end)| [mils]", abs(tr.e_final) < 0.01, f"{tr.e_final:.3g}"))
    return out


def summarize(checks: List[Check]) -> Dict[str, object]:
    return {"passed": all(c.passed for c in checks), "checks": [c.__dict__ for c in checks]}
