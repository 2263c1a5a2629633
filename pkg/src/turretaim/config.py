"""Run configuration read from an INI file.

Every key has a default, so an empty or missing file yields the reference
setup.  Controller sections either give design targets (``omega_gc`` in
rad/s, ``pm`` in deg, optional ``gain_scale``) or explicit parameters
(``K_P``, ``T_D``, ``gamma`` and, for PI+lead, ``T_I``), which take
precedence when complete.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from .experiments import ControllerSet, DesignTargets, TargetGrid
from .mpc import MpcConfig
from .pid import DesignSpec, LeadController, PiLeadController, design_lead, design_pilead, scale_gain
from .turret import TurretParams, axis_tfs

EXPERIMENTS = ("design", "margins", "exp1", "exp2", "exp3", "exp4", "exp5")


class ConfigError(ValueError):
    def __init__(self, diagnostics: List[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _pair(text: str) -> Tuple[float, ...]:
    vals = _floats(text)
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2:
        raise ValueError("expected one value or two comma-separated values")
    return vals


def _int(text: str) -> int:
    return int(text.strip())


def _str(text: str) -> str:
    return text.strip()


_CONTROLLER_KEYS = {"omega_gc": float, "pm": float, "gain_scale": float,
                    "K_P": float, "T_D": float, "T_I": float, "gamma": float}

SCHEMA: Dict[str, Dict[str, Callable[[str], object]]] = {
    "turret": {k: float for k in ("m1", "m2", "b1", "b2", "R", "L", "g")},
    "controller.lead_azimuth": dict(_CONTROLLER_KEYS),
    "controller.pilead_azimuth": dict(_CONTROLLER_KEYS),
    "controller.pilead_elevation": dict(_CONTROLLER_KEYS),
    "mpc": {"p": _int, "m": _int, "Ts": float, "w_y": _pair, "w_du": _pair, "w_u": _pair,
            "s_y": _pair, "s_u": _pair, "y_min": _pair, "y_max": _pair, "V_y_min": _pair,
            "V_y_max": _pair, "rho_eps": float, "observer_pole": float},
    "experiments": {"controller": _str, "seed": _int, "trials": _int, "workers": _int,
                    "firing_times": _floats, "epsilon": float, "noise_sigma": float,
                    "white_sigma": float, "white_h": float, "white_tau": float,
                    "white_firing_time": float, "ramp_rate": float, "ramp_duration": float,
                    "ranges": _floats, "azimuths": _floats, "elevations": _floats,
                    "out": _str, "plots": _str},
}


@dataclass(frozen=True)
class ExperimentSettings:
    controller: str = "pid"
    seed: int = 42
    trials: int = 10_000
    workers: int = 1
    firing_times: Tuple[float, ...] = tuple(float(t) for t in range(1, 11))
    epsilon: float = 0.1
    noise_sigma: float = 0.1  # mils
    white_sigma: float = 1.0  # mils
    white_h: float = 0.02  # s
    white_tau: float = 2.0  # s
    white_firing_time: float = 10.0  # s
    ramp_rate: float = 10.0  # deg/s
    ramp_duration: float = 20.0  # s
    out: str = "results"
    plots: str = "yes"


@dataclass
class RunConfig:
    turret: TurretParams = field(default_factory=TurretParams)
    design: DesignTargets = field(default_factory=DesignTargets)
    explicit: Dict[str, object] = field(default_factory=dict)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    experiments: ExperimentSettings = field(default_factory=ExperimentSettings)
    grid: TargetGrid = field(default_factory=TargetGrid)

    def controllers(self) -> ControllerSet:
        """Designed controllers, with explicit parameter blocks taking precedence."""
        g_az, g_el = axis_tfs(self.turret)
        d = self.design
        lead = self.explicit.get("lead_azimuth") or design_lead(g_az, d.lead_azimuth)
        pia = self.explicit.get("pilead_azimuth") or scale_gain(
            design_pilead(g_az, d.pilead_azimuth), d.pilead_azimuth_gain)
        pie = self.explicit.get("pilead_elevation") or design_pilead(g_el, d.pilead_elevation)
        return ControllerSet(lead, pia, pie)


def _read(path=None, text: Optional[str] = None) -> Tuple[configparser.ConfigParser, List[str]]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    diags = []
    try:
        if path is not None:
            p = Path(path)
            if not p.is_file():
                return cp, [f"config file {p} not found"]
            cp.read_string(p.read_text(), source=str(p))
        if text is not None:
            cp.read_string(text)
    except configparser.Error as exc:
        diags.append(f"malformed config: {exc}")
    return cp, diags


def _parse(cp: configparser.ConfigParser) -> Tuple[Dict[str, Dict[str, object]], List[str]]:
    values: Dict[str, Dict[str, object]] = {}
    diags = []
    for sec in cp.sections():
        if sec not in SCHEMA:
            diags.append(f"[{sec}]: unknown section")
            continue
        values[sec] = {}
        for key, raw in cp.items(sec):
            conv = SCHEMA[sec].get(key)
            if conv is None:
                diags.append(f"[{sec}] {key}: unknown key")
                continue
            try:
                values[sec][key] = conv(raw)
            except ValueError as exc:
                diags.append(f"[{sec}] {key}: cannot parse {raw!r} ({exc})")
    return values, diags


def _build(values: Dict[str, Dict[str, object]]) -> Tuple[RunConfig, List[str]]:
    diags: List[str] = []
    cfg = RunConfig()

    def attempt(section, fn):
        try:
            return fn()
        except ValueError as exc:
            diags.append(f"[{section}] {exc}")
            return None

    cfg.turret = attempt("turret", lambda: TurretParams(**values.get("turret", {}))) or cfg.turret
    cfg.mpc = attempt("mpc", lambda: MpcConfig(**values.get("mpc", {}))) or cfg.mpc

    defaults = DesignTargets()
    specs = {}
    for name in ("lead_azimuth", "pilead_azimuth", "pilead_elevation"):
        sec = f"controller.{name}"
        v = values.get(sec, {})
        base: DesignSpec = getattr(defaults, name)
        specs[name] = attempt(sec, lambda: DesignSpec(v.get("omega_gc", base.omega_gc),
                                                      v.get("pm", base.pm))) or base
        if "gain_scale" in v and not v["gain_scale"] > 0:
            diags.append(f"[{sec}] gain_scale: must be positive, got {v['gain_scale']}")
        if name != "pilead_azimuth" and v.get("gain_scale", 1.0) != 1.0:
            diags.append(f"[{sec}] gain_scale: only supported for pilead_azimuth")
        before = len(diags)
        needed = ("K_P", "T_D", "gamma") + (("T_I",) if name.startswith("pilead") else ())
        given = [k for k in needed if k in v]
        if name == "lead_azimuth" and "T_I" in v:
            diags.append(f"[{sec}] T_I: not a lead controller parameter")
        for k in given:
            if k == "gamma" and not 0 < v[k] < 1:
                diags.append(f"[{sec}] gamma: must lie in (0, 1), got {v[k]}")
            elif k != "gamma" and not v[k] > 0:
                diags.append(f"[{sec}] {k}: must be positive, got {v[k]}")
        if given and len(given) != len(needed):
            missing = [k for k in needed if k not in v]
            diags.append(f"[{sec}] {', '.join(missing)}: required when explicit parameters are given")
        elif given and len(diags) == before:
            cls = LeadController if name == "lead_azimuth" else PiLeadController
            ctrl = attempt(sec, lambda: cls(**{k: v[k] for k in needed}))
            if ctrl is not None:
                cfg.explicit[name] = ctrl
    gain = values.get("controller.pilead_azimuth", {}).get("gain_scale", defaults.pilead_azimuth_gain)
    cfg.design = DesignTargets(specs["lead_azimuth"], specs["pilead_azimuth"],
                               gain if gain > 0 else defaults.pilead_azimuth_gain,
                               specs["pilead_elevation"])

    ex = dict(values.get("experiments", {}))
    grid_keys = {k: ex.pop(k) for k in ("ranges", "azimuths", "elevations") if k in ex}
    cfg.grid = attempt("experiments", lambda: TargetGrid(**grid_keys)) or cfg.grid
    settings = ExperimentSettings(**ex)
    if settings.controller not in ("pid", "mpc"):
        diags.append(f"[experiments] controller: expected 'pid' or 'mpc', got {settings.controller!r}")
    if settings.trials < 1:
        diags.append(f"[experiments] trials: must be at least 1, got {settings.trials}")
    if settings.workers < 1:
        diags.append(f"[experiments] workers: must be at least 1, got {settings.workers}")
    if not settings.firing_times or any(t <= 0 for t in settings.firing_times):
        diags.append("[experiments] firing_times: must be a non-empty list of positive times")
    for k in ("noise_sigma", "white_sigma"):
        if getattr(settings, k) < 0:
            diags.append(f"[experiments] {k}: must be non-negative")
    for k in ("white_h", "white_tau", "white_firing_time", "ramp_duration"):
        if not getattr(settings, k) > 0:
            diags.append(f"[experiments] {k}: must be positive")
    if not settings.epsilon > -1:
        diags.append(f"[experiments] epsilon: must be greater than -1, got {settings.epsilon}")
    if settings.plots not in ("yes", "no"):
        diags.append(f"[experiments] plots: expected 'yes' or 'no', got {settings.plots!r}")
    cfg.experiments = settings
    return cfg, diags


def validate(path=None, text: Optional[str] = None) -> List[str]:
    """Diagnostics for a config file or INI text; empty when the config is usable."""
    cp, diags = _read(path, text)
    values, more = _parse(cp)
    _, build_diags = _build(values)
    return diags + more + build_diags


def load_config(path=None, text: Optional[str] = None) -> RunConfig:
    cp, diags = _read(path, text)
    values, more = _parse(cp)
    cfg, build_diags = _build(values)
    diags += more + build_diags
    if diags:
        raise ConfigError(diags)
    return cfg


def default_config_text() -> str:
    """INI text spelling out every default."""
    t, d, m, e = TurretParams(), DesignTargets(), MpcConfig(), ExperimentSettings()

    def fmt(v):
        return ", ".join(f"{x:g}" for x in v) if isinstance(v, tuple) else f"{v:g}" if isinstance(v, float) else str(v)

    lines = ["[turret]"]
    lines += [f"{k} = {fmt(getattr(t, k))}" for k in SCHEMA["turret"]]
    for name in ("lead_azimuth", "pilead_azimuth", "pilead_elevation"):
        spec = getattr(d, name)
        lines += ["", f"[controller.{name}]", f"omega_gc = {spec.omega_gc:g}", f"pm = {spec.pm:g}"]
        if name == "pilead_azimuth":
            lines.append(f"gain_scale = {d.pilead_azimuth_gain:g}")
    lines += ["", "[mpc]"] + [f"{k} = {fmt(getattr(m, k))}" for k in SCHEMA["mpc"]]
    lines += ["", "[experiments]"]
    lines += [f"{k} = {fmt(getattr(e, k))}" for k in SCHEMA["experiments"] if hasattr(e, k)]
    return "\n".join(lines) + "\n"
