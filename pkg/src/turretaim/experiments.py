"""Monte Carlo aiming studies on the linear turret.

Every trial starts the turret at rest, commands a step to a sampled target
and records ``reference - output`` at a set of firing times.  Trials are
grouped into fixed-size chunks so results do not depend on how many worker
processes are used.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .lti import (TransferFunction, UnstableSystemError, c2d_zoh, close_unity,
                  h2_norm_discrete, is_stable, series, settling_time, simulate_held, tf_c2d_zoh,
                  tf_to_ss)
from .mpc import MpcConfig, MpcController, closed_loop_batch
from .pid import (Controller, DesignSpec, LeadController, PiLeadController, design_lead,
                  design_pilead, scale_gain)
from .turret import AXES, Perturbation, TurretParams, apply_perturbation, axis_tfs, linearize

MILS_PER_REV = 6400.0
MILS_PER_RAD = MILS_PER_REV / (2.0 * np.pi)
MILS_PER_DEG = MILS_PER_REV / 360.0

STREAM_TARGETS = 0
STREAM_AIMPOINT = 1
STREAM_WHITE = 2

CHUNK_SIZE = 1000
DEFAULT_FIRING_TIMES = tuple(float(t) for t in range(1, 11))
CASES = ("N", "DC", "MI")


def mils_from_rad(x):
    return np.asarray(x, dtype=float) * MILS_PER_RAD if np.ndim(x) else float(x) * MILS_PER_RAD


def rad_from_mils(x):
    return np.asarray(x, dtype=float) / MILS_PER_RAD if np.ndim(x) else float(x) / MILS_PER_RAD


def mils_from_deg(x):
    return np.asarray(x, dtype=float) * MILS_PER_DEG if np.ndim(x) else float(x) * MILS_PER_DEG


def deg_from_mils(x):
    return np.asarray(x, dtype=float) / MILS_PER_DEG if np.ndim(x) else float(x) / MILS_PER_DEG


# --------------------------------------------------------------------------
# targets and random streams


@dataclass(frozen=True)
class TargetGrid:
    ranges: Tuple[float, ...] = tuple(np.linspace(1000.0, 2000.0, 9))  # m
    azimuths: Tuple[float, ...] = tuple(np.linspace(20.0, 120.0, 6))  # deg
    elevations: Tuple[float, ...] = tuple(np.linspace(5.0, 30.0, 6))  # deg

    def __post_init__(self):
        for name, n in (("ranges", 9), ("azimuths", 6), ("elevations", 6)):
            vals = np.asarray(getattr(self, name), dtype=float)
            if vals.size != n:
                raise ValueError(f"{name} must hold {n} values, got {vals.size}")
            steps = np.diff(vals)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0) or steps[0] <= 0:
                raise ValueError(f"{name} must be increasing and uniformly spaced")

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return len(self.ranges), len(self.azimuths), len(self.elevations)


@dataclass(frozen=True)
class Target:
    indices: Tuple[int, int, int]
    range_m: float
    azimuth_deg: float
    elevation_deg: float

    @property
    def angles_rad(self) -> np.ndarray:
        return np.radians([self.azimuth_deg, self.elevation_deg])


def trial_rng(master_seed: int, stream: int, trial_index: int) -> np.random.Generator:
    """Independent counter-based generator for one (stream, trial) pair."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(stream, trial_index))
    return np.random.Generator(np.random.Philox(ss))


def sample_target(grid: TargetGrid, rng: np.random.Generator) -> Target:
    i, j, k = (int(v) for v in rng.integers(0, grid.sizes))
    return Target((i, j, k), float(grid.ranges[i]), float(grid.azimuths[j]),
                  float(grid.elevations[k]))


# --------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class ErrorStats:
    mu: float  # mils
    sigma: float  # mils
    cv: Optional[float]  # None when mu == 0

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "cv": self.cv}


def error_stats(samples) -> ErrorStats:
    """Population mean, population std and coefficient of variation."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("error_stats needs at least one sample")
    mu = float(np.mean(x))
    sigma = float(np.sqrt(np.mean((x - mu) ** 2)))
    return ErrorStats(mu, sigma, sigma / abs(mu) if mu != 0.0 else None)


def proportionality_constants(err: ErrorStats, ref: ErrorStats) -> Tuple[Optional[float], Optional[float]]:
    """(|mu/mu_r|, sigma/sigma_r); a zero denominator gives None."""
    k_mu = abs(err.mu / ref.mu) if ref.mu != 0.0 else None
    k_sigma = err.sigma / ref.sigma if ref.sigma != 0.0 else None
    return k_mu, k_sigma


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def histogram(samples, bins: int = 50) -> Histogram:
    x = np.asarray(samples, dtype=float).ravel()
    counts, edges = np.histogram(x, bins=bins)
    width = np.diff(edges)
    density = counts / (x.size * width) if x.size else np.zeros_like(width)
    return Histogram(edges, counts, density)


# --------------------------------------------------------------------------
# closed loops


@dataclass(frozen=True)
class ControllerSet:
    lead_azimuth: LeadController
    pilead_azimuth: PiLeadController
    pilead_elevation: PiLeadController

    @property
    def pid_pair(self) -> Tuple[Controller, Controller]:
        """Controllers used for static targets: lead on azimuth, PI+lead on elevation."""
        return self.lead_azimuth, self.pilead_elevation


@dataclass(frozen=True)
class DesignTargets:
    lead_azimuth: DesignSpec = DesignSpec(11.2, 70.0)
    pilead_azimuth: DesignSpec = DesignSpec(22.0, 70.0)
    pilead_azimuth_gain: float = 1.2
    pilead_elevation: DesignSpec = DesignSpec(12.9, 70.0)


def design_controllers(params: TurretParams, targets: DesignTargets = DesignTargets()) -> ControllerSet:
    g_az, g_el = axis_tfs(params)
    return ControllerSet(
        design_lead(g_az, targets.lead_azimuth),
        scale_gain(design_pilead(g_az, targets.pilead_azimuth), targets.pilead_azimuth_gain),
        design_pilead(g_el, targets.pilead_elevation),
    )


class PidLoop:
    """Two decoupled unity-feedback loops sampled exactly for step commands.

    The loops are LTI, so a trial's error is its command times the unit-step
    error of 1/(1 + K G); that response is simulated once per axis and
    reused, which keeps every trial exactly proportional to its target.
    """

    def __init__(self, controllers: Sequence[Controller], params: TurretParams, Ts: float = 0.01):
        self.Ts = Ts
        self.controllers = tuple(controllers)
        self._sens = []
        for c, g in zip(self.controllers, axis_tfs(params)):
            _, sens = close_unity(series(c.tf(), g))
            if not is_stable(sens):
                raise UnstableSystemError("closed loop is unstable")
            self._sens.append(c2d_zoh(tf_to_ss(sens), Ts))
        self._unit = np.empty((0, 2))

    def unit_errors(self, n_steps: int) -> np.ndarray:
        """Unit-step error samples (n_steps+1, 2)."""
        if self._unit.shape[0] < n_steps + 1:
            self._unit = np.column_stack([simulate_held(d, [[1.0]], n_steps)[:, 0, 0] for d in self._sens])
        return self._unit[:n_steps + 1]

    def simulate_errors(self, commands, n_steps: int) -> np.ndarray:
        """Per-command simulation without superposition; used as a cross-check."""
        commands = np.atleast_2d(np.asarray(commands, dtype=float))
        out = np.empty((n_steps + 1, commands.shape[0], 2))
        for j, d in enumerate(self._sens):
            out[:, :, j] = simulate_held(d, commands[:, j:j + 1], n_steps)[:, :, 0]
        return out

    def tracking_errors(self, commands, n_steps: int) -> np.ndarray:
        """commands (N, 2) rad -> command - output, shape (n_steps+1, N, 2)."""
        commands = np.atleast_2d(np.asarray(commands, dtype=float))
        return self.unit_errors(n_steps)[:, None, :] * commands[None, :, :]


class MpcLoop:
    """MPC built on the nominal model driving a possibly perturbed plant."""

    def __init__(self, model_params: TurretParams, plant_params: TurretParams, cfg: MpcConfig = MpcConfig()):
        self.Ts = cfg.Ts
        self.controller = MpcController(c2d_zoh(linearize(model_params), cfg.Ts), cfg)
        self.plant = c2d_zoh(linearize(plant_params), cfg.Ts)

    def tracking_errors(self, commands, n_steps: int) -> np.ndarray:
        commands = np.atleast_2d(np.asarray(commands, dtype=float))
        y = closed_loop_batch(self.plant, self.controller, commands, n_steps)
        return commands[None, :, :] - y


def case_perturbation(case: str, epsilon: float = 0.1) -> Optional[Perturbation]:
    if case == "N":
        return None
    if case == "DC":
        return Perturbation("damping", "both", epsilon)
    if case == "MI":
        return Perturbation("inertia", "both", epsilon)
    raise ValueError(f"unknown case {case!r}; expected one of {CASES}")


def make_loop(controller: str, params: TurretParams, case: str = "N", epsilon: float = 0.1,
              controllers: Optional[ControllerSet] = None, mpc_cfg: MpcConfig = MpcConfig(),
              Ts: float = 0.01):
    """Closed loop for ``case``; controllers always come from the nominal parameters."""
    pert = case_perturbation(case, epsilon)
    plant = params if pert is None else apply_perturbation(params, pert)
    if controller == "pid":
        cs = controllers if controllers is not None else design_controllers(params)
        return PidLoop(cs.pid_pair, plant, Ts)
    if controller == "mpc":
        return MpcLoop(params, plant, mpc_cfg)
    raise ValueError(f"unknown controller {controller!r}; expected 'pid' or 'mpc'")


# --------------------------------------------------------------------------
# trials


@dataclass(frozen=True)
class TrialRecord:
    indices: Tuple[int, int, int]
    reference: np.ndarray  # (2,) mils
    noise: np.ndarray  # (2,) mils
    firing_times: Tuple[float, ...]
    errors: np.ndarray  # (n_tf, 2) mils


@dataclass
class TrialSet:
    firing_times: Tuple[float, ...]
    indices: np.ndarray  # (N, 3)
    ranges: np.ndarray  # (N,) m
    reference: np.ndarray  # (N, 2) mils
    noise: np.ndarray  # (N, 2) mils
    errors: np.ndarray  # (N, n_tf, 2) mils

    def __len__(self) -> int:
        return self.indices.shape[0]

    def tf_index(self, t: float) -> int:
        for i, ft in enumerate(self.firing_times):
            if abs(ft - t) < 1e-9:
                return i
        raise KeyError(f"firing time {t} not recorded")

    def stats(self, t: float, axis: int) -> ErrorStats:
        return error_stats(self.errors[:, self.tf_index(t), axis])

    def reference_stats(self, axis: int) -> ErrorStats:
        return error_stats(self.reference[:, axis])

    def noise_stats(self, axis: int) -> ErrorStats:
        return error_stats(self.noise[:, axis])

    def record(self, i: int) -> TrialRecord:
        return TrialRecord(tuple(int(v) for v in self.indices[i]), self.reference[i].copy(),
                           self.noise[i].copy(), self.firing_times, self.errors[i].copy())


def _firing_steps(firing_times: Sequence[float], Ts: float, horizon: Optional[float] = None) -> np.ndarray:
    ft = np.asarray(firing_times, dtype=float)
    if ft.size == 0 or np.any(ft <= 0):
        raise ValueError("firing times must be positive")
    if horizon is not None and np.any(ft > horizon + 1e-12):
        raise ValueError(f"firing time {ft.max()} s is beyond the simulated horizon {horizon} s")
    steps = np.rint(ft / Ts).astype(int)
    if np.any(np.abs(steps * Ts - ft) > 1e-9):
        raise ValueError(f"firing times must be multiples of the sample time {Ts}")
    return steps


def _errors_at(loop, reference_rad: np.ndarray, noise_rad: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Errors in mils, shape (N, n_tf, 2).

    The aimpoint measurement offsets the command to ``P - n`` while the
    error is still taken against the true target ``P``.
    """
    commands = reference_rad - noise_rad
    e = loop.tracking_errors(commands, int(steps.max()))[steps]  # (n_tf, N, 2)
    e = e + noise_rad[None, :, :]
    return np.transpose(e, (1, 0, 2)) * MILS_PER_RAD


def run_trial(loop, target: Target, firing_times: Sequence[float], noise_mils=(0.0, 0.0),
              horizon: Optional[float] = None) -> TrialRecord:
    steps = _firing_steps(firing_times, loop.Ts, horizon)
    ref = target.angles_rad[None, :]
    noise = rad_from_mils(np.asarray(noise_mils, dtype=float))[None, :]
    err = _errors_at(loop, ref, noise, steps)[0]
    return TrialRecord(target.indices, ref[0] * MILS_PER_RAD, noise[0] * MILS_PER_RAD,
                       tuple(float(t) for t in firing_times), err)


def _run_chunk(args):
    loop, grid, seed, start, stop, steps, noise_sigma = args
    n = stop - start
    idx = np.empty((n, 3), dtype=int)
    ranges = np.empty(n)
    ref = np.empty((n, 2))
    noise = np.zeros((n, 2))
    for r, i in enumerate(range(start, stop)):
        t = sample_target(grid, trial_rng(seed, STREAM_TARGETS, i))
        idx[r] = t.indices
        ranges[r] = t.range_m
        ref[r] = t.angles_rad
        if noise_sigma > 0:
            noise[r] = trial_rng(seed, STREAM_AIMPOINT, i).normal(0.0, noise_sigma, 2)
    err = _errors_at(loop, ref, rad_from_mils(noise), steps)
    return idx, ranges, ref * MILS_PER_RAD, noise, err


def run_trials(loop, n_trials: int, seed: int, firing_times: Sequence[float] = DEFAULT_FIRING_TIMES,
               grid: TargetGrid = TargetGrid(), noise_sigma: float = 0.0, workers: int = 1,
               chunk_size: int = CHUNK_SIZE) -> TrialSet:
    """Monte Carlo trials; ``noise_sigma`` is the aimpoint noise std in mils."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    steps = _firing_steps(firing_times, loop.Ts)
    jobs = [(loop, grid, seed, s, min(s + chunk_size, n_trials), steps, noise_sigma)
            for s in range(0, n_trials, chunk_size)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    cat = [np.concatenate([p[k] for p in parts]) for k in range(5)]
    return TrialSet(tuple(float(t) for t in firing_times), *cat)


# --------------------------------------------------------------------------
# experiments 1-3: static targets


@dataclass(frozen=True)
class StatsRow:
    case: str
    firing_time: float
    azimuth: ErrorStats
    elevation: ErrorStats


def stats_table(trials: Dict[str, TrialSet]) -> List[StatsRow]:
    rows = []
    for case, ts in trials.items():
        for t in ts.firing_times:
            rows.append(StatsRow(case, t, ts.stats(t, 0), ts.stats(t, 1)))
    return rows


@dataclass
class Experiment1Result:
    controller: str
    trials: Dict[str, TrialSet]

    def table(self) -> List[StatsRow]:
        return stats_table(self.trials)

    def constants(self, t: float = 2.0) -> Dict[str, Dict[str, Tuple[Optional[float], Optional[float]]]]:
        out = {}
        for case, ts in self.trials.items():
            out[case] = {ax: proportionality_constants(ts.stats(t, j), ts.reference_stats(j))
                         for j, ax in enumerate(AXES)}
        return out


def experiment1(controller: str = "pid", params: TurretParams = TurretParams(), n_trials: int = 10_000,
                seed: int = 42, cases: Sequence[str] = CASES, epsilon: float = 0.1,
                firing_times: Sequence[float] = DEFAULT_FIRING_TIMES,
                controllers: Optional[ControllerSet] = None, mpc_cfg: MpcConfig = MpcConfig(),
                grid: TargetGrid = TargetGrid(), workers: int = 1) -> Experiment1Result:
    """Nominal and mis-modelled plants; every case sees the same targets."""
    trials = {}
    for case in cases:
        loop = make_loop(controller, params, case, epsilon, controllers, mpc_cfg)
        trials[case] = run_trials(loop, n_trials, seed, firing_times, grid, workers=workers)
    return Experiment1Result(controller, trials)


@dataclass
class Experiment2Result:
    controller: str
    noise_sigma: float
    trials: TrialSet
    hist_time: float

    def table(self) -> List[Tuple[float, ErrorStats, ErrorStats, ErrorStats, ErrorStats]]:
        """(t_f, output az, noise az, output el, noise el)."""
        naz, nel = self.trials.noise_stats(0), self.trials.noise_stats(1)
        return [(t, self.trials.stats(t, 0), naz, self.trials.stats(t, 1), nel)
                for t in self.trials.firing_times]

    def histograms(self, bins: int = 50) -> Dict[str, Histogram]:
        i = self.trials.tf_index(self.hist_time)
        out = {}
        for j, ax in enumerate(AXES):
            out[f"error_{ax}"] = histogram(self.trials.errors[:, i, j], bins)
            out[f"noise_{ax}"] = histogram(self.trials.noise[:, j], bins)
        return out


def experiment2(controller: str = "pid", params: TurretParams = TurretParams(), n_trials: int = 10_000,
                seed: int = 42, noise_sigma: float = 0.1,
                firing_times: Sequence[float] = DEFAULT_FIRING_TIMES,
                controllers: Optional[ControllerSet] = None, mpc_cfg: MpcConfig = MpcConfig(),
                grid: TargetGrid = TargetGrid(), workers: int = 1,
                hist_time: float = 6.0) -> Experiment2Result:
    loop = make_loop(controller, params, "N", 0.0, controllers, mpc_cfg)
    ts = run_trials(loop, n_trials, seed, firing_times, grid, noise_sigma, workers)
    return Experiment2Result(controller, noise_sigma, ts, hist_time)


@dataclass(frozen=True)
class Curve:
    case: str
    firing_times: np.ndarray  # s
    mean: np.ndarray  # (n_tf, 2) mils
    std: np.ndarray  # (n_tf, 2) mils


def experiment3(exp1: Experiment1Result, exp2: Optional[Experiment2Result] = None) -> List[Curve]:
    """Mean error against firing time with std bars for each stored case."""
    sets = dict(exp1.trials)
    if exp2 is not None:
        sets["noise"] = exp2.trials
    curves = []
    for case, ts in sets.items():
        mean = np.array([[ts.stats(t, j).mu for j in range(2)] for t in ts.firing_times])
        std = np.array([[ts.stats(t, j).sigma for j in range(2)] for t in ts.firing_times])
        curves.append(Curve(case, np.asarray(ts.firing_times), mean, std))
    return curves


# --------------------------------------------------------------------------
# experiment 4: filtered white noise


def build_error_system(controller: Controller, plant: TransferFunction, tau: float = 2.0) -> TransferFunction:
    """w -> e map 1/((tau s + 1)(1 + K G)) in continuous time."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    _, sens = close_unity(series(controller.tf(), plant))
    if not is_stable(sens):
        raise UnstableSystemError("closed loop is unstable")
    return TransferFunction(sens.num, np.polymul([tau, 1.0], sens.den))


def theoretical_sigma_e(H: TransferFunction, sigma_w: float, h: Optional[float] = None) -> float:
    """Steady-state error std ``||H||_2 sigma_w / sqrt(f_s)`` for discrete H."""
    h = H.dt if h is None else h
    return h2_norm_discrete(H, h) * sigma_w * np.sqrt(h)


@dataclass(frozen=True)
class WhiteNoiseAxis:
    axis: str
    norm: float  # ||H||_2
    sigma_theory: float  # mils
    mu_hat: float
    sigma_hat: float
    sigma_w_hat: float
    mu_w_hat: float
    norm_hat: float
    ks_statistic: float
    ks_pvalue: float
    samples: np.ndarray = field(repr=False)

    def histogram(self, bins: int = 50) -> Histogram:
        return histogram(self.samples, bins)

    def pdf(self, e) -> np.ndarray:
        return stats.norm.pdf(e, loc=0.0, scale=self.sigma_theory)


@dataclass
class Experiment4Result:
    h: float
    firing_time: float
    sigma_w: float
    n_trials: int
    axes: Tuple[WhiteNoiseAxis, WhiteNoiseAxis]


def experiment4(params: TurretParams = TurretParams(), n_trials: int = 10_000, seed: int = 42,
                sigma_w: float = 1.0, h: float = 0.02, tau: float = 2.0, firing_time: float = 10.0,
                controllers: Optional[ControllerSet] = None, chunk_size: int = CHUNK_SIZE) -> Experiment4Result:
    cs = controllers if controllers is not None else design_controllers(params)
    n_steps = int(_firing_steps([firing_time], h)[0])
    dsys, norms = [], []
    for c, g in zip(cs.pid_pair, axis_tfs(params)):
        H = build_error_system(c, g, tau)
        dsys.append(c2d_zoh(tf_to_ss(H), h))
        norms.append(h2_norm_discrete(tf_c2d_zoh(H, h), h))
    e = np.empty((n_trials, 2))
    w_tf = np.empty((n_trials, 2))
    for start in range(0, n_trials, chunk_size):
        stop = min(start + chunk_size, n_trials)
        w = np.stack([trial_rng(seed, STREAM_WHITE, i).normal(0.0, sigma_w, (n_steps + 1, 2))
                      for i in range(start, stop)], axis=1)  # (n_steps+1, n, 2)
        w_tf[start:stop] = w[n_steps]
        for j, d in enumerate(dsys):
            X = np.zeros((stop - start, d.n_states))
            b, AT = d.B[:, 0], d.A.T
            for k in range(n_steps):
                X = X @ AT + w[k, :, j:j + 1] * b
            e[start:stop, j] = X @ d.C[0] + d.D[0, 0] * w[n_steps, :, j]
    axes = []
    for j, ax in enumerate(AXES):
        sig = norms[j] * sigma_w * np.sqrt(h)
        es, ws = error_stats(e[:, j]), error_stats(w_tf[:, j])
        ks = stats.kstest(e[:, j], "norm", args=(0.0, sig))
        axes.append(WhiteNoiseAxis(ax, norms[j], sig, es.mu, es.sigma, ws.sigma, ws.mu,
                                   es.sigma / ws.sigma / np.sqrt(h), float(ks.statistic),
                                   float(ks.pvalue), e[:, j].copy()))
    return Experiment4Result(h, firing_time, sigma_w, n_trials, tuple(axes))


# --------------------------------------------------------------------------
# experiment 5: constant-rate targets


@dataclass(frozen=True)
class RampTrack:
    name: str
    axis: str
    times: np.ndarray  # s
    reference: np.ndarray  # mils
    output: np.ndarray  # mils
    error: np.ndarray  # mils
    e_ss: float  # mean over the final window, mils
    e_final: float  # mils
    e_ss_theory: float  # mils


@dataclass
class Experiment5Result:
    rate_deg_s: float
    duration: float
    tracks: Tuple[RampTrack, ...]

    def track(self, name: str) -> RampTrack:
        for t in self.tracks:
            if t.name == name:
                return t
        raise KeyError(name)


def velocity_error_constant(controller: Controller, plant: TransferFunction) -> float:
    """lim s->0 of s K(s) G(s); infinite for loops with two integrators."""
    loop = series(controller.tf(), plant)
    den = np.trim_zeros(loop.den, "b")
    n_int = loop.den.size - den.size
    if n_int >= 2:
        return float("inf")
    if n_int == 0:
        return 0.0
    return float(loop.num[-1] / den[-1])


def ramp_error(controller: Controller, plant: TransferFunction, rate: float, duration: float,
               Ts: float = 0.01) -> Tuple[np.ndarray, np.ndarray]:
    """Error samples for a ramp ``rate * t``; exact at the sample instants."""
    _, sens = close_unity(series(controller.tf(), plant))
    d = c2d_zoh(tf_to_ss(TransferFunction(sens.num, np.polymul(sens.den, [1.0, 0.0]))), Ts)
    n = int(round(duration / Ts))
    e = simulate_held(d, [[rate]], n)[:, 0, 0]
    return np.arange(n + 1) * Ts, e


def experiment5(params: TurretParams = TurretParams(), rate_deg_s: float = 10.0, duration: float = 20.0,
                controllers: Optional[ControllerSet] = None, Ts: float = 0.01,
                window: float = 0.1) -> Experiment5Result:
    cs = controllers if controllers is not None else design_controllers(params)
    g_az, g_el = axis_tfs(params)
    rate = mils_from_deg(rate_deg_s)
    tracks = []
    for name, axis, c, g in (("lead_azimuth", "azimuth", cs.lead_azimuth, g_az),
                             ("pilead_azimuth", "azimuth", cs.pilead_azimuth, g_az),
                             ("pilead_elevation", "elevation", cs.pilead_elevation, g_el)):
        t, e = ramp_error(c, g, rate, duration, Ts)
        ref = rate * t
        tail = t >= (1.0 - window) * duration - 1e-9
        kv = velocity_error_constant(c, g)
        tracks.append(RampTrack(name, axis, t, ref, ref - e, e, float(np.mean(e[tail])),
                                float(e[-1]), rate / kv if kv > 0 else float("inf")))
    return Experiment5Result(rate_deg_s, duration, tuple(tracks))


# --------------------------------------------------------------------------
# step settling


def pid_step_response(controller: Controller, plant: TransferFunction, duration: float = 10.0,
                      Ts: float = 0.01) -> Tuple[np.ndarray, np.ndarray]:
    """Unit-step output of L/(1+L), exact at the sample instants."""
    comp, _ = close_unity(series(controller.tf(), plant))
    n = int(round(duration / Ts))
    y = simulate_held(c2d_zoh(tf_to_ss(comp), Ts), [[1.0]], n)[:, 0, 0]
    return np.arange(n + 1) * Ts, y


def pid_settling_time(controller: Controller, plant: TransferFunction, band: float = 0.001,
                      duration: float = 10.0, Ts: float = 0.01) -> Optional[float]:
    t, y = pid_step_response(controller, plant, duration, Ts)
    return settling_time(y, 1.0, band, t)


def mpc_step_response(params: TurretParams = TurretParams(), cfg: MpcConfig = MpcConfig(),
                      setpoint=(1.0, 1.0), duration: float = 10.0) -> Tuple[np.ndarray, np.ndarray]:
    """Outputs (n+1, 2) for a simultaneous step on both axes."""
    loop = MpcLoop(params, params, cfg)
    n = int(round(duration / cfg.Ts))
    y = closed_loop_batch(loop.plant, loop.controller, np.atleast_2d(setpoint), n)[:, 0, :]
    return np.arange(n + 1) * cfg.Ts, y


def mpc_settling_times(params: TurretParams = TurretParams(), cfg: MpcConfig = MpcConfig(),
                       setpoint=(1.0, 1.0), band: float = 0.001,
                       duration: float = 10.0) -> Tuple[Optional[float], Optional[float]]:
    t, y = mpc_step_response(params, cfg, setpoint, duration)
    return tuple(settling_time(y[:, j], setpoint[j], band, t) for j in range(2))
