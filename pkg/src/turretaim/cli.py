"""Command-line front end: ``turretaim [run] <command> [options]``.

Each command writes CSV tables (unit in every column header), histogram
TSV files, a JSON summary and, unless ``--no-plots`` is given, PNG figures
into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import checks as chk
from .config import ConfigError, RunConfig, load_config, validate
from .experiments import (AXES, Experiment1Result, Experiment2Result, Histogram, experiment1,
                          experiment2, experiment3, experiment4, experiment5, mpc_settling_times,
                          pid_settling_time)
from .pid import verify_design
from .turret import axis_tfs

COMMANDS = ("design", "margins", "exp1", "exp2", "exp3", "exp4", "exp5", "validate", "all")


def _fmt(v) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Writer:
    """Collects artifacts under one output directory."""

    def __init__(self, out: Path, plots: bool):
        self.out = Path(out)
        self.plots = plots
        self.files: List[str] = []

    def _path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        self.files.append(str(path))
        return path

    def csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
        with open(self._path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows([[_fmt(v) for v in r] for r in rows])

    def hist_tsv(self, name: str, hists: Dict[str, Histogram], pdfs: Optional[Dict[str, Callable]] = None) -> None:
        header = ["series", "bin_lo [mils]", "bin_hi [mils]", "count", "density [1/mils]"]
        if pdfs:
            header.append("pdf_theory [1/mils]")
        with open(self._path(name), "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(header)
            for key, h in hists.items():
                theory = pdfs[key](h.centers) if pdfs and key in pdfs else None
                for i in range(h.counts.size):
                    row = [key, h.edges[i], h.edges[i + 1], int(h.counts[i]), h.density[i]]
                    if pdfs:
                        row.append(theory[i] if theory is not None else None)
                    w.writerow([_fmt(v) for v in row])

    def json(self, name: str, data: dict) -> None:
        with open(self._path(name), "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")

    def figure(self, name: str, make: Callable) -> None:
        if not self.plots:
            return
        from .plotting import save_figure
        save_figure(make(), self._path(name))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _print_checks(checks: List[chk.Check]) -> None:
    for c in checks:
        print(c.line())


def _stats_header() -> List[str]:
    return ["case", "firing_time [s]", "mu_az [mils]", "sigma_az [mils]", "cv_az [-]",
            "mu_el [mils]", "sigma_el [mils]", "cv_el [-]"]


# --------------------------------------------------------------------------
# commands


def cmd_design(cfg: RunConfig, w: Writer, args) -> List[chk.Check]:
    cs = cfg.controllers()
    g_az, g_el = axis_tfs(cfg.turret)
    rows = []
    for name, c, g in (("lead_azimuth", cs.lead_azimuth, g_az), ("pilead_azimuth", cs.pilead_azimuth, g_az),
                       ("pilead_elevation", cs.pilead_elevation, g_el)):
        rep = verify_design(c, g)
        rows.append([name, "synthesized", c.K_P, c.T_D, getattr(c, "T_I", None), c.gamma,
                     rep.gain_crossover, rep.phase_margin])
        if args.reference:
            ref = chk.REFERENCE_GAINS[name]
            rows.append([name, "reference", ref["K_P"], ref["T_D"], ref["T_I"], ref["gamma"],
                         ref["f_gc"], ref["pm"]])
    header = ["controller", "source", "K_P [N*m/rad]", "T_D [s]", "T_I [s]", "gamma [-]",
              "omega_gc [Hz]", "pm [deg]"]
    w.csv("design.csv", header, rows)
    print(f"{'controller':<18}{'source':<13}{'K_P':>12}{'T_D':>8}{'T_I':>8}{'gamma':>8}{'f_gc Hz':>9}{'PM deg':>8}")
    for r in rows:
        ti = "-" if r[4] is None else f"{r[4]:.3f}"
        print(f"{r[0]:<18}{r[1]:<13}{r[2]:>12.0f}{r[3]:>8.3f}{ti:>8}{r[5]:>8.4f}{r[6]:>9.3f}{r[7]:>8.2f}")
    w.json("design.json", {"rows": [dict(zip(header, r)) for r in rows]})
    return chk.check_design(cfg.turret) if args.check else []


def cmd_margins(cfg: RunConfig, w: Writer, args) -> List[chk.Check]:
    cs = cfg.controllers()
    g_az, g_el = axis_tfs(cfg.turret)
    rows = []
    for name, c, g in (("lead_azimuth", cs.lead_azimuth, g_az), ("pilead_azimuth", cs.pilead_azimuth, g_az),
                       ("pilead_elevation", cs.pilead_elevation, g_el)):
        rep = verify_design(c, g)
        rows.append([name, rep.gain_crossover, rep.phase_margin, pid_settling_time(c, g)])
    for axis, ts in zip(AXES, mpc_settling_times(cfg.turret, cfg.mpc)):
        rows.append([f"mpc_{axis}", None, None, ts])
    header = ["loop", "omega_gc [Hz]", "pm [deg]", "settling_0.1% [s]"]
    w.csv("margins.csv", header, rows)
    for r in rows:
        f = "-" if r[1] is None else f"{r[1]:.3f}"
        pm = "-" if r[2] is None else f"{r[2]:.2f}"
        print(f"{r[0]:<18} f_gc={f:>7} Hz  PM={pm:>6} deg  t_s={_fmt(r[3])} s")
    w.json("margins.json", {"rows": [dict(zip(header, r)) for r in rows]})
    return chk.check_settling(cs, cfg.turret, cfg.mpc) if args.check else []


def _run_exp1(cfg: RunConfig, controller: str) -> Experiment1Result:
    e = cfg.experiments
    return experiment1(controller, cfg.turret, e.trials, e.seed, epsilon=e.epsilon,
                       firing_times=e.firing_times, controllers=cfg.controllers(), mpc_cfg=cfg.mpc,
                       grid=cfg.grid, workers=e.workers)


def _run_exp2(cfg: RunConfig, controller: str) -> Experiment2Result:
    e = cfg.experiments
    hist_t = 6.0 if 6.0 in e.firing_times else e.firing_times[-1]
    return experiment2(controller, cfg.turret, e.trials, e.seed, e.noise_sigma, e.firing_times,
                       cfg.controllers(), cfg.mpc, cfg.grid, e.workers, hist_time=hist_t)


def _write_exp1(res: Experiment1Result, w: Writer) -> None:
    c = res.controller
    rows = [[r.case, r.firing_time, r.azimuth.mu, r.azimuth.sigma, r.azimuth.cv,
             r.elevation.mu, r.elevation.sigma, r.elevation.cv] for r in res.table()]
    w.csv(f"exp1_{c}.csv", _stats_header(), rows)
    t_k = 2.0 if 2.0 in next(iter(res.trials.values())).firing_times else None
    consts = res.constants(t_k) if t_k is not None else {}
    krows = [[case, t_k, ax, k[0], k[1]] for case, d in consts.items() for ax, k in d.items()]
    w.csv(f"exp1_{c}_constants.csv", ["case", "firing_time [s]", "axis", "k_mu [-]", "k_sigma [-]"], krows)
    ts0 = next(iter(res.trials.values()))
    w.json(f"exp1_{c}.json", {
        "controller": c, "trials": len(ts0),
        "reference_stats_mils": {ax: ts0.reference_stats(j).to_dict() for j, ax in enumerate(AXES)},
        "table": [{"case": r.case, "firing_time_s": r.firing_time, "azimuth": r.azimuth.to_dict(),
                   "elevation": r.elevation.to_dict()} for r in res.table()],
        "constants": consts,
        "reference_constants": chk.REFERENCE_CONSTANTS.get(c),
    })
    print(f"experiment 1 ({c}), {len(ts0)} trials, errors in mils")
    print(f"{'t_f':>4} {'case':>4} {'mu_az':>11} {'sigma_az':>10} {'cv_az':>6} {'mu_el':>11} {'sigma_el':>10} {'cv_el':>6}")
    for r in res.table():
        if r.firing_time <= 6:
            print(f"{r.firing_time:>4g} {r.case:>4} {r.azimuth.mu:>11.3e} {r.azimuth.sigma:>10.3e} "
                  f"{_fmt_cv(r.azimuth.cv)} {r.elevation.mu:>11.3e} {r.elevation.sigma:>10.3e} {_fmt_cv(r.elevation.cv)}")


def _fmt_cv(cv) -> str:
    return f"{'undef':>6}" if cv is None else f"{cv:>6.3f}"


def _write_exp2(res: Experiment2Result, w: Writer) -> None:
    c = res.controller
    header = ["firing_time [s]", "mu_out_az [mils]", "sigma_out_az [mils]", "mu_noise_az [mils]",
              "sigma_noise_az [mils]", "mu_out_el [mils]", "sigma_out_el [mils]", "mu_noise_el [mils]",
              "sigma_noise_el [mils]"]
    rows = [[t, oa.mu, oa.sigma, na.mu, na.sigma, oe.mu, oe.sigma, ne.mu, ne.sigma]
            for t, oa, na, oe, ne in res.table()]
    w.csv(f"exp2_{c}.csv", header, rows)
    w.hist_tsv(f"exp2_{c}_hist.tsv", res.histograms())
    w.json(f"exp2_{c}.json", {"controller": c, "noise_sigma_mils": res.noise_sigma,
                              "trials": len(res.trials), "histogram_firing_time_s": res.hist_time,
                              "table": [dict(zip(header, r)) for r in rows]})
    from . import plotting
    w.figure(f"exp2_{c}_hist.png", lambda: plotting.error_histograms(res))
    print(f"experiment 2 ({c}), aimpoint noise sigma {res.noise_sigma:g} mils")
    print(f"{'t_f':>4} {'out_az':>11} {'noise_az':>11} {'out_el':>11} {'noise_el':>11} {'sig_az':>8} {'sig_el':>8}")
    for r in rows:
        if r[0] <= 6:
            print(f"{r[0]:>4g} {r[1]:>11.3e} {r[3]:>11.3e} {r[5]:>11.3e} {r[7]:>11.3e} {r[2]:>8.4f} {r[6]:>8.4f}")


def _write_exp3(curves, controller: str, w: Writer) -> None:
    header = ["case", "firing_time [s]", "mean_az [mils]", "std_az [mils]", "mean_el [mils]", "std_el [mils]"]
    rows = [[c.case, t, c.mean[i, 0], c.std[i, 0], c.mean[i, 1], c.std[i, 1]]
            for c in curves for i, t in enumerate(c.firing_times)]
    w.csv(f"exp3_{controller}.csv", header, rows)
    w.json(f"exp3_{controller}.json", {"controller": controller, "cases": [c.case for c in curves],
                                       "rows": [dict(zip(header, r)) for r in rows]})
    from . import plotting
    for j, ax in enumerate(AXES):
        w.figure(f"exp3_{controller}_{ax}.png", lambda j=j: plotting.mean_vs_firing_time(curves, j, controller))
    print(f"experiment 3 ({controller}): {len(curves)} mean-vs-firing-time curves written")


def cmd_exp1(cfg, w, args, cache) -> List[chk.Check]:
    out = []
    for c in _controllers(cfg, args):
        if ("exp1", c) not in cache:
            cache[("exp1", c)] = _run_exp1(cfg, c)
        res = cache[("exp1", c)]
        _write_exp1(res, w)
        if args.check:
            out += chk.check_exp1(res)
    return out


def cmd_exp2(cfg, w, args, cache) -> List[chk.Check]:
    out = []
    for c in _controllers(cfg, args):
        if ("exp2", c) not in cache:
            cache[("exp2", c)] = _run_exp2(cfg, c)
        res = cache[("exp2", c)]
        _write_exp2(res, w)
        if args.check:
            out += chk.check_exp2(res)
    return out


def cmd_exp3(cfg, w, args, cache) -> List[chk.Check]:
    for c in _controllers(cfg, args):
        if ("exp1", c) not in cache:
            cache[("exp1", c)] = _run_exp1(cfg, c)
        if ("exp2", c) not in cache:
            cache[("exp2", c)] = _run_exp2(cfg, c)
        _write_exp3(experiment3(cache[("exp1", c)], cache[("exp2", c)]), c, w)
    return []


def cmd_exp4(cfg: RunConfig, w: Writer, args) -> List[chk.Check]:
    e = cfg.experiments
    res = experiment4(cfg.turret, e.trials, e.seed, e.white_sigma, e.white_h, e.white_tau,
                      e.white_firing_time, cfg.controllers())
    header = ["axis", "mu_hat [mils]", "mu [mils]", "sigma_hat [mils]", "sigma [mils]",
              "norm_hat [-]", "norm [-]", "sigma_w_hat [mils]", "ks_statistic [-]", "ks_pvalue [-]"]
    rows = [[a.axis, a.mu_hat, 0.0, a.sigma_hat, a.sigma_theory, a.norm_hat, a.norm, a.sigma_w_hat,
             a.ks_statistic, a.ks_pvalue] for a in res.axes]
    w.csv("exp4.csv", header, rows)
    w.hist_tsv("exp4_hist.tsv", {a.axis: a.histogram() for a in res.axes}, {a.axis: a.pdf for a in res.axes})
    w.json("exp4.json", {"h_s": res.h, "firing_time_s": res.firing_time, "sigma_w_mils": res.sigma_w,
                         "trials": res.n_trials, "rows": [dict(zip(header, r)) for r in rows],
                         "reference": chk.REFERENCE_WHITE})
    from . import plotting
    w.figure("exp4_pdf.png", lambda: plotting.error_pdf(res))
    print(f"experiment 4: white noise sigma_w {res.sigma_w:g} mils, h = {res.h:g} s, t_f = {res.firing_time:g} s")
    for a in res.axes:
        print(f"{a.axis:<10} mu_hat={a.mu_hat:+.3e}  sigma_hat={a.sigma_hat:.5f}  sigma={a.sigma_theory:.5f}  "
              f"||H_hat||={a.norm_hat:.4f}  ||H||={a.norm:.4f}  KS p={a.ks_pvalue:.3f}")
    return chk.check_exp4(res) if args.check else []


def cmd_exp5(cfg: RunConfig, w: Writer, args) -> List[chk.Check]:
    e = cfg.experiments
    res = experiment5(cfg.turret, e.ramp_rate, e.ramp_duration, cfg.controllers())
    header = ["controller", "axis", "e_ss [mils]", "e_final [mils]", "e_ss_theory [mils]"]
    rows = [[t.name, t.axis, t.e_ss, t.e_final, t.e_ss_theory if np.isfinite(t.e_ss_theory) else None]
            for t in res.tracks]
    w.csv("exp5.csv", header, rows)
    traj_header = ["time [s]", "reference [mils]"]
    for t in res.tracks:
        traj_header += [f"output_{t.name} [mils]", f"error_{t.name} [mils]"]
    traj = np.column_stack([res.tracks[0].times, res.tracks[0].reference]
                           + [c for t in res.tracks for c in (t.output, t.error)])
    w.csv("exp5_tracks.csv", traj_header, traj.tolist())
    w.json("exp5.json", {"rate_deg_s": res.rate_deg_s, "duration_s": res.duration,
                         "rows": [dict(zip(header, r)) for r in rows]})
    from . import plotting
    w.figure("exp5_ramp.png", lambda: plotting.ramp_tracking(res))
    print(f"experiment 5: ramp {res.rate_deg_s:g} deg/s over {res.duration:g} s")
    for r in rows:
        print(f"{r[0]:<18} e_ss={r[2]:+.4e} mils  e(end)={r[3]:+.4e} mils  theory={_fmt(r[4])}")
    return chk.check_exp5(res) if args.check else []


def _controllers(cfg: RunConfig, args) -> List[str]:
    if args.controller:
        return [args.controller]
    return ["pid", "mpc"] if args.command == "all" else [cfg.experiments.controller]


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per case")
    common.add_argument("--controller", choices=("pid", "mpc"))
    common.add_argument("--check", action="store_true", help="exit nonzero if reference tolerances are missed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker processes for trials")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    p = argparse.ArgumentParser(prog="turretaim", description="Turret aiming-error studies.")
    sub = p.add_subparsers(dest="command", required=True)
    d = sub.add_parser("design", parents=[common], help="synthesize the PID-family controllers")
    d.add_argument("--reference", action="store_true", help="print reference parameters side by side")
    sub.add_parser("margins", parents=[common], help="crossover, phase margin and settling times")
    for n, h in (("exp1", "static targets, nominal and mis-modelled plants"),
                 ("exp2", "static targets with aimpoint noise"),
                 ("exp3", "mean error against firing time"),
                 ("exp4", "filtered white noise vs theory"),
                 ("exp5", "constant-rate targets")):
        sub.add_parser(n, parents=[common], help=h)
    v = sub.add_parser("validate", help="check a config file without running anything")
    v.add_argument("config_path", nargs="?", help="INI file (defaults are always valid)")
    v.add_argument("--config", dest="config_opt", help=argparse.SUPPRESS)
    a = sub.add_parser("all", parents=[common], help="every command in sequence")
    a.add_argument("--reference", action="store_true", help=argparse.SUPPRESS)
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    e = cfg.experiments
    changes = {}
    for key in ("seed", "trials", "workers", "out"):
        val = getattr(args, key, None)
        if val is not None:
            changes[key] = val
    if getattr(args, "controller", None):
        changes["controller"] = args.controller
    if getattr(args, "no_plots", False):
        changes["plots"] = "no"
    if changes.get("trials", 1) < 1:
        raise ConfigError([f"--trials: must be at least 1, got {changes['trials']}"])
    if changes.get("workers", 1) < 1:
        raise ConfigError([f"--workers: must be at least 1, got {changes['workers']}"])
    cfg.experiments = replace(e, **changes)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    args = build_parser().parse_args(argv)

    if args.command == "validate":
        path = args.config_path or args.config_opt
        diags = validate(path)
        for d in diags:
            print(d)
        print(f"{len(diags)} problem(s) found" if diags else "config OK")
        return 1 if diags else 0

    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return 2

    w = Writer(Path(cfg.experiments.out), cfg.experiments.plots == "yes")
    cache: dict = {}
    steps = {
        "design": lambda: cmd_design(cfg, w, args),
        "margins": lambda: cmd_margins(cfg, w, args),
        "exp1": lambda: cmd_exp1(cfg, w, args, cache),
        "exp2": lambda: cmd_exp2(cfg, w, args, cache),
        "exp3": lambda: cmd_exp3(cfg, w, args, cache),
        "exp4": lambda: cmd_exp4(cfg, w, args),
        "exp5": lambda: cmd_exp5(cfg, w, args),
    }
    order = list(steps) if args.command == "all" else [args.command]
    results: List[chk.Check] = []
    try:
        for name in order:
            results += steps[name]()
        if args.check:
            w.json(f"checks_{args.command}.json", chk.summarize(results))
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 3
    if args.check:
        _print_checks(results)
        failed = sum(not c.passed for c in results)
        print(f"{len(results) - failed}/{len(results)} checks passed")
        return 1 if failed else 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
