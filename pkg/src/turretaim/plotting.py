"""Figures for experiment reports, rendered off-screen to image files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from matplotlib.figure import Figure

from .experiments import (AXES, Curve, Experiment2Result, Experiment4Result, Experiment5Result,
                          histogram)

STYLE = {"figsize": (7.0, 4.2), "dpi": 120}
CASE_COLORS = {"N": "tab:blue", "DC": "tab:orange", "MI": "tab:red", "noise": "tab:purple"}


def _figure(nrows: int = 1, ncols: int = 1, **kw):
    fig = Figure(figsize=kw.pop("figsize", STYLE["figsize"]), dpi=STYLE["dpi"], layout="constrained")
    axes = fig.subplots(nrows, ncols, squeeze=False)
    return fig, axes


def save_figure(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    return path


def error_histograms(res: Experiment2Result, bins: int = 50) -> Figure:
    """Output-error and aimpoint-noise histograms per axis at the stored firing time."""
    fig, axes = _figure(1, 2, figsize=(8.0, 3.6))
    hists = res.histograms(bins)
    for ax, name in zip(axes[0], AXES):
        for key, color, label in ((f"error_{name}", "tab:blue", "error"),
                                  (f"noise_{name}", "tab:gray", "noise input")):
            h = hists[key]
            ax.stairs(h.density, h.edges, color=color, label=label, fill=key.startswith("noise"),
                      alpha=0.5 if key.startswith("noise") else 1.0)
        ax.set_title(f"{name}, t_f = {res.hist_time:g} s")
        ax.set_xlabel("error [mils]")
        ax.set_ylabel("density [1/mils]")
    axes[0][0].legend(frameon=False)
    return fig


def mean_vs_firing_time(curves: Sequence[Curve], axis: int, controller: str = "") -> Figure:
    fig, axes = _figure()
    ax = axes[0][0]
    for c in curves:
        ax.errorbar(c.firing_times, c.mean[:, axis], yerr=c.std[:, axis], capsize=3, marker="o",
                    ms=3, color=CASE_COLORS.get(c.case), label=c.case)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.set_xlabel("firing time [s]")
    ax.set_ylabel(f"mean {AXES[axis]} error [mils]")
    ax.set_title(f"{controller} {AXES[axis]}".strip())
    ax.legend(frameon=False)
    return fig


def error_pdf(res: Experiment4Result, bins: int = 50) -> Figure:
    """Normalized error histograms with the theoretical normal density overlaid."""
    fig, axes = _figure(1, 2, figsize=(8.0, 3.6))
    for ax, a in zip(axes[0], res.axes):
        h = histogram(a.samples, bins)
        ax.stairs(h.density, h.edges, fill=True, alpha=0.6, label="simulation")
        ax.scatter(h.centers, a.pdf(h.centers), s=8, color="tab:red", label="theory")
        ax.set_title(f"{a.axis}, t_f = {res.firing_time:g} s")
        ax.set_xlabel("error [mils]")
        ax.set_ylabel("density [1/mils]")
    axes[0][0].legend(frameon=False)
    return fig


def ramp_tracking(res: Experiment5Result) -> Figure:
    fig, axes = _figure(2, 1, figsize=(7.0, 5.6))
    top, bottom = axes[0][0], axes[1][0]
    ref_drawn = False
    for tr in res.tracks:
        if not ref_drawn:
            top.plot(tr.times, tr.reference, "k--", lw=1.0, label="reference")
            ref_drawn = True
        top.plot(tr.times, tr.output, lw=1.0, label=tr.name)
        bottom.plot(tr.times, tr.error, lw=1.0, label=tr.name)
    top.set_ylabel("angle [mils]")
    top.legend(frameon=False)
    bottom.set_xlabel("time [s]")
    bottom.set_ylabel("error [mils]")
    return fig
