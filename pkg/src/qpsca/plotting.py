"""Figures for reports. Uses the non-interactive Agg backend throughout."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .circuit import PulseSchedule  # noqa: E402
from .device import GateKind  # noqa: E402
from .pulselib import PulseLibrary  # noqa: E402

_COLORS = {GateKind.X: "tab:blue", GateKind.SX: "tab:green", GateKind.CX: "tab:red", GateKind.I: "tab:gray"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None, "Creation Time": None}
                if str(path).endswith(".png") else None)
    plt.close(fig)


def plot_traces(traces, path, title: str = "power traces") -> None:
    """One panel per trace (dict of PowerTrace or a single trace)."""
    if not isinstance(traces, dict):
        traces = {traces.scope_name: traces}
    items = sorted(traces.items(), key=lambda kv: str(kv[0]))
    fig, axes = plt.subplots(len(items), 1, figsize=(9, 1.4 * len(items) + 0.8), sharex=True, squeeze=False)
    for ax, (key, tr) in zip(axes[:, 0], items):
        ax.plot(np.arange(tr.dt_count), tr.samples, lw=0.7, color="black")
        ax.set_ylabel(tr.scope_name, rotation=0, ha="right", va="center")
        ax.tick_params(labelsize=7)
    axes[-1, 0].set_xlabel("dt")
    axes[0, 0].set_title(title)
    _save(fig, path)


def _lanes(ax, sched: PulseSchedule, library: PulseLibrary, row_of, y0: float, h: float, hatch=None):
    for ev in sched.events:
        if ev.label.virtual:
            continue
        d = library.duration(ev.label)
        for c in ev.label.channels:
            ax.broken_barh([(ev.start, d)], (row_of[c] + y0, h),
                           facecolors=_COLORS.get(ev.label.gate, "tab:purple"), alpha=0.75,
                           hatch=hatch, edgecolor="black", linewidth=0.3)


def plot_reconstruction(truth: PulseSchedule | None, recovered: PulseSchedule, library: PulseLibrary,
                        path, total=None, title: str = "reconstruction") -> None:
    """Channel timeline: truth on the upper half of each lane, recovery on the lower half."""
    chans = sorted({c for lab in library.labels for c in lab.channels})
    row_of = {c: i for i, c in enumerate(chans)}
    nrows = 2 if total is not None else 1
    fig, axes = plt.subplots(nrows, 1, figsize=(9, 0.45 * len(chans) + 1.8 * nrows), squeeze=False,
                             gridspec_kw={"height_ratios": [3, 1][:nrows]})
    ax = axes[0, 0]
    if truth is not None:
        _lanes(ax, truth, library, row_of, 0.08, 0.4)
    _lanes(ax, recovered, library, row_of, 0.52, 0.4, hatch="//")
    ax.set_yticks([i + 0.5 for i in range(len(chans))])
    ax.set_yticklabels([c.name for c in chans], fontsize=7)
    ax.set_ylim(0, len(chans))
    ax.invert_yaxis()
    ax.set_title(title + ("  (upper: truth, lower hatched: recovered)" if truth is not None else ""), fontsize=9)
    if total is not None:
        ax2 = axes[1, 0]
        ax2.plot(np.arange(total.dt_count), total.samples, lw=0.7, color="black")
        ax2.set_ylabel("total")
        ax2.set_xlim(ax.get_xlim())
    axes[-1, 0].set_xlabel("dt")
    _save(fig, path)


def plot_bench(rows, path, title: str = "benchmark") -> None:
    """Attack time per circuit, marker by match tier."""
    fig, ax = plt.subplots(figsize=(max(5, 0.45 * len(rows) + 2), 3.2))
    names = [r.name for r in rows]
    times = [r.solver_time_s or 0.0 for r in rows]
    colors = ["tab:green" if r.match_tier == "exact" else "tab:orange" if r.match_tier in ("sequence", "multiset")
              else "tab:red" for r in rows]
    ax.bar(range(len(rows)), times, color=colors)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("attack time [s]")
    ax.set_title(title, fontsize=9)
    _save(fig, path)
