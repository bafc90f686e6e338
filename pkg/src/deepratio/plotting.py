"""PNG figures written next to the CSV reports.

Uses the object-oriented matplotlib API with the Agg canvas so nothing
depends on (or alters) a global pyplot backend.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .metrics import logistic, smooth

DPI = 120
MAX_TRACES = 6

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
}


def _figure(width=6.4, height=4.0, nrows=1, ncols=1, **kwargs):
    import matplotlib

    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(width, height))
        FigureCanvasAgg(fig)
        axes = fig.subplots(nrows, ncols, squeeze=False, **kwargs)
    return fig, axes


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    return path


def plot_run(report, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    written = []
    shown = [r for r in report.results if r.trace is not None][:MAX_TRACES]
    if shown:
        fig, axes = _figure(7.0, 1.6 * len(shown), nrows=len(shown), sharex=False)
        smoothing = report.config.detect.smoothing
        for ax, r in zip(axes[:, 0], shown):
            t = r.trace_offset + np.arange(len(r.trace))
            if r.fit is not None:
                y = smooth(r.trace, smoothing)
                y = (y - r.fit.floor) / r.fit.scale
                ax.plot(t, y, lw=0.8, color="0.4", label="normalised trace")
                ax.plot(t, logistic(t, r.fit.k, r.fit.x0), lw=1.2, color="C0", label="logistic fit")
            else:
                ax.plot(t, r.trace, lw=0.8, color="0.4", label="discrepancy")
            if r.true_cp is not None:
                ax.axvline(r.true_cp, color="k", ls="--", lw=1, label="true")
            if r.predicted_cp is not None:
                ax.axvline(r.predicted_cp, color="C3", lw=1, label="predicted")
            ax.set_ylabel(r.series_id)
        axes[0, 0].legend(loc="upper left", ncol=4, frameon=False)
        axes[-1, 0].set_xlabel("sample index")
        axes[0, 0].set_title(report.config.method)
        written.append(_save(fig, out / "traces.png"))

    if report.summary is not None:
        fig, axes = _figure(4.0, 3.2)
        ax = axes[0, 0]
        ax.hist(report.summary.bootstrap_means, bins=15, color="C0", alpha=0.8)
        ax.axvline(report.summary.median, color="C3", lw=1.2, label="median")
        ax.set_xlabel("bootstrap ADL (samples)")
        ax.set_ylabel("runs")
        ax.set_title(f"{report.config.method}: ADL bootstrap")
        ax.legend(frameon=False)
        written.append(_save(fig, out / "adl_bootstrap.png"))
    return written


def plot_sweep(rows: list[dict], out_dir: str | Path) -> Path:
    fig, axes = _figure(5.0, 3.5)
    ax = axes[0, 0]
    for i, obj in enumerate(dict.fromkeys(r["objective"] for r in rows)):
        cells = [r for r in rows if r["objective"] == obj and r["adl_median"] is not None]
        if not cells:
            continue
        x = np.array([c["minibatch_size"] for c in cells], dtype=float)
        med = np.array([c["adl_median"] for c in cells])
        lo = med - np.array([c["adl_q1"] for c in cells])
        hi = np.array([c["adl_q3"] for c in cells]) - med
        ax.errorbar(x, med, yerr=[lo, hi], marker="o", capsize=3, label=obj, color=f"C{i}")
        for c in cells:
            if c["diverged"]:
                ax.plot(c["minibatch_size"], c["adl_median"], "kx", ms=9)
    ax.set_xscale("log")
    ax.set_xlabel("minibatch size")
    ax.set_ylabel("median ADL (samples)")
    ax.legend(frameon=False)
    return _save(fig, Path(out_dir) / "sweep.png")


def plot_comparison(reports, out_dir: str | Path) -> Path:
    fig, axes = _figure(1.2 * max(len(reports), 3) + 1.5, 3.5)
    ax = axes[0, 0]
    data = [r.summary.bootstrap_means if r.summary is not None else np.array([np.nan]) for r in reports]
    bp = ax.boxplot(data, patch_artist=True, medianprops={"color": "C3"})
    for patch in bp["boxes"]:
        patch.set_facecolor("0.85")
    ax.set_xticks(range(1, len(reports) + 1))
    ax.set_xticklabels([r.config.method for r in reports], rotation=30, ha="right")
    ax.set_ylabel("ADL (samples)")
    return _save(fig, Path(out_dir) / "comparison.png")
