"""Delimited report tables and matplotlib figures for CLI outputs.

Figures are rendered with the Agg backend and fixed PNG metadata so reruns
with the same inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MonteCarloReport
from .portfolio import BacktestResult, ContaminationCurve

__all__ = [
    "benchmark_table",
    "write_benchmark_table",
    "save_benchmark_figure",
    "write_netvalue_csv",
    "save_netvalue_figure",
    "write_contamination_csv",
    "save_contamination_figure",
]

PNG_METADATA = {"Software": "qfactor"}
_DPI = 144


def benchmark_table(report: MonteCarloReport) -> str:
    """Render a study as a delimited table (one row per method)."""
    buf = _io.StringIO()
    writer = csv.writer(buf)
    if report.fit_metrics:
        writer.writerow(
            ["scenario", "family", "p", "T", "tau", "method",
             "MEE_CC", "MEE_CC_IQR", "AVE_FL", "AVE_FL_SD", "AVE_FS", "AVE_FS_SD"]
        )
        for method, m in report.fit_metrics.items():
            writer.writerow(
                [report.scenario, report.family, report.p, report.T, report.tau,
                 method.upper(), f"{m.mee_cc_median:.6g}", f"{m.mee_cc_iqr:.6g}",
                 f"{m.ave_fl:.6g}", f"{m.ave_fl_sd:.6g}", f"{m.ave_fs:.6g}",
                 f"{m.ave_fs_sd:.6g}"]
            )
    if report.selection:
        writer.writerow([])
        writer.writerow(
            ["scenario", "family", "p", "T", "r", "method", "mean_r", "n_under",
             "n_over", "formatted"]
        )
        for method, counts in report.selection.items():
            writer.writerow(
                [report.scenario, report.family, report.p, report.T, report.r_true,
                 method.upper(), f"{counts.mean:.6g}", counts.n_under, counts.n_over,
                 counts.formatted()]
            )
    return buf.getvalue()


def write_benchmark_table(path, report: MonteCarloReport) -> None:
    Path(path).write_text(benchmark_table(report))


def save_benchmark_figure(path, report: MonteCarloReport) -> None:
    """Boxplots of per-replication errors, or selection histograms."""
    if report.fit_metrics:
        fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.4))
        panels = [("MEE-CC", "mee_cc"), ("loading-space distance", "fl_distances"),
                  ("score-space distance", "fs_distances")]
        for ax, (title, attr) in zip(axes, panels):
            data = [getattr(m, attr) for m in report.fit_metrics.values()]
            labels = [k.upper() for k in report.fit_metrics]
            ax.boxplot(data, tick_labels=labels)
            ax.set_title(title, fontsize=10)
            if attr == "mee_cc" and max(max(d) for d in data) > 50 * max(
                1e-12, min(min(d) for d in data)
            ):
                ax.set_yscale("log")
        fig.suptitle(f"{report.scenario} (p={report.p}, T={report.T}, reps={report.reps})")
    else:
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        r_values = sorted({r for c in report.selection.values() for r in c.estimates})
        width = 0.8 / max(len(report.selection), 1)
        for j, (method, counts) in enumerate(report.selection.items()):
            freq = [counts.estimates.count(rv) for rv in r_values]
            ax.bar(np.arange(len(r_values)) + j * width, freq, width, label=method.upper())
        ax.set_xticks(np.arange(len(r_values)) + 0.4 - width / 2)
        ax.set_xticklabels([str(rv) for rv in r_values])
        ax.set_xlabel("estimated factor count")
        ax.set_ylabel("replications")
        ax.axvline(r_values.index(report.r_true) + 0.4 - width / 2 if report.r_true in r_values else -1,
                   color="k", lw=0.8, ls="--")
        ax.legend()
        fig.suptitle(f"{report.scenario} selection (p={report.p}, T={report.T})")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=PNG_METADATA)
    plt.close(fig)


def write_netvalue_csv(path, result: BacktestResult) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "portfolio_return", "net_value"])
        for t, ret, nv in zip(result.periods, result.portfolio_returns, result.net_value):
            writer.writerow([t, repr(float(ret)), repr(float(nv))])


def save_netvalue_figure(path, result: BacktestResult, label: str = "portfolio") -> None:
    fig, ax = plt.subplots(figsize=(7.2, 3.8))
    ax.plot(result.periods, result.net_value, lw=1.4, label=label)
    ax.axhline(1.0, color="k", lw=0.6, ls=":")
    ax.set_xlabel("period")
    ax.set_ylabel("net value")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=PNG_METADATA)
    plt.close(fig)


def write_contamination_csv(path, curves: list[ContaminationCurve]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["proportion"] + [c.method for c in curves])
        for i, prop in enumerate(curves[0].proportions):
            writer.writerow([repr(float(prop))] + [repr(float(c.mean_distance[i])) for c in curves])


def save_contamination_figure(path, curves: list[ContaminationCurve]) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    for curve in curves:
        ax.plot(curve.proportions, curve.mean_distance, marker="o", label=curve.method.upper())
    ax.set_xlabel("contamination proportion")
    ax.set_ylabel("mean loading-space distance")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=PNG_METADATA)
    plt.close(fig)
