"""Figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import DualityReport, MagnitudeHistogram, PRCurve  # noqa: E402


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_pr_curve(curve: PRCurve, path, label="squeeze"):
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    r = [p.recall for p in curve.points]
    p = [p.precision for p in curve.points]
    ax.plot(r, p, "-o", ms=2.5, lw=1.2, label=label)
    best = max(curve.points, key=lambda q: q.f_measure)
    ax.plot([best.recall], [best.precision], "r*", ms=9,
            label=f"F={best.f_measure:.3f} @ {best.threshold:.2f}")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    return _finish(fig, path)


def plot_duality(report: DualityReport, path):
    s = [row[0] for row in report.scales]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(s, [row[1] for row in report.scales], "-o", ms=3, label="precision")
    ax.plot(s, [row[2] for row in report.scales], "-s", ms=3, label="recall")
    ax.set_xlabel("scale")
    ax.set_ylabel("rate")
    ax.set_ylim(min(0.9, min(min(r[1], r[2]) for r in report.scales) - 0.01), 1.005)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_histogram(hist: MagnitudeHistogram, path, marker=0.02):
    edges = hist.bin_edges
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(edges[:-1], hist.counts, width=[b - a for a, b in zip(edges[:-1], edges[1:])],
           align="edge", color="0.4")
    if marker is not None and marker <= edges[-1]:
        ax.axvline(marker, color="r", ls="--", lw=1)
    ax.set_xlabel("|a| / min(H, W)")
    ax.set_ylabel("pixels")
    return _finish(fig, path)
