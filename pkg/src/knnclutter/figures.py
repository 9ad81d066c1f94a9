"""Matplotlib figures written next to the CSV outputs.

Everything renders with the Agg backend straight to PNG files, with the PNG
metadata stripped so reruns produce identical bytes.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CLUTTER_COLOUR = "#4C72B0"
FEATURE_COLOUR = "#DD5A9E"

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "svg.hashsalt": "knnclutter",
}


def figure_path(path, suffix: str = "") -> Path:
    """PNG path next to ``path``: ``out.csv`` becomes ``out<suffix>.png``."""
    path = Path(path)
    return path.with_name(path.stem + suffix + ".png")


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_pattern(ax, points, is_feature, title: Optional[str] = None, window=None):
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    is_feature = np.asarray(is_feature, dtype=bool)
    ax.scatter(*points[~is_feature].T, s=6, c=CLUTTER_COLOUR, label="clutter", linewidths=0)
    ax.scatter(*points[is_feature].T, s=6, c=FEATURE_COLOUR, label="feature", linewidths=0)
    if window is not None:
        ax.set_xlim(window.xmin, window.xmax)
        ax.set_ylim(window.ymin, window.ymax)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)


def save_classification(path, pattern, is_feature, title: Optional[str] = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 4.2))
        plot_pattern(ax, pattern.points, is_feature, title, pattern.window)
        ax.legend(loc="upper right", frameon=False, markerscale=2)
        fig.tight_layout()
        return _save(fig, path)


def save_entropy_curve(path, curve, segmented=None) -> Path:
    """Entropy against K, with the broken-line fit and the selected K."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        ks = np.asarray(curve.k_set)
        ax.plot(ks, curve.s, color="black", lw=1.2, marker="o", ms=2.5, label="entropy")
        bad = np.asarray(curve.degenerate, dtype=bool)
        if bad.any():
            ax.plot(ks[bad], np.asarray(curve.s)[bad], "x", color="grey", label="EM collapsed")
        if segmented is not None:
            grid = np.linspace(ks.min(), ks.max(), 200)
            ax.plot(grid, segmented.predict(grid), ls=":", color="black", label="segmented fit")
            ax.axvline(segmented.k_hat, color=FEATURE_COLOUR, lw=1)
            ax.text(segmented.k_hat, ax.get_ylim()[1], f" K={segmented.k_hat}",
                    va="top", ha="left", color=FEATURE_COLOUR)
        ax.set_xlabel("K")
        ax.set_ylabel("entropy")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def save_iterations(path, trace) -> Path:
    """One classification panel per iteration, on the original coordinates."""
    records = trace.records
    n = len(records)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, n, figsize=(2.6 * n, 2.8), squeeze=False)
        for ax, rec in zip(axes[0], records):
            title = f"iteration {rec.index} (K={rec.k_used})"
            if rec.index == trace.j_hat:
                title += " *"
            plot_pattern(ax, rec.pattern.points, rec.labels.is_feature, title, records[0].pattern.window)
        fig.tight_layout()
        return _save(fig, path)


def save_overall_entropy(path, s_values: Sequence[float], j_hat: int) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        j = np.arange(1, len(s_values) + 1)
        ax.plot(j, s_values, color="black", marker="o", ms=3)
        ax.plot([j_hat], [s_values[j_hat - 1]], "o", color=FEATURE_COLOUR, ms=6)
        ax.set_xticks(j)
        ax.set_xlabel("iteration")
        ax.set_ylabel("overall entropy")
        fig.tight_layout()
        return _save(fig, path)


def save_benchmark(path, rows) -> Path:
    """Accuracy against iteration depth, one panel per scenario."""
    scenarios = list(dict.fromkeys(r["scenario"] for r in rows))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(scenarios), figsize=(3.0 * len(scenarios), 2.8),
                                 squeeze=False, sharey=True)
        for ax, sc in zip(axes[0], scenarios):
            sub = [r for r in rows if r["scenario"] == sc]
            for mode in dict.fromkeys(r["k_mode"] for r in sub):
                pts = sorted((r["iteration"], r["acc"]) for r in sub if r["k_mode"] == mode)
                label = "K auto" if mode == "auto" else f"K={mode}"
                ax.plot(*zip(*pts), marker="o", ms=3, label=label)
            ax.set_title(f"scenario {sc}")
            ax.set_xlabel("iteration")
        axes[0][0].set_ylabel("accuracy")
        axes[0][-1].legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)
