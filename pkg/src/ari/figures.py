"""Matplotlib renderings of the report data, saved to files.

Every CSV or JSON report the command line emits has a figure twin: margin
histograms with the chosen thresholds, fallback and savings curves over
the precision sweep, accuracy-drop curves, training loss, and the
stochastic multiplier error trend. Rendering is headless (Agg) and each
function writes one PNG and returns its path.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = [
    "margin_histogram_figure",
    "fallback_curve_figure",
    "savings_curve_figure",
    "accuracy_drop_figure",
    "training_loss_figure",
    "sc_error_figure",
]

matplotlib.rcParams.update(
    {
        "figure.figsize": (6.0, 3.6),
        "figure.dpi": 110,
        "savefig.dpi": 150,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 9,
        "legend.fontsize": 8,
    }
)


def _save(fig, path) -> str:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def margin_histogram_figure(
    histogram: Mapping[str, Sequence[float]],
    thresholds: Mapping[str, float],
    title: str,
    path,
) -> str:
    """Disagreement-margin density bars with the chosen thresholds marked."""
    fig, ax = plt.subplots()
    edges = list(histogram["bin_edges"])
    density = list(histogram["density"])
    if edges:
        widths = [b - a for a, b in zip(edges, edges[1:])]
        ax.bar(edges[:-1], density, width=widths, align="edge", alpha=0.7)
    for i, (label, t) in enumerate(sorted(thresholds.items())):
        ax.axvline(t, color=f"C{i + 1}", linestyle="--", label=f"{label}: {t:.4f}")
    ax.set_xlabel("reduced-model margin on disagreements")
    ax.set_ylabel("count / bin width")
    ax.set_title(title)
    if thresholds:
        ax.legend()
    return _save(fig, path)


def _sweep_axes(rows_by_policy: Mapping[str, Sequence[tuple[int, float]]], ax) -> None:
    for label, pairs in sorted(rows_by_policy.items()):
        pairs = sorted(pairs)
        ax.plot([p[0] for p in pairs], [p[1] for p in pairs], marker="o", label=label)
    ax.legend()


def fallback_curve_figure(
    rows_by_policy: Mapping[str, Sequence[tuple[int, float]]],
    level_name: str,
    path,
) -> str:
    """Fallback fraction versus precision level, one line per policy."""
    fig, ax = plt.subplots()
    _sweep_axes(rows_by_policy, ax)
    ax.set_xlabel(level_name)
    ax.set_ylabel("fraction sent to the full model")
    ax.set_ylim(bottom=0)
    ax.set_title("fallback fraction across the sweep")
    return _save(fig, path)


def savings_curve_figure(
    rows_by_policy: Mapping[str, Sequence[tuple[int, float]]],
    level_name: str,
    path,
) -> str:
    """Relative energy savings versus precision level, one line per policy."""
    fig, ax = plt.subplots()
    _sweep_axes(rows_by_policy, ax)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel(level_name)
    ax.set_ylabel("energy savings vs full model")
    ax.set_title("cascade savings across the sweep")
    return _save(fig, path)


def accuracy_drop_figure(
    rows_by_policy: Mapping[str, Sequence[tuple[int, float]]],
    level_name: str,
    path,
) -> str:
    """Accuracy given up versus the full model across the sweep."""
    fig, ax = plt.subplots()
    _sweep_axes(rows_by_policy, ax)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel(level_name)
    ax.set_ylabel("full-model accuracy minus cascade accuracy")
    ax.set_title("accuracy cost across the sweep")
    return _save(fig, path)


def training_loss_figure(losses: Sequence[float], path) -> str:
    """Mean cross-entropy per epoch."""
    fig, ax = plt.subplots()
    ax.plot(range(1, len(losses) + 1), list(losses), marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean cross-entropy")
    ax.set_title("training loss")
    return _save(fig, path)


def sc_error_figure(
    lengths: Sequence[int],
    median_err: Sequence[float],
    p95_err: Sequence[float],
    path,
) -> str:
    """Stochastic multiplier error against sequence length, log-log."""
    fig, ax = plt.subplots()
    ax.loglog(list(lengths), list(median_err), marker="o", label="median |error|")
    ax.loglog(list(lengths), list(p95_err), marker="s", label="95th pct |error|")
    ax.set_xlabel("sequence length")
    ax.set_ylabel("absolute multiply error")
    ax.set_title("stochastic multiplier accuracy")
    ax.legend()
    return _save(fig, path)
