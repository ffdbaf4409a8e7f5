"""Matplotlib renderings written next to the delimited report output.

All figures use the Agg backend at a fixed dpi and carry no timestamps, so
re-running a report produces byte-identical image files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .conditional_analysis import ConditionalReport
from .leaderboard import LOWER, MetricTable, RankTable

_DPI = 150


def save_rank_figure(rt: RankTable, path: str | Path) -> Path:
    """Horizontal bars of average rank per model, best (lowest) on top."""
    path = Path(path)
    order = np.argsort(rt.average_rank, kind="stable")[::-1]
    models = [rt.model_ids[i] for i in order]
    values = rt.average_rank[order]
    fig, ax = plt.subplots(figsize=(7, 0.45 * len(models) + 1.2), dpi=_DPI)
    bars = ax.barh(models, values, color="#4878a8")
    ax.bar_label(bars, fmt="%.2f", padding=3, fontsize=8)
    ax.set_xlabel("average rank (lower is better)")
    ax.set_xlim(0, float(values.max()) * 1.15)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_metric_heatmap(t: MetricTable, path: str | Path) -> Path:
    """Per-column min-max normalized heatmap; darker means better."""
    path = Path(path)
    norm = np.zeros_like(t.values)
    for j, m in enumerate(t.metric_names):
        col = t.values[:, j]
        span = col.max() - col.min()
        scaled = (col - col.min()) / span if span > 0 else np.zeros_like(col)
        norm[:, j] = scaled if t.directions[m] == LOWER else 1.0 - scaled
    fig, ax = plt.subplots(
        figsize=(1.0 * len(t.metric_names) + 2.5, 0.4 * len(t.model_ids) + 1.5), dpi=_DPI
    )
    ax.imshow(norm, cmap="viridis_r", aspect="auto", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(t.metric_names)), t.metric_names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(t.model_ids)), t.model_ids, fontsize=8)
    for i in range(len(t.model_ids)):
        for j in range(len(t.metric_names)):
            ax.text(j, i, f"{t.values[i, j]:.3g}", ha="center", va="center", fontsize=7,
                    color="white" if norm[i, j] > 0.5 else "black")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_conditional_figure(report: ConditionalReport, metric: str, path: str | Path) -> Path:
    """Bar chart of one metric across condition labels; skipped strata show
    as gaps."""
    path = Path(path)
    labels = [r.label_name for r in report.per_label]
    values = []
    for r in report.per_label:
        if metric == "fid":
            values.append(r.fid)
        elif metric == "kid_mean":
            values.append(r.kid_mean)
        elif r.prdc is not None:
            values.append(getattr(r.prdc, metric))
        else:
            values.append(None)
    xs = np.arange(len(labels))
    ys = np.array([np.nan if v is None else v for v in values], dtype=np.float64)
    fig, ax = plt.subplots(figsize=(10, 4), dpi=_DPI)
    ax.bar(xs, np.nan_to_num(ys), color="#4878a8")
    ax.set_xticks(xs, labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel(metric)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_correlation_figure(x, y, xlabel: str, ylabel: str, coefficient: float,
                            path: str | Path) -> Path:
    """Scatter of two aligned per-model quantities with the coefficient in
    the title."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 5), dpi=_DPI)
    ax.scatter(x, y, color="#4878a8")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(f"r = {coefficient:.3f}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
