"""Matplotlib rendering of evaluation reports to image files, written
alongside the delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_report_figures(rows: list[dict], outdir) -> list[Path]:
    """One grouped-bar figure per metric: strategies on the x axis, one bar
    group per engine, one panel per k."""
    outdir = Path(outdir)
    written = []
    for metric in sorted({r["metric"] for r in rows}):
        sub = [r for r in rows if r["metric"] == metric]
        ks = sorted({r["k"] for r in sub})
        engines = sorted({r["engine"] for r in sub})
        strategies = sorted({r["strategy"] for r in sub})
        if not ks or not engines or not strategies:
            continue
        fig, axes = plt.subplots(
            1, len(ks), figsize=(4 * len(ks), 3.2), sharey=True, squeeze=False
        )
        cell = {(r["engine"], r["strategy"], r["k"]): r["value"] for r in sub}
        x = np.arange(len(strategies))
        width = 0.8 / len(engines)
        for ax, k in zip(axes[0], ks):
            for i, engine in enumerate(engines):
                vals = [cell.get((engine, s, k)) or 0.0 for s in strategies]
                ax.bar(x + i * width, vals, width, label=engine)
            ax.set_title(f"{metric} @ {k}")
            ax.set_xticks(x + 0.4 - width / 2)
            ax.set_xticklabels(strategies, rotation=30, ha="right", fontsize=8)
            ax.set_ylim(0, 1)
        axes[0][0].set_ylabel(metric)
        axes[0][-1].legend(fontsize=8)
        fig.tight_layout()
        path = outdir / f"{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_prf_figure(results: dict[str, tuple[float, float, float]], outdir, name="der_prf") -> Path:
    """Bar chart of precision/recall/F1 per labeled system."""
    outdir = Path(outdir)
    systems = list(results)
    x = np.arange(len(systems))
    width = 0.25
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(systems)), 3.2))
    for i, (label, idx) in enumerate((("precision", 0), ("recall", 1), ("f1", 2))):
        ax.bar(x + i * width, [results[s][idx] for s in systems], width, label=label)
    ax.set_xticks(x + width)
    ax.set_xticklabels(systems, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = outdir / f"{name}.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
