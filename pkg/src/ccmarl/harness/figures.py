"""Matplotlib renderings of learning curves and evaluation comparisons."""

import glob
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .report import _ordered_unique, aggregate_seeds, read_metrics, smooth_series


def render_learning_curves(out_dir, window=10):
    """One PNG per cell, seeds overlaid; returns the written paths."""
    plots = os.path.join(out_dir, "plots")
    os.makedirs(plots, exist_ok=True)
    by_cell = {}
    pattern = os.path.join(out_dir, "*", "seed*", "metrics.csv")
    for path in sorted(glob.glob(pattern)):
        parts = os.path.normpath(path).split(os.sep)
        by_cell.setdefault(parts[-3], []).append((parts[-2], path))
    written = []
    for cell, series in by_cell.items():
        fig, ax = plt.subplots(figsize=(6, 4))
        drawn = False
        for seed, path in series:
            metrics = read_metrics(path)
            if metrics.size == 0:
                continue
            steps, rets = smooth_series(metrics[:, 0], metrics[:, 2], window)
            ax.plot(steps, rets, label=seed)
            drawn = True
        if not drawn:
            plt.close(fig)
            continue
        ax.set_xlabel("environment steps")
        ax.set_ylabel("episode return")
        ax.set_title(cell)
        ax.legend(fontsize="small")
        fig.tight_layout()
        path = os.path.join(plots, f"curves_{cell}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_comparison(rows, out_dir):
    """Grouped bar chart per scenario: eval channels x algorithms."""
    plots = os.path.join(out_dir, "plots")
    os.makedirs(plots, exist_ok=True)
    written = []
    for scen_key in _ordered_unique([(r["scenario"], r["n_agents"])
                                     for r in rows]):
        scen_rows = [r for r in rows
                     if (r["scenario"], r["n_agents"]) == scen_key]
        channels = _ordered_unique([r["eval_channel"] for r in scen_rows])
        algos = _ordered_unique([r["algorithm"] for r in scen_rows])
        x = np.arange(len(channels))
        width = 0.8 / len(algos)
        fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(channels)), 4))
        for j, algo in enumerate(algos):
            means, stds = [], []
            for chan in channels:
                pairs = [(r["mean"], r["std"]) for r in scen_rows
                         if r["eval_channel"] == chan
                         and r["algorithm"] == algo]
                if pairs:
                    m, s = aggregate_seeds(pairs)
                else:
                    m, s = np.nan, 0.0
                means.append(m)
                stds.append(s)
            offset = (j - (len(algos) - 1) / 2) * width
            ax.bar(x + offset, means, width, yerr=stds, capsize=2,
                   label=algo)
        ax.set_xticks(x)
        ax.set_xticklabels(channels, rotation=30, ha="right",
                           fontsize="small")
        ax.set_ylabel("mean episode return")
        ax.set_title(f"{scen_key[0]} (n={scen_key[1]})")
        ax.legend(fontsize="small")
        fig.tight_layout()
        path = os.path.join(plots,
                            f"returns_{scen_key[0]}{scen_key[1]}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
