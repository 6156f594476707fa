"""Result tables and plot-data emission from a grid output directory."""

import csv
import glob
import json
import os
import warnings

import numpy as np

RESULTS_COLUMNS = ("scenario", "n_agents", "algorithm", "train_channel",
                   "eval_channel", "seed", "mean", "std")


def collect_rows(out_dir):
    """All eval rows under out_dir, in sorted file order."""
    rows = []
    pattern = os.path.join(out_dir, "*", "seed*", "eval.json")
    for path in sorted(glob.glob(pattern)):
        with open(path) as fh:
            rows.extend(json.load(fh))
    return rows


def format_mean_std(mean, std):
    return f"{mean:.1f}±{std:.1f}"


def aggregate_seeds(pairs):
    """Collapse per-seed (mean, std) pairs into one (mean, std).

    A single seed reports its own episode spread; several seeds report
    the spread of their means.
    """
    if len(pairs) == 1:
        return pairs[0]
    means = np.array([m for m, _ in pairs])
    return float(np.mean(means)), float(np.std(means))


def _ordered_unique(values):
    seen = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def pivot_table(rows):
    """Text tables like the comparison figures: eval channels x algorithms."""
    blocks = []
    for scen_key in _ordered_unique([(r["scenario"], r["n_agents"])
                                     for r in rows]):
        scen_rows = [r for r in rows
                     if (r["scenario"], r["n_agents"]) == scen_key]
        channels = _ordered_unique([r["eval_channel"] for r in scen_rows])
        algos = _ordered_unique([r["algorithm"] for r in scen_rows])
        cells = {}
        for chan in channels:
            for algo in algos:
                pairs = [(r["mean"], r["std"]) for r in scen_rows
                         if r["eval_channel"] == chan
                         and r["algorithm"] == algo]
                cells[(chan, algo)] = (format_mean_std(*aggregate_seeds(pairs))
                                       if pairs else "—")
        head = ["eval_channel"] + algos
        table = [head] + [[chan] + [cells[(chan, a)] for a in algos]
                          for chan in channels]
        widths = [max(len(row[i]) for row in table)
                  for i in range(len(head))]
        lines = [f"{scen_key[0]} (n={scen_key[1]})"]
        for row in table:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def write_results(rows, out_dir):
    """Long-form CSV plus the pivoted text table; returns both paths."""
    if not rows:
        raise ValueError("no evaluation rows to report")
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_COLUMNS)
        for r in rows:
            writer.writerow([r[c] for c in RESULTS_COLUMNS])
    table_path = os.path.join(out_dir, "table.txt")
    with open(table_path, "w") as fh:
        fh.write(pivot_table(rows))
    return csv_path, table_path


def read_metrics(path):
    """Metrics CSV as a float array, (rows, columns); empty -> (0, 0)."""
    with open(path) as fh:
        reader = csv.reader(fh)
        next(reader, None)
        data = [[float(v) for v in row] for row in reader if row]
    return np.array(data) if data else np.empty((0, 0))


def smooth_series(steps, values, window):
    """Trailing moving average; shorter series collapse to one point."""
    if len(values) == 0:
        return np.empty(0), np.empty(0)
    if len(values) < window:
        return np.array([steps[-1]]), np.array([np.mean(values)])
    kernel = np.ones(window) / window
    return steps[window - 1:], np.convolve(values, kernel, mode="valid")


def emit_plot_data(out_dir, window=10):
    """Learning-curve CSVs per (cell, seed) and the ablation grid CSV."""
    plots = os.path.join(out_dir, "plots")
    os.makedirs(plots, exist_ok=True)
    written = []
    pattern = os.path.join(out_dir, "*", "seed*", "metrics.csv")
    for path in sorted(glob.glob(pattern)):
        metrics = read_metrics(path)
        parts = os.path.normpath(path).split(os.sep)
        cell, seed = parts[-3], parts[-2]
        if metrics.size == 0:
            warnings.warn(f"empty metrics file skipped: {path}")
            continue
        steps, returns = smooth_series(metrics[:, 0], metrics[:, 2], window)
        curve = os.path.join(plots, f"curve_{cell}_{seed}.csv")
        with open(curve, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "return"])
            for s, v in zip(steps, returns):
                writer.writerow([int(s), repr(float(v))])
        written.append(curve)

    rows = collect_rows(out_dir)
    if rows:
        keys = _ordered_unique([
            (r["scenario"], r["n_agents"], r["train_channel"],
             r["alpha"], r["beta"], r["eval_channel"]) for r in rows])
        ablation = os.path.join(plots, "ablation.csv")
        with open(ablation, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scenario", "n_agents", "train_channel",
                             "alpha", "beta", "eval_channel", "mean", "std"])
            for key in keys:
                pairs = [(r["mean"], r["std"]) for r in rows
                         if (r["scenario"], r["n_agents"], r["train_channel"],
                             r["alpha"], r["beta"], r["eval_channel"]) == key]
                mean, std = aggregate_seeds(pairs)
                writer.writerow(list(key) + [repr(mean), repr(std)])
        written.append(ablation)
    return written
