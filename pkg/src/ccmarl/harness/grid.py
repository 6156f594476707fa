"""Grid execution: one directory per (cell, seed), resumable by file."""

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from ..maddpg import evaluate, save_checkpoint, train, write_metrics

EVAL_SEED_BASE = 1000


def cell_seed_dir(out_dir, cell_name, seed):
    return os.path.join(out_dir, cell_name, f"seed{seed}")


def run_cell_seed(cell, seed, out_dir):
    """Train one (cell, seed) and evaluate it under every listed channel.

    Writes metrics.csv, checkpoint.npz, and eval.json into the cell/seed
    directory; a pre-existing eval.json short-circuits the whole run, so
    interrupted grids resume where they stopped.
    """
    cdir = cell_seed_dir(out_dir, cell.name, seed)
    eval_path = os.path.join(cdir, "eval.json")
    if os.path.exists(eval_path):
        with open(eval_path) as fh:
            return json.load(fh)
    os.makedirs(cdir, exist_ok=True)
    cfg = replace(cell.train_cfg, seed=seed)
    started = time.perf_counter()
    result = train(cell.scen_cfg, cfg,
                   checkpoint_path=os.path.join(cdir, "diagnostic.npz"))
    write_metrics(os.path.join(cdir, "metrics.csv"), result.metrics)
    save_checkpoint(os.path.join(cdir, "checkpoint.npz"),
                    result.actors, result.critic, result.shaper)
    rows = []
    for name, model in cell.eval_channels:
        mean, std = evaluate(result.actors, cell.scen_cfg, model, cfg,
                             n_episodes=cell.n_eval_episodes,
                             rng=np.random.default_rng(EVAL_SEED_BASE + seed))
        rows.append({
            "scenario": cell.scenario,
            "n_agents": cell.n_agents,
            "algorithm": cell.algorithm,
            "train_channel": cell.train_channel,
            "eval_channel": name,
            "seed": seed,
            "mean": mean,
            "std": std,
            "n_episodes": cell.n_eval_episodes,
            "alpha": cell.train_cfg.coefficients.alpha,
            "beta": cell.train_cfg.coefficients.beta,
            "seconds": round(time.perf_counter() - started, 3),
        })
    with open(eval_path, "w") as fh:
        json.dump(rows, fh, indent=1)
    return rows


def run_grid(spec, parallelism=1):
    """Run every (cell, seed) job; returns (rows, failures).

    A failing job is recorded in failures.json and skipped; the rest of
    the grid still runs. Jobs are independent, so parallelism just maps
    them over worker processes.
    """
    jobs = [(cell, seed) for cell in spec.cells for seed in cell.seeds]
    os.makedirs(spec.out_dir, exist_ok=True)
    rows = []
    failures = []
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(run_cell_seed, cell, seed, spec.out_dir)
                       for cell, seed in jobs]
            for (cell, seed), fut in zip(jobs, futures):
                try:
                    rows.extend(fut.result())
                except Exception as err:
                    failures.append({"cell": cell.name, "seed": seed,
                                     "error": str(err)})
    else:
        for cell, seed in jobs:
            try:
                rows.extend(run_cell_seed(cell, seed, spec.out_dir))
            except Exception as err:
                failures.append({"cell": cell.name, "seed": seed,
                                 "error": str(err)})
    if failures:
        with open(os.path.join(spec.out_dir, "failures.json"), "w") as fh:
            json.dump(failures, fh, indent=1)
    return rows, failures
