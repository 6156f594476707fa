"""Command-line entry point.

Verbs: train one cell, run a whole grid, evaluate a checkpoint under a
channel, render report tables and figures, or emit plot-data CSVs.
"""

import argparse
import sys

import numpy as np

from ..maddpg import ActorNet, CriticNet, RewardShaper, evaluate, load_checkpoint
from ..particle_env import obs_dim, state_dim
from .config import ConfigError, full_scale, load_config, parse_channel_spec
from .grid import run_cell_seed, run_grid
from .report import collect_rows, emit_plot_data, write_results


def _load_spec(args):
    spec = load_config(args.config, out_dir=args.out)
    if getattr(args, "full_scale", False):
        spec = full_scale(spec)
    return spec


def _cmd_train(args):
    spec = _load_spec(args)
    cell = spec.cells[0]
    if args.algorithm is not None:
        matches = [c for c in spec.cells if c.algorithm == args.algorithm]
        if not matches:
            print(f"no cell for algorithm {args.algorithm!r}",
                  file=sys.stderr)
            return 1
        cell = matches[0]
    seed = args.seed if args.seed is not None else cell.seeds[0]
    rows = run_cell_seed(cell, seed, spec.out_dir)
    for r in rows:
        print(f"{r['eval_channel']}: {r['mean']:.3f} ± {r['std']:.3f}")
    print(f"results under {spec.out_dir}/{cell.name}/seed{seed}")
    return 0


def _cmd_grid(args):
    spec = _load_spec(args)
    rows, failures = run_grid(spec, parallelism=args.parallel)
    print(f"{len(rows)} evaluation rows from "
          f"{sum(len(c.seeds) for c in spec.cells)} runs")
    for f in failures:
        print(f"FAILED {f['cell']} seed {f['seed']}: {f['error']}",
              file=sys.stderr)
    return 1 if failures else 0


def _cmd_eval(args):
    spec = _load_spec(args)
    cell = spec.cells[0]
    n = cell.scen_cfg.n_agents
    cfg = cell.train_cfg
    rng = np.random.default_rng(0)
    actors = [ActorNet.create(obs_dim(cell.scen_cfg), n, cfg.msg_dim,
                              cfg.act_dim, cfg.actor_lr, rng)
              for _ in range(n)]
    critic = CriticNet.create(state_dim(cell.scen_cfg), n, cfg.act_dim,
                              cfg.critic_lr, rng)
    shaper = RewardShaper.create(n, cfg.msg_dim, cfg.act_dim,
                                 cfg.coefficients, cfg.estimator_lr, rng)
    load_checkpoint(args.checkpoint, actors, critic, shaper)
    model = parse_channel_spec(args.channel)
    mean, std = evaluate(actors, cell.scen_cfg, model, cfg,
                         n_episodes=args.episodes,
                         rng=np.random.default_rng(args.seed))
    print(f"{args.channel}: {mean:.3f} ± {std:.3f} "
          f"over {args.episodes} episodes")
    return 0


def _cmd_report(args):
    from .figures import render_comparison, render_learning_curves

    rows = collect_rows(args.out)
    if not rows:
        print(f"no evaluation results under {args.out}", file=sys.stderr)
        return 1
    csv_path, table_path = write_results(rows, args.out)
    with open(table_path) as fh:
        print(fh.read(), end="")
    figures = render_learning_curves(args.out)
    figures += render_comparison(rows, args.out)
    print(f"wrote {csv_path}, {table_path}")
    for path in figures:
        print(f"wrote {path}")
    return 0


def _cmd_plotdata(args):
    written = emit_plot_data(args.out, window=args.window)
    if not written:
        print(f"no metrics under {args.out}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ccmarl",
        description="Train and evaluate message-passing agents on "
                    "lossy communication channels.")
    sub = parser.add_subparsers(dest="verb", required=True)

    train_p = sub.add_parser("train", help="run one cell for one seed")
    train_p.add_argument("--config", required=True)
    train_p.add_argument("--algorithm", default=None,
                         help="pick a cell by algorithm name")
    train_p.add_argument("--seed", type=int, default=None)
    train_p.add_argument("--out", default="results")
    train_p.add_argument("--full-scale", action="store_true",
                         help="use the full-length run schedule")
    train_p.set_defaults(func=_cmd_train)

    grid_p = sub.add_parser("grid", help="run every cell and seed")
    grid_p.add_argument("--config", required=True)
    grid_p.add_argument("--out", default="results")
    grid_p.add_argument("--parallel", type=int, default=1)
    grid_p.add_argument("--full-scale", action="store_true")
    grid_p.set_defaults(func=_cmd_grid)

    eval_p = sub.add_parser("eval", help="evaluate a checkpoint")
    eval_p.add_argument("--config", required=True)
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--channel", default="unrestricted")
    eval_p.add_argument("--episodes", type=int, default=100)
    eval_p.add_argument("--seed", type=int, default=0)
    eval_p.add_argument("--out", default="results")
    eval_p.set_defaults(func=_cmd_eval)

    report_p = sub.add_parser("report",
                              help="tables and figures from results")
    report_p.add_argument("--out", default="results")
    report_p.set_defaults(func=_cmd_report)

    plot_p = sub.add_parser("plotdata", help="learning-curve CSVs")
    plot_p.add_argument("--out", default="results")
    plot_p.add_argument("--window", type=int, default=10)
    plot_p.set_defaults(func=_cmd_plotdata)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"missing file: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
