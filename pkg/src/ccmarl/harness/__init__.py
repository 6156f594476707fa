"""Experiment orchestration: configs, grid runs, tables, and figures."""

from .config import Cell, ConfigError, ExperimentSpec, load_config, parse_channel_spec
from .grid import run_cell_seed, run_grid
from .report import collect_rows, emit_plot_data, write_results

__all__ = [
    "Cell",
    "ConfigError",
    "ExperimentSpec",
    "collect_rows",
    "emit_plot_data",
    "load_config",
    "parse_channel_spec",
    "run_cell_seed",
    "run_grid",
    "write_results",
]
