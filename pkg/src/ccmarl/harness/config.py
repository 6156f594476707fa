"""Experiment config files: INI sections mapped onto typed cells.

A config describes one experiment grid. The [env] section picks the
scenario, [channel] the training-time channel, [train] overrides trainer
hyperparameters, [shaping] the reward-shaping coefficients, and [grid]
the algorithm presets, seeds, and evaluation channels. Every key is
validated against the schema below; unknown keys are errors.
"""

import configparser
import os
from dataclasses import dataclass, field, fields, replace

from ..channel import (
    DistanceThreshold,
    Dropout,
    MarkovChain,
    Unrestricted,
    make_default_mbc,
    mbc_from_file,
)
from ..maddpg import TrainConfig
from ..mi_shaping import ShapingCoefficients
from ..particle_env import SCENARIOS, make_config


class ConfigError(ValueError):
    pass


ALGORITHMS = ("fc", "dropout", "nocomm", "cc")

_SCHEMA = {
    "env": {
        "scenario": "str",
        "n_agents": "int",
        "episode_length": "int",
        "fov_radius": "float",
    },
    "channel": {
        "kind": "str",
        "p": "float",
        "k": "int",
        "d": "float",
        "matrix_file": "str",
        "shared_chain": "bool",
    },
    "train": {
        "gamma": "float",
        "tau": "float",
        "actor_lr": "float",
        "critic_lr": "float",
        "estimator_lr": "float",
        "batch_size": "int",
        "total_steps": "int",
        "update_every": "int",
        "warmup": "int",
        "mi_every": "int",
        "mi_batch": "int",
        "b_marg": "int",
        "buffer_capacity": "int",
        "msg_dim": "int",
        "act_dim": "int",
        "noise_theta": "float",
        "noise_sigma": "float",
        "noise_decay_frac": "float",
    },
    "shaping": {
        "alpha": "float",
        "beta": "float",
        "normalize_pairs": "bool",
    },
    "grid": {
        "algorithms": "str_list",
        "seeds": "int_list",
        "eval_channels": "str_list",
        "n_eval_episodes": "int",
        "ablation": "pair_list",
    },
}


def _convert(section, key, raw, kind):
    where = f"{section}.{key}"
    try:
        if kind == "str":
            return raw.strip()
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind == "str_list":
            return raw.split()
        if kind == "int_list":
            return [int(tok) for tok in raw.split()]
        if kind == "pair_list":
            pairs = []
            for tok in raw.split():
                a, b = tok.split(",")
                pairs.append((float(a), float(b)))
            return pairs
    except ValueError:
        raise ConfigError(
            f"{where} expects {kind}, got {raw!r}") from None
    raise ConfigError(f"{where}: unhandled kind {kind}")


def _parse_sections(path):
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    out = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        schema = _SCHEMA[section]
        vals = {}
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {section}.{key}")
            vals[key] = _convert(section, key, raw, schema[key])
        out[section] = vals
    return out


def channel_name(model):
    if isinstance(model, Unrestricted):
        return "unrestricted"
    if isinstance(model, Dropout):
        return f"dropout:{model.p:g}"
    if isinstance(model, MarkovChain):
        return f"mbc:{model.k}"
    if isinstance(model, DistanceThreshold):
        return f"dbc:{model.d:g}"
    raise ConfigError(f"unnameable channel {model!r}")


def parse_channel_spec(spec):
    """Channel from a compact string: unrestricted, dropout:P, mbc:K, dbc:D."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "unrestricted" and not arg:
            return Unrestricted()
        if kind == "dropout" and arg:
            return Dropout(float(arg))
        if kind == "mbc" and arg:
            return make_default_mbc(int(arg))
        if kind == "dbc" and arg:
            return DistanceThreshold(float(arg))
    except ValueError as err:
        raise ConfigError(f"bad channel spec {spec!r}: {err}") from None
    raise ConfigError(f"bad channel spec {spec!r}")


def _build_channel(section, base_dir):
    kind = section.get("kind", "dropout")
    if kind == "unrestricted":
        return Unrestricted()
    if kind == "dropout":
        return Dropout(section.get("p", 0.2))
    if kind == "mbc":
        shared = section.get("shared_chain", False)
        if "matrix_file" in section:
            path = os.path.join(base_dir, section["matrix_file"])
            return mbc_from_file(path, shared_chain=shared)
        if "k" not in section:
            raise ConfigError("channel.k or channel.matrix_file required for mbc")
        return make_default_mbc(section["k"], shared_chain=shared)
    if kind == "dbc":
        if "d" not in section:
            raise ConfigError("channel.d required for dbc")
        return DistanceThreshold(section["d"])
    raise ConfigError(f"channel.kind must be one of unrestricted, dropout, "
                      f"mbc, dbc; got {kind!r}")


def default_coefficients(scenario):
    # navigation benefits from a stronger compression penalty
    if scenario == "spread":
        return ShapingCoefficients(0.01, 0.01)
    return ShapingCoefficients(0.01, 0.001)


@dataclass
class Cell:
    name: str
    algorithm: str
    scenario: str
    n_agents: int
    train_channel: str
    scen_cfg: object
    train_cfg: TrainConfig
    eval_channels: list
    seeds: list
    n_eval_episodes: int = 100


@dataclass
class ExperimentSpec:
    cells: list = field(default_factory=list)
    out_dir: str = "results"

    def __post_init__(self):
        if not self.cells:
            raise ConfigError("experiment needs at least one cell")
        for cell in self.cells:
            if len(set(cell.seeds)) != len(cell.seeds):
                raise ConfigError(f"cell {cell.name}: duplicate seeds")


def _coeff_tag(value):
    return f"{value:g}".replace(".", "p").replace("-", "m")


def _preset(algorithm, base_channel, coeffs):
    """Training channel and coefficients for each built-in algorithm."""
    if algorithm == "fc":
        return Unrestricted(), ShapingCoefficients(0.0, 0.0)
    if algorithm == "nocomm":
        return Dropout(1.0), ShapingCoefficients(0.0, 0.0)
    if algorithm == "dropout":
        return base_channel, ShapingCoefficients(0.0, 0.0)
    if algorithm == "cc":
        return base_channel, coeffs
    raise ConfigError(
        f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def load_config(path, out_dir=None):
    """Parse a config file into an ExperimentSpec of fully resolved cells."""
    raw = _parse_sections(path)
    env = raw.get("env", {})
    if "scenario" not in env:
        raise ConfigError("env.scenario is required")
    scenario = env["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError(f"env.scenario must be one of {sorted(SCENARIOS)}, "
                          f"got {scenario!r}")
    overrides = {k: v for k, v in env.items() if k != "scenario"}
    try:
        scen_cfg = make_config(scenario, **overrides)
    except ValueError as err:
        raise ConfigError(f"env section invalid: {err}") from None

    base_channel = _build_channel(raw.get("channel", {}),
                                  os.path.dirname(os.path.abspath(path)))
    shaping = raw.get("shaping", {})
    coeffs = default_coefficients(scenario)
    coeffs = ShapingCoefficients(shaping.get("alpha", coeffs.alpha),
                                 shaping.get("beta", coeffs.beta))

    train = dict(raw.get("train", {}))
    if ("batch_size" not in train and scenario == "tag"
            and scen_cfg.n_agents in (6, 9)):
        train["batch_size"] = 512
    normalize = shaping.get("normalize_pairs", False)

    grid = raw.get("grid", {})
    algorithms = grid.get("algorithms", ["cc"])
    seeds = grid.get("seeds", [1])
    eval_specs = grid.get("eval_channels", ["unrestricted"])
    eval_channels = [(spec, parse_channel_spec(spec)) for spec in eval_specs]
    n_eval = grid.get("n_eval_episodes", 100)

    variants = [(algo, *_preset(algo, base_channel, coeffs))
                for algo in algorithms]
    for alpha, beta in grid.get("ablation", []):
        variants.append((f"cc-a{_coeff_tag(alpha)}-b{_coeff_tag(beta)}",
                         base_channel, ShapingCoefficients(alpha, beta)))

    cells = []
    for algo, channel, cell_coeffs in variants:
        try:
            cfg = TrainConfig(channel=channel, coefficients=cell_coeffs,
                              normalize_pairs=normalize, **train)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"train section invalid: {err}") from None
        cells.append(Cell(
            name=f"{scenario}{scen_cfg.n_agents}-{algo}",
            algorithm=algo,
            scenario=scenario,
            n_agents=scen_cfg.n_agents,
            train_channel=channel_name(channel),
            scen_cfg=scen_cfg,
            train_cfg=cfg,
            eval_channels=eval_channels,
            seeds=list(seeds),
            n_eval_episodes=n_eval,
        ))
    return ExperimentSpec(cells=cells, out_dir=out_dir or "results")


def full_scale(spec):
    """The full-size run length; desk default stays small for iteration."""
    cells = [replace(cell, train_cfg=replace(cell.train_cfg,
                                             total_steps=4_000_000))
             for cell in spec.cells]
    return ExperimentSpec(cells=cells, out_dir=spec.out_dir)


def resolved_config(cell):
    """Flat dump of every value that defines a cell, for audit diffs."""
    out = {
        "name": cell.name,
        "algorithm": cell.algorithm,
        "scenario": cell.scenario,
        "n_agents": cell.n_agents,
        "train_channel": cell.train_channel,
        "alpha": cell.train_cfg.coefficients.alpha,
        "beta": cell.train_cfg.coefficients.beta,
        "seeds": tuple(cell.seeds),
        "eval_channels": tuple(name for name, _ in cell.eval_channels),
        "n_eval_episodes": cell.n_eval_episodes,
    }
    skip = ("channel", "coefficients")
    for f in fields(TrainConfig):
        if f.name not in skip:
            out[f.name] = getattr(cell.train_cfg, f.name)
    return out
