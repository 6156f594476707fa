"""Cooperative 2-D particle-world scenarios.

Three tasks: spread (cover landmarks), tag (chase a scripted prey around
obstacles) and reference (reach the landmark your partner knows about).
Point particles with velocity damping and soft contact forces; episodes are
fixed length and the team shares one scalar reward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCENARIOS = ("spread", "tag", "reference")


@dataclass
class ScenarioConfig:
    scenario: str
    n_agents: int = 3
    episode_length: int = 25
    dt: float = 0.1
    damping: float = 0.25
    fov_radius: float = 1.5
    world_half_extent: float = 1.0
    agent_radius: float = 0.15
    collision_penalty: float = 1.0
    # tag
    predator_radius: float = 0.075
    prey_radius: float = 0.05
    obstacle_radius: float = 0.2
    capture_bonus: float = 10.0
    prey_perception: float = 1.0
    prey_force_scale: float = 1.3
    predator_force_scale: float = 1.0
    prey_reach: float = 0.5
    # reference
    arrival_radius: float = 0.1
    arrival_bonus: float = 1.0
    # contact model
    contact_force: float = 100.0
    contact_margin: float = 1e-3

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.n_agents < 2:
            raise ValueError(f"need at least 2 agents, got {self.n_agents}")
        if self.scenario == "reference" and self.n_agents != 2:
            raise ValueError("reference is a 2-agent task")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must be in [0, 1)")


def make_config(scenario, **overrides):
    """Config with per-scenario defaults: reference is 2 agents, unlimited view."""
    defaults = {}
    if scenario == "reference":
        defaults["n_agents"] = 2
        defaults["fov_radius"] = np.inf
    defaults.update(overrides)
    return ScenarioConfig(scenario=scenario, **defaults)


def n_landmarks(cfg):
    """Spread covers one landmark per agent; tag has 2 obstacles; reference 3 colors."""
    if cfg.scenario == "spread":
        return cfg.n_agents
    if cfg.scenario == "tag":
        return 2
    return 3


@dataclass
class WorldState:
    agent_pos: np.ndarray  # (n, 2)
    agent_vel: np.ndarray  # (n, 2)
    landmarks: np.ndarray  # (L, 2), obstacles for tag
    prey_pos: np.ndarray | None
    prey_vel: np.ndarray | None
    targets: np.ndarray | None  # (n,) landmark indices, reference only
    t: int

    def copy(self):
        return WorldState(
            self.agent_pos.copy(), self.agent_vel.copy(), self.landmarks.copy(),
            None if self.prey_pos is None else self.prey_pos.copy(),
            None if self.prey_vel is None else self.prey_vel.copy(),
            None if self.targets is None else self.targets.copy(),
            self.t)


def reset(cfg, rng):
    """Fresh episode: everything placed uniformly in the spawn box, at rest."""
    h = cfg.world_half_extent
    n = cfg.n_agents
    agent_pos = rng.uniform(-h, h, size=(n, 2))
    landmarks = rng.uniform(-h, h, size=(n_landmarks(cfg), 2))
    prey_pos = prey_vel = targets = None
    if cfg.scenario == "tag":
        prey_pos = rng.uniform(-h, h, size=2)
        prey_vel = np.zeros(2)
    if cfg.scenario == "reference":
        targets = rng.integers(0, n_landmarks(cfg), size=n)
    return WorldState(agent_pos, np.zeros((n, 2)), landmarks,
                      prey_pos, prey_vel, targets, 0)


def _contact_forces(pos, radii, cfg):
    """Soft pairwise contact: logistic penetration, force along the separation."""
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    np.fill_diagonal(dist, 1.0)  # self-distance unused, avoid 0-division
    dist = np.maximum(dist, 1e-12)
    dist_min = radii[:, None] + radii[None, :]
    k = cfg.contact_margin
    penetration = np.logaddexp(0.0, -(dist - dist_min) / k) * k
    np.fill_diagonal(penetration, 0.0)
    mag = cfg.contact_force * penetration
    return ((mag / dist)[:, :, None] * diff).sum(axis=1)


def _entity_radii(cfg):
    """Radii of the moving entities, in stacking order (agents, then prey for tag)."""
    if cfg.scenario == "tag":
        r = np.full(cfg.n_agents, cfg.predator_radius)
        return np.concatenate([r, [cfg.prey_radius]])
    return np.full(cfg.n_agents, cfg.agent_radius)


def prey_candidates(prey_pos, cfg, rng, n=100):
    """Uniform-in-area samples from the annulus of reachable points around the prey."""
    r_in, r_out = 0.1 * cfg.prey_reach, cfg.prey_reach
    r = np.sqrt(rng.uniform(r_in ** 2, r_out ** 2, size=n))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return prey_pos + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)


def prey_policy(state, cfg, rng):
    """Scripted evasion: pick the candidate position maximizing the minimum
    distance to any predator the prey can perceive, head there at unit force.

    With no predator in perception range all candidates tie and the first
    sample wins, which is a uniformly random direction.
    """
    if cfg.scenario != "tag":
        raise ValueError("prey_policy applies to the tag scenario only")
    cands = prey_candidates(state.prey_pos, cfg, rng)
    d_pred = np.linalg.norm(state.agent_pos - state.prey_pos, axis=1)
    seen = state.agent_pos[d_pred <= cfg.prey_perception]
    if len(seen) == 0:
        best = cands[0]
    else:
        d = np.linalg.norm(cands[:, None, :] - seen[None, :, :], axis=-1)
        best = cands[np.argmax(d.min(axis=1))]
    direction = best - state.prey_pos
    norm = np.linalg.norm(direction)
    if norm > 1e-12:
        direction = direction / norm
    return np.clip(direction, -1.0, 1.0)


def scenario_reward(state, cfg):
    """Team reward for the current state."""
    if cfg.scenario == "spread":
        d = np.linalg.norm(
            state.landmarks[:, None, :] - state.agent_pos[None, :, :], axis=-1)
        coverage = -d.min(axis=1).sum()
        diff = state.agent_pos[:, None, :] - state.agent_pos[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=-1))
        overlap = dist < 2.0 * cfg.agent_radius
        n_pairs = int(np.triu(overlap, k=1).sum())
        return float(coverage - cfg.collision_penalty * n_pairs)
    if cfg.scenario == "tag":
        d = np.linalg.norm(state.agent_pos - state.prey_pos, axis=1)
        contacts = int((d < cfg.predator_radius + cfg.prey_radius).sum())
        return float(cfg.capture_bonus * contacts)
    d = np.linalg.norm(
        state.agent_pos - state.landmarks[state.targets], axis=1)
    return float(cfg.arrival_bonus * int((d <= cfg.arrival_radius).sum()))


def step(state, cfg, actions, rng):
    """Advance one tick: v <- v*(1-damping) + F*dt, p <- p + v*dt.

    F combines the clamped agent action (scaled per scenario), soft contact
    forces and, for tag, the scripted prey's evasion force. Returns
    (new_state, team_reward, done). Stepping past the episode end raises.
    """
    if state.t >= cfg.episode_length:
        raise RuntimeError(
            f"episode is done (t={state.t}, length={cfg.episode_length})")
    actions = np.clip(np.asarray(actions, dtype=np.float64), -1.0, 1.0)
    if actions.shape != (cfg.n_agents, 2):
        raise ValueError(
            f"expected actions shape {(cfg.n_agents, 2)}, got {actions.shape}")
    new = state.copy()
    if cfg.scenario == "tag":
        prey_force = prey_policy(state, cfg, rng) * cfg.prey_force_scale
        movers = np.vstack([state.agent_pos, state.prey_pos])
        radii = _entity_radii(cfg)
        forces = np.vstack([actions * cfg.predator_force_scale, prey_force])
        forces += _contact_forces(movers, radii, cfg)
        forces += _obstacle_forces(movers, radii, state.landmarks, cfg)
        vels = np.vstack([state.agent_vel, state.prey_vel])
        vels = vels * (1.0 - cfg.damping) + forces * cfg.dt
        movers = movers + vels * cfg.dt
        new.agent_pos, new.prey_pos = movers[:-1], movers[-1]
        new.agent_vel, new.prey_vel = vels[:-1], vels[-1]
    else:
        forces = actions.copy()
        if cfg.scenario == "spread":
            forces += _contact_forces(
                state.agent_pos, _entity_radii(cfg), cfg)
        new.agent_vel = state.agent_vel * (1.0 - cfg.damping) + forces * cfg.dt
        new.agent_pos = state.agent_pos + new.agent_vel * cfg.dt
    new.t = state.t + 1
    reward = scenario_reward(new, cfg)
    done = new.t == cfg.episode_length
    return new, reward, done


def _obstacle_forces(pos, radii, obstacles, cfg):
    """Contact forces from static obstacles onto the moving entities."""
    diff = pos[:, None, :] - obstacles[None, :, :]
    dist = np.maximum(np.sqrt((diff * diff).sum(axis=-1)), 1e-12)
    dist_min = radii[:, None] + cfg.obstacle_radius
    k = cfg.contact_margin
    penetration = np.logaddexp(0.0, -(dist - dist_min) / k) * k
    mag = cfg.contact_force * penetration
    return ((mag / dist)[:, :, None] * diff).sum(axis=1)


def obs_dim(cfg):
    base = 4 + 2 * n_landmarks(cfg) + 2 * (cfg.n_agents - 1)
    if cfg.scenario == "tag":
        return base + 2
    if cfg.scenario == "reference":
        return base + n_landmarks(cfg)
    return base


def observe_all(state, cfg):
    """Stack every agent's observation into an (n, obs_dim) array.

    Layout per agent: own position, own velocity, relative landmark
    positions, relative other-agent positions (ascending index, self
    skipped), relative prey position (tag), then the one-hot of the OTHER
    agent's target landmark (reference). Entities strictly beyond
    fov_radius contribute exact zeros.
    """
    n = cfg.n_agents
    pos = state.agent_pos
    rel_lm = state.landmarks[None, :, :] - pos[:, None, :]
    if np.isfinite(cfg.fov_radius):
        mask = np.linalg.norm(rel_lm, axis=-1) > cfg.fov_radius
        rel_lm = np.where(mask[:, :, None], 0.0, rel_lm)
    rel_ag = pos[None, :, :] - pos[:, None, :]
    if np.isfinite(cfg.fov_radius):
        mask = np.linalg.norm(rel_ag, axis=-1) > cfg.fov_radius
        rel_ag = np.where(mask[:, :, None], 0.0, rel_ag)
    keep = ~np.eye(n, dtype=bool)
    rel_others = rel_ag[keep].reshape(n, (n - 1) * 2)
    parts = [pos, state.agent_vel, rel_lm.reshape(n, -1), rel_others]
    if cfg.scenario == "tag":
        rel_prey = state.prey_pos[None, :] - pos
        if np.isfinite(cfg.fov_radius):
            mask = np.linalg.norm(rel_prey, axis=-1) > cfg.fov_radius
            rel_prey = np.where(mask[:, None], 0.0, rel_prey)
        parts.append(rel_prey)
    if cfg.scenario == "reference":
        onehot = np.zeros((n, n_landmarks(cfg)))
        other = np.array([1, 0])
        onehot[np.arange(n), state.targets[other]] = 1.0
        parts.append(onehot)
    return np.concatenate(parts, axis=1)


def observe(state, cfg, agent_id):
    """Single agent's observation; see observe_all for the layout."""
    if not 0 <= agent_id < cfg.n_agents:
        raise ValueError(f"agent_id {agent_id} out of range")
    return observe_all(state, cfg)[agent_id]


def state_dim(cfg):
    d = 4 * cfg.n_agents + 2 * n_landmarks(cfg)
    if cfg.scenario == "tag":
        d += 4
    if cfg.scenario == "reference":
        d += cfg.n_agents * n_landmarks(cfg)
    return d


def global_state(state, cfg):
    """Flat full-information vector for centralized critics."""
    parts = [state.agent_pos.ravel(), state.agent_vel.ravel(),
             state.landmarks.ravel()]
    if cfg.scenario == "tag":
        parts += [state.prey_pos, state.prey_vel]
    if cfg.scenario == "reference":
        onehot = np.zeros((cfg.n_agents, n_landmarks(cfg)))
        onehot[np.arange(cfg.n_agents), state.targets] = 1.0
        parts.append(onehot.ravel())
    return np.concatenate(parts)


def dump_trajectory(path, trajectory, cfg):
    """Write (state, reward) pairs as CSV rows t,agent,px,py,vx,vy,reward."""
    with open(path, "w") as fh:
        fh.write("t,agent,px,py,vx,vy,reward\n")
        for state, reward in trajectory:
            for i in range(cfg.n_agents):
                fh.write(f"{state.t},{i},{state.agent_pos[i, 0]:.6f},"
                         f"{state.agent_pos[i, 1]:.6f},{state.agent_vel[i, 0]:.6f},"
                         f"{state.agent_vel[i, 1]:.6f},{reward:.6f}\n")
