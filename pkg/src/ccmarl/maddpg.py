"""Decentralized actors with a shared centralized critic, trained off-policy.

Each agent's actor maps (own observation, received messages) to a movement
action plus an outgoing broadcast message. A single critic scores the global
state and the joint action. Rewards are shaped by the mutual-information
module before storage, so the critic bootstraps on the shaped signal.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from .channel import advance_links, deliver, init_chain
from .mi_shaping import (
    ClubNet,
    JsdNet,
    ShapingCoefficients,
    make_pair_buffers,
    push_pairs,
    shape_reward,
    update_estimators,
)
from .nnkit import (
    AdamState,
    Mlp,
    OuNoise,
    adam_update,
    load_mlp_arrays,
    mlp_arrays,
    ou_step,
    soft_update,
)
from .particle_env import global_state, observe_all, obs_dim, reset, state_dim, step

METRICS_HEADER = "step,episode,return,td_loss,policy_loss,jsd_loss,club_loss,noise_scale"


@dataclass
class ActorNet:
    """Policy network: one trunk, action slice then message slice."""
    net: Mlp
    target: Mlp
    adam: AdamState
    act_dim: int
    msg_dim: int

    @classmethod
    def create(cls, obs_dim, n_agents, msg_dim, act_dim, lr, rng):
        inbox = (n_agents - 1) * msg_dim
        net = Mlp([obs_dim + inbox, 64, 64, act_dim + msg_dim],
                  ("relu", "relu", "tanh"), rng)
        return cls(net=net, target=net.clone(),
                   adam=AdamState.for_params(net.params, lr),
                   act_dim=act_dim, msg_dim=msg_dim)


@dataclass
class CriticNet:
    """Shared action-value network over (global state, joint action)."""
    net: Mlp
    target: Mlp
    adam: AdamState

    @classmethod
    def create(cls, state_dim, n_agents, act_dim, lr, rng):
        net = Mlp([state_dim + n_agents * act_dim, 64, 64, 1],
                  ("relu", "relu", "identity"), rng)
        return cls(net=net, target=net.clone(),
                   adam=AdamState.for_params(net.params, lr))


@dataclass
class RewardShaper:
    """Shaping coefficients plus the estimator networks and sample pools."""
    coeffs: ShapingCoefficients
    jsd: JsdNet
    club: ClubNet
    buffers: dict

    @classmethod
    def create(cls, n_agents, msg_dim, act_dim, coeffs, lr, rng):
        return cls(coeffs=coeffs,
                   jsd=JsdNet(msg_dim, act_dim, lr=lr, rng=rng),
                   club=ClubNet(msg_dim, act_dim, lr=lr, rng=rng),
                   buffers=make_pair_buffers(n_agents, msg_dim, act_dim))

    def shape(self, r, links, messages, actions, rng, b_marg, normalize_pairs):
        return shape_reward(r, links, messages, actions, self.coeffs,
                            self.jsd, self.club, self.buffers, rng,
                            b_marg=b_marg, normalize_pairs=normalize_pairs)

    def update(self, rng, batch_size):
        return update_estimators(self.jsd, self.club, self.buffers, rng,
                                 batch_size=batch_size)


@dataclass
class Transition:
    obs: np.ndarray        # (n, obs_dim)
    inbox: np.ndarray      # (n, (n-1)*msg_dim), messages received this step
    links: np.ndarray      # (n, n) delivery indicators
    state: np.ndarray
    actions: np.ndarray    # (n, act_dim)
    reward: float          # shaped team reward
    next_obs: np.ndarray
    next_inbox: np.ndarray
    next_state: np.ndarray
    done: float


@dataclass
class Batch:
    obs: np.ndarray
    inbox: np.ndarray
    links: np.ndarray
    state: np.ndarray
    actions: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    next_inbox: np.ndarray
    next_state: np.ndarray
    done: np.ndarray


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform sampling."""

    def __init__(self, capacity, n_agents, obs_dim, inbox_dim, state_dim, act_dim):
        self.capacity = capacity
        self.size = 0
        self._head = 0
        self.obs = np.empty((capacity, n_agents, obs_dim))
        self.inbox = np.empty((capacity, n_agents, inbox_dim))
        self.links = np.empty((capacity, n_agents, n_agents))
        self.state = np.empty((capacity, state_dim))
        self.actions = np.empty((capacity, n_agents, act_dim))
        self.reward = np.empty(capacity)
        self.next_obs = np.empty_like(self.obs)
        self.next_inbox = np.empty_like(self.inbox)
        self.next_state = np.empty_like(self.state)
        self.done = np.empty(capacity)

    def push(self, tr):
        h = self._head
        self.obs[h] = tr.obs
        self.inbox[h] = tr.inbox
        self.links[h] = tr.links
        self.state[h] = tr.state
        self.actions[h] = tr.actions
        self.reward[h] = tr.reward
        self.next_obs[h] = tr.next_obs
        self.next_inbox[h] = tr.next_inbox
        self.next_state[h] = tr.next_state
        self.done[h] = tr.done
        self._head = (h + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size, rng):
        if batch_size > self.size:
            raise ValueError(
                f"batch size {batch_size} exceeds buffer size {self.size}")
        idx = rng.integers(0, self.size, batch_size)
        return Batch(obs=self.obs[idx], inbox=self.inbox[idx],
                     links=self.links[idx], state=self.state[idx],
                     actions=self.actions[idx], reward=self.reward[idx],
                     next_obs=self.next_obs[idx], next_inbox=self.next_inbox[idx],
                     next_state=self.next_state[idx], done=self.done[idx])


@dataclass
class TrainConfig:
    gamma: float = 0.95
    tau: float = 0.01
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    estimator_lr: float = 1e-4
    batch_size: int = 1024
    total_steps: int = 200_000
    update_every: int = 100
    warmup: int = 1024
    mi_every: int = 100
    mi_batch: int = 256
    b_marg: int = 32
    buffer_capacity: int = 100_000
    msg_dim: int = 8
    act_dim: int = 2
    coefficients: ShapingCoefficients = field(
        default_factory=lambda: ShapingCoefficients(0.0, 0.0))
    channel: object = None
    seed: int = 1
    noise_theta: float = 0.15
    noise_sigma: float = 0.2
    noise_decay_frac: float = 0.8
    normalize_pairs: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch size exceeds buffer capacity")
        for name in ("batch_size", "total_steps", "update_every", "mi_every",
                     "mi_batch", "b_marg", "buffer_capacity", "msg_dim",
                     "act_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.warmup < 0:
            raise ValueError("warmup must be non-negative")
        if not 0.0 <= self.noise_decay_frac <= 1.0:
            raise ValueError("noise_decay_frac must be in [0, 1]")


def act(actor, obs, inbox, noise=None, rng=None):
    """One agent's action and outgoing broadcast message.

    Exploration noise, when given, perturbs only the action and the sum is
    clamped back into [-1, 1]; the message is emitted as-is.
    """
    out, _ = actor.net.forward(np.concatenate([obs, inbox]))
    action = out[:actor.act_dim]
    message = out[actor.act_dim:]
    if noise is not None:
        action = np.clip(action + ou_step(noise, rng), -1.0, 1.0)
    return action, message


def collect_episode(state, scen_cfg, channel, actors, shaper, cfg, rng,
                    noises=None):
    """Roll one episode from a freshly reset state.

    Messages emitted at step t are delivered at step t+1 under that step's
    link draw, so the first step of every episode delivers zeros. Each
    transition's successor fields use the next step's delivery; the final
    one draws one extra link advance. Returns (transitions, raw return).
    """
    n = scen_cfg.n_agents
    chain = init_chain(channel, n)
    pending = np.zeros((n, cfg.msg_dim))
    if noises is not None:
        for nz in noises:
            nz.reset()
    transitions = []
    raw_return = 0.0
    prev = None
    for _ in range(scen_cfg.episode_length):
        obs = observe_all(state, scen_cfg)
        links, chain = advance_links(channel, n, rng, chain=chain,
                                     positions=state.agent_pos)
        inbox = deliver(pending, links)
        s = global_state(state, scen_cfg)
        if prev is not None:
            prev.next_obs, prev.next_inbox, prev.next_state = obs, inbox, s
            transitions.append(prev)
        actions = np.empty((n, cfg.act_dim))
        messages = np.empty((n, cfg.msg_dim))
        for i, actor in enumerate(actors):
            nz = noises[i] if noises is not None else None
            actions[i], messages[i] = act(actor, obs[i], inbox[i], nz, rng)
        state, r, done = step(state, scen_cfg, actions, rng)
        raw_return += r
        shaped = shaper.shape(r, links, pending, actions, rng,
                              cfg.b_marg, cfg.normalize_pairs)
        push_pairs(shaper.buffers, pending, actions, links)
        prev = Transition(obs=obs, inbox=inbox, links=links, state=s,
                          actions=actions, reward=shaped, next_obs=None,
                          next_inbox=None, next_state=None, done=float(done))
        pending = messages
    obs = observe_all(state, scen_cfg)
    links, chain = advance_links(channel, n, rng, chain=chain,
                                 positions=state.agent_pos)
    prev.next_obs = obs
    prev.next_inbox = deliver(pending, links)
    prev.next_state = global_state(state, scen_cfg)
    transitions.append(prev)
    return transitions, raw_return


def critic_update(critic, actors, batch, cfg):
    """One TD step on the shared critic; returns the scalar TD loss."""
    b = batch.reward.shape[0]
    next_acts = []
    for i, actor in enumerate(actors):
        x = np.concatenate([batch.next_obs[:, i], batch.next_inbox[:, i]],
                           axis=1)
        out, _ = actor.target.forward(x)
        next_acts.append(out[:, :actor.act_dim])
    xq = np.concatenate([batch.next_state] + next_acts, axis=1)
    q_next = critic.target.forward(xq)[0][:, 0]
    y = batch.reward + cfg.gamma * (1.0 - batch.done) * q_next
    x = np.concatenate([batch.state, batch.actions.reshape(b, -1)], axis=1)
    q, cache = critic.net.forward(x)
    diff = q[:, 0] - y
    loss = float(np.mean(diff ** 2))
    grads, _ = critic.net.backward(cache, (2.0 / b) * diff[:, None])
    adam_update(critic.net.params, grads, critic.adam)
    return loss


def actor_update(actors, agent_id, critic, batch, cfg):
    """One policy step for a single agent; returns the scalar policy loss.

    The agent's own action is recomputed from its current actor while the
    other slots keep their stored batch actions, so the critic's gradient
    reaches only this agent's parameters.
    """
    actor = actors[agent_id]
    b = batch.reward.shape[0]
    x = np.concatenate([batch.obs[:, agent_id], batch.inbox[:, agent_id]],
                       axis=1)
    out, cache_a = actor.net.forward(x)
    joint = batch.actions.copy()
    joint[:, agent_id] = out[:, :actor.act_dim]
    xc = np.concatenate([batch.state, joint.reshape(b, -1)], axis=1)
    q, cache_c = critic.net.forward(xc)
    loss = float(-np.mean(q[:, 0]))
    _, dxc = critic.net.backward(cache_c, np.full((b, 1), -1.0 / b))
    start = batch.state.shape[1] + agent_id * actor.act_dim
    dout = np.zeros_like(out)
    dout[:, :actor.act_dim] = dxc[:, start:start + actor.act_dim]
    grads, _ = actor.net.backward(cache_a, dout)
    adam_update(actor.net.params, grads, actor.adam)
    return loss


@dataclass
class TrainResult:
    actors: list
    critic: CriticNet
    shaper: RewardShaper
    metrics: np.ndarray    # one row per update round, METRICS_HEADER order
    episodes: int
    steps: int


def train(scen_cfg, cfg, checkpoint_path=None):
    """Full training loop; deterministic per cfg.seed.

    Episodes are collected whole; after each one, every update interval
    crossed since the warmup triggers one round of critic step, per-agent
    actor steps, and target soft updates, and every estimator interval
    crossed triggers one estimator fit. A non-finite loss aborts after
    writing a diagnostic checkpoint when checkpoint_path is given.
    """
    if cfg.channel is None:
        raise ValueError("TrainConfig.channel must be set")
    rng = np.random.default_rng(cfg.seed)
    n = scen_cfg.n_agents
    odim = obs_dim(scen_cfg)
    sdim = state_dim(scen_cfg)
    actors = [ActorNet.create(odim, n, cfg.msg_dim, cfg.act_dim,
                              cfg.actor_lr, rng) for _ in range(n)]
    critic = CriticNet.create(sdim, n, cfg.act_dim, cfg.critic_lr, rng)
    shaper = RewardShaper.create(n, cfg.msg_dim, cfg.act_dim,
                                 cfg.coefficients, cfg.estimator_lr, rng)
    replay = ReplayBuffer(cfg.buffer_capacity, n, odim,
                          (n - 1) * cfg.msg_dim, sdim, cfg.act_dim)
    noises = [OuNoise.zeros(cfg.act_dim, theta=cfg.noise_theta,
                            sigma=cfg.noise_sigma) for _ in range(n)]
    decay_steps = cfg.noise_decay_frac * cfg.total_steps
    metrics = []
    steps_done = 0
    episodes = 0
    rounds_done = 0
    mi_done = 0
    last_return = 0.0
    jsd_loss_val = 0.0
    club_loss_val = 0.0
    while steps_done < cfg.total_steps:
        scale = 1.0 - steps_done / decay_steps if decay_steps > 0 else 0.0
        scale = max(0.0, scale)
        for nz in noises:
            nz.scale = scale
        world = reset(scen_cfg, rng)
        transitions, last_return = collect_episode(
            world, scen_cfg, cfg.channel, actors, shaper, cfg, rng, noises)
        for tr in transitions:
            replay.push(tr)
        steps_done += len(transitions)
        episodes += 1
        capped = min(steps_done, cfg.total_steps)
        mi_due = max(0, capped // cfg.mi_every - mi_done)
        shaping_on = cfg.coefficients.alpha != 0.0 or cfg.coefficients.beta != 0.0
        if shaping_on:
            for _ in range(mi_due):
                jsd_loss_val, club_loss_val = shaper.update(rng, cfg.mi_batch)
        mi_done += mi_due
        rounds_due = max(0, (capped - cfg.warmup) // cfg.update_every) - rounds_done
        for _ in range(rounds_due):
            batch = replay.sample(cfg.batch_size, rng)
            td = critic_update(critic, actors, batch, cfg)
            policy = np.mean([actor_update(actors, i, critic, batch, cfg)
                              for i in range(n)])
            for actor in actors:
                soft_update(actor.target, actor.net, cfg.tau)
            soft_update(critic.target, critic.net, cfg.tau)
            rounds_done += 1
            row = [cfg.warmup + rounds_done * cfg.update_every, episodes,
                   last_return, td, policy, jsd_loss_val, club_loss_val,
                   scale]
            if not np.all(np.isfinite(row)):
                if checkpoint_path is not None:
                    save_checkpoint(checkpoint_path, actors, critic, shaper)
                raise RuntimeError(
                    f"non-finite loss at step {steps_done}: "
                    f"td={td} policy={policy} jsd={jsd_loss_val} "
                    f"club={club_loss_val}")
            metrics.append(row)
    out = np.array(metrics) if metrics else np.empty((0, 8))
    return TrainResult(actors=actors, critic=critic, shaper=shaper,
                       metrics=out, episodes=episodes, steps=steps_done)


def population_stats(values):
    arr = np.asarray(values, dtype=float)
    return float(np.mean(arr)), float(np.std(arr))


def evaluate(actors, scen_cfg, eval_channel, cfg, n_episodes=100, rng=None):
    """Mean and population std of raw episode returns, noise disabled."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = scen_cfg.n_agents
    returns = np.empty(n_episodes)
    for ep in range(n_episodes):
        state = reset(scen_cfg, rng)
        chain = init_chain(eval_channel, n)
        pending = np.zeros((n, cfg.msg_dim))
        total = 0.0
        for _ in range(scen_cfg.episode_length):
            obs = observe_all(state, scen_cfg)
            links, chain = advance_links(eval_channel, n, rng, chain=chain,
                                         positions=state.agent_pos)
            inbox = deliver(pending, links)
            actions = np.empty((n, cfg.act_dim))
            messages = np.empty((n, cfg.msg_dim))
            for i, actor in enumerate(actors):
                actions[i], messages[i] = act(actor, obs[i], inbox[i])
            state, r, _ = step(state, scen_cfg, actions, rng)
            total += r
            pending = messages
        returns[ep] = total
    return population_stats(returns)


def metrics_csv(metrics):
    """Render a metrics array as CSV text, header included."""
    buf = io.StringIO()
    buf.write(METRICS_HEADER + "\n")
    for row in metrics:
        cells = [str(int(row[0])), str(int(row[1]))]
        cells += [repr(float(v)) for v in row[2:]]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def write_metrics(path, metrics):
    with open(path, "w") as fh:
        fh.write(metrics_csv(metrics))


def save_checkpoint(path, actors, critic, shaper):
    """All network parameters (mains and targets) in one .npz file."""
    arrays = {}
    for i, actor in enumerate(actors):
        arrays.update(mlp_arrays(actor.net, f"actor{i}"))
        arrays.update(mlp_arrays(actor.target, f"actor{i}_target"))
    arrays.update(mlp_arrays(critic.net, "critic"))
    arrays.update(mlp_arrays(critic.target, "critic_target"))
    arrays.update(mlp_arrays(shaper.jsd.enc_m, "jsd_enc_m"))
    arrays.update(mlp_arrays(shaper.jsd.enc_a, "jsd_enc_a"))
    arrays.update(mlp_arrays(shaper.jsd.scorer, "jsd_scorer"))
    arrays.update(mlp_arrays(shaper.club.mu, "club_mu"))
    np.savez(path, **arrays)


def load_checkpoint(path, actors, critic, shaper):
    """Restore parameters saved by save_checkpoint, in place."""
    with np.load(path) as data:
        arrays = dict(data)
    for i, actor in enumerate(actors):
        load_mlp_arrays(actor.net, f"actor{i}", arrays)
        load_mlp_arrays(actor.target, f"actor{i}_target", arrays)
    load_mlp_arrays(critic.net, "critic", arrays)
    load_mlp_arrays(critic.target, "critic_target", arrays)
    load_mlp_arrays(shaper.jsd.enc_m, "jsd_enc_m", arrays)
    load_mlp_arrays(shaper.jsd.enc_a, "jsd_enc_a", arrays)
    load_mlp_arrays(shaper.jsd.scorer, "jsd_scorer", arrays)
    load_mlp_arrays(shaper.club.mu, "club_mu", arrays)
