"""Mutual-information estimators and reward shaping for constrained communication.

Two estimators share the work: a discriminator-based lower bound scores how
informative delivered messages were about the receiver's action, and a
variational upper bound (unit-variance Gaussian around a learned mean) caps
how much undelivered messages would have mattered. Delivered pairs reward
high MI, lost pairs penalize it; both feed a shaped team reward.

Sample pairs are split by delivery outcome into lossless/lossy FIFO pools,
one pool pair per ordered (sender, receiver) link, while the estimator
networks themselves are shared across links.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nnkit import AdamState, Mlp, adam_update, softplus

LOG_2PI = float(np.log(2.0 * np.pi))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class ShapingCoefficients:
    """Weights for the delivered-message bonus (alpha) and lost-message penalty (beta)."""
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(
                f"shaping coefficients must be non-negative, got "
                f"alpha={self.alpha}, beta={self.beta}")


class JsdNet:
    """Discriminator T(m, a): one-layer encoders (32 units each) into a scorer
    with one hidden layer.

    The scorer needs the hidden layer: a linear readout of the concatenated
    encodings is additive in m and a, and any additive T has equal means under
    the joint and the product of marginals, so its optimum is the constant
    T = 0 regardless of how correlated m and a are.
    """

    def __init__(self, msg_dim, act_dim, lr=1e-4, rng=None):
        if rng is None:
            rng = np.random.default_rng()
        self.enc_m = Mlp([msg_dim, 32], ("relu",), rng)
        self.enc_a = Mlp([act_dim, 32], ("relu",), rng)
        self.scorer = Mlp([64, 32, 1], ("relu", "identity"), rng)
        self.adam = AdamState.for_params(self.params, lr)

    @property
    def params(self):
        return self.enc_m.params + self.enc_a.params + self.scorer.params

    def score(self, m, a):
        """T on a batch of (message, action) rows. Returns (scores, caches)."""
        hm, cm = self.enc_m.forward(m)
        ha, ca = self.enc_a.forward(a)
        s, cs = self.scorer.forward(np.concatenate([hm, ha], axis=1))
        return s[:, 0], (cm, ca, cs)

    def score_backward(self, caches, dscores):
        """Gradients of sum(dscores * scores) w.r.t. params, aligned with self.params."""
        cm, ca, cs = caches
        gs, gin = self.scorer.backward(cs, dscores[:, None])
        gm, _ = self.enc_m.backward(cm, gin[:, :32])
        ga, _ = self.enc_a.backward(ca, gin[:, 32:])
        return gm + ga + gs


class ClubNet:
    """Conditional model for actions given messages: unit-variance Gaussian
    around a learned tanh-bounded mean."""

    def __init__(self, msg_dim, act_dim, lr=1e-4, rng=None):
        if rng is None:
            rng = np.random.default_rng()
        self.mu = Mlp([msg_dim, 32, act_dim], ("relu", "tanh"), rng)
        self.adam = AdamState.for_params(self.mu.params, lr)

    @property
    def params(self):
        return self.mu.params


class _Ring:
    """Fixed-capacity FIFO of (message, action) rows, uniform sampling."""

    def __init__(self, capacity, msg_dim, act_dim):
        self.m = np.zeros((capacity, msg_dim))
        self.a = np.zeros((capacity, act_dim))
        self.capacity = capacity
        self.size = 0
        self.head = 0

    def push(self, m, a):
        self.m[self.head] = m
        self.a[self.head] = a
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n, rng):
        idx = rng.integers(0, self.size, size=n)
        return self.m[idx], self.a[idx]

    def sample_actions(self, n, rng):
        return self.a[rng.integers(0, self.size, size=n)]


class MessageBuffer:
    """Per-link pair store, split by delivery outcome."""

    def __init__(self, msg_dim, act_dim, capacity=1000):
        self.lossless = _Ring(capacity, msg_dim, act_dim)
        self.lossy = _Ring(capacity, msg_dim, act_dim)

    def push(self, m, a, iota):
        """Route the pair by link status: delivered pairs to the lossless pool."""
        if iota not in (0, 1):
            raise ValueError(f"link status must be 0 or 1, got {iota}")
        (self.lossless if iota == 1 else self.lossy).push(m, a)


def make_pair_buffers(n_agents, msg_dim, act_dim, capacity=1000):
    """One MessageBuffer per ordered (sender, receiver) pair."""
    return {(j, i): MessageBuffer(msg_dim, act_dim, capacity)
            for j in range(n_agents) for i in range(n_agents) if i != j}


def push_pairs(bufs, messages, actions, links):
    """Store this step's (sent message, receiver action) pairs under their link status."""
    for (j, i), buf in bufs.items():
        buf.push(messages[j], actions[i], links[j, i])


def jsd_loss_from_scores(joint_scores, marginal_scores):
    """mean softplus(-T) on joint pairs plus mean softplus(T) on marginal pairs."""
    return float(np.mean(softplus(-joint_scores)) + np.mean(softplus(marginal_scores)))


def jsd_loss(net, m_batch, a_batch, marginal_actions):
    """Discriminator loss on one pool's sample. Returns (loss, grads).

    The marginal batch pairs elementwise with the joint messages, so it must
    match the joint batch size.
    """
    m_batch = np.atleast_2d(m_batch)
    a_batch = np.atleast_2d(a_batch)
    marginal_actions = np.atleast_2d(marginal_actions)
    b = m_batch.shape[0]
    if marginal_actions.shape[0] != b:
        raise ValueError(
            f"marginal batch {marginal_actions.shape[0]} != joint batch {b}")
    m_rows = np.concatenate([m_batch, m_batch])
    a_rows = np.concatenate([a_batch, marginal_actions])
    scores, caches = net.score(m_rows, a_rows)
    loss = jsd_loss_from_scores(scores[:b], scores[b:])
    dscores = np.concatenate([-_sigmoid(-scores[:b]), _sigmoid(scores[b:])]) / b
    return loss, net.score_backward(caches, dscores)


def jsd_estimate(net, m, a, marginal_actions):
    """Pointwise lower-bound MI score for one (message, action) pair.

    -softplus(-T(m,a)) - mean_k softplus(T(m,a_k)); 0 on an empty marginal
    batch (nothing to compare against yet).
    """
    marginal_actions = np.atleast_2d(marginal_actions)
    if marginal_actions.shape[0] == 0 or marginal_actions.size == 0:
        return 0.0
    k = marginal_actions.shape[0]
    m_rows = np.broadcast_to(m, (1 + k, len(m)))
    a_rows = np.concatenate([a[None, :], marginal_actions])
    scores, _ = net.score(m_rows, a_rows)
    return float(-softplus(-scores[0]) - np.mean(softplus(scores[1:])))


def club_loss(net, m_batch, a_batch):
    """Negative mean conditional log-likelihood under the unit-variance model."""
    m_batch = np.atleast_2d(m_batch)
    a_batch = np.atleast_2d(a_batch)
    b, act_dim = a_batch.shape
    mu, cache = net.mu.forward(m_batch)
    resid = mu - a_batch
    loss = float((resid * resid).sum() / (2.0 * b) + 0.5 * act_dim * LOG_2PI)
    grads, _ = net.mu.backward(cache, resid / b)
    return loss, grads


def club_estimate(net, m, a, marginal_actions):
    """Pointwise upper-bound MI score: conditional log-likelihood of the true
    action minus the marginal-batch mean. 0 on an empty marginal batch."""
    marginal_actions = np.atleast_2d(marginal_actions)
    if marginal_actions.shape[0] == 0 or marginal_actions.size == 0:
        return 0.0
    mu = net.mu.forward(m)[0]
    own = ((a - mu) ** 2).sum()
    marg = ((marginal_actions - mu) ** 2).sum(axis=1).mean()
    return float(0.5 * (marg - own))


def _accumulate(total, grads):
    if total is None:
        return [g.copy() for g in grads]
    for t, g in zip(total, grads):
        t += g
    return total


def update_estimators(jsd, club, bufs, rng, batch_size=256):
    """One training step of both estimators over every link's pools.

    Losses and gradients sum over ordered pairs; each network takes one Adam
    step if any pool contributed. Empty pools contribute nothing, so a
    network whose pools never fill keeps its initial parameters exactly.
    Returns (discriminator loss total, conditional-model loss total).
    """
    jsd_grads = club_grads = None
    jsd_total = club_total = 0.0
    for key in sorted(bufs):
        buf = bufs[key]
        if buf.lossless.size > 0:
            b = min(batch_size, buf.lossless.size)
            m, a = buf.lossless.sample(b, rng)
            marg = buf.lossless.sample_actions(b, rng)
            loss, grads = jsd_loss(jsd, m, a, marg)
            jsd_total += loss
            jsd_grads = _accumulate(jsd_grads, grads)
        if buf.lossy.size > 0:
            b = min(batch_size, buf.lossy.size)
            m, a = buf.lossy.sample(b, rng)
            loss, grads = club_loss(club, m, a)
            club_total += loss
            club_grads = _accumulate(club_grads, grads)
    if jsd_grads is not None:
        adam_update(jsd.params, jsd_grads, jsd.adam)
    if club_grads is not None:
        adam_update(club.params, club_grads, club.adam)
    return jsd_total, club_total


def _jsd_estimates_batched(net, groups):
    """Estimates for many (m, a, marginal_batch) groups in one forward pass."""
    m_rows, a_rows, splits = [], [], []
    for m, a, marg in groups:
        k = marg.shape[0]
        m_rows.append(np.broadcast_to(m, (1 + k, len(m))))
        a_rows.append(a[None, :])
        a_rows.append(marg)
        splits.append(1 + k)
    scores, _ = net.score(np.concatenate(m_rows), np.concatenate(a_rows))
    out = np.empty(len(groups))
    start = 0
    for g, width in enumerate(splits):
        s = scores[start:start + width]
        out[g] = -softplus(-s[0]) - np.mean(softplus(s[1:]))
        start += width
    return out


def _club_estimates_batched(net, groups):
    mus = net.mu.forward(np.stack([m for m, _, _ in groups]))[0]
    out = np.empty(len(groups))
    for g, (_, a, marg) in enumerate(groups):
        own = ((a - mus[g]) ** 2).sum()
        marg_term = ((marg - mus[g]) ** 2).sum(axis=1).mean()
        out[g] = 0.5 * (marg_term - own)
    return out


def shape_reward(r, links, messages, actions, coeffs, jsd, club, bufs, rng,
                 b_marg=32, normalize_pairs=False):
    """Shaped team reward for one step.

    Adds alpha-weighted lower-bound MI scores for every delivered link and
    subtracts beta-weighted upper-bound scores for every lost link, pairing
    the sender's message with the receiver's action. Marginal batches of up
    to b_marg actions come from the matching pool; links whose pool is still
    empty contribute nothing. With alpha = beta = 0 the reward passes
    through untouched.
    """
    n = len(messages)
    jsd_groups, club_groups = [], []
    for j in range(n):
        for i in range(n):
            if i == j:
                continue
            if links[j, i] == 1:
                if coeffs.alpha == 0:
                    continue
                ring = bufs[(j, i)].lossless
                if ring.size == 0:
                    continue
                marg = ring.sample_actions(min(b_marg, ring.size), rng)
                jsd_groups.append((messages[j], actions[i], marg))
            else:
                if coeffs.beta == 0:
                    continue
                ring = bufs[(j, i)].lossy
                if ring.size == 0:
                    continue
                marg = ring.sample_actions(min(b_marg, ring.size), rng)
                club_groups.append((messages[j], actions[i], marg))
    if not jsd_groups and not club_groups:
        return r
    bonus = 0.0
    if jsd_groups:
        bonus += coeffs.alpha * _jsd_estimates_batched(jsd, jsd_groups).sum()
    if club_groups:
        bonus -= coeffs.beta * _club_estimates_batched(club, club_groups).sum()
    if normalize_pairs:
        bonus /= n * (n - 1)
    return r + bonus
