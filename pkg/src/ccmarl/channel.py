"""Lossy communication models for inter-agent messages.

Each directed link j -> i gets a binary delivery flag each step. Four models:
always-on, iid dropout, per-link Markov chains with designated lossless
states, and a distance threshold on the sender/receiver positions. Lost
messages are zero-filled rather than dropped so downstream input layouts
stay fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Unrestricted:
    """Every link delivers every step."""


@dataclass
class Dropout:
    """Each directed link independently fails with probability p."""
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"dropout probability must be in [0, 1], got {self.p}")


@dataclass
class MarkovChain:
    """Per-directed-link k-state chain; links deliver while in a lossless state.

    shared_chain=True drives every link from one common chain instead of
    independent per-link chains.
    """
    P: np.ndarray
    lossless_states: tuple = (0,)
    shared_chain: bool = False

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        if self.P.ndim != 2 or self.P.shape[0] != self.P.shape[1]:
            raise ValueError(f"P must be square, got shape {self.P.shape}")
        if not np.isfinite(self.P).all() or (self.P < 0.0).any():
            raise ValueError("P entries must be finite and non-negative")
        row_sums = self.P.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > 1e-12:
            raise ValueError(f"P rows must sum to 1 within 1e-12, got sums {row_sums}")
        self.lossless_states = tuple(sorted(set(int(s) for s in self.lossless_states)))
        if not self.lossless_states:
            raise ValueError("lossless_states must be nonempty")
        if any(s < 0 or s >= self.k for s in self.lossless_states):
            raise ValueError(
                f"lossless_states {self.lossless_states} out of range for k={self.k}")

    @property
    def k(self):
        return self.P.shape[0]


@dataclass
class DistanceThreshold:
    """Link delivers iff sender and receiver are within d world units (ties deliver)."""
    d: float

    def __post_init__(self):
        if self.d < 0.0:
            raise ValueError(f"distance threshold must be >= 0, got {self.d}")


@dataclass
class MarkovLinkState:
    """Current chain state per ordered pair; entry (j, i) drives the j -> i link."""
    states: np.ndarray  # (n, n) ints

    def copy(self):
        return MarkovLinkState(self.states.copy())


def init_chain(model, n_agents):
    """Fresh link chains, all starting in the lowest lossless state."""
    if not isinstance(model, MarkovChain):
        return None
    start = model.lossless_states[0]
    return MarkovLinkState(np.full((n_agents, n_agents), start, dtype=np.int64))


def advance_links(model, n_agents, rng, chain=None, positions=None):
    """One channel step. Returns (links, chain).

    links is an (n, n) float array of {0, 1}; entry (j, i) gates the message
    from j to i. The diagonal is unused and set to 1. chain is required
    exactly when model is a MarkovChain and is advanced in place.
    """
    if isinstance(model, MarkovChain) != (chain is not None):
        raise ValueError("chain state must be present iff model is a MarkovChain")
    if isinstance(model, Unrestricted):
        return np.ones((n_agents, n_agents)), chain
    if isinstance(model, Dropout):
        links = (rng.random((n_agents, n_agents)) >= model.p).astype(np.float64)
        np.fill_diagonal(links, 1.0)
        return links, chain
    if isinstance(model, MarkovChain):
        cum = np.cumsum(model.P, axis=1)
        if model.shared_chain:
            u = rng.random()
            nxt = int((u > cum[chain.states[0, 0]]).sum())
            chain.states[...] = min(nxt, model.k - 1)
        else:
            u = rng.random((n_agents, n_agents))
            nxt = (u[:, :, None] > cum[chain.states]).sum(axis=-1)
            chain.states[...] = np.minimum(nxt, model.k - 1)
        links = np.isin(chain.states, model.lossless_states).astype(np.float64)
        np.fill_diagonal(links, 1.0)
        return links, chain
    if isinstance(model, DistanceThreshold):
        if positions is None:
            raise ValueError("DistanceThreshold needs agent positions")
        diff = positions[:, None, :] - positions[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=-1))
        links = (dist <= model.d).astype(np.float64)
        return links, chain
    raise ValueError(f"unknown channel model {model!r}")


def deliver(messages, links):
    """Gate and concatenate messages per receiver.

    messages is (n, msg_dim), row j the message sent by agent j. Returns an
    (n, (n-1)*msg_dim) array: row i concatenates links[j, i] * messages[j]
    over senders j != i in ascending sender order. Lost messages contribute
    exact zeros.
    """
    messages = np.asarray(messages, dtype=np.float64)
    n = messages.shape[0]
    scaled = links.T[:, :, None] * messages[None, :, :]
    keep = ~np.eye(n, dtype=bool)
    return scaled[keep].reshape(n, (n - 1) * messages.shape[1])


def stationary_loss_rate(model, tol=1e-12, max_iters=1_000_000):
    """Long-run fraction of time a link spends in lossy states.

    Power-iterates the stationary distribution of P to the given tolerance;
    chains that fail to converge (e.g. periodic ones) raise.
    """
    if not isinstance(model, MarkovChain):
        raise ValueError("stationary_loss_rate applies to MarkovChain models only")
    # full-support but asymmetric start: a uniform start can sit still on
    # symmetric periodic chains and mask non-convergence
    pi = np.arange(1.0, model.k + 1.0)
    pi /= pi.sum()
    for _ in range(max_iters):
        nxt = pi @ model.P
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() <= tol:
            lossless = np.zeros(model.k, dtype=bool)
            lossless[list(model.lossless_states)] = True
            return float(nxt[~lossless].sum())
        pi = nxt
    raise RuntimeError(
        f"stationary distribution did not converge within {max_iters} iterations; "
        "is P irreducible and aperiodic?")


def make_default_mbc(k, shared_chain=False):
    """Uniform-transition Markov chain with a single lossless state 0.

    Uniform rows make the stationary distribution uniform, so the loss rate
    is (k-1)/k: k=3 light, k=6 medium, k=8 heavy.
    """
    if k < 2:
        raise ValueError(f"default chain needs k >= 2, got {k}")
    P = np.full((k, k), 1.0 / k)
    return MarkovChain(P=P, lossless_states=(0,), shared_chain=shared_chain)


def mbc_from_file(path, lossless_states=(0,), shared_chain=False):
    """Load a transition matrix from text: first line k, then k rows of k reals."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    try:
        k = int(lines[0])
    except ValueError:
        raise ValueError(f"{path}: first line must be the state count, got {lines[0]!r}")
    if len(lines) != k + 1:
        raise ValueError(f"{path}: expected {k} matrix rows, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:]):
        vals = [float(tok) for tok in ln.split()]
        if len(vals) != k:
            raise ValueError(f"{path}: row {i} has {len(vals)} entries, expected {k}")
        rows.append(vals)
    return MarkovChain(P=np.array(rows), lossless_states=lossless_states,
                       shared_chain=shared_chain)
