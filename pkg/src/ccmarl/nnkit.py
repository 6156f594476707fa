"""Dense-network toolkit: MLPs with manual backprop, Adam, OU noise, gradient checks.

Everything is float64 numpy. The networks used here are small enough that
clarity wins over cleverness; there is no autodiff graph, just explicit
forward caches and reverse-mode loops.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


def softplus(z):
    """log(1 + e^z), elementwise, safe against overflow for large |z|."""
    return np.logaddexp(0.0, z)


@dataclass
class Layer:
    w: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray  # (fan_out,)
    activation: str

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.ndim != 1 or self.b.shape[0] != self.w.shape[1]:
            raise ValueError(f"bad layer shapes w={self.w.shape} b={self.b.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.w).all() and np.isfinite(self.b).all()):
            raise ValueError("layer parameters must be finite")


@dataclass
class Cache:
    """Forward-pass record consumed by Mlp.backward."""
    net: "Mlp"
    records: list  # per layer: (x_in, z, out)
    squeezed: bool


class Mlp:
    """Fully connected net with per-layer activations (relu, tanh or identity).

    Weights are initialized uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)],
    biases at zero. Inputs may be a single vector or a (batch, dim) array.
    """

    def __init__(self, sizes, activations, rng=None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if len(activations) != len(sizes) - 1:
            raise ValueError(
                f"expected {len(sizes) - 1} activations, got {len(activations)}")
        if rng is None:
            rng = np.random.default_rng()
        self.layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = np.zeros(fan_out)
            self.layers.append(Layer(w, b, act))

    @classmethod
    def from_layers(cls, layers):
        net = cls.__new__(cls)
        net.layers = list(layers)
        for prev, cur in zip(net.layers[:-1], net.layers[1:]):
            if prev.w.shape[1] != cur.w.shape[0]:
                raise ValueError(
                    f"layer size mismatch: {prev.w.shape} feeds {cur.w.shape}")
        return net

    @property
    def in_dim(self):
        return self.layers[0].w.shape[0]

    @property
    def out_dim(self):
        return self.layers[-1].w.shape[1]

    @property
    def params(self):
        """Flat list [w0, b0, w1, b1, ...] of the live parameter arrays."""
        out = []
        for lay in self.layers:
            out.append(lay.w)
            out.append(lay.b)
        return out

    def clone(self):
        return Mlp.from_layers(
            [Layer(lay.w.copy(), lay.b.copy(), lay.activation) for lay in self.layers])

    def forward(self, x):
        """Run the net. Returns (output, cache); the cache feeds backward()."""
        x = np.asarray(x, dtype=np.float64)
        squeezed = x.ndim == 1
        if squeezed:
            x = x[None, :]
        records = []
        for i, lay in enumerate(self.layers):
            if x.shape[1] != lay.w.shape[0]:
                raise ValueError(
                    f"layer {i} expects input dim {lay.w.shape[0]}, got {x.shape[1]}")
            z = x @ lay.w + lay.b
            if lay.activation == "relu":
                out = np.maximum(z, 0.0)
            elif lay.activation == "tanh":
                out = np.tanh(z)
            else:
                out = z
            records.append((x, z, out))
            x = out
        y = x[0] if squeezed else x
        return y, Cache(self, records, squeezed)

    def backward(self, cache, output_grad):
        """Reverse-mode pass. Returns (param_grads, input_grad).

        param_grads lines up with self.params. output_grad is the gradient of
        the scalar objective at the net output, same shape as that output.
        relu uses subgradient 0 at exactly z = 0.
        """
        if cache.net is not self or len(cache.records) != len(self.layers):
            raise ValueError("cache does not belong to this net")
        g = np.asarray(output_grad, dtype=np.float64)
        if cache.squeezed:
            g = g[None, :]
        if g.shape != cache.records[-1][2].shape:
            raise ValueError(
                f"output_grad shape {g.shape} does not match forward output "
                f"{cache.records[-1][2].shape}")
        param_grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            lay = self.layers[i]
            x_in, z, out = cache.records[i]
            if lay.activation == "relu":
                g = g * (z > 0.0)
            elif lay.activation == "tanh":
                g = g * (1.0 - out * out)
            param_grads[2 * i] = x_in.T @ g
            param_grads[2 * i + 1] = g.sum(axis=0)
            g = g @ lay.w.T
        input_grad = g[0] if cache.squeezed else g
        return param_grads, input_grad


@dataclass
class AdamState:
    """Adam moments for a flat parameter list."""
    m: list
    v: list
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], t=0, lr=lr)


def adam_update(params, grads, state):
    """One Adam step with bias correction, in place. Returns (params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must have matching lengths")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} does not match param {p.shape}")
        if not np.isfinite(g).all():
            raise ValueError("non-finite gradient passed to adam_update")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def soft_update(target, main, tau):
    """Blend target parameters toward main: target <- (1-tau)*target + tau*main."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    if len(target.layers) != len(main.layers):
        raise ValueError("architecture mismatch: layer counts differ")
    for tl, ml in zip(target.layers, main.layers):
        if tl.w.shape != ml.w.shape or tl.activation != ml.activation:
            raise ValueError("architecture mismatch between target and main")
        tl.w *= 1.0 - tau
        tl.w += tau * ml.w
        tl.b *= 1.0 - tau
        tl.b += tau * ml.b
    return target


@dataclass
class OuNoise:
    """Ornstein-Uhlenbeck process in unit-step form, x <- x + theta*(mu-x) + sigma*xi."""
    x: np.ndarray
    theta: float = 0.15
    sigma: float = 0.2
    mu: float = 0.0
    scale: float = 1.0

    @classmethod
    def zeros(cls, dim, **kwargs):
        return cls(x=np.zeros(dim), **kwargs)

    def reset(self):
        self.x[:] = self.mu


def ou_step(noise, rng):
    """Advance the process one step and return scale * x."""
    noise.x += noise.theta * (noise.mu - noise.x)
    if noise.sigma != 0.0:
        noise.x += noise.sigma * rng.standard_normal(noise.x.shape)
    return noise.scale * noise.x


def _relu_masks(cache):
    return [z > 0.0 for (_, z, _), lay in zip(cache.records, cache.net.layers)
            if lay.activation == "relu"]


def _masks_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(net, loss, x, h=1e-6):
    """Compare backprop gradients against central finite differences.

    loss maps the net output to (scalar value, gradient at the output).
    Returns the max over parameter entries of |a - f| / max(1, |a|, |f|).
    Entries whose perturbation flips any relu activation mask between the
    +h and -h evaluations are skipped: the analytic relu subgradient at the
    kink is 0 by convention and finite differences disagree there.
    """
    if not 1e-7 <= h <= 1e-4:
        raise ValueError(f"h must be in [1e-7, 1e-4], got {h}")
    y, cache = net.forward(x)
    _, gout = loss(y)
    param_grads, _ = net.backward(cache, gout)
    worst = 0.0
    for p, a_grad in zip(net.params, param_grads):
        flat = p.reshape(-1)
        a_flat = a_grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            y_hi, cache_hi = net.forward(x)
            flat[idx] = orig - h
            y_lo, cache_lo = net.forward(x)
            flat[idx] = orig
            if not _masks_equal(_relu_masks(cache_hi), _relu_masks(cache_lo)):
                continue
            f = (loss(y_hi)[0] - loss(y_lo)[0]) / (2.0 * h)
            a = a_flat[idx]
            err = abs(a - f) / max(1.0, abs(a), abs(f))
            if err > worst:
                worst = err
    return worst


def mlp_arrays(net, prefix):
    """Flatten a net into named arrays for checkpointing.

    Layout: '<prefix>.<layer>.w' is the (fan_in, fan_out) weight, row-major;
    '<prefix>.<layer>.b' the bias. Layer order follows the forward pass.
    """
    out = {}
    for i, lay in enumerate(net.layers):
        out[f"{prefix}.{i}.w"] = lay.w
        out[f"{prefix}.{i}.b"] = lay.b
    return out


def load_mlp_arrays(net, prefix, arrays):
    """Copy checkpoint arrays produced by mlp_arrays back into net, validating shapes."""
    for i, lay in enumerate(net.layers):
        for attr in ("w", "b"):
            key = f"{prefix}.{i}.{attr}"
            if key not in arrays:
                raise ValueError(f"checkpoint missing {key}")
            val = np.asarray(arrays[key], dtype=np.float64)
            if val.shape != getattr(lay, attr).shape:
                raise ValueError(
                    f"checkpoint {key} has shape {val.shape}, "
                    f"expected {getattr(lay, attr).shape}")
            if not np.isfinite(val).all():
                raise ValueError(f"checkpoint {key} contains non-finite values")
            getattr(lay, attr)[...] = val
    return net
