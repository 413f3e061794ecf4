"""Small tanh MLPs with hand-written backprop, and AdamW.

Everything is float64. Inputs to :func:`mlp_forward` may be a single vector or
a batch ``(B, fan_in)``; parameter gradients from :func:`mlp_backward` are
summed over the batch.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mlp",
    "Tape",
    "init_mlp",
    "mlp_forward",
    "mlp_backward",
    "AdamWState",
    "adamw_step",
    "write_params",
    "read_params",
    "CHECKPOINT_MAGIC",
]


@dataclass
class Mlp:
    weights: list  # weights[k] has shape (fan_out, fan_in)
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape[0] != b.shape[0]:
                raise ValueError(f"layer {k}: weight rows {W.shape[0]} != bias length {b.shape[0]}")
            if k and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k}: fan_in {W.shape[1]} != previous fan_out "
                                 f"{self.weights[k - 1].shape[0]}")

    @property
    def sizes(self):
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def get_flat(self):
        return np.concatenate([a.ravel() for W, b in zip(self.weights, self.biases) for a in (W, b)])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        i = 0
        for W, b in zip(self.weights, self.biases):
            W[...] = flat[i:i + W.size].reshape(W.shape)
            i += W.size
            b[...] = flat[i:i + b.size]
            i += b.size

    def copy(self):
        return Mlp([W.copy() for W in self.weights], [b.copy() for b in self.biases])


@dataclass
class Tape:
    """Cached inputs and post-activation values of one forward call."""

    net_id: int
    inputs: list = field(default_factory=list)  # input to each affine layer
    single: bool = False


def init_mlp(sizes, rng, zero_last=False):
    """Glorot-uniform weights, zero biases; optionally an all-zero output layer."""
    sizes = list(sizes)
    if len(sizes) < 2:
        raise ValueError("an MLP needs at least input and output sizes")
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if zero_last and k == len(sizes) - 2:
            W = np.zeros((fan_out, fan_in))
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        weights.append(W)
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def mlp_forward(net, x):
    """Affine layers with tanh between them and an identity output."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[-1] != net.sizes[0]:
        raise ValueError(f"input size {h.shape[-1]} != network input {net.sizes[0]}")
    tape = Tape(id(net), single=single)
    last = len(net.weights) - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        tape.inputs.append(h)
        h = h @ W.T + b
        if k < last:
            h = np.tanh(h)
    tape.inputs.append(h)
    return (h[0] if single else h), tape


def mlp_backward(net, tape, grad_out):
    """Return ``(dL/dparams, dL/dx)`` given ``dL/dy`` for the taped forward call."""
    if tape.net_id != id(net) or len(tape.inputs) != len(net.weights) + 1:
        raise ValueError("tape does not belong to this network")
    g = np.asarray(grad_out, dtype=np.float64)
    if tape.single:
        g = g[None, :]
    if g.shape != tape.inputs[-1].shape:
        raise ValueError(f"output gradient shape {g.shape} != output shape {tape.inputs[-1].shape}")
    grads = []
    for k in range(len(net.weights) - 1, -1, -1):
        h_in = tape.inputs[k]
        grads.append((g.T @ h_in, g.sum(axis=0)))
        g = g @ net.weights[k]
        if k > 0:
            # h_in is tanh output of the previous layer
            g = g * (1.0 - h_in * h_in)
    flat = np.concatenate([a.ravel() for gw, gb in reversed(grads) for a in (gw, gb)])
    return flat, (g[0] if tape.single else g)


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4

    @classmethod
    def zeros(cls, n, **hyper):
        return cls(np.zeros(n), np.zeros(n), **hyper)


def adamw_step(state, params, grads):
    """One decoupled-weight-decay Adam step; returns new params, mutates ``state``.

    p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, "
                         f"state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient; optimizer step aborted")
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = state.m / (1 - state.beta1 ** state.t)
    v_hat = state.v / (1 - state.beta2 ** state.t)
    return params - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * params)


# -- flat binary parameter checkpoint ---------------------------------------

CHECKPOINT_MAGIC = b"HQCF"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


def write_params(fh, flat):
    """Header (magic, u32 version, u64 count) then little-endian float64 values."""
    flat = np.ascontiguousarray(flat, dtype="<f8")
    fh.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, flat.size))
    fh.write(flat.tobytes())


def read_params(fh):
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("checkpoint truncated in header")
    magic, version, count = _HEADER.unpack(head)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    body = fh.read(8 * count)
    if len(body) != 8 * count:
        raise ValueError(f"checkpoint truncated: expected {count} float64 values")
    return np.frombuffer(body, dtype="<f8").astype(np.float64)
