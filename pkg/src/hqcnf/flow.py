"""Hybrid coupling layers and the stacked flow.

A sample has a real *classical* segment of length ``d2`` and a complex
*quantum* segment of length ``D - d2`` (a power of two, or zero for a purely
classical flow). One layer, in the generative direction ``z -> x``:

    y[:d1]      = x[:d1]
    y[d1:d2]    = x[d1:d2] * exp(s(x[:d1])) + t(x[:d1])
    y_quantum   = U(r(x[:d1])) @ x_quantum

``U`` is unitary so the quantum block adds nothing to log|det J|; the layer's
log-determinant is ``sum(s)``. Between layers the classical segment is rolled
by ``d1`` so the features left untouched by one layer condition the next.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qsim
from .neural import Mlp, init_mlp, mlp_forward

__all__ = [
    "SampleVector",
    "CouplingLayer",
    "FlowModel",
    "ModelDivergence",
    "build_model",
    "layer_forward",
    "layer_inverse",
    "flow_forward",
    "flow_inverse",
    "log_prob",
]

S_MAX = 5.0


class ModelDivergence(FloatingPointError):
    """Raised when a conditioner network produces non-finite output."""


@dataclass
class SampleVector:
    """A batch of samples: ``classical`` is ``(B, d2)`` real, ``quantum`` ``(B, Q)`` complex.

    1-D inputs are promoted to a batch of one.
    """

    classical: np.ndarray
    quantum: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.classical, dtype=np.float64)
        q = np.asarray(self.quantum, dtype=np.complex128)
        if c.ndim == 1:
            c = c[None, :]
        if q.ndim == 1:
            q = q[None, :]
        if c.ndim != 2 or q.ndim != 2 or c.shape[0] != q.shape[0]:
            raise ValueError(f"segment shapes {c.shape} and {q.shape} do not form a batch")
        Q = q.shape[1]
        if Q & (Q - 1):
            raise ValueError(f"quantum segment length {Q} is not a power of two")
        self.classical, self.quantum = c, q

    def __len__(self):
        return self.classical.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1) if idx != -1 else slice(-1, None)
        return SampleVector(self.classical[idx], self.quantum[idx])

    @property
    def d2(self):
        return self.classical.shape[1]

    @property
    def real_dim(self):
        return self.d2 + 2 * self.quantum.shape[1]

    def copy(self):
        return SampleVector(self.classical.copy(), self.quantum.copy())

    def is_finite(self):
        return bool(np.all(np.isfinite(self.classical)) and np.all(np.isfinite(self.quantum)))

    def realify(self):
        """``(B, d2 + 2Q)`` real view: classical, then interleaved (re, im) pairs."""
        q = np.empty((len(self), 2 * self.quantum.shape[1]))
        q[:, 0::2] = self.quantum.real
        q[:, 1::2] = self.quantum.imag
        return np.concatenate([self.classical, q], axis=1)

    @classmethod
    def from_realified(cls, arr, d2):
        arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
        rest = arr[:, d2:]
        return cls(arr[:, :d2], rest[:, 0::2] + 1j * rest[:, 1::2])

    @classmethod
    def concat(cls, parts):
        return cls(np.concatenate([p.classical for p in parts]),
                   np.concatenate([p.quantum for p in parts]))


@dataclass
class CouplingLayer:
    s_net: Mlp
    t_net: Mlp
    r_net: Mlp | None
    ansatz: qsim.AnsatzSpec | None
    d1: int
    d2: int
    D: int
    s_max: float = S_MAX

    def __post_init__(self):
        if not 1 <= self.d1 < self.d2 <= self.D:
            raise ValueError(f"need 1 <= d1 < d2 <= D, got ({self.d1}, {self.d2}, {self.D})")
        width = self.d2 - self.d1
        for name, net in (("s", self.s_net), ("t", self.t_net)):
            if net.sizes[0] != self.d1 or net.sizes[-1] != width:
                raise ValueError(f"{name}_net must map {self.d1} -> {width}, got {net.sizes}")
        Q = self.D - self.d2
        if Q:
            if self.ansatz is None or self.r_net is None:
                raise ValueError("a quantum segment needs both an ansatz and an r_net")
            if self.ansatz.dim != Q:
                raise ValueError(f"2**n_qubits = {self.ansatz.dim} != D - d2 = {Q}")
            if self.r_net.sizes[0] != self.d1 or self.r_net.sizes[-1] != self.ansatz.n_params:
                raise ValueError(f"r_net must map {self.d1} -> {self.ansatz.n_params}, "
                                 f"got {self.r_net.sizes}")
        elif self.ansatz is not None or self.r_net is not None:
            raise ValueError("D == d2 leaves no quantum segment for an ansatz")

    @property
    def nets(self):
        return [n for n in (self.s_net, self.t_net, self.r_net) if n is not None]

    @property
    def n_params(self):
        return sum(n.n_params for n in self.nets)

    def get_flat(self):
        return np.concatenate([n.get_flat() for n in self.nets])

    def set_flat(self, flat):
        i = 0
        for n in self.nets:
            n.set_flat(flat[i:i + n.n_params])
            i += n.n_params
        if i != len(flat):
            raise ValueError(f"layer expects {i} parameters, got {len(flat)}")

    def conditioner(self, h1):
        """Evaluate s, t and phi on the conditioning features; tapes kept for backprop."""
        s_raw, s_tape = mlp_forward(self.s_net, h1)
        t, t_tape = mlp_forward(self.t_net, h1)
        th = np.tanh(s_raw / self.s_max)
        s = self.s_max * th
        if self.r_net is not None:
            phi, r_tape = mlp_forward(self.r_net, h1)
        else:
            phi, r_tape = None, None
        for name, arr in (("s", s), ("t", t), ("phi", phi)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ModelDivergence(f"non-finite {name} output from coupling layer")
        return Conditioner(s, th, t, phi, s_tape, t_tape, r_tape)


@dataclass
class Conditioner:
    s: np.ndarray
    tanh_s: np.ndarray
    t: np.ndarray
    phi: np.ndarray | None
    s_tape: object
    t_tape: object
    r_tape: object


def _check_conforms(x, p):
    if x.d2 != p.d2 or x.quantum.shape[1] != p.D - p.d2:
        raise ValueError(f"sample with d2={x.d2}, Q={x.quantum.shape[1]} does not match "
                         f"layer splits ({p.d1}, {p.d2}, {p.D})")


def layer_forward(x, p):
    """Generative direction. Returns ``(y, logdet)`` with ``logdet`` of shape ``(B,)``."""
    _check_conforms(x, p)
    c = p.conditioner(x.classical[:, :p.d1])
    y_c = x.classical.copy()
    y_c[:, p.d1:] = x.classical[:, p.d1:] * np.exp(c.s) + c.t
    if p.ansatz is not None:
        y_q = qsim.apply_ansatz(x.quantum, p.ansatz, c.phi)
    else:
        y_q = x.quantum.copy()
    return SampleVector(y_c, y_q), c.s.sum(axis=1)


def layer_inverse(y, p, conditioner=None):
    """Exact inverse of :func:`layer_forward`; the quantum block is undone with U^dagger."""
    _check_conforms(y, p)
    c = conditioner if conditioner is not None else p.conditioner(y.classical[:, :p.d1])
    x_c = y.classical.copy()
    x_c[:, p.d1:] = (y.classical[:, p.d1:] - c.t) * np.exp(-c.s)
    if p.ansatz is not None:
        x_q = qsim.apply_ansatz_adjoint(y.quantum, p.ansatz, c.phi)
    else:
        x_q = y.quantum.copy()
    return SampleVector(x_c, x_q)


@dataclass
class FlowModel:
    layers: list
    base: object  # anything with log_density(SampleVector) -> (B,), e.g. objective.BaseDensitySpec
    shift: int | None = None  # classical roll between layers; defaults to d1

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a flow needs at least one layer")
        first = self.layers[0]
        for k, lay in enumerate(self.layers):
            if (lay.d1, lay.d2, lay.D) != (first.d1, first.d2, first.D):
                raise ValueError(f"layer {k} splits differ from layer 0")
        if self.shift is None:
            self.shift = first.d1

    @property
    def d1(self):
        return self.layers[0].d1

    @property
    def d2(self):
        return self.layers[0].d2

    @property
    def D(self):
        return self.layers[0].D

    @property
    def n_params(self):
        return sum(lay.n_params for lay in self.layers)

    def get_flat(self):
        return np.concatenate([lay.get_flat() for lay in self.layers])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"model has {self.n_params} parameters, got {flat.shape}")
        i = 0
        for lay in self.layers:
            lay.set_flat(flat[i:i + lay.n_params])
            i += lay.n_params

    def layer_slices(self):
        out, i = [], 0
        for lay in self.layers:
            out.append(slice(i, i + lay.n_params))
            i += lay.n_params
        return out

    @property
    def n_quantum_params(self):
        """Circuit parameters per layer (the angles r_net produces)."""
        a = self.layers[0].ansatz
        return a.n_params if a is not None else 0

    def rotate(self, h):
        return SampleVector(np.roll(h.classical, self.shift, axis=1), h.quantum)

    def unrotate(self, h):
        return SampleVector(np.roll(h.classical, -self.shift, axis=1), h.quantum)


def build_model(d1, d2, D, n_layers, ansatz, base, rng, hidden=64, s_max=S_MAX, zero_init=True):
    """Fresh model; with ``zero_init`` every conditioner's output layer is zero.

    That makes s = t = 0 and phi = 0 everywhere, so the classical blocks start
    as the identity.
    """
    hid = [hidden] if np.isscalar(hidden) else list(hidden)
    layers = []
    for _ in range(n_layers):
        s_net = init_mlp([d1, *hid, d2 - d1], rng, zero_last=zero_init)
        t_net = init_mlp([d1, *hid, d2 - d1], rng, zero_last=zero_init)
        r_net = init_mlp([d1, *hid, ansatz.n_params], rng, zero_last=zero_init) if ansatz else None
        layers.append(CouplingLayer(s_net, t_net, r_net, ansatz, d1, d2, D, s_max))
    return FlowModel(layers, base)


def flow_forward(z, model):
    """Base -> data. Returns ``(x, total_logdet)``."""
    h = z
    total = np.zeros(len(z))
    last = len(model.layers) - 1
    for k, lay in enumerate(model.layers):
        h, ld = layer_forward(h, lay)
        total = total + ld
        if k < last:
            h = model.rotate(h)
    return h, total


def flow_inverse(x, model, trace=None):
    """Data -> base. Returns ``(z, total_logdet)`` where the logdet is that of the
    forward map at ``z``, so ``log p(x) = log pi(z) - total_logdet``.

    When ``trace`` is a list, per-layer ``(input, conditioner)`` pairs are
    appended to it, from the last layer to the first.
    """
    h = x
    total = np.zeros(len(x))
    last = len(model.layers) - 1
    for k in range(last, -1, -1):
        lay = model.layers[k]
        if k < last:
            h = model.unrotate(h)
        _check_conforms(h, lay)
        c = lay.conditioner(h.classical[:, :lay.d1])
        if trace is not None:
            trace.append((h, c))
        total = total + c.s.sum(axis=1)
        h = layer_inverse(h, lay, conditioner=c)
    return h, total


def log_prob(x, model):
    z, logdet = flow_inverse(x, model)
    out = model.base.log_density(z) - logdet
    if not np.all(np.isfinite(out)):
        raise ModelDivergence("non-finite log-probability")
    return out
