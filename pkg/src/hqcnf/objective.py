"""Base density, negative log-likelihood, gradients and the training loop.

The loss for a batch ``x^(1..m)`` is the per-sample mean of

    -log pi(f^{-1}(x)) + log|det J_f|

with ``pi`` a diagonal Gaussian over the realified latent, centered on the
classical origin and the basis state ``|0...0>`` of the quantum segment.
Gradients of the classical conditioners come from backprop; gradients of the
circuit angles come from the parameter-shift rule (or an adjoint sweep) and
are then pushed through ``r_net``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qsim
from .flow import ModelDivergence, SampleVector, flow_forward, flow_inverse
from .neural import adamw_step, mlp_backward

__all__ = [
    "BaseDensitySpec",
    "LossReport",
    "base_log_density",
    "nll_loss",
    "loss_and_grads",
    "classical_grads",
    "quantum_param_grads",
    "train_epoch",
    "sample",
]

LOG_2PI = math.log(2 * math.pi)


@dataclass
class BaseDensitySpec:
    center: SampleVector
    sigma_classical: float = 1.0
    sigma_quantum: float = 0.2

    def __post_init__(self):
        if self.sigma_classical <= 0 or self.sigma_quantum <= 0:
            raise ValueError("base density sigmas must be positive")
        if len(self.center) != 1:
            raise ValueError("center must be a single sample")

    @classmethod
    def for_shape(cls, d2, n_amplitudes, sigma_classical=1.0, sigma_quantum=0.2):
        q = np.zeros(n_amplitudes, dtype=np.complex128)
        if n_amplitudes:
            q[0] = 1.0
        return cls(SampleVector(np.zeros(d2), q), sigma_classical, sigma_quantum)

    def sigmas(self):
        """Per-coordinate sigma over the realified vector."""
        c = self.center
        return np.concatenate([np.full(c.d2, self.sigma_classical),
                               np.full(2 * c.quantum.shape[1], self.sigma_quantum)])

    def log_density(self, z):
        return base_log_density(z, self)

    def grad_log_density(self, z):
        """d log pi / dz as (classical, complex quantum = d/dRe + i d/dIm)."""
        gc = -(z.classical - self.center.classical) / self.sigma_classical ** 2
        gq = -(z.quantum - self.center.quantum) / self.sigma_quantum ** 2
        return gc, gq


def base_log_density(z, spec):
    """Isotropic-per-segment Gaussian log-density over the realified sample, shape ``(B,)``."""
    c = spec.center
    if z.d2 != c.d2 or z.quantum.shape[1] != c.quantum.shape[1]:
        raise ValueError("sample does not match the base density's shape")
    sc, sq = spec.sigma_classical, spec.sigma_quantum
    dc = z.classical - c.classical
    dq = z.quantum - c.quantum
    quad = (dc * dc).sum(axis=1) / (2 * sc * sc) + \
        (dq.real ** 2 + dq.imag ** 2).sum(axis=1) / (2 * sq * sq)
    nc, nq = c.d2, 2 * c.quantum.shape[1]
    norm = nc * (math.log(sc) + 0.5 * LOG_2PI) + nq * (math.log(sq) + 0.5 * LOG_2PI)
    return -quad - norm


@dataclass
class LossReport:
    nll: float
    logdet_mean: float
    base_logp_mean: float
    batch_size: int


def _report(base_logp, logdet):
    m = len(base_logp)
    if not (np.all(np.isfinite(base_logp)) and np.all(np.isfinite(logdet))):
        raise ModelDivergence("non-finite loss")
    # fsum is exactly rounded, so the batch order cannot change the result
    bl = math.fsum(base_logp) / m
    ld = math.fsum(logdet) / m
    return LossReport(nll=-bl + ld, logdet_mean=ld, base_logp_mean=bl, batch_size=m)


def nll_loss(batch, model):
    if len(batch) == 0:
        raise ValueError("empty batch")
    z, logdet = flow_inverse(batch, model)
    return _report(model.base.log_density(z), logdet)


@dataclass
class Gradients:
    flat: np.ndarray  # d nll / d theta in FlowModel.get_flat() order
    dphi: list        # per layer, (B, n_params) d nll / d phi, or None


def loss_and_grads(batch, model, method="parameter-shift"):
    """Loss report plus the full gradient over every conditioner parameter."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    trace = []
    z, logdet = flow_inverse(batch, model, trace=trace)
    report = _report(model.base.log_density(z), logdet)
    m = len(batch)

    gc, gq = model.base.grad_log_density(z)
    gc, gq = -gc / m, -gq / m
    flat = np.zeros(model.n_params)
    slices = model.layer_slices()
    dphi = [None] * len(model.layers)
    last = len(model.layers) - 1
    # trace runs last layer -> first; the gradient runs first -> last
    for k, (y, c) in zip(range(len(model.layers)), reversed(trace)):
        lay = model.layers[k]
        d1 = lay.d1
        e = np.exp(-c.s)
        x2 = (y.classical[:, d1:] - c.t) * e
        g_x2 = gc[:, d1:]
        g_y = np.empty_like(gc)
        g_y[:, d1:] = g_x2 * e
        g_t = -g_x2 * e
        g_s = -g_x2 * x2 + 1.0 / m  # second term: the logdet contribution
        g_sraw = g_s * (1.0 - c.tanh_s ** 2)

        parts = []
        gp, gx_s = mlp_backward(lay.s_net, c.s_tape, g_sraw)
        parts.append(gp)
        gp, gx_t = mlp_backward(lay.t_net, c.t_tape, g_t)
        parts.append(gp)
        g_y[:, :d1] = gc[:, :d1] + gx_s + gx_t
        if lay.ansatz is not None:
            g_phi = qsim.ansatz_vjp(y.quantum, lay.ansatz, c.phi, gq, adjoint=True, method=method)
            gp, gx_r = mlp_backward(lay.r_net, c.r_tape, g_phi)
            parts.append(gp)
            g_y[:, :d1] += gx_r
            gq = qsim.apply_ansatz(gq, lay.ansatz, c.phi)
            dphi[k] = g_phi
        flat[slices[k]] = np.concatenate(parts)
        gc = g_y
        if k < last:
            gc = np.roll(gc, model.shift, axis=1)
    if not np.all(np.isfinite(flat)):
        raise ModelDivergence("non-finite gradient")
    return report, Gradients(flat, dphi)


def classical_grads(batch, model, method="parameter-shift"):
    """d nll / d theta over all conditioner weights, in ``model.get_flat()`` order."""
    return loss_and_grads(batch, model, method)[1].flat


def quantum_param_grads(batch, model, method="parameter-shift"):
    """Per-layer ``d nll / d phi`` (one row per sample) and the r_net gradients they induce."""
    grads = loss_and_grads(batch, model, method)[1]
    r_grads = []
    for lay, sl in zip(model.layers, model.layer_slices()):
        if lay.r_net is None:
            r_grads.append(None)
            continue
        start = sl.start + lay.s_net.n_params + lay.t_net.n_params
        r_grads.append(grads.flat[start:start + lay.r_net.n_params])
    return grads.dphi, r_grads


def train_epoch(dataset, model, optimizers, batch_size, rng, method="parameter-shift"):
    """One shuffled pass; one AdamW state per layer. Returns the per-batch reports.

    The model is updated in place. A non-finite loss or gradient raises
    :class:`ModelDivergence` before any parameters of that batch change.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    if len(optimizers) != len(model.layers):
        raise ValueError("need one optimizer state per layer")
    order = rng.permutation(n)
    reports = []
    slices = model.layer_slices()
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        batch = SampleVector(dataset.classical[idx], dataset.quantum[idx])
        report, grads = loss_and_grads(batch, model, method)
        flat = model.get_flat()
        new = np.empty_like(flat)
        for opt, sl in zip(optimizers, slices):
            new[sl] = adamw_step(opt, flat[sl], grads.flat[sl])
        model.set_flat(new)
        reports.append(report)
    return reports


def epoch_summary(reports):
    """Sample-weighted mean over an epoch's batch reports."""
    n = sum(r.batch_size for r in reports)
    return LossReport(
        nll=math.fsum(r.nll * r.batch_size for r in reports) / n,
        logdet_mean=math.fsum(r.logdet_mean * r.batch_size for r in reports) / n,
        base_logp_mean=math.fsum(r.base_logp_mean * r.batch_size for r in reports) / n,
        batch_size=n,
    )


def sample(model, rng, count, temperature=1.0):
    """Draw ``count`` latents around the base center and push them through the flow.

    Noise per realified coordinate has the base density's sigma for that
    segment, scaled by ``temperature``.
    """
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    base = model.base
    c = base.center
    zc = c.classical + temperature * base.sigma_classical * rng.standard_normal((count, c.d2))
    Q = c.quantum.shape[1]
    noise = rng.standard_normal((count, Q)) + 1j * rng.standard_normal((count, Q))
    zq = c.quantum + temperature * base.sigma_quantum * noise
    x, _ = flow_forward(SampleVector(zc, zq), model)
    return x
