"""Numerical property checks shared by ``hqcnf check`` and the test suite.

Each check returns a :class:`CheckResult` carrying the measured residual and
the tolerance it was held to.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import qsim
from .flow import SampleVector, flow_forward, flow_inverse, layer_forward, layer_inverse
from .objective import loss_and_grads, nll_loss

__all__ = [
    "CheckResult",
    "numeric_jacobian",
    "random_samples",
    "perturbed",
    "check_unitarity",
    "check_realified_det",
    "check_adjoint_roundtrip",
    "check_layer_roundtrip",
    "check_flow_roundtrip",
    "check_logdet",
    "check_volume_preservation",
    "check_gradients",
    "run_checks",
]


@dataclass
class CheckResult:
    name: str
    residual: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.residual) and self.residual < self.tol)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<48s} residual={self.residual:.3e}  tol={self.tol:.0e}"


def numeric_jacobian(fn, v, h=1e-4):
    """Fourth-order central-difference Jacobian of ``fn: (B, n) -> (B, m)`` at ``v`` (n,).

    Uses the (-2h, -h, +h, +2h) stencil; all 4n points go through ``fn`` as
    one batch.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    idx = np.arange(n)
    pts = np.repeat(v[None, :], 4 * n, axis=0)
    for k, off in enumerate((2 * h, h, -h, -2 * h)):
        pts[k * n + idx, idx] += off
    out = fn(pts)
    p2, p1, m1, m2 = out[:n], out[n:2 * n], out[2 * n:3 * n], out[3 * n:]
    return ((-p2 + 8 * p1 - 8 * m1 + m2) / (12 * h)).T


def random_samples(rng, count, d2, n_amp, scale=2.0):
    """Samples with every real coordinate drawn from N(0, scale**2)."""
    c = scale * rng.standard_normal((count, d2))
    q = scale * (rng.standard_normal((count, n_amp)) + 1j * rng.standard_normal((count, n_amp)))
    return SampleVector(c, q)


def perturbed(model, rng, scale=0.1):
    """Deep copy of ``model`` with Gaussian noise added to every parameter."""
    m = copy.deepcopy(model)
    m.set_flat(m.get_flat() + scale * rng.standard_normal(m.n_params))
    return m


def _spec_phi(spec, rng):
    return rng.uniform(-np.pi, np.pi, spec.n_params)


def check_unitarity(spec, rng, trials=5):
    worst = 0.0
    for _ in range(trials):
        U = qsim.ansatz_unitary(spec, _spec_phi(spec, rng))
        worst = max(worst, np.abs(U.conj().T @ U - np.eye(spec.dim)).max())
    return CheckResult(f"unitarity U^dag U = I (n={spec.n_qubits})", worst, 1e-10)


def check_realified_det(spec, rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        U = qsim.ansatz_unitary(spec, _spec_phi(spec, rng))
        worst = max(worst, abs(np.linalg.det(qsim.realified_unitary(U)) - 1.0))
    return CheckResult(f"det[[V,-W],[W,V]] = 1 (n={spec.n_qubits})", worst, 1e-8)


def check_adjoint_roundtrip(spec, rng, count=32):
    psi = rng.standard_normal((count, spec.dim)) + 1j * rng.standard_normal((count, spec.dim))
    phi = rng.uniform(-np.pi, np.pi, (count, spec.n_params))
    back = qsim.apply_ansatz_adjoint(qsim.apply_ansatz(psi, spec, phi), spec, phi)
    return CheckResult("adjoint o ansatz = identity", np.abs(back - psi).max(), 1e-10)


def _max_diff(a, b):
    return max(np.abs(a.classical - b.classical).max(initial=0.0),
               np.abs(a.quantum - b.quantum).max(initial=0.0))


def check_layer_roundtrip(model, rng, count=1000):
    worst = 0.0
    for lay in model.layers:
        x = random_samples(rng, count, lay.d2, lay.D - lay.d2)
        y, _ = layer_forward(x, lay)
        worst = max(worst, _max_diff(layer_inverse(y, lay), x))
        worst = max(worst, _max_diff(layer_forward(layer_inverse(x, lay), lay)[0], x))
    return CheckResult("layer two-sided roundtrip", worst, 1e-9)


def check_flow_roundtrip(model, rng, count=1000):
    x = random_samples(rng, count, model.d2, model.D - model.d2)
    z, ld_inv = flow_inverse(x, model)
    xx, ld_fwd = flow_forward(z, model)
    zz, _ = flow_inverse(flow_forward(x, model)[0], model)
    err = max(_max_diff(xx, x), _max_diff(zz, x))
    return CheckResult(f"flow two-sided roundtrip (L={len(model.layers)})", err, 1e-8)


def _realified(fn, d2):
    return lambda pts: fn(SampleVector.from_realified(pts, d2)).realify()


def check_logdet(model, rng, points=3):
    """Analytic log-det against log|det| of the finite-difference Jacobian.

    Covers the first layer alone and the whole stack.
    """
    worst = 0.0
    d2 = model.d2
    lay = model.layers[0]
    for _ in range(points):
        z = random_samples(rng, 1, d2, model.D - d2, scale=1.0)
        v = z.realify()[0]
        J = numeric_jacobian(_realified(lambda s: layer_forward(s, lay)[0], d2), v)
        worst = max(worst, abs(np.linalg.slogdet(J)[1] - layer_forward(z, lay)[1][0]))
        J = numeric_jacobian(_realified(lambda s: flow_forward(s, model)[0], d2), v)
        worst = max(worst, abs(np.linalg.slogdet(J)[1] - flow_forward(z, model)[1][0]))
    return CheckResult("logdet vs finite-difference Jacobian", worst, 1e-5)


def check_volume_preservation(model, rng, points=3):
    """With s and t switched off, the realified layer Jacobian has det 1."""
    lay = copy.deepcopy(model.layers[0])
    if lay.ansatz is None:
        return CheckResult("quantum block volume preservation", 0.0, 1e-6)
    for net in (lay.s_net, lay.t_net):
        net.set_flat(np.zeros(net.n_params))
    lay.r_net.set_flat(lay.r_net.get_flat() + rng.standard_normal(lay.r_net.n_params))
    worst = 0.0
    for _ in range(points):
        z = random_samples(rng, 1, lay.d2, lay.D - lay.d2, scale=1.0)
        J = numeric_jacobian(_realified(lambda s: layer_forward(s, lay)[0], lay.d2), z.realify()[0])
        worst = max(worst, abs(np.linalg.det(J) - 1.0))
    return CheckResult("quantum block volume preservation", worst, 1e-6)


def check_gradients(model, rng, batch_size=4, n_coords=40, method="parameter-shift", h=1e-5,
                    coords=None):
    """Relative L2 error of the analytic gradient against central differences.

    Checks ``n_coords`` random coordinates plus the last-layer biases of the
    first r_net (those move every circuit angle of that layer directly). Pass
    ``coords`` to choose the coordinates explicitly.
    """
    batch = random_samples(rng, batch_size, model.d2, model.D - model.d2, scale=0.5)
    _, grads = loss_and_grads(batch, model, method)
    p0 = model.get_flat()
    if coords is None:
        coords = set(rng.choice(model.n_params, size=min(n_coords, model.n_params), replace=False))
        lay = model.layers[0]
        if lay.r_net is not None:
            end = model.layer_slices()[0].stop
            coords |= set(range(end - lay.r_net.biases[-1].size, end))
        coords = sorted(coords)
    fd = np.empty(len(coords))
    try:
        for j, i in enumerate(coords):
            p = p0.copy()
            p[i] += h
            model.set_flat(p)
            up = nll_loss(batch, model).nll
            p[i] -= 2 * h
            model.set_flat(p)
            down = nll_loss(batch, model).nll
            fd[j] = (up - down) / (2 * h)
    finally:
        model.set_flat(p0)
    g = grads.flat[coords]
    rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-300)
    return CheckResult(f"gradient vs finite differences ({method})", rel, 1e-4)


def run_checks(config, rng=None):
    """The full suite at the shape described by ``config``."""
    rng = np.random.default_rng(config.seed_init) if rng is None else rng
    model = perturbed(config.build_model(zero_init=False), rng)
    results = []
    spec = config.ansatz()
    if spec is not None:
        if spec.n_qubits <= qsim.MAX_DENSE_QUBITS:
            results.append(check_unitarity(spec, rng))
            results.append(check_realified_det(spec, rng))
        results.append(check_adjoint_roundtrip(spec, rng))
    results.append(check_layer_roundtrip(model, rng))
    results.append(check_flow_roundtrip(model, rng))
    results.append(check_logdet(model, rng))
    results.append(check_volume_preservation(model, rng))
    results.append(check_gradients(model, rng, method=config.grad_method))
    return results
