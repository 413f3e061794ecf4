import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hqcnf import qsim
from hqcnf.checks import perturbed, random_samples
from hqcnf.flow import (CouplingLayer, FlowModel, ModelDivergence, SampleVector, build_model,
                        flow_forward, flow_inverse, layer_forward, layer_inverse, log_prob)
from hqcnf.neural import init_mlp
from hqcnf.objective import BaseDensitySpec, base_log_density


def rotations_only(n):
    """CNOT-free circuit: U(0) is exactly the identity."""
    gates = [qsim.GateOp("ry", q, param=q) for q in range(n)]
    return qsim.AnsatzSpec(n, gates, n)


def make_model(rng, d1, d2, D, layers, blocks=2, hidden=8, scale=0.3, ansatz=None):
    Q = D - d2
    if ansatz is None and Q:
        ansatz = qsim.hardware_efficient_ansatz(Q.bit_length() - 1, blocks)
    base = BaseDensitySpec.for_shape(d2, Q)
    m = build_model(d1, d2, D, layers, ansatz, base, rng, hidden=hidden, zero_init=False)
    return perturbed(m, rng, scale) if scale else m


def realified_jacobian(fn, sample, h=1e-6):
    """Plain central differences over the realified coordinates."""
    v = sample.realify()[0]
    d2 = sample.d2
    cols = []
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        up = fn(SampleVector.from_realified(v + e, d2)).realify()[0]
        dn = fn(SampleVector.from_realified(v - e, d2)).realify()[0]
        cols.append((up - dn) / (2 * h))
    return np.array(cols).T


def max_err(a, b):
    return max(np.abs(a.classical - b.classical).max(), np.abs(a.quantum - b.quantum).max(initial=0))


# -- SampleVector ----------------------------------------------------------------

def test_sample_vector_shapes(rng):
    s = SampleVector(np.arange(3.0), np.array([1 + 2j, 3 - 1j]))
    assert len(s) == 1 and s.d2 == 3 and s.real_dim == 7
    np.testing.assert_array_equal(s.realify()[0], [0, 1, 2, 1, 2, 3, -1])
    back = SampleVector.from_realified(s.realify(), 3)
    assert max_err(back, s) == 0
    with pytest.raises(ValueError, match="power of two"):
        SampleVector(np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        SampleVector(np.zeros((2, 2)), np.zeros((3, 2)))


def test_layer_validates_splits(rng):
    ans = qsim.hardware_efficient_ansatz(2, 1)
    s = init_mlp([2, 4, 2], rng)
    t = init_mlp([2, 4, 2], rng)
    r = init_mlp([2, 4, ans.n_params], rng)
    CouplingLayer(s, t, r, ans, 2, 4, 8)
    with pytest.raises(ValueError, match="2\\*\\*n_qubits"):
        CouplingLayer(s, t, r, ans, 2, 4, 12)
    with pytest.raises(ValueError, match="d1 < d2"):
        CouplingLayer(s, t, r, ans, 4, 4, 8)
    with pytest.raises(ValueError, match="r_net"):
        CouplingLayer(s, t, init_mlp([2, 3], rng), ans, 2, 4, 8)


# -- single layer ------------------------------------------------------------------

def test_identity_layer(rng):
    base = BaseDensitySpec.for_shape(4, 4)
    m = build_model(2, 4, 8, 1, rotations_only(2), base, rng, hidden=8)
    lay = m.layers[0]
    x = random_samples(rng, 5, 4, 4)
    y, ld = layer_forward(x, lay)
    assert max_err(y, x) == 0
    np.testing.assert_array_equal(ld, 0.0)
    assert max_err(layer_inverse(x, lay), x) == 0


def test_logdet_is_sum_of_scales(rng):
    base = BaseDensitySpec.for_shape(3, 2)
    m = build_model(1, 3, 5, 1, rotations_only(1), base, rng, hidden=4)
    lay = m.layers[0]
    # s = s_max * tanh(raw / s_max); pick raw so that s = (ln 2, ln 3)
    lay.s_net.biases[-1][:] = [lay.s_max * math.atanh(math.log(k) / lay.s_max) for k in (2, 3)]
    x = random_samples(rng, 4, 3, 2)
    y, ld = layer_forward(x, lay)
    np.testing.assert_allclose(ld, math.log(6), atol=1e-14)
    np.testing.assert_allclose(y.classical[:, 1:], x.classical[:, 1:] * [2, 3], rtol=1e-14)


def test_layer_logdet_against_numeric_jacobian(rng):
    m = make_model(rng, 2, 4, 8, 1, blocks=10)
    lay = m.layers[0]
    for _ in range(3):
        x = random_samples(rng, 1, 4, 4, scale=1.0)
        J = realified_jacobian(lambda s: layer_forward(s, lay)[0], x)
        assert J.shape == (12, 12)
        assert abs(np.linalg.slogdet(J)[1] - layer_forward(x, lay)[1][0]) < 1e-5


def test_quantum_block_preserves_volume(rng):
    m = make_model(rng, 2, 4, 8, 1, blocks=10, scale=1.0)
    lay = m.layers[0]
    lay.s_net.set_flat(np.zeros(lay.s_net.n_params))
    lay.t_net.set_flat(np.zeros(lay.t_net.n_params))
    x = random_samples(rng, 1, 4, 4, scale=1.0)
    J = realified_jacobian(lambda s: layer_forward(s, lay)[0], x)
    assert abs(np.linalg.det(J) - 1) < 1e-6
    # and the circuit really is doing something
    assert np.abs(J - np.eye(12)).max() > 0.1


def test_layer_roundtrip_1000(rng):
    m = make_model(rng, 2, 4, 8, 1, blocks=10)
    lay = m.layers[0]
    x = random_samples(rng, 1000, 4, 4)
    assert max_err(layer_inverse(layer_forward(x, lay)[0], lay), x) < 1e-9
    y = random_samples(rng, 1000, 4, 4)
    assert max_err(layer_forward(layer_inverse(y, lay), lay)[0], y) < 1e-9


def test_divergence_is_reported(rng):
    m = make_model(rng, 2, 4, 8, 1)
    m.layers[0].t_net.biases[-1][0] = np.inf
    with pytest.raises(ModelDivergence):
        layer_forward(random_samples(rng, 2, 4, 4), m.layers[0])


def test_sample_must_conform(rng):
    m = make_model(rng, 2, 4, 8, 1)
    with pytest.raises(ValueError, match="does not match"):
        layer_forward(random_samples(rng, 2, 4, 8), m.layers[0])


# -- stacked flow -------------------------------------------------------------------

def test_identity_flow_is_a_permutation(rng):
    base = BaseDensitySpec.for_shape(4, 4)
    m = build_model(2, 4, 8, 3, rotations_only(2), base, rng, hidden=8)
    z = random_samples(rng, 3, 4, 4)
    x, ld = flow_forward(z, m)
    # two rolls by d1 = 2 between three layers
    np.testing.assert_array_equal(x.classical, np.roll(z.classical, 4, axis=1))
    np.testing.assert_array_equal(x.quantum, z.quantum)
    np.testing.assert_array_equal(ld, 0.0)
    back, ld_inv = flow_inverse(x, m)
    assert max_err(back, z) == 0 and np.all(ld_inv == 0)


def test_single_layer_flow_equals_layer(rng):
    m = make_model(rng, 2, 4, 8, 1)
    z = random_samples(rng, 4, 4, 4)
    x, ld = flow_forward(z, m)
    y, ld1 = layer_forward(z, m.layers[0])
    assert max_err(x, y) == 0
    np.testing.assert_array_equal(ld, ld1)


def test_flow_logdet_against_numeric_jacobian(rng):
    m = make_model(rng, 2, 4, 8, 3, blocks=10)
    for _ in range(2):
        z = random_samples(rng, 1, 4, 4, scale=1.0)
        J = realified_jacobian(lambda s: flow_forward(s, m)[0], z)
        assert abs(np.linalg.slogdet(J)[1] - flow_forward(z, m)[1][0]) < 1e-5


def test_flow_roundtrip_and_logdet_consistency(rng):
    m = make_model(rng, 2, 4, 8, 4)
    z = random_samples(rng, 500, 4, 4)
    x, ld_f = flow_forward(z, m)
    zz, ld_i = flow_inverse(x, m)
    assert max_err(zz, z) < 1e-8
    assert np.abs(ld_f - ld_i).max() < 1e-10


def test_rotations_add_no_volume(rng):
    m = make_model(rng, 2, 4, 8, 3)
    z = random_samples(rng, 6, 4, 4)
    h, total = z, np.zeros(6)
    for k, lay in enumerate(m.layers):
        h, ld = layer_forward(h, lay)
        total += ld
        if k < 2:
            h = m.rotate(h)
    np.testing.assert_allclose(flow_forward(z, m)[1], total, atol=1e-12)
    # the rotation itself is a permutation matrix over the realified coordinates
    P = realified_jacobian(m.rotate, z[0])
    assert abs(abs(np.linalg.det(P)) - 1) < 1e-9


def test_amplitude_norm_is_preserved(rng):
    m = make_model(rng, 2, 4, 8, 4, scale=1.0)
    z = random_samples(rng, 50, 4, 4)
    x, _ = flow_forward(z, m)
    np.testing.assert_allclose(np.linalg.norm(x.quantum, axis=1), np.linalg.norm(z.quantum, axis=1),
                               rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), layers=st.integers(1, 8))
def test_bijectivity_property(seed, layers):
    rng = np.random.default_rng(seed)
    m = make_model(rng, 2, 4, 8, layers)
    x = random_samples(rng, 16, 4, 4)
    tol = 1e-9 if layers == 1 else 1e-8
    assert max_err(flow_forward(flow_inverse(x, m)[0], m)[0], x) < tol
    assert max_err(flow_inverse(flow_forward(x, m)[0], m)[0], x) < tol


# -- densities ------------------------------------------------------------------------

def test_log_prob_identity_model(rng):
    base = BaseDensitySpec.for_shape(4, 4, sigma_classical=1.0, sigma_quantum=0.1)
    m = build_model(2, 4, 8, 2, rotations_only(2), base, rng, hidden=8)
    mode = log_prob(base.center, m)[0]
    want = -(12 / 2) * math.log(2 * math.pi) - (4 * math.log(1.0) + 8 * math.log(0.1))
    assert mode == pytest.approx(want, abs=1e-12)
    x = random_samples(rng, 7, 4, 4)
    # with two layers the classical segment is rolled once, which the Gaussian ignores
    np.testing.assert_allclose(log_prob(x, m), base_log_density(x, base), atol=1e-12)


def test_log_prob_definition(rng):
    m = make_model(rng, 2, 4, 8, 3)
    z = random_samples(rng, 10, 4, 4, scale=0.5)
    x, ld = flow_forward(z, m)
    np.testing.assert_allclose(log_prob(x, m), base_log_density(z, m.base) - ld, atol=1e-10)


def test_density_integrates_to_one():
    rng = np.random.default_rng(7)
    m = make_model(rng, 1, 2, 2, 1, hidden=8, scale=0.5)
    g = np.linspace(-6, 6, 601)
    X, Y = np.meshgrid(g, g, indexing="ij")
    pts = SampleVector(np.stack([X.ravel(), Y.ravel()], axis=1), np.zeros((X.size, 0)))
    p = np.exp(log_prob(pts, m)).reshape(X.shape)
    mass = np.trapezoid(np.trapezoid(p, g, axis=1), g)
    assert 0.98 <= mass <= 1.02
    # the layer is far from the identity, so this is not the base density in disguise
    base = np.exp(base_log_density(pts, m.base)).reshape(X.shape)
    assert np.abs(p - base).max() > 0.01


def test_flow_model_validation(rng):
    a = make_model(rng, 2, 4, 8, 1)
    b = make_model(rng, 1, 4, 8, 1)
    with pytest.raises(ValueError, match="splits"):
        FlowModel(a.layers + b.layers, a.base)
    with pytest.raises(ValueError):
        FlowModel([], a.base)


def test_flat_parameters(rng):
    m = make_model(rng, 2, 4, 8, 2)
    p = m.get_flat()
    m2 = copy.deepcopy(m)
    m2.set_flat(np.zeros_like(p))
    m2.set_flat(p)
    np.testing.assert_array_equal(m2.get_flat(), p)
    assert sum(s.stop - s.start for s in m.layer_slices()) == m.n_params
