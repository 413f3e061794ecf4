"""One hybrid coupling layer and a stack of them: inverse and log-determinant."""
import numpy as np

from hqcnf import BaseDensitySpec, build_model, flow_forward, flow_inverse, hardware_efficient_ansatz
from hqcnf.checks import numeric_jacobian, perturbed, random_samples
from hqcnf.flow import SampleVector, layer_forward, layer_inverse

rng = np.random.default_rng(1)

# %% a small model: 2 conditioning coords, 2 affine coords, 4 amplitudes on 2 qubits
d1, d2, D = 2, 4, 8
ansatz = hardware_efficient_ansatz(2, 3)
base = BaseDensitySpec.for_shape(d2, D - d2)
model = build_model(d1, d2, D, 3, ansatz, base, rng, hidden=16)
print("parameters", model.n_params, " angles per layer", model.n_quantum_params)

# freshly built layers are the identity on the classical part; jiggle them
model = perturbed(model, rng, 0.3)
layer = model.layers[0]

# %% forward then inverse returns the input
x = random_samples(rng, 5, d2, D - d2)
y, logdet = layer_forward(x, layer)
xx = layer_inverse(y, layer)
print("layer roundtrip", np.abs(xx.realify() - x.realify()).max())
print("layer logdet", logdet)

# %% the log-determinant is just the sum of the scales; compare with a numeric Jacobian
z = x[0]


def fn(pts):
    return layer_forward(SampleVector.from_realified(pts, d2), layer)[0].realify()


J = numeric_jacobian(fn, z.realify()[0])
print("numeric", np.linalg.slogdet(J)[1], " analytic", layer_forward(z, layer)[1][0])

# %% the whole stack
xs, ld = flow_forward(x, model)
zs, ld_inv = flow_inverse(xs, model)
print("flow roundtrip", np.abs(zs.realify() - x.realify()).max(), " logdet agree", np.abs(ld - ld_inv).max())
