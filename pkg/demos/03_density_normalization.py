"""A two-dimensional flow defines a proper density: integrate it on a grid."""
import numpy as np

from hqcnf import BaseDensitySpec, build_model, log_prob
from hqcnf.checks import perturbed
from hqcnf.flow import SampleVector

rng = np.random.default_rng(2)

# no quantum segment here: D == d2 == 2, one coupling layer
base = BaseDensitySpec.for_shape(2, 0)
model = perturbed(build_model(1, 2, 2, 1, None, base, rng, hidden=16), rng, 0.5)

g = np.linspace(-6, 6, 801)
X, Y = np.meshgrid(g, g, indexing="ij")
pts = SampleVector(np.stack([X.ravel(), Y.ravel()], axis=1), np.zeros((X.size, 0)))
p = np.exp(log_prob(pts, model)).reshape(X.shape)

mass = np.trapezoid(np.trapezoid(p, g, axis=1), g)
print("total mass on [-6, 6]^2:", mass)
print("peak density", p.max(), "at", X.ravel()[p.argmax()], Y.ravel()[p.argmax()])
