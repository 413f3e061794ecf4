"""Statevector circuits: build the ansatz, check it is unitary, take gradients."""
import numpy as np

from hqcnf import qsim

rng = np.random.default_rng(0)

# %% five qubits, four blocks of RY/RZ layers plus a CNOT ring
spec = qsim.hardware_efficient_ansatz(5, 4)
print(spec.n_qubits, "qubits,", spec.n_params, "angles,", len(spec.gates), "gates")
print(spec.to_text().splitlines()[:6])

# %% amplitude encoding normalizes a 32-vector onto 5 qubits
v = rng.standard_normal(32)
state, norm = qsim.amplitude_encode(v)
print("norm", norm, "encoded length", np.linalg.norm(state))

# %% the circuit keeps the norm and its adjoint undoes it
phi = rng.uniform(-np.pi, np.pi, spec.n_params)
out = qsim.apply_ansatz(state, spec, phi)
back = qsim.apply_ansatz_adjoint(out, spec, phi)
print("norm after U", np.linalg.norm(out), " |U^dag U psi - psi|", np.abs(back - state).max())

# %% as a real 64x64 block matrix it has determinant one, so it adds no volume
U = qsim.ansatz_unitary(spec, phi)
R = qsim.realified_unitary(U)
print("det of realified U", np.linalg.det(R))

# %% gradient of Re<c, U(phi) psi> by parameter shift and by an adjoint sweep
c = rng.standard_normal(32) + 1j * rng.standard_normal(32)
g_shift = qsim.ansatz_vjp(state, spec, phi, c, method="parameter-shift")
g_adj = qsim.ansatz_vjp(state, spec, phi, c, method="adjoint")


def f(p):
    return np.real(np.vdot(c, qsim.apply_ansatz(state, spec, p)))


h = 1e-6
fd = np.array([(f(phi + h * e) - f(phi - h * e)) / (2 * h) for e in np.eye(spec.n_params)])
print("shift vs adjoint", np.abs(g_shift - g_adj).max())
print("shift vs finite differences", np.abs(g_shift - fd).max())
