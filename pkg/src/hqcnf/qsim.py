"""Dense statevector simulation of the parameterized circuit U(phi).

States are complex arrays whose last axis has length ``2**n``; any leading
axes are batch axes. Qubit ``q`` is bit ``q`` of the basis index
(little-endian). Rotation angles broadcast against the batch shape, so every
sample in a batch may carry its own angles.

Nothing here renormalizes: the circuit acts as a linear map, which is how the
flow uses it on unnormalized pixel segments.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "GateOp",
    "AnsatzSpec",
    "hardware_efficient_ansatz",
    "amplitude_encode",
    "apply_rotation",
    "apply_cnot",
    "apply_gate",
    "apply_ansatz",
    "apply_ansatz_adjoint",
    "ansatz_unitary",
    "ansatz_vjp",
    "realified_unitary",
    "MAX_DENSE_QUBITS",
]

ROTATIONS = ("rx", "ry", "rz")
MAX_DENSE_QUBITS = 10


@dataclass(frozen=True)
class GateOp:
    """One gate of a circuit template.

    ``kind`` is ``"rx"``, ``"ry"``, ``"rz"`` or ``"cnot"``. A rotation takes its
    angle either from slot ``param`` of the parameter vector or, when ``param``
    is None, from the fixed ``angle``.
    """

    kind: str
    target: int
    control: int | None = None
    param: int | None = None
    angle: float = 0.0

    @property
    def is_rotation(self):
        return self.kind in ROTATIONS

    @property
    def is_parameterized(self):
        return self.is_rotation and self.param is not None


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    gates: tuple[GateOp, ...]
    n_params: int

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        n = self.n_qubits
        if n < 1:
            raise ValueError(f"n_qubits must be positive, got {n}")
        used = set()
        for i, g in enumerate(self.gates):
            if g.kind not in ROTATIONS and g.kind != "cnot":
                raise ValueError(f"gate {i}: unknown kind {g.kind!r}")
            if not 0 <= g.target < n:
                raise ValueError(f"gate {i}: target {g.target} out of range for {n} qubits")
            if g.kind == "cnot":
                if g.control is None or not 0 <= g.control < n:
                    raise ValueError(f"gate {i}: control {g.control} out of range for {n} qubits")
                if g.control == g.target:
                    raise ValueError(f"gate {i}: control equals target ({g.target})")
            elif g.param is not None:
                if not 0 <= g.param < self.n_params:
                    raise ValueError(f"gate {i}: parameter slot {g.param} >= n_params {self.n_params}")
                used.add(g.param)
        missing = sorted(set(range(self.n_params)) - used)
        if missing:
            raise ValueError(f"parameter slots never referenced: {missing}")

    @property
    def dim(self):
        return 1 << self.n_qubits

    # -- plain-text form: one gate per line ---------------------------------

    def to_text(self):
        lines = [f"qubits {self.n_qubits}", f"params {self.n_params}"]
        for g in self.gates:
            if g.kind == "cnot":
                lines.append(f"cnot q{g.control} q{g.target}")
            elif g.param is not None:
                lines.append(f"{g.kind} q{g.target} p{g.param}")
            else:
                lines.append(f"{g.kind} q{g.target} {g.angle!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        """Parse the format written by :meth:`to_text`.

        ``#`` starts a comment. Header lines ``qubits N`` and ``params P`` are
        required; ``params`` may be omitted and is then inferred from the
        largest slot used.
        """
        n_qubits = n_params = None
        gates = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            head = tok[0].lower()
            try:
                if head == "qubits":
                    n_qubits = int(tok[1])
                elif head == "params":
                    n_params = int(tok[1])
                elif head == "cnot":
                    if len(tok) != 3:
                        raise ValueError("expected 'cnot qC qT'")
                    gates.append(GateOp("cnot", _qubit(tok[2]), control=_qubit(tok[1])))
                elif head in ROTATIONS:
                    if len(tok) != 3:
                        raise ValueError(f"expected '{head} qT pK' or '{head} qT ANGLE'")
                    q = _qubit(tok[1])
                    if tok[2].startswith("p"):
                        gates.append(GateOp(head, q, param=int(tok[2][1:])))
                    else:
                        gates.append(GateOp(head, q, angle=float(tok[2])))
                else:
                    raise ValueError(f"unknown directive {tok[0]!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"ansatz line {lineno}: {raw.strip()!r}: {exc}") from None
        if n_qubits is None:
            raise ValueError("ansatz text lacks a 'qubits N' line")
        if n_params is None:
            slots = [g.param for g in gates if g.param is not None]
            n_params = max(slots) + 1 if slots else 0
        return cls(n_qubits, tuple(gates), n_params)


def _qubit(tok):
    if not tok.startswith("q"):
        raise ValueError(f"qubit token must look like q3, got {tok!r}")
    return int(tok[1:])


def hardware_efficient_ansatz(n_qubits, n_blocks):
    """RY and RZ on every qubit, then a CNOT ring (i controls i+1 mod n), repeated.

    Each block uses ``2 * n_qubits`` fresh parameters, so 5 qubits and 4 blocks
    give 40. A single qubit gets no CNOTs; two qubits get both CNOT(0,1) and CNOT(1,0).
    """
    gates = []
    p = 0
    for _ in range(n_blocks):
        for q in range(n_qubits):
            gates.append(GateOp("ry", q, param=p))
            gates.append(GateOp("rz", q, param=p + 1))
            p += 2
        if n_qubits > 1:
            for q in range(n_qubits):
                gates.append(GateOp("cnot", (q + 1) % n_qubits, control=q))
    return AnsatzSpec(n_qubits, tuple(gates), p)


def _n_qubits_of(state):
    dim = state.shape[-1]
    if dim < 1 or dim & (dim - 1):
        raise ValueError(f"state length {dim} is not a power of two")
    return dim.bit_length() - 1


def amplitude_encode(v):
    """Return ``(v / ||v||, ||v||)`` as a complex state and its norm."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError("amplitude_encode expects a 1-D vector")
    _n_qubits_of(v)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot amplitude-encode the zero vector")
    return v.astype(np.complex128) / norm, norm


def _rotation_entries(axis, angle):
    """2x2 matrix entries of exp(-i angle sigma_axis / 2), broadcast over angle."""
    c = np.cos(np.asarray(angle, dtype=np.float64) / 2)
    s = np.sin(np.asarray(angle, dtype=np.float64) / 2)
    if axis == "rx":
        return c, -1j * s, -1j * s, c
    if axis == "ry":
        return c, -s, s, c
    if axis == "rz":
        e = c - 1j * s
        zero = np.zeros_like(c)
        return e, zero, zero, e.conj()
    raise ValueError(f"unknown rotation axis {axis!r}")


def apply_rotation(state, axis, qubit, angle):
    """Apply ``exp(-i angle sigma_axis / 2)`` to one qubit.

    ``axis`` is X/Y/Z (case-insensitive; ``"rx"`` style also accepted).
    ``angle`` is a scalar or an array matching the batch shape of ``state``.
    """
    state = np.asarray(state, dtype=np.complex128)
    n = _n_qubits_of(state)
    if not 0 <= qubit < n:
        raise ValueError(f"qubit {qubit} out of range for {n} qubits")
    axis = axis.lower()
    if not axis.startswith("r"):
        axis = "r" + axis
    m00, m01, m10, m11 = _rotation_entries(axis, angle)
    batch = state.shape[:-1]
    # bit q of the index becomes axis -2 of this view
    view = state.reshape(batch + (state.shape[-1] >> (qubit + 1), 2, 1 << qubit))
    a0 = view[..., 0, :]
    a1 = view[..., 1, :]
    # angle entries broadcast over the two inner axes
    m00, m01, m10, m11 = (np.asarray(m)[..., None, None] for m in (m00, m01, m10, m11))
    out = np.empty_like(view)
    out[..., 0, :] = m00 * a0 + m01 * a1
    out[..., 1, :] = m10 * a0 + m11 * a1
    return out.reshape(state.shape)


@lru_cache(maxsize=None)
def _cnot_permutation(n, control, target):
    idx = np.arange(1 << n)
    return np.where(idx >> control & 1, idx ^ (1 << target), idx)


def apply_cnot(state, control, target):
    state = np.asarray(state, dtype=np.complex128)
    n = _n_qubits_of(state)
    if control == target:
        raise ValueError("CNOT control and target must differ")
    if not (0 <= control < n and 0 <= target < n):
        raise ValueError(f"CNOT qubits ({control}, {target}) out of range for {n} qubits")
    return state[..., _cnot_permutation(n, control, target)]


def apply_gate(state, gate, angle=None):
    """Apply one GateOp; ``angle`` overrides the gate's own angle for rotations."""
    if gate.kind == "cnot":
        return apply_cnot(state, gate.control, gate.target)
    return apply_rotation(state, gate.kind, gate.target, gate.angle if angle is None else angle)


def _check_call(state, spec, phi):
    state = np.asarray(state)
    if state.shape[-1] != spec.dim:
        raise ValueError(f"state length {state.shape[-1]} != 2**{spec.n_qubits}")
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape[-1] != spec.n_params:
        raise ValueError(f"expected {spec.n_params} parameters, got {phi.shape[-1]}")
    return phi


def gate_angles(spec, phi):
    """Per-gate angle array of shape ``phi.shape[:-1] + (n_gates,)``; CNOT slots hold 0."""
    phi = np.asarray(phi, dtype=np.float64)
    out = np.zeros(phi.shape[:-1] + (len(spec.gates),))
    for i, g in enumerate(spec.gates):
        if g.is_parameterized:
            out[..., i] = phi[..., g.param]
        elif g.is_rotation:
            out[..., i] = g.angle
    return out


def _run(state, spec, angles, start=0, adjoint=False):
    """Apply gates ``start..end`` (forward) or ``start..0`` reversed with negated angles."""
    if adjoint:
        for i in range(start, -1, -1):
            state = apply_gate(state, spec.gates[i], -angles[..., i])
    else:
        for i in range(start, len(spec.gates)):
            state = apply_gate(state, spec.gates[i], angles[..., i])
    return state


def apply_ansatz(state, spec, phi):
    """U(phi) @ state. ``phi`` has shape ``(n_params,)`` or ``batch + (n_params,)``."""
    phi = _check_call(state, spec, phi)
    return _run(np.asarray(state, dtype=np.complex128), spec, gate_angles(spec, phi))


def apply_ansatz_adjoint(state, spec, phi):
    """U(phi)^dagger @ state: gates reversed, rotation angles negated."""
    phi = _check_call(state, spec, phi)
    angles = gate_angles(spec, phi)
    return _run(np.asarray(state, dtype=np.complex128), spec, angles,
                start=len(spec.gates) - 1, adjoint=True)


def ansatz_unitary(spec, phi):
    """Dense U(phi), column j being the circuit applied to basis state j."""
    if spec.n_qubits > MAX_DENSE_QUBITS:
        raise ValueError(f"dense unitary refused for {spec.n_qubits} > {MAX_DENSE_QUBITS} qubits")
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 1:
        raise ValueError("ansatz_unitary takes a single parameter vector")
    basis = np.eye(spec.dim, dtype=np.complex128)
    return apply_ansatz(basis, spec, np.broadcast_to(phi, (spec.dim, spec.n_params))).T


def realified_unitary(U):
    """Real block form [[V, -W], [W, V]] of U = V + iW."""
    V, W = U.real, U.imag
    return np.block([[V, -W], [W, V]])


def ansatz_vjp(state, spec, phi, cotangent, adjoint=False, method="parameter-shift"):
    """Gradient of ``Re <cotangent, out>`` with respect to ``phi``.

    ``out`` is ``U(phi) state`` (or ``U(phi)^dagger state`` when ``adjoint``).
    For a real loss L of a complex output, pass ``cotangent = dL/dRe + i dL/dIm``
    and the result is ``dL/dphi`` with the batch shape of ``state``.

    ``method="parameter-shift"`` differentiates each rotation from two
    evaluations of the circuit with that gate's angle moved by +-pi, using
    ``dR(a)/da = [R(a + pi) - R(a - pi)] / 4`` for Pauli rotations.
    ``method="adjoint"`` does one reverse sweep over the gate list instead.
    """
    phi = _check_call(state, spec, phi)
    state = np.asarray(state, dtype=np.complex128)
    cot = np.asarray(cotangent, dtype=np.complex128)
    angles = gate_angles(spec, phi)
    grad = np.zeros(state.shape[:-1] + (spec.n_params,))
    G = len(spec.gates)
    # circuit order as executed: adjoint runs gate G-1 first with negated angles
    order = list(range(G - 1, -1, -1)) if adjoint else list(range(G))
    sign = -1.0 if adjoint else 1.0

    if method == "parameter-shift":
        # prefix states before each executed gate
        psi = state
        for pos, i in enumerate(order):
            g = spec.gates[i]
            if g.is_parameterized:
                a = sign * angles[..., i]
                plus = apply_gate(psi, g, a + np.pi)
                minus = apply_gate(psi, g, a - np.pi)
                for j in order[pos + 1:]:
                    gj = spec.gates[j]
                    plus = apply_gate(plus, gj, sign * angles[..., j])
                    minus = apply_gate(minus, gj, sign * angles[..., j])
                d_out = (plus - minus) / 4.0
                grad[..., g.param] += sign * np.real(np.sum(cot.conj() * d_out, axis=-1))
            psi = apply_gate(psi, g, sign * angles[..., i])
        return grad

    if method == "adjoint":
        out = _run(state, spec, angles, start=G - 1 if adjoint else 0, adjoint=adjoint)
        lam = cot
        psi = out
        for i in reversed(order):
            g = spec.gates[i]
            a = sign * angles[..., i]
            # undo gate i on the state, pull the cotangent back through it
            psi = apply_gate(psi, g, -a) if g.is_rotation else apply_gate(psi, g)
            if g.is_parameterized:
                # dR(a)/da = -i/2 P R(a)
                d = apply_gate(psi, g, a)
                d = _apply_pauli(d, g.kind, g.target) * (-0.5j)
                grad[..., g.param] += sign * np.real(np.sum(lam.conj() * d, axis=-1))
            lam = apply_gate(lam, g, -a) if g.is_rotation else apply_gate(lam, g)
        return grad

    raise ValueError(f"unknown gradient method {method!r}")


def _apply_pauli(state, kind, qubit):
    batch = state.shape[:-1]
    view = state.reshape(batch + (state.shape[-1] >> (qubit + 1), 2, 1 << qubit))
    out = np.empty_like(view)
    a0, a1 = view[..., 0, :], view[..., 1, :]
    if kind == "rx":
        out[..., 0, :], out[..., 1, :] = a1, a0
    elif kind == "ry":
        out[..., 0, :], out[..., 1, :] = -1j * a1, 1j * a0
    else:
        out[..., 0, :], out[..., 1, :] = a0, -a1
    return out.reshape(state.shape)
