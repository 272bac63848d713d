"""Standard gate matrices and small circuit-building helpers."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.linalg import schur

from .core import Circuit, Gate, Project
from .errors import ArgumentError

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
CNOT_LOCAL = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

# letter encoding used by the Pauli index register: 0=I, 1=X, 2=Y, 3=Z
PAULIS = (I2, X, Y, Z)


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def phase(phi: float) -> np.ndarray:
    return np.array([[1, 0], [0, np.exp(1j * phi)]], dtype=complex)


def unitary_sqrt(u: np.ndarray) -> np.ndarray:
    """Principal square root of a unitary (Schur form is diagonal for normal matrices)."""
    t, z = schur(np.asarray(u, dtype=complex), output="complex")
    d = np.sqrt(np.diag(t).astype(complex))
    return z @ np.diag(d) @ z.conj().T


def controlled_unitary_steps(u: np.ndarray, target: int, controls: Sequence[int]) -> list[Gate]:
    """Gates of at most two qubits realizing C^c(u), all controls active on 1.

    Uses the square-root recursion: C^c(U) = C(V) C^{c-1}X C(V†) C^{c-1}X C^{c-1}(V)
    with V^2 = U, where the single controls sit on the last control qubit.
    """
    controls = list(controls)
    if not controls:
        return [Gate(u, (target,))]
    if len(controls) == 1:
        return [Gate(u, (target,), (controls[0],))]
    v = unitary_sqrt(u)
    last, rest = controls[-1], controls[:-1]
    flip = controlled_unitary_steps(X, last, rest)
    return (
        [Gate(v, (target,), (last,))]
        + flip
        + [Gate(v.conj().T, (target,), (last,))]
        + flip
        + controlled_unitary_steps(v, target, rest)
    )


def to_two_qubit_steps(gate: Gate) -> list[Gate]:
    """Rewrite one gate into gates whose support has at most two qubits."""
    if len(gate.support) <= 2 and all(v == 1 for v in gate.control_values):
        return [gate]
    if len(gate.targets) != 1:
        raise ArgumentError(
            f"cannot lower a {len(gate.targets)}-target gate with controls to two-qubit gates"
        )
    negated = [q for q, v in zip(gate.controls, gate.control_values) if v == 0]
    flips = [Gate(X, (q,), label="X") for q in negated]
    core = controlled_unitary_steps(gate.matrix, gate.targets[0], gate.controls)
    return flips + core + flips


def compile_two_qubit(circuit: Circuit) -> Circuit:
    """Deterministic lowering of every gate to at most two-qubit support."""
    out = Circuit(circuit.num_qubits)
    for step in circuit.steps:
        if isinstance(step, Project):
            out.append(step)
        else:
            out.extend(to_two_qubit_steps(step))
    return out


def real_state_prep(amplitudes: np.ndarray, qubits: Sequence[int]) -> list[Gate]:
    """Uniformly-controlled RY tree mapping |0...0> to a real unit vector.

    ``qubits[0]`` is the least-significant bit of the amplitude index.
    """
    v = np.asarray(amplitudes, dtype=float).reshape(-1)
    m = len(qubits)
    if v.shape[0] != 2**m:
        raise ArgumentError("amplitude vector length does not match the register")
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > 1e-10:
        raise ArgumentError("state preparation needs a unit vector")
    steps: list[Gate] = []
    for level in range(m):
        target = qubits[m - 1 - level]
        ctrl = [qubits[m - 1 - j] for j in range(level)]
        block = 2 ** (m - level)
        for prefix in range(2**level):
            chunk = v[prefix * block:(prefix + 1) * block]
            lo, hi = chunk[: block // 2], chunk[block // 2:]
            if level == m - 1:
                if lo[0] == 0 and hi[0] == 0:
                    continue
                theta = 2 * math.atan2(hi[0], lo[0])
            else:
                a, b = np.linalg.norm(lo), np.linalg.norm(hi)
                if a == 0 and b == 0:
                    continue
                theta = 2 * math.atan2(b, a)
            if theta == 0:
                continue
            # ctrl[j] is qubit m-1-j, the j-th most significant bit of the prefix
            values = tuple((prefix >> (level - 1 - j)) & 1 for j in range(level))
            steps.append(Gate(ry(theta), (target,), tuple(ctrl), values, label="RY"))
    return steps


def unary_superposition_steps(qubits: Sequence[int], weights: Sequence[float] | None = None) -> list[Gate]:
    """Prepare sum_k w_k |unary k> over ``len(qubits) + 1`` unary strings.

    Unary k sets ``qubits[0..k-1]``. The first rotation acts on ``qubits[0]``;
    each later rotation on ``qubits[i]`` is controlled by ``qubits[i-1]``.
    Default weights are uniform.
    """
    K = len(qubits)
    w = np.full(K + 1, 1 / math.sqrt(K + 1)) if weights is None else np.asarray(weights, float)
    if abs(np.linalg.norm(w) - 1) > 1e-10 or np.any(w < 0):
        raise ArgumentError("unary weights must be a non-negative unit vector")
    steps: list[Gate] = []
    for i in range(K):
        # branch amplitude reaching qubit i is the norm of the weights from i on
        head = math.sqrt(float(np.sum(w[i:] ** 2)))
        if head == 0:
            break
        theta = 2 * math.acos(min(1.0, w[i] / head))
        ctrl = () if i == 0 else (qubits[i - 1],)
        steps.append(Gate(ry(theta), (qubits[i],), ctrl, label="RY"))
    return steps
