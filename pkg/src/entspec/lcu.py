"""Post-selected truncated-Taylor simulation of exp(i rho t).

Pauli index register: system qubit ``j`` owns index bits ``2j`` (low) and
``2j+1`` (high), and the letter ``l = b_low + 2 b_high`` encodes
0=I, 1=X, 2=Y, 3=Z. Pauli string ``i`` therefore reads ``i = sum_j l_j 4^j``.

Every builder returns a :class:`BlockEncoding` carrying the scalar ``scale``
such that the post-selected block equals ``scale`` times the target operator.
Nothing is renormalized behind the caller's back.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .core import (
    Circuit,
    DensityMatrix,
    Gate,
    Statevector,
    post_selected_block,
    simulate,
    simulate_sparse,
)
from .errors import ArgumentError, PrepError, ScaleError, TruncationError
from .gates import H, PAULIS, X, real_state_prep, unary_superposition_steps

MAX_PAULI_QUBITS = 6
MAX_CIRCUIT_SYSTEM = 4


# ---------------------------------------------------------------------------
# Pauli decomposition
# ---------------------------------------------------------------------------

def pauli_letters(i: int, n: int) -> list[int]:
    return [(i >> (2 * j)) & 3 for j in range(n)]


def pauli_string(i: int, n: int) -> np.ndarray:
    """Dense matrix of Pauli string ``i``; qubit 0 is the least-significant factor."""
    out = np.ones((1, 1), dtype=complex)
    for letter in reversed(pauli_letters(i, n)):
        out = np.kron(out, PAULIS[letter])
    return out


@dataclass(frozen=True, eq=False)
class PauliDecomposition:
    """rho = sum_i a_i sigma_i with real a_i = Tr(sigma_i rho) / 2^n."""

    num_qubits: int
    coefficients: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if a.shape[0] != 4**self.num_qubits:
            raise ArgumentError("need 4^n Pauli coefficients")
        a.setflags(write=False)
        object.__setattr__(self, "coefficients", a)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    @property
    def state(self) -> np.ndarray:
        """Normalized |A> as a real vector over the 2n-qubit index register."""
        nrm = self.norm
        if nrm == 0:
            raise ArgumentError("zero operator has no |A> state")
        return self.coefficients / nrm

    def recompose(self) -> np.ndarray:
        dim = 2**self.num_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for i, a in enumerate(self.coefficients):
            if a != 0:
                out += a * pauli_string(i, self.num_qubits)
        return out


def pauli_decompose(rho: DensityMatrix | np.ndarray) -> PauliDecomposition:
    """Expand a Hermitian operator in Pauli strings.

    Accepts a :class:`DensityMatrix` or any Hermitian array; for unit-trace
    input ``a_0 = 1/2^n``.
    """
    m = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    dim = m.shape[0]
    n = int(round(math.log2(dim))) if dim > 0 else 0
    if m.shape != (dim, dim) or 2**n != dim or n < 1:
        raise ArgumentError(f"operator shape {m.shape} is not 2^n x 2^n")
    if n > MAX_PAULI_QUBITS:
        raise ScaleError(f"Pauli decomposition limited to n <= {MAX_PAULI_QUBITS}")
    if not np.allclose(m, m.conj().T, atol=1e-10, rtol=0):
        raise ArgumentError("operator is not Hermitian")
    coeffs = np.empty(4**n)
    for i in range(4**n):
        coeffs[i] = np.trace(pauli_string(i, n) @ m).real / dim
    return PauliDecomposition(n, coeffs)


# ---------------------------------------------------------------------------
# Block encodings
# ---------------------------------------------------------------------------

@dataclass
class BlockEncoding:
    """A circuit whose post-selected block on ``system`` equals ``scale * target``.

    ``postselect`` overrides the default outcome 0 for listed ancillas.
    """

    circuit: Circuit
    system: tuple[int, ...]
    scale: complex
    postselect: dict[int, int] = field(default_factory=dict)

    def block(self) -> np.ndarray:
        return post_selected_block(self.circuit, self.system, self.postselect)

    def normalized_block(self) -> np.ndarray:
        return self.block() / self.scale


def _index_qubits(n: int, offset: int) -> list[int]:
    return list(range(offset, offset + 2 * n))


def _controlled_pauli_steps(n: int, system: Sequence[int], index: Sequence[int],
                            extra: Sequence[int] = ()) -> list[Gate]:
    steps = []
    for j in range(n):
        lo, hi = index[2 * j], index[2 * j + 1]
        for letter in (1, 2, 3):
            ctrl = (lo, hi) + tuple(extra)
            vals = (letter & 1, letter >> 1) + (1,) * len(extra)
            steps.append(Gate(PAULIS[letter], (system[j],), ctrl, vals, label="cP"))
    return steps


def _copy_steps(A: PauliDecomposition, system: Sequence[int], index: Sequence[int],
                control: int | None) -> list[Gate]:
    """Prepare |A> on ``index`` and apply V_rho_t, optionally controlled by one qubit."""
    steps = real_state_prep(A.state, index)
    extra = () if control is None else (control,)
    steps += _controlled_pauli_steps(A.num_qubits, system, index, extra)
    steps += [Gate(H, (q,), extra, label="H") for q in index]
    return steps


def v_rho_t(A: PauliDecomposition, t: float) -> BlockEncoding:
    """Block encoding of i rho t with scale 1/(2^n ||A|| i t).

    Layout: system on qubits 0..n-1, Pauli index on n..3n-1, post-selected on 0.
    """
    if t == 0:
        raise ArgumentError("t must be non-zero")
    n = A.num_qubits
    system = list(range(n))
    index = _index_qubits(n, n)
    c = Circuit(3 * n, _copy_steps(A, system, index, None))
    for q in index:
        c.project(q, 0)
    scale = 1.0 / (2**n * A.norm * 1j * t)
    return BlockEncoding(c, tuple(system), scale)


def _require_unit_trace(A: PauliDecomposition) -> None:
    # an idle copy contributes a_0/||A||, which matches the selected copies only if a_0 = 1/2^n
    if abs(A.coefficients[0] * 2**A.num_qubits - 1) > 1e-12:
        raise ArgumentError("V_Taylor needs a unit-trace operator (a_0 = 1/2^n)")


def _rotation_scale(t: float) -> float:
    """Common factor c keeping both rotation gadgets unitary."""
    return max(1.0, 1.0 / abs(t))


def rot1(m: int, c: float) -> np.ndarray:
    """Rotation with <0|R|0> = 1/(m c)."""
    x = 1.0 / (m * c)
    s = math.sqrt(max(0.0, 1 - x * x))
    return np.array([[x, -s], [s, x]], dtype=complex)


def rot2(t: float, c: float) -> np.ndarray:
    """Single-qubit unitary with <0|R|0> = 1/(i t c)."""
    amp = 1.0 / (1j * t * c)
    s = math.sqrt(max(0.0, 1 - abs(amp) ** 2))
    return np.array([[amp, -s], [s, amp.conjugate()]], dtype=complex)


@dataclass(frozen=True)
class TaylorLayout:
    n: int
    K: int

    @property
    def system(self) -> list[int]:
        return list(range(self.n))

    def copy_index(self, m: int) -> list[int]:
        """Index register of copy ``m`` (1-based)."""
        return _index_qubits(self.n, self.n + (m - 1) * 2 * self.n)

    def rotation(self, m: int) -> int:
        return self.n + 2 * self.n * self.K + (m - 1)

    def unary(self, m: int) -> int:
        return self.n + 2 * self.n * self.K + self.K + (m - 1)

    @property
    def unary_qubits(self) -> list[int]:
        return [self.unary(m) for m in range(1, self.K + 1)]

    @property
    def num_qubits(self) -> int:
        return self.n + 2 * self.n * self.K + 2 * self.K


def v_taylor(A: PauliDecomposition, t: float, K: int) -> BlockEncoding:
    """V_Taylor on |k>|0^K>|A>^K|psi>, projections on every ancilla except the unary one.

    For unary input k the block is ``scale * (i rho t)^k / k!`` with the
    k-independent ``scale = (1/(i t 2^n ||A|| c))^K``.
    """
    if K < 1:
        raise ArgumentError("V_Taylor needs K >= 1")
    if t == 0:
        raise ArgumentError("t must be non-zero")
    _require_unit_trace(A)
    n = A.num_qubits
    lay = TaylorLayout(n, K)
    c = _rotation_scale(t)
    circ = Circuit(lay.num_qubits)
    for m in range(1, K + 1):
        circ.extend(_copy_steps(A, lay.system, lay.copy_index(m), lay.unary(m)))
    for m in range(1, K + 1):
        circ.gate(rot1(m, c), (lay.rotation(m),), (lay.unary(m),), (1,), label="R1")
        circ.gate(rot2(t, c), (lay.rotation(m),), (lay.unary(m),), (0,), label="R2")
    for m in range(1, K + 1):
        for q in lay.copy_index(m):
            circ.project(q, 0)
        circ.project(lay.rotation(m), 0)
    scale = (1.0 / (1j * t * 2**n * A.norm * c)) ** K
    return BlockEncoding(circ, tuple(lay.system), scale)


def v_taylor_block(A: PauliDecomposition, t: float, K: int, k: int) -> BlockEncoding:
    """V_Taylor with the unary register fixed to |k>; the block is scale*(i rho t)^k/k!."""
    if not 0 <= k <= K:
        raise ArgumentError(f"unary value {k} does not fit a {K}-qubit register")
    base = v_taylor(A, t, K)
    lay = TaylorLayout(A.num_qubits, K)
    circ = Circuit(lay.num_qubits, [Gate(X, (lay.unary(m),), label="X") for m in range(1, k + 1)])
    circ.extend(base.circuit)
    post = {lay.unary(m): int(m <= k) for m in range(1, K + 1)}
    return BlockEncoding(circ, base.system, base.scale, post)


def unary_superposition(K: int) -> Circuit:
    """(1/sqrt(K+1)) sum_k |unary k> on max(K, 1) qubits."""
    if K < 0:
        raise ArgumentError("K must be non-negative")
    c = Circuit(max(K, 1))
    c.extend(unary_superposition_steps(list(range(K))))
    return c


# ---------------------------------------------------------------------------
# Truncation order and the assembled exponential
# ---------------------------------------------------------------------------

def truncation_bound(norm: float, K: int) -> float:
    if norm == 0:
        return 0.0
    return (math.e * norm / (K + 1)) ** (K + 1)


def choose_K(norm_rho_t: float, epsilon: float) -> int:
    """Smallest K with (e * norm / (K+1))^(K+1) <= epsilon."""
    if not 0 < epsilon < 1:
        raise ArgumentError("epsilon must lie in (0, 1)")
    if norm_rho_t < 0:
        raise ArgumentError("norm must be non-negative")
    if norm_rho_t == 0:
        return 0
    log_eps = math.log(epsilon)
    K = 0
    while (K + 1) * (1 + math.log(norm_rho_t) - math.log(K + 1)) > log_eps:
        K += 1
    return K


@dataclass(frozen=True)
class TaylorPlan:
    K: int
    t: float
    epsilon: float
    norm_bound: float

    def __post_init__(self):
        if self.K < 0:
            raise ArgumentError("K must be non-negative")
        if not 0 < self.epsilon < 1:
            raise ArgumentError("epsilon must lie in (0, 1)")
        if truncation_bound(self.norm_bound, self.K) > self.epsilon * (1 + 1e-12):
            raise ArgumentError(
                f"K={self.K} does not meet the truncation bound for norm {self.norm_bound}"
            )

    @classmethod
    def for_time(cls, t: float, lambda_max: float, epsilon: float) -> "TaylorPlan":
        norm = abs(t) * lambda_max
        return cls(choose_K(norm, epsilon), t, epsilon, norm)

    def to_json(self, achieved_error: float | None = None) -> str:
        return json.dumps({
            "K": self.K,
            "t": self.t,
            "norm_bound": self.norm_bound,
            "epsilon": self.epsilon,
            "achieved_error": achieved_error,
        }, sort_keys=True)


def assemble_exp_circuit(A: PauliDecomposition, t: float, K: int) -> BlockEncoding:
    """Unary superposition, V_Taylor, H^K on the unary register, post-select everything.

    The block equals ``scale * sum_k (i rho t)^k / k!``.
    """
    n = A.num_qubits
    if K == 0:
        return BlockEncoding(Circuit(n), tuple(range(n)), 1.0)
    core = v_taylor(A, t, K)
    lay = TaylorLayout(n, K)
    circ = Circuit(lay.num_qubits)
    circ.extend(unary_superposition_steps(lay.unary_qubits))
    circ.extend(core.circuit)
    for q in lay.unary_qubits:
        circ.gate(H, (q,), label="H")
        circ.project(q, 0)
    scale = core.scale * 2 ** (-K / 2) / math.sqrt(K + 1)
    return BlockEncoding(circ, core.system, scale)


def _blocks_extraction(A: PauliDecomposition, t: float, K: int) -> np.ndarray:
    """Post-selected block of the assembled circuit, computed factor by factor.

    The assembled circuit factorizes over copies once the unary value is
    fixed, so each factor comes from a small circuit built by the same
    helpers as the full one: unary amplitudes from a sparse simulation,
    per-copy blocks by column probing, rotation and Hadamard factors from
    the gate matrices.
    """
    n = A.num_qubits
    c = _rotation_scale(t)
    unary = simulate_sparse(Circuit(K, unary_superposition_steps(list(range(K)))))
    system = list(range(n))
    index = _index_qubits(n, n)
    ctrl = 3 * n

    def copy_block(active: int) -> np.ndarray:
        circ = Circuit(3 * n + 1)
        if active:
            circ.gate(X, (ctrl,))
        circ.extend(_copy_steps(A, system, index, ctrl))
        return post_selected_block(circ, system, {ctrl: active})

    selected, idle = copy_block(1), copy_block(0)
    r2 = rot2(t, c)[0, 0]
    dim = 2**n
    total = np.zeros((dim, dim), dtype=complex)
    for k in range(K + 1):
        x = (1 << k) - 1
        amp = unary.get(x, 0)
        if amp == 0:
            continue
        h = np.prod([H[0, (x >> j) & 1] for j in range(K)])
        term = np.eye(dim, dtype=complex)
        for m in range(1, K + 1):
            if m <= k:
                term = (rot1(m, c)[0, 0] * selected) @ term
            else:
                term = (r2 * idle) @ term
        total += amp * h * term
    return total


@dataclass
class AssembledExp:
    plan: TaylorPlan
    block: np.ndarray
    scale: complex
    achieved_error: float
    extraction: str

    @property
    def operator(self) -> np.ndarray:
        return self.block / self.scale

    def report_json(self) -> str:
        return self.plan.to_json(self.achieved_error)


def exact_exp(A: PauliDecomposition | np.ndarray, t: float) -> np.ndarray:
    m = A.recompose() if isinstance(A, PauliDecomposition) else np.asarray(A, dtype=complex)
    return expm(1j * t * m)


def assemble_exp(A: PauliDecomposition, plan: TaylorPlan, extraction: str = "auto",
                 check: bool = True) -> AssembledExp:
    """Build the truncated-Taylor circuit for plan.K and extract its normalized block.

    ``extraction`` is ``"circuit"`` (dense column probing of the whole
    circuit), ``"blocks"`` (factor-by-factor, any K) or ``"auto"``.
    """
    n, K, t = A.num_qubits, plan.K, plan.t
    enc = assemble_exp_circuit(A, t, K)
    if extraction == "auto":
        extraction = "circuit" if enc.circuit.num_qubits + n <= 20 else "blocks"
    if extraction == "circuit":
        if n > MAX_CIRCUIT_SYSTEM:
            raise ScaleError(f"circuit-mode extraction limited to {MAX_CIRCUIT_SYSTEM} system qubits")
        block = enc.block()
    elif extraction == "blocks":
        block = np.eye(2**n, dtype=complex) if K == 0 else _blocks_extraction(A, t, K)
    else:
        raise ArgumentError(f"unknown extraction mode {extraction!r}")
    op = block / enc.scale
    err = float(np.linalg.norm(op - exact_exp(A, t), 2))
    result = AssembledExp(plan, block, enc.scale, err, extraction)
    if check and err > plan.epsilon:
        raise TruncationError(f"achieved error {err:.3e} exceeds {plan.epsilon:.3e}", achieved=err)
    return result


def taylor_unitary(h: np.ndarray, t: float, epsilon: float = 1e-12) -> np.ndarray:
    """Normalized LCU block approximating exp(i h t), suitable as a gate matrix.

    ``h`` needs positive trace; it is rescaled to h/Tr(h) with t * Tr(h).
    Long times are split into segments with |rho t| <= 1 so the block's
    normalization stays near e and float cancellation does not eat the budget;
    each segment gets epsilon / segments.
    """
    h = np.asarray(h, dtype=complex)
    tr = float(np.trace(h).real)
    if not tr > 0:
        raise ArgumentError("LCU evolution needs an operator with positive trace")
    A = pauli_decompose(h / tr)
    lam = float(np.max(np.abs(np.linalg.eigvalsh(A.recompose()))))
    segments = max(1, math.ceil(abs(t * tr) * lam))
    plan = TaylorPlan.for_time(t * tr / segments, lam, epsilon / segments)
    step = assemble_exp(A, plan, extraction="blocks").operator
    return np.linalg.matrix_power(step, segments)


# ---------------------------------------------------------------------------
# Encoding |A> from a purification
# ---------------------------------------------------------------------------

@dataclass
class EncodedA:
    """Post-selecting ``circuit`` leaves ``factor * sum_i a_i |i>`` on ``index``."""

    circuit: Circuit
    index: tuple[int, ...]
    factor: complex
    input_state: np.ndarray

    def output(self) -> np.ndarray:
        out = simulate(self.circuit, self.input_state)
        n_idx = len(self.index)
        vec = np.zeros(2**n_idx, dtype=complex)
        for i in range(2**n_idx):
            full = sum(((i >> j) & 1) << q for j, q in enumerate(self.index))
            vec[i] = out[full]
        return vec


def encode_A(xi: Statevector, prep: Circuit, keep: Sequence[int], flag: int) -> EncodedA:
    """Circuit producing c* |A> for the reduced state of ``xi`` on ``keep``.

    ``prep`` acts on ``xi.num_qubits + 1`` qubits and must satisfy
    prep|0>|0> = c|0>_flag|xi> + |1>_flag|...>. The qubits of ``xi`` map, in
    order, onto the non-flag qubits of ``prep``; ``keep`` refers to qubits of
    ``xi``. The Pauli index register sits above the prep register.
    """
    m = prep.num_qubits
    if m != xi.num_qubits + 1 or not 0 <= flag < m:
        raise ArgumentError("prep must act on xi plus one flag qubit")
    wires = [q for q in range(m) if q != flag]
    keep = [int(q) for q in keep]
    n = len(keep)
    if n < 1 or len(set(keep)) != n or any(not 0 <= q < xi.num_qubits for q in keep):
        raise ArgumentError(f"invalid keep set {keep}")

    # where does prep put amplitude on flag=0, and is it proportional to xi?
    out = simulate(prep, np.eye(2**m, dtype=complex)[:, 0])
    idx = np.arange(2**xi.num_qubits)
    full = np.zeros_like(idx)
    for j, q in enumerate(wires):
        full |= ((idx >> j) & 1) << q
    branch = out[full]
    c = np.vdot(xi.amplitudes, branch)
    if abs(c) < 1e-12 or np.linalg.norm(branch - c * xi.amplitudes) > 1e-9:
        raise PrepError("prep does not produce xi on its flag-0 branch")

    width = m + 2 * n
    index = list(range(m, width))
    circ = Circuit(width)
    for q in index:
        circ.gate(H, (q,), label="H")
    circ.extend(_controlled_pauli_steps(n, [wires[q] for q in keep], index))
    circ.extend(prep.inverse())
    for q in range(m):
        circ.project(q, 0)
    inp = np.zeros(2**width, dtype=complex)
    inp[full] = xi.amplitudes
    return EncodedA(circ, tuple(index), np.conj(c), inp)


def taylor_error(A: PauliDecomposition, t: float, K: int) -> float:
    """Operator-norm distance between the normalized order-K block and exp(i rho t)."""
    if K == 0 or t == 0:
        approx = np.eye(2**A.num_qubits, dtype=complex)
        if K > 0:
            approx = sum_taylor(A.recompose(), t, K)
    else:
        approx = _blocks_extraction(A, t, K) / assemble_exp_circuit(A, t, K).scale
    return float(np.linalg.norm(approx - exact_exp(A, t), 2))


def sum_taylor(m: np.ndarray, t: float, K: int) -> np.ndarray:
    """sum_{k<=K} (i m t)^k / k! evaluated directly."""
    out = np.eye(m.shape[0], dtype=complex)
    term = np.eye(m.shape[0], dtype=complex)
    for k in range(1, K + 1):
        term = term @ (1j * t * m) / k
        out = out + term
    return out


def random_density_matrix(n: int, rng: np.random.Generator) -> DensityMatrix:
    """Full-rank Wishart sample normalized to unit trace."""
    dim = 2**n
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = g @ g.conj().T
    m = (m + m.conj().T) / 2
    return DensityMatrix(n, m / np.trace(m).real)
