"""Purification, oblivious amplitude amplification and the clock construction.

Purification register (qubit 0 first): flag, unary clause register u_0..u_{#C-1},
s_copy (n qubits), s (n qubits). Inside each n-qubit register variable v sits
on offset n-1-v, so the register value equals the assignment index.

History system register (qubit 0 first): marker, the n cut qubits (first
halves of the EPR pairs), the n second halves, then the purification
register. Clock qubit c_t (t = 1..T) follows the system qubits, and the
legal clock state for time t is c_1..c_t = 1, the rest 0.

The full space is far beyond dense simulation (T is around a hundred), so
the history state is stored per clock sector and H' is assembled directly on
the legal clock subspace. Illegal clock strings are separated by H_clock >= 1.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import LinearOperator, eigsh

from .cnf import CnfFormula, build_hamiltonian, hamiltonian_to_density, unsatisfying_pattern
from .config import max_qubits
from .core import (
    Circuit,
    DensityMatrix,
    Gate,
    Project,
    Statevector,
    _pure_reduced,
    simulate,
)
from .errors import AmplitudeError, ArgumentError, ScaleError
from .gates import CNOT_LOCAL, H, SWAP, X, Z, compile_two_qubit, unary_superposition_steps

MAX_LOCALITY = 5
DENSE_CAP = 12
P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)
BELL = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


# ---------------------------------------------------------------------------
# Purification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PurificationLayout:
    n: int
    num_clauses: int

    flag = 0

    @property
    def k(self) -> list[int]:
        return list(range(1, 1 + self.num_clauses))

    @property
    def s_copy(self) -> list[int]:
        base = 1 + self.num_clauses
        return list(range(base, base + self.n))

    @property
    def s(self) -> list[int]:
        base = 1 + self.num_clauses + self.n
        return list(range(base, base + self.n))

    def var_qubit(self, v: int) -> int:
        return self.s[self.n - 1 - v]

    @property
    def num_qubits(self) -> int:
        return 2 * self.n + self.num_clauses + 1


def purification_amplitude(f: CnfFormula) -> float:
    """a = 1/sqrt(Tr H): the common amplitude of every violated (s, k) pair in |xi>."""
    total = int(build_hamiltonian(f).violations.sum())
    if total == 0:
        raise ArgumentError("formula has no violated clause; xi is undefined")
    return 1 / math.sqrt(total)


def build_purification_circuit(f: CnfFormula) -> tuple[Circuit, PurificationLayout]:
    """U with U|0> = (1/2)|xi>|0>_flag + (sqrt 3/2)|xi_perp>|1>_flag for distinct-variable clauses."""
    lay = PurificationLayout(f.num_vars, f.num_clauses)
    c = Circuit(lay.num_qubits)
    for q, qc in zip(lay.s, lay.s_copy):
        c.gate(H, (q,), label="H")
        c.gate(CNOT_LOCAL, (qc, q), label="CNOT")
    u = lay.k
    c.gate(X, (u[0],), label="X")
    c.extend(unary_superposition_steps(u[1:]))
    # exactly one clause is selected, so flag = 1 XOR [selected clause unsatisfied] = C_k(s)
    c.gate(X, (lay.flag,), label="X")
    for k, clause in enumerate(f.clauses, start=1):
        pattern = unsatisfying_pattern(clause)
        if pattern is None:
            continue
        ctrl, vals = [u[k - 1]], [1]
        if k < f.num_clauses:
            ctrl.append(u[k])
            vals.append(0)
        for v, bit in sorted(pattern.items()):
            ctrl.append(lay.var_qubit(v))
            vals.append(bit)
        c.gate(X, (lay.flag,), tuple(ctrl), tuple(vals), label="MCX")
    return c, lay


def purification_state(f: CnfFormula) -> np.ndarray:
    """|xi>|0>_flag written down directly from the clause list, in the purification layout."""
    lay = PurificationLayout(f.num_vars, f.num_clauses)
    n, m = f.num_vars, f.num_clauses
    amps = np.zeros(2**lay.num_qubits, dtype=complex)
    a = purification_amplitude(f)
    for s in range(2**n):
        for k, clause in enumerate(f.clauses, start=1):
            pattern = unsatisfying_pattern(clause)
            if pattern is None:
                continue
            if all(((s >> (n - 1 - v)) & 1) == bit for v, bit in pattern.items()):
                unary = (1 << k) - 1
                idx = (unary << 1) | (s << (1 + m)) | (s << (1 + m + n))
                amps[idx] += a
    return amps


def oblivious_amplify(u: Circuit, flag: int = 0, tol: float = 1e-9) -> Circuit:
    """U_xi = -U R_0 U^dagger (I x Z) U, which rotates amplitude 1/2 on flag 0 up to 1.

    Z on the flag reflects about the good branch. R_0 = 2|0><0| - I reflects
    about the all-zero input; a reflection on the flag alone would leave the
    amplitude at 1/2 because the flag-0 block of U is not proportional to a
    unitary. The overall sign is folded into R_0, giving one multi-controlled
    diag(-1, 1) on the flag with every other qubit as a 0-control.
    """
    if any(isinstance(s, Project) for s in u.steps):
        raise ArgumentError("amplification needs a projection-free circuit")
    amps = np.zeros(2**u.num_qubits, dtype=complex)
    amps[0] = 1
    out = simulate(u, amps)
    good = out[((np.arange(out.size) >> flag) & 1) == 0]
    amp = math.sqrt(float(np.vdot(good, good).real))
    if abs(amp - 0.5) > tol:
        raise AmplitudeError(f"flag-0 amplitude is {amp:.12f}, expected 1/2")
    others = tuple(q for q in range(u.num_qubits) if q != flag)
    c = Circuit(u.num_qubits)
    c.extend(u)
    c.gate(Z, (flag,), label="Z")
    c.extend(u.inverse())
    c.gate(-Z, (flag,), others, (0,) * len(others), label="R0")
    c.extend(u)
    return c


# ---------------------------------------------------------------------------
# History circuit and state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HistoryLayout:
    n: int
    num_clauses: int

    marker = 0

    @property
    def cut(self) -> list[int]:
        return list(range(1, 1 + self.n))

    def cut_qubit(self, v: int) -> int:
        return 1 + (self.n - 1 - v)

    @property
    def epr_second(self) -> list[int]:
        return list(range(1 + self.n, 1 + 2 * self.n))

    @property
    def epr_pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.cut, self.epr_second))

    @property
    def offset(self) -> int:
        return 1 + 2 * self.n

    @property
    def purification(self) -> PurificationLayout:
        return PurificationLayout(self.n, self.num_clauses)

    @property
    def xi_inputs(self) -> list[int]:
        return list(range(self.offset, self.num_qubits))

    @property
    def num_qubits(self) -> int:
        return self.offset + self.purification.num_qubits


@dataclass
class HistoryCircuit:
    layout: HistoryLayout
    gates: list[Gate]
    T0: int

    @property
    def T(self) -> int:
        return len(self.gates)

    def input_state(self) -> np.ndarray:
        lay = self.layout
        amps = np.zeros(2**lay.num_qubits, dtype=complex)
        for pairs in range(2**lay.n):
            idx = 1 << lay.marker
            for j, (a, b) in enumerate(lay.epr_pairs):
                if (pairs >> j) & 1:
                    idx |= (1 << a) | (1 << b)
            amps[idx] = 2 ** (-lay.n / 2)
        return amps


def build_history_circuit(f: CnfFormula) -> HistoryCircuit:
    """U_1..U_T: elementary gates of U_xi, n SWAPs into the cut, X on the marker."""
    lay = HistoryLayout(f.num_vars, f.num_clauses)
    u, play = build_purification_circuit(f)
    uxi = compile_two_qubit(oblivious_amplify(u, play.flag))
    remap = [lay.offset + q for q in range(play.num_qubits)]
    c = Circuit(lay.num_qubits)
    c.extend(uxi, remap)
    gates = list(c.gates)
    T0 = len(gates)
    for v in range(f.num_vars):
        gates.append(Gate(SWAP, (lay.offset + play.var_qubit(v), lay.cut_qubit(v)), label="SWAP"))
    gates.append(Gate(X, (lay.marker,), label="X"))
    return HistoryCircuit(lay, gates, T0)


@dataclass
class HistoryState:
    """|xi'> stored per clock sector: sectors[t] = U_t..U_1|alpha> / sqrt(T+1)."""

    circuit: HistoryCircuit
    sectors: np.ndarray

    @property
    def T(self) -> int:
        return self.circuit.T

    @property
    def num_system_qubits(self) -> int:
        return self.circuit.layout.num_qubits

    def legal_vector(self) -> np.ndarray:
        return self.sectors.reshape(-1)

    def norm_squared(self) -> float:
        return float(np.vdot(self.sectors, self.sectors).real)

    def sector_weights(self) -> np.ndarray:
        return np.sum(np.abs(self.sectors) ** 2, axis=1)

    def to_statevector(self) -> Statevector:
        """Full system-plus-clock vector; only for toy circuits within the dense cap."""
        S, T = self.num_system_qubits, self.T
        if S + T > max_qubits():
            raise ScaleError(f"history state spans {S + T} qubits, cap is {max_qubits()}")
        amps = np.zeros(2 ** (S + T), dtype=complex)
        for t in range(T + 1):
            amps[(legal_clock(t) << S) + np.arange(2**S)] = self.sectors[t]
        return Statevector(S + T, amps, normalized=False)


def legal_clock(t: int) -> int:
    """Clock bit pattern of time t: c_1..c_t set (c_1 is bit 0)."""
    return (1 << t) - 1


def history_sectors(gates: Sequence[Gate], num_qubits: int, alpha: np.ndarray) -> np.ndarray:
    T = len(gates)
    out = np.empty((T + 1, 2**num_qubits), dtype=complex)
    out[0] = alpha
    c = Circuit(num_qubits)
    for t, g in enumerate(gates, start=1):
        c.steps = [g]
        out[t] = simulate(c, out[t - 1])
    return out / math.sqrt(T + 1)


def build_history_state(f: CnfFormula) -> HistoryState:
    hc = build_history_circuit(f)
    return HistoryState(hc, history_sectors(hc.gates, hc.layout.num_qubits, hc.input_state()))


# ---------------------------------------------------------------------------
# Hamiltonian terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HamiltonianTerm:
    """``operator`` acts on ``support``; support[0] is its least-significant bit."""

    label: str
    support: tuple[int, ...]
    operator: np.ndarray

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "support": list(self.support),
            "matrix": [[[z.real, z.imag] for z in row] for row in self.operator],
        }


def _kron_lsb_first(*ops: np.ndarray) -> np.ndarray:
    """Tensor product where the first operator acts on the least-significant qubit."""
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(op, out)
    return out


def _prop_term(t: int, T: int, gate: Gate, clock: Sequence[int]) -> HamiltonianTerm:
    """1/2 (|t><t| + |t-1><t-1| - U |t><t-1| - U^dagger |t-1><t|) with a 2- or 3-qubit clock window."""
    if T < 2:
        raise ArgumentError("the clock needs T >= 2")
    if t == 1:
        window = (clock[0], clock[1])
        before, after = 0b00, 0b01  # (c1, c2) = 00 -> 10
    elif t == T:
        window = (clock[T - 2], clock[T - 1])
        before, after = 0b01, 0b11  # (c_{T-1}, c_T) = 10 -> 11
    else:
        window = (clock[t - 2], clock[t - 1], clock[t])
        before, after = 0b001, 0b011  # (c_{t-1}, c_t, c_{t+1}) = 100 -> 110
    dim_c = 2 ** len(window)
    e_before = np.zeros((dim_c, dim_c), dtype=complex)
    e_before[before, before] = 1
    e_after = np.zeros((dim_c, dim_c), dtype=complex)
    e_after[after, after] = 1
    fwd = np.zeros((dim_c, dim_c), dtype=complex)
    fwd[after, before] = 1
    u = gate.local_matrix()
    eye = np.eye(u.shape[0])
    # system support is the low block of the combined index
    op = 0.5 * (np.kron(e_after + e_before, eye) - np.kron(fwd, u) - np.kron(fwd.T, u.conj().T))
    return HamiltonianTerm(f"prop({t})", tuple(gate.support) + window, op)


@dataclass
class HistoryHamiltonian:
    terms: list[HamiltonianTerm]
    T0: int
    T: int
    num_system_qubits: int
    gates: list[Gate] = field(default_factory=list)

    @property
    def clock_qubits(self) -> list[int]:
        return list(range(self.num_system_qubits, self.num_system_qubits + self.T))

    @property
    def num_qubits(self) -> int:
        return self.num_system_qubits + self.T

    def locality_violations(self) -> int:
        return sum(len(term.support) > MAX_LOCALITY for term in self.terms)

    def max_support(self) -> int:
        return max(len(term.support) for term in self.terms)

    def psd_violations(self, tol: float = 1e-10) -> int:
        bad = 0
        for term in self.terms:
            m = term.operator
            if not np.allclose(m, m.conj().T, atol=tol, rtol=0) or np.linalg.eigvalsh(m).min() < -tol:
                bad += 1
        return bad

    def to_dense(self) -> np.ndarray:
        """Full matrix over system and clock; toy sizes only."""
        nq = self.num_qubits
        if nq > min(max_qubits(), DENSE_CAP):
            raise ScaleError(f"dense H' over {nq} qubits is out of reach")
        dim = 2**nq
        out = np.zeros((dim, dim), dtype=complex)
        for term in self.terms:
            out += embed_dense(term.operator, term.support, nq)
        return out

    def legal_matrix(self) -> sp.csr_matrix:
        return assemble_legal(self)

    def dump_json(self) -> str:
        return json.dumps([term.to_dict() for term in self.terms])


def embed_dense(op: np.ndarray, support: Sequence[int], num_qubits: int) -> np.ndarray:
    r, c, v = _embed_system(op, support, num_qubits)
    dim = 2**num_qubits
    return sp.coo_matrix((v, (r, c)), shape=(dim, dim)).toarray()


def _input_terms(lay: HistoryLayout, c1: int) -> list[HamiltonianTerm]:
    terms = []
    for q in lay.xi_inputs:
        terms.append(HamiltonianTerm("in", (q, c1), _kron_lsb_first(P1, P0)))
    not_bell = np.eye(4) - np.outer(BELL, BELL.conj())
    for a, b in lay.epr_pairs:
        terms.append(HamiltonianTerm("in", (a, b, c1), _kron_lsb_first(not_bell, P0)))
    terms.append(HamiltonianTerm("in", (lay.marker, c1), _kron_lsb_first(P0, P0)))
    return terms


def build_history_hamiltonian(f: CnfFormula, circuit: HistoryCircuit | None = None) -> HistoryHamiltonian:
    hc = circuit or build_history_circuit(f)
    return hamiltonian_for_circuit(hc.gates, hc.layout.num_qubits, hc.T0,
                                   _input_terms, hc.layout, out_qubit=hc.layout.marker)


def hamiltonian_for_circuit(gates: Sequence[Gate], num_system: int, T0: int, input_terms,
                            layout, out_qubit: int) -> HistoryHamiltonian:
    """Terms of H' for an arbitrary gate list; ``input_terms(layout, c1)`` supplies H_in."""
    T = len(gates)
    clock = list(range(num_system, num_system + T))
    terms = list(input_terms(layout, clock[0]))
    terms.append(HamiltonianTerm("out", (out_qubit, clock[-1]), _kron_lsb_first(P1, P1)))
    for t, g in enumerate(gates, start=1):
        terms.append(_prop_term(t, T, g, clock))
    for t in range(2, T + 1):
        # penalize c_{t-1} = 0, c_t = 1
        terms.append(HamiltonianTerm("clock", (clock[t - 2], clock[t - 1]),
                                     _kron_lsb_first(P0, P1)))
    return HistoryHamiltonian(terms, T0, T, num_system, list(gates))


# ---------------------------------------------------------------------------
# Legal-subspace assembly
# ---------------------------------------------------------------------------

def _embed_system(block: np.ndarray, qubits: Sequence[int], num_system: int):
    """COO triples of ``block`` acting on ``qubits`` inside a num_system register."""
    qubits = list(qubits)
    dim = 2**num_system
    if not qubits:
        idx = np.arange(dim)
        return idx, idx, np.full(dim, complex(block[0, 0]))
    mask = sum(1 << q for q in qubits)
    base = np.arange(dim)[(np.arange(dim) & mask) == 0]

    def spread(v: int) -> int:
        return sum(((v >> j) & 1) << q for j, q in enumerate(qubits))

    rows, cols, vals = [], [], []
    for i, j in zip(*np.nonzero(np.abs(block) > 0)):
        rows.append(base | spread(i))
        cols.append(base | spread(j))
        vals.append(np.full(base.size, block[i, j]))
    if not rows:
        return np.array([], int), np.array([], int), np.array([], complex)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def assemble_legal(hh: HistoryHamiltonian) -> sp.csr_matrix:
    """H' restricted to span{|x>|t>_C : legal t}; index t * 2^S + x.

    Each term is applied to every legal clock string. A term that sends a
    legal string to an illegal one with non-zero weight raises, so the
    legal subspace is verified to be invariant.
    """
    S, T = hh.num_system_qubits, hh.T
    dim_s = 2**S
    legal = {legal_clock(t): t for t in range(T + 1)}
    rows, cols, vals = [], [], []
    for term in hh.terms:
        sys_q = [q for q in term.support if q < S]
        clk_slots = [j for j, q in enumerate(term.support) if q >= S]
        sys_slots = [j for j, q in enumerate(term.support) if q < S]
        clk_bits = [term.support[j] - S for j in clk_slots]
        k_s = len(sys_slots)
        op = term.operator.reshape((2,) * (2 * len(term.support)))
        nsup = len(term.support)
        # reorder to (clock out, system out, clock in, system in), LSB-first within each group
        axes_out = [nsup - 1 - j for j in reversed(clk_slots)] + [nsup - 1 - j for j in reversed(sys_slots)]
        axes_in = [2 * nsup - 1 - j for j in reversed(clk_slots)] + [2 * nsup - 1 - j for j in reversed(sys_slots)]
        m = np.transpose(op, axes_out + axes_in).reshape(
            2 ** len(clk_slots), 2**k_s, 2 ** len(clk_slots), 2**k_s
        )
        for t in range(T + 1):
            string = legal_clock(t)
            p_in = sum(((string >> b) & 1) << j for j, b in enumerate(clk_bits))
            for p_out in range(2 ** len(clk_slots)):
                block = m[p_out, :, p_in, :]
                if not np.any(np.abs(block) > 1e-15):
                    continue
                new = string
                for j, b in enumerate(clk_bits):
                    new = (new & ~(1 << b)) | (((p_out >> j) & 1) << b)
                if new not in legal:
                    raise ArgumentError(f"term {term.label} leaves the legal clock subspace")
                r, c, v = _embed_system(block, sys_q, S)
                rows.append(r + legal[new] * dim_s)
                cols.append(c + t * dim_s)
                vals.append(v)
    dim = (T + 1) * dim_s
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    return mat.tocsr()


def path_laplacian(T: int) -> np.ndarray:
    """Sum of the clock parts of the propagation terms in the rotated frame."""
    lap = np.zeros((T + 1, T + 1))
    for t in range(1, T + 1):
        lap[t, t] += 0.5
        lap[t - 1, t - 1] += 0.5
        lap[t, t - 1] = lap[t - 1, t] = -0.5
    return lap


def _sweep(gates: Sequence[Gate], num_system: int, sectors: np.ndarray, inverse: bool) -> np.ndarray:
    """W: sector t -> U_t..U_1 sector t, or its inverse."""
    out = np.array(sectors, dtype=complex, copy=True)
    T = len(gates)
    order = range(T, 0, -1) if inverse else range(1, T + 1)
    for t in order:
        g = gates[t - 1].dagger() if inverse else gates[t - 1]
        out[t:] = simulate(Circuit(num_system, [g]), out[t:].T).T
    return out


class RotatedFrame:
    """H' on the legal subspace written as W (I x L + A x |0><0| + B x |T><T|) W^dagger.

    L is the path Laplacian of the clock, A the input penalty and B the
    output penalty pulled back through the whole circuit. Resolvents of the
    rotated operator reduce to a 2 * 2^S linear system on the end sectors,
    which makes shift-invert Lanczos cheap despite the tiny gap.
    """

    def __init__(self, hh: HistoryHamiltonian, mat: sp.csr_matrix):
        if len(hh.gates) != hh.T:
            raise ArgumentError("rotated frame needs the gate list of the history circuit")
        self.hh = hh
        self.S, self.T = hh.num_system_qubits, hh.T
        d, T = 2**self.S, self.T
        self.dim_s = d
        self.lap = path_laplacian(T)
        self.A = mat[:d, :d].toarray() - self.lap[0, 0] * np.eye(d)
        b_orig = mat[T * d:, T * d:].toarray() - self.lap[T, T] * np.eye(d)
        v = simulate(Circuit(self.S, list(hh.gates)), np.eye(d, dtype=complex))
        self.B = v.conj().T @ b_orig @ v

    def to_sectors(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x).reshape(self.T + 1, self.dim_s)

    def apply_rotated(self, y: np.ndarray) -> np.ndarray:
        y = self.to_sectors(y)
        out = self.lap @ y
        out[0] += self.A @ y[0]
        out[-1] += self.B @ y[-1]
        return out

    def apply_rotated_flat(self, y: np.ndarray) -> np.ndarray:
        return self.apply_rotated(y).reshape(-1)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """W H~ W^dagger x, used to cross-check the term-by-term assembly."""
        y = _sweep(self.hh.gates, self.S, self.to_sectors(x), inverse=True)
        return _sweep(self.hh.gates, self.S, self.apply_rotated(y), inverse=False).reshape(-1)

    def resolvent(self, sigma: float):
        """y -> (H~ - sigma)^-1 y in the rotated frame, for sigma below the spectrum of L."""
        d, T = self.dim_s, self.T
        green = np.linalg.inv(self.lap - sigma * np.eye(T + 1))
        eye = np.eye(d)
        system = np.block([
            [eye + green[0, 0] * self.A, green[0, T] * self.B],
            [green[T, 0] * self.A, eye + green[T, T] * self.B],
        ])
        lu = lu_factor(system)

        def solve(y: np.ndarray) -> np.ndarray:
            gb = green @ self.to_sectors(y)
            ends = lu_solve(lu, np.concatenate([gb[0], gb[T]]))
            out = gb - np.outer(green[:, 0], self.A @ ends[:d]) - np.outer(green[:, T], self.B @ ends[d:])
            return out.reshape(-1)

        return solve

    def unrotate(self, y: np.ndarray) -> np.ndarray:
        return _sweep(self.hh.gates, self.S, self.to_sectors(y), inverse=False).reshape(-1)


@dataclass
class SpectralReport:
    ground_energy: float
    second_energy: float
    gap: float
    gap_bound: float
    overlap: float
    residual: float
    assembly_mismatch: float
    eigen_residual: float

    @property
    def gap_ok(self) -> bool:
        return self.gap >= self.gap_bound


def verify_spectrum(hh: HistoryHamiltonian, state: HistoryState, tol: float = 1e-12) -> SpectralReport:
    """Two lowest eigenpairs of H' on the legal subspace, compared with |xi'>.

    The illegal clock subspace is invariant and bounded below by H_clock >= 1,
    which exceeds every gap bound considered here. Eigenpairs come from
    shift-invert Lanczos just below zero; their residuals are measured
    against the matrix assembled from the local terms.
    """
    mat = hh.legal_matrix()
    frame = RotatedFrame(hh, mat)
    psi = state.legal_vector()
    residual = float(np.linalg.norm(mat @ psi))
    rng = np.random.default_rng(0)
    x = rng.standard_normal(psi.size) + 1j * rng.standard_normal(psi.size)
    x /= np.linalg.norm(x)
    mismatch = float(np.linalg.norm(mat @ x - frame.apply(x)))
    bound = 1.0 / (2 * (hh.T + 1) ** 2)
    sigma = -bound
    rotated = LinearOperator(mat.shape, matvec=frame.apply_rotated_flat, dtype=complex)
    op = LinearOperator(mat.shape, matvec=frame.resolvent(sigma), dtype=complex)
    vals, rvecs = eigsh(rotated, k=2, sigma=sigma, OPinv=op, tol=tol)
    order = np.argsort(vals)
    vals = vals[order]
    vecs = np.stack([frame.unrotate(rvecs[:, j]) for j in order], axis=1)
    eig_res = max(float(np.linalg.norm(mat @ vecs[:, j] - vals[j] * vecs[:, j])) for j in range(2))
    overlap = float(abs(np.vdot(psi, vecs[:, 0])) ** 2 / np.vdot(psi, psi).real)
    return SpectralReport(float(vals[0]), float(vals[1]), float(vals[1] - vals[0]),
                          bound, overlap, residual, mismatch, eig_res)


# ---------------------------------------------------------------------------
# Intermediate reduced states
# ---------------------------------------------------------------------------

@dataclass
class TauDecomposition:
    rho: DensityMatrix
    rho_prime: DensityMatrix
    weight: float
    tau: np.ndarray = field(repr=False)

    def reconstruct(self) -> np.ndarray:
        w = self.weight
        return w * np.kron(self.rho.entries, P0) + (1 - w) * np.kron(self.rho_prime.entries, P1)

    @property
    def residual(self) -> float:
        return float(np.abs(self.tau - self.reconstruct()).max())


@dataclass
class StepReport:
    t: int
    max_eig: float
    min_nonzero_eig: float


def _extremes(m: np.ndarray, zero_tol: float = 1e-12) -> tuple[float, float]:
    vals = np.linalg.eigvalsh((m + m.conj().T) / 2)
    nz = vals[vals > zero_tol]
    return float(vals.max()), float(nz.min()) if nz.size else 0.0


def intermediate_spectra(f: CnfFormula, state: HistoryState | None = None
                         ) -> tuple[TauDecomposition, list[StepReport], list[np.ndarray]]:
    """rho_t on the cut for every t, rho' = mean of rho_t over t < T, and tau."""
    state = state or build_history_state(f)
    lay = state.circuit.layout
    S, T = state.num_system_qubits, state.T
    cut = [lay.cut_qubit(v) for v in range(lay.n)][::-1]  # LSB first, so index = assignment
    rhos, reports = [], []
    for t in range(T + 1):
        vec = state.sectors[t] * math.sqrt(T + 1)
        rho_t = _pure_reduced(vec, S, cut)
        rhos.append(rho_t)
        hi, lo = _extremes(rho_t)
        reports.append(StepReport(t, hi, lo))
    tau = _pure_reduced(state.sectors, S, [lay.marker] + cut)
    rho_prime = sum(rhos[:T]) / T
    rho = hamiltonian_to_density(build_hamiltonian(f))
    decomposition = TauDecomposition(rho, DensityMatrix(lay.n, (rho_prime + rho_prime.conj().T) / 2),
                                     1.0 / (T + 1), tau)
    return decomposition, reports, rhos


def spectra_csv(reports: Sequence[StepReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "max_eig", "min_nonzero_eig"])
    for r in reports:
        w.writerow([r.t, repr(r.max_eig), repr(r.min_nonzero_eig)])
    return buf.getvalue()
