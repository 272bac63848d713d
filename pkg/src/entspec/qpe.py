"""Counting ground-state degeneracy with concatenated phase estimation.

The controlled evolutions apply exp(-i H tau_m) with tau_m = 2 pi s 2^m, so
an eigenvalue lambda picks up the phase exp(-2 pi i theta 2^m) with
theta = s * lambda. Because of that minus sign the readout uses the forward
QFT, which leaves the register in |k> with k ~ theta 2^d.

Pipeline layout (qubit 0 first): copy register (n), system register (n),
r phase registers of d bits, r threshold ancillas, one majority qubit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.linalg import expm, polar

from .cnf import DiagonalHamiltonian
from .config import max_qubits
from .core import Circuit, Gate, Project, simulate
from .errors import (
    ArgumentError,
    ConfidenceError,
    RangeError,
    ScaleError,
    TieError,
)
from .gates import CNOT_LOCAL, H, X, phase
from .spectrum import CountPromise

MODES = ("exact_diagonal", "exact_expm", "lcu_taylor")
MAX_DENSE_EVOLUTION_QUBITS = 3
CONFIDENCE_MARGIN = 0.25
LCU_EPSILON = 1e-9


# ---------------------------------------------------------------------------
# Hamiltonian handles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectrumHandle:
    """Either a diagonal (eigenvalue per basis state) or a dense Hermitian matrix."""

    num_qubits: int
    diagonal: np.ndarray | None
    dense: np.ndarray | None

    def eigenvalues(self) -> np.ndarray:
        if self.diagonal is not None:
            return np.asarray(self.diagonal, dtype=float)
        return np.linalg.eigvalsh(self.dense)

    def matrix(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        return np.diag(self.diagonal.astype(complex))


def as_handle(h) -> SpectrumHandle:
    if isinstance(h, SpectrumHandle):
        return h
    if isinstance(h, DiagonalHamiltonian):
        return SpectrumHandle(h.num_vars, h.eigenvalues(), None)
    arr = np.asarray(h)
    if arr.ndim == 1:
        n = int(round(math.log2(arr.shape[0])))
        if 2**n != arr.shape[0] or n < 1:
            raise ArgumentError("diagonal length must be a power of two")
        return SpectrumHandle(n, arr.astype(float), None)
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        n = int(round(math.log2(arr.shape[0])))
        if 2**n != arr.shape[0] or n < 1:
            raise ArgumentError("matrix dimension must be a power of two")
        m = arr.astype(complex)
        if not np.allclose(m, m.conj().T, atol=1e-10, rtol=0):
            raise ArgumentError("Hamiltonian is not Hermitian")
        return SpectrumHandle(n, None, m)
    raise ArgumentError("unsupported Hamiltonian handle")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseEstimationConfig:
    """``scale`` is s in tau_m = 2 pi s 2^m; ``threshold_b`` is in eigenvalue units."""

    d_t: int
    r: int
    threshold_b: float
    evolution: str = "exact_diagonal"
    scale: float = 1.0

    def __post_init__(self):
        if self.d_t < 1:
            raise ArgumentError("d_t must be at least 1")
        if self.r < 1 or self.r % 2 == 0:
            raise ArgumentError("r must be a positive odd integer")
        if self.evolution not in MODES:
            raise ArgumentError(f"unknown evolution mode {self.evolution!r}")
        if not self.scale > 0:
            raise ArgumentError("scale must be positive")

    @property
    def resolution(self) -> float:
        """Grid spacing 2^-d_t expressed in eigenvalue units."""
        return 2.0 ** (-self.d_t) / self.scale

    def check_promise(self, p: CountPromise) -> None:
        if not self.resolution < p.gap:
            raise ArgumentError(
                f"grid spacing {self.resolution} is not below the promise gap {p.gap}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def auto_config(h, p: CountPromise, r: int = 1, evolution: str = "exact_diagonal",
                norm_bound: float | None = None) -> PhaseEstimationConfig:
    """Smallest dyadic setup resolving the promise gap.

    s = 2^-d0 puts every eigenvalue below ``norm_bound`` into [0, 1); e extra
    bits make the grid spacing 2^-e smaller than a - b.
    """
    handle = as_handle(h)
    lam = float(np.max(handle.eigenvalues())) if norm_bound is None else float(norm_bound)
    d0 = 0
    while 2.0**d0 <= lam:
        d0 += 1
    e = 0
    while not 2.0 ** (-e) < p.gap:
        e += 1
    return PhaseEstimationConfig(d0 + e, r, p.b, evolution, 2.0 ** (-d0))


def effective_threshold(cfg: PhaseEstimationConfig) -> float:
    """Move b to the nearest grid midpoint at or above it, in eigenvalue units.

    Dyadic grids put integer spectra and b = 1/2 style thresholds on grid
    points; the midpoint keeps the comparison tie-free while staying below a.
    """
    h = cfg.resolution
    return (math.ceil(cfg.threshold_b / h - 0.5) + 0.5) * h


# ---------------------------------------------------------------------------
# Circuit pieces
# ---------------------------------------------------------------------------

def qft_steps(qubits) -> list[Gate]:
    """Forward QFT |j> -> N^-1/2 sum_k exp(2 pi i j k / N) |k>; qubits[0] is the LSB."""
    q = list(qubits)
    d = len(q)
    steps: list[Gate] = []
    for i in reversed(range(d)):
        steps.append(Gate(H, (q[i],), label="H"))
        for j in reversed(range(i)):
            steps.append(Gate(phase(math.pi / 2 ** (i - j)), (q[i],), (q[j],), label="CP"))
    for i in range(d // 2):
        steps.append(Gate(_swap(), (q[i], q[d - 1 - i]), label="SWAP"))
    return steps


def _swap() -> np.ndarray:
    return np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def _check_range(handle: SpectrumHandle, cfg: PhaseEstimationConfig) -> None:
    vals = handle.eigenvalues()
    if vals.min() < -1e-12 or vals.max() * cfg.scale >= 1:
        raise RangeError(
            f"spectrum [{vals.min():.4g}, {vals.max():.4g}] does not fit the phase window at scale {cfg.scale}"
        )


def controlled_evolution(handle: SpectrumHandle, tau: float, control: int,
                         system, mode: str) -> list[Gate]:
    """Gates for |1><1|_control (x) exp(-i H tau) on ``system`` (system[0] is the LSB)."""
    system = list(system)
    n = handle.num_qubits
    if mode == "exact_diagonal":
        if handle.diagonal is None:
            raise ArgumentError("exact_diagonal mode needs a diagonal Hamiltonian")
        lam = handle.diagonal
        top, lower = system[-1], system[:-1]
        steps = []
        half = 2 ** (n - 1)
        for pattern in range(half):
            ph = np.exp(-1j * tau * np.array([lam[pattern], lam[pattern + half]]))
            vals = (1,) + tuple((pattern >> j) & 1 for j in range(n - 1))
            steps.append(Gate(np.diag(ph), (top,), (control,) + tuple(lower), vals, label="Udiag"))
        return steps
    if n > MAX_DENSE_EVOLUTION_QUBITS:
        raise ScaleError(f"{mode} evolution limited to {MAX_DENSE_EVOLUTION_QUBITS} system qubits")
    if mode == "exact_expm":
        u = expm(-1j * tau * handle.matrix())
    elif mode == "lcu_taylor":
        from .lcu import taylor_unitary
        # the truncation error is checked inside taylor_unitary; the polar factor
        # strips the remaining float residue so the gate passes the unitarity check
        u = polar(taylor_unitary(handle.matrix(), -tau, LCU_EPSILON))[0]
    else:
        raise ArgumentError(f"unknown evolution mode {mode!r}")
    return [Gate(u, tuple(system), (control,), label="U")]


def pe_round_steps(h, cfg: PhaseEstimationConfig, system, register) -> list[Gate]:
    handle = as_handle(h)
    _check_range(handle, cfg)
    steps = [Gate(H, (q,), label="H") for q in register]
    for m, q in enumerate(register):
        tau = 2 * math.pi * cfg.scale * 2**m
        steps += controlled_evolution(handle, tau, q, system, cfg.evolution)
    steps += qft_steps(register)
    return steps


def phase_estimation_circuit(h, cfg: PhaseEstimationConfig) -> Circuit:
    """One QPE round: system on 0..n-1, phase register on n..n+d_t-1."""
    handle = as_handle(h)
    n, d = handle.num_qubits, cfg.d_t
    return Circuit(n + d, pe_round_steps(handle, cfg, range(n), range(n, n + d)))


def concatenated_pe(h, cfg: PhaseEstimationConfig) -> Circuit:
    """r independent rounds; round j uses qubits n + j d_t .. n + (j+1) d_t - 1."""
    handle = as_handle(h)
    n, d = handle.num_qubits, cfg.d_t
    c = Circuit(n + cfg.r * d)
    for j in range(cfg.r):
        c.extend(pe_round_steps(handle, cfg, range(n), range(n + j * d, n + (j + 1) * d)))
    return c


def round_distributions(h, cfg: PhaseEstimationConfig, state_index: int = 0) -> np.ndarray:
    """Joint outcome probabilities of the r registers for system basis eigenstate ``state_index``."""
    handle = as_handle(h)
    circ = concatenated_pe(handle, cfg)
    amps = np.zeros(2**circ.num_qubits, dtype=complex)
    amps[state_index] = 1.0
    out = simulate(circ, amps).reshape(2 ** (cfg.r * cfg.d_t), 2**handle.num_qubits)
    return np.sum(np.abs(out) ** 2, axis=1)


def success_weight(h, cfg: PhaseEstimationConfig, state_index: int = 0,
                   good_bins=None) -> float:
    """Weight of joint outcomes where a strict majority of rounds reads a good bin.

    Good bins default to the most likely single-round bin.
    """
    probs = round_distributions(h, cfg, state_index)
    d, r = cfg.d_t, cfg.r
    if good_bins is None:
        single = round_distributions(h, PhaseEstimationConfig(d, 1, cfg.threshold_b,
                                                              cfg.evolution, cfg.scale), state_index)
        good_bins = {int(np.argmax(single))}
    good_bins = set(good_bins)
    total = 0.0
    mask = 2**d - 1
    for joint, p in enumerate(probs):
        hits = sum(((joint >> (j * d)) & mask) in good_bins for j in range(r))
        if hits > r / 2:
            total += p
    return float(total)


def threshold_oracle(d_t: int, b: float) -> Circuit:
    """U_f on d_t + 1 qubits: register 0..d_t-1 holds k, qubit d_t receives [k/2^d_t > b].

    ``b`` is in phase units, that is, compared against k / 2^d_t.
    """
    if d_t < 1:
        raise ArgumentError("d_t must be at least 1")
    N = 2**d_t
    for k in range(N):
        if k / N == b:
            raise TieError(f"grid point {k}/{N} equals the threshold {b}")
    c = Circuit(d_t + 1)
    reg = tuple(range(d_t))
    for k in range(N):
        if k / N > b:
            vals = tuple((k >> j) & 1 for j in range(d_t))
            c.gate(X, (d_t,), reg, vals, label="MCX")
    return c


def majority(r: int) -> Circuit:
    """U_mv on r + 1 qubits: qubit r ^= [more than r/2 of qubits 0..r-1 are 1]."""
    if r < 1 or r % 2 == 0:
        raise ArgumentError("majority vote needs an odd number of inputs")
    c = Circuit(r + 1)
    for pattern in range(2**r):
        if bin(pattern).count("1") > r / 2:
            vals = tuple((pattern >> j) & 1 for j in range(r))
            c.gate(X, (r,), tuple(range(r)), vals, label="MCX")
    return c


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineLayout:
    n: int
    d: int
    r: int

    @property
    def copy(self) -> list[int]:
        return list(range(self.n))

    @property
    def system(self) -> list[int]:
        return list(range(self.n, 2 * self.n))

    def register(self, j: int) -> list[int]:
        base = 2 * self.n + j * self.d
        return list(range(base, base + self.d))

    def f_ancilla(self, j: int) -> int:
        return 2 * self.n + self.r * self.d + j

    @property
    def mv(self) -> int:
        return 2 * self.n + self.r * self.d + self.r

    @property
    def num_qubits(self) -> int:
        return 2 * self.n + self.r * self.d + self.r + 1


def counting_circuit(h, cfg: PhaseEstimationConfig, skip_uncompute: bool = False) -> Circuit:
    """Max-entangled prep, V, U_f, U_mv, U_f^dagger, V^dagger, then post-selection."""
    handle = as_handle(h)
    lay = PipelineLayout(handle.num_qubits, cfg.d_t, cfg.r)
    if lay.num_qubits > max_qubits():
        raise ScaleError(f"pipeline needs {lay.num_qubits} qubits, cap is {max_qubits()}")
    b_phase = effective_threshold(cfg) * cfg.scale
    c = Circuit(lay.num_qubits)
    for s, t in zip(lay.system, lay.copy):
        c.gate(H, (s,), label="H")
        c.gate(CNOT_LOCAL, (t, s), label="CNOT")

    v = Circuit(lay.num_qubits)
    for j in range(cfg.r):
        v.extend(pe_round_steps(handle, cfg, lay.system, lay.register(j)))
    uf = Circuit(lay.num_qubits)
    oracle = threshold_oracle(cfg.d_t, b_phase)
    for j in range(cfg.r):
        uf.extend(oracle, lay.register(j) + [lay.f_ancilla(j)])
    mv = majority(cfg.r)

    c.extend(v)
    c.extend(uf)
    c.extend(mv, [lay.f_ancilla(j) for j in range(cfg.r)] + [lay.mv])
    if not skip_uncompute:
        c.extend(uf.inverse())
    c.extend(v.inverse())
    for j in range(cfg.r):
        for q in lay.register(j):
            c.project(q, 0)
        c.project(lay.f_ancilla(j), 0)
    return c


@dataclass
class PipelineResult:
    n: int
    config: PhaseEstimationConfig
    uev: float
    rounded: int
    post_selection_probability: float
    discarded_weight: float

    def record(self, brute_force: int | None = None) -> dict:
        return {
            "n": self.n,
            "d_t": self.config.d_t,
            "r": self.config.r,
            "mode": self.config.evolution,
            "uev": self.uev,
            "rounded": self.rounded,
            "brute_force": brute_force,
            "match": None if brute_force is None else self.rounded == brute_force,
        }

    def record_json(self, brute_force: int | None = None) -> str:
        return json.dumps(self.record(brute_force), sort_keys=True)


def run_counting_pipeline(h, p: CountPromise, cfg: PhaseEstimationConfig | None = None,
                          skip_uncompute: bool = False, check: bool = True) -> PipelineResult:
    """Simulate the pipeline and read the UEV of |0><0| on the majority qubit.

    The prepared input is the normalized maximally entangled state, so the
    raw expectation is multiplied by 2^n to match the unnormalized sum over x.
    """
    handle = as_handle(h)
    cfg = cfg or auto_config(handle, p)
    cfg.check_promise(p)
    circ = counting_circuit(handle, cfg, skip_uncompute)
    n = handle.num_qubits
    gates_only = Circuit(circ.num_qubits, [s for s in circ.steps if not isinstance(s, Project)])
    amps = np.zeros(2**circ.num_qubits, dtype=complex)
    amps[0] = 1.0
    before = simulate(gates_only, amps)
    after = simulate(Circuit(circ.num_qubits, [s for s in circ.steps if isinstance(s, Project)]), before)
    kept = float(np.vdot(after, after).real)
    discarded = float(np.vdot(before - after, before - after).real)
    lay = PipelineLayout(n, cfg.d_t, cfg.r)
    psi = after.reshape((2,) * circ.num_qubits)
    idx = [slice(None)] * circ.num_qubits
    idx[circ.num_qubits - 1 - lay.mv] = 0
    sub = psi[tuple(idx)]
    uev = float(np.vdot(sub, sub).real) * 2**n
    rounded = int(round(uev))
    if check and abs(uev - rounded) >= CONFIDENCE_MARGIN:
        raise ConfidenceError(f"UEV {uev:.6f} is not within {CONFIDENCE_MARGIN} of an integer")
    return PipelineResult(n, cfg, uev, rounded, kept, discarded)


def counting_pipeline(h, p: CountPromise, cfg: PhaseEstimationConfig | None = None,
                      skip_uncompute: bool = False) -> int:
    return run_counting_pipeline(h, p, cfg, skip_uncompute).rounded
