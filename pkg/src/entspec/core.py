"""Dense statevector simulation with non-renormalizing post-selection.

Conventions used everywhere in the package:

* qubit 0 is the least-significant bit of a basis index;
* a gate's ``targets[0]`` is the least-significant bit of its matrix index;
* registers written left-to-right in a ket occupy descending qubit indices,
  so the leftmost ket holds the highest qubits.

Projections never renormalize. After a ``Project`` step the squared norm of
the state equals the probability of the post-selected branch, which is what
the unnormalized-expectation readout needs.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import max_qubits
from .errors import ArgumentError, DimensionError, NotPSDError, ScaleError

UNITARY_TOL = 1e-10
NORM_TOL = 1e-10
CLAMP_TOL = 1e-8


def _check_cap(num_qubits: int) -> None:
    cap = max_qubits()
    if num_qubits > cap:
        raise ScaleError(f"{num_qubits} qubits exceeds the dense cap of {cap}")


def is_unitary(matrix: np.ndarray, atol: float = UNITARY_TOL) -> bool:
    m = np.asarray(matrix)
    return np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=atol, rtol=0)


@dataclass(frozen=True, eq=False)
class Gate:
    """A unitary on ``targets`` applied when every control matches its value."""

    matrix: np.ndarray
    targets: tuple[int, ...]
    controls: tuple[int, ...] = ()
    control_values: tuple[int, ...] | None = None
    label: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        targets = tuple(int(q) for q in self.targets)
        controls = tuple(int(q) for q in self.controls)
        k = len(targets)
        if k < 1 or k > 3:
            raise ArgumentError(f"gate acts on {k} targets; 1..3 supported")
        if m.shape != (2**k, 2**k):
            raise DimensionError(f"matrix shape {m.shape} does not fit {k} targets")
        if not is_unitary(m):
            raise ArgumentError(f"gate {self.label or '?'} is not unitary")
        support = targets + controls
        if len(set(support)) != len(support) or min(support) < 0:
            raise ArgumentError(f"repeated or negative qubit in {support}")
        values = self.control_values
        values = (1,) * len(controls) if values is None else tuple(int(v) for v in values)
        if len(values) != len(controls) or any(v not in (0, 1) for v in values):
            raise ArgumentError("control_values must be 0/1, one per control")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "control_values", values)

    @property
    def support(self) -> tuple[int, ...]:
        return self.targets + self.controls

    def dagger(self) -> "Gate":
        label = self.label[:-1] if self.label.endswith("†") else (self.label + "†" if self.label else "")
        return Gate(self.matrix.conj().T, self.targets, self.controls, self.control_values, label)

    def local_matrix(self) -> np.ndarray:
        """Full matrix on ``support`` (``support[0]`` is the least-significant bit)."""
        k = len(self.targets)
        c = len(self.controls)
        dim_t = 2**k
        active = sum(v << j for j, v in enumerate(self.control_values))
        out = np.zeros((dim_t * 2**c,) * 2, dtype=complex)
        for pattern in range(2**c):
            sl = slice(pattern * dim_t, (pattern + 1) * dim_t)
            out[sl, sl] = self.matrix if pattern == active else np.eye(dim_t)
        return out


@dataclass(frozen=True)
class Project:
    """Post-select ``qubit`` on ``outcome`` without renormalizing."""

    qubit: int
    outcome: int

    def __post_init__(self):
        if self.outcome not in (0, 1):
            raise ArgumentError("projection outcome must be 0 or 1")


Step = Gate | Project


@dataclass
class Circuit:
    num_qubits: int
    steps: list = field(default_factory=list)

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ArgumentError("a circuit needs at least one qubit")
        steps, self.steps = list(self.steps), []
        for step in steps:
            self.append(step)

    def _check(self, qubits: Iterable[int]) -> None:
        for q in qubits:
            if not 0 <= q < self.num_qubits:
                raise ArgumentError(f"qubit {q} outside circuit of width {self.num_qubits}")

    def append(self, step: Step) -> "Circuit":
        if isinstance(step, Gate):
            self._check(step.support)
        elif isinstance(step, Project):
            self._check([step.qubit])
        else:
            raise ArgumentError(f"unknown circuit step {step!r}")
        self.steps.append(step)
        return self

    def gate(self, matrix, targets, controls=(), control_values=None, label="") -> "Circuit":
        return self.append(Gate(matrix, tuple(targets), tuple(controls), control_values, label))

    def project(self, qubit: int, outcome: int = 0) -> "Circuit":
        return self.append(Project(qubit, outcome))

    def extend(self, other: "Circuit | Iterable[Step]", qubit_map: Sequence[int] | None = None) -> "Circuit":
        """Append another circuit's steps, optionally relabelling its qubits."""
        steps = other.steps if isinstance(other, Circuit) else list(other)
        for step in steps:
            self.append(remap_step(step, qubit_map) if qubit_map is not None else step)
        return self

    def inverse(self) -> "Circuit":
        if any(isinstance(s, Project) for s in self.steps):
            raise ArgumentError("a circuit with projections has no inverse")
        return Circuit(self.num_qubits, [s.dagger() for s in reversed(self.steps)])

    @property
    def gates(self) -> list[Gate]:
        return [s for s in self.steps if isinstance(s, Gate)]

    def __len__(self) -> int:
        return len(self.steps)

    def unitary(self) -> np.ndarray:
        """Dense matrix of a projection-free circuit; small widths only."""
        _check_cap(2 * self.num_qubits)
        dim = 2**self.num_qubits
        return simulate(self, np.eye(dim, dtype=complex))


def remap_step(step: Step, qubit_map: Sequence[int]) -> Step:
    if isinstance(step, Project):
        return Project(qubit_map[step.qubit], step.outcome)
    return Gate(
        step.matrix,
        tuple(qubit_map[q] for q in step.targets),
        tuple(qubit_map[q] for q in step.controls),
        step.control_values,
        step.label,
    )


def _apply_gate_inplace(amps: np.ndarray, n: int, gate: Gate) -> None:
    batch = amps.shape[1:]
    psi = amps.reshape((2,) * n + batch)
    idx: list = [slice(None)] * n
    ctrl_axes = set()
    for q, v in zip(gate.controls, gate.control_values):
        idx[n - 1 - q] = v
        ctrl_axes.add(n - 1 - q)
    view = psi[tuple(idx)]
    remaining = [ax for ax in range(n) if ax not in ctrl_axes]
    k = len(gate.targets)
    src = [remaining.index(n - 1 - q) for q in reversed(gate.targets)]
    moved = np.moveaxis(view, src, list(range(k)))
    shape = moved.shape
    out = (gate.matrix @ moved.reshape(2**k, -1)).reshape(shape)
    view[...] = np.moveaxis(out, list(range(k)), src)


def _project_inplace(amps: np.ndarray, n: int, step: Project) -> None:
    psi = amps.reshape((2,) * n + amps.shape[1:])
    idx: list = [slice(None)] * n
    idx[n - 1 - step.qubit] = 1 - step.outcome
    psi[tuple(idx)] = 0.0


def simulate(circuit: Circuit, amps: np.ndarray) -> np.ndarray:
    """Run ``circuit`` on raw amplitudes; a trailing axis is treated as a batch."""
    out = np.array(amps, dtype=complex, copy=True)
    if out.shape[0] != 2**circuit.num_qubits:
        raise DimensionError("amplitude length does not match the circuit width")
    n = circuit.num_qubits
    for step in circuit.steps:
        if isinstance(step, Gate):
            _apply_gate_inplace(out, n, step)
        else:
            _project_inplace(out, n, step)
    return out


@dataclass(frozen=True, eq=False)
class Statevector:
    num_qubits: int
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        _check_cap(self.num_qubits)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != 2**self.num_qubits:
            raise DimensionError(
                f"{amps.shape[0]} amplitudes for {self.num_qubits} qubits"
            )
        if self.normalized and abs(np.vdot(amps, amps).real - 1.0) > NORM_TOL:
            raise ArgumentError("state flagged normalized but its norm is not 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, num_qubits: int) -> "Statevector":
        return cls.basis(num_qubits, 0)

    @classmethod
    def basis(cls, num_qubits: int, index: int) -> "Statevector":
        _check_cap(num_qubits)
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(num_qubits, amps)

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def renormalized(self) -> "Statevector":
        nrm = np.sqrt(self.norm_squared)
        if nrm == 0:
            raise ArgumentError("cannot renormalize the zero vector")
        return Statevector(self.num_qubits, self.amplitudes / nrm, True)

    def to_bytes(self) -> bytes:
        data = self.amplitudes.astype("<c16").tobytes()
        return struct.pack("<I", self.num_qubits) + data

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Statevector":
        if len(blob) < 4:
            raise DimensionError("truncated statevector blob")
        (n,) = struct.unpack("<I", blob[:4])
        amps = np.frombuffer(blob[4:], dtype="<c16")
        if amps.shape[0] != 2**n:
            raise DimensionError("blob length does not match its qubit count")
        normalized = abs(np.vdot(amps, amps).real - 1.0) <= NORM_TOL
        return cls(n, amps.astype(complex), normalized)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    num_qubits: int
    entries: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        dim = 2**self.num_qubits
        if m.shape != (dim, dim):
            raise DimensionError(f"density matrix shape {m.shape} for {self.num_qubits} qubits")
        if not np.allclose(m, m.conj().T, atol=1e-10, rtol=0):
            raise ArgumentError("density matrix is not Hermitian")
        if self.normalized and abs(np.trace(m).real - 1.0) > 1e-10:
            raise ArgumentError("density matrix flagged normalized but trace != 1")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)


@dataclass(frozen=True, eq=False)
class SchmidtSpectrum:
    """Descending eigenvalues of a reduced state plus the counting promise.

    ``lambda_star`` is the claimed upper bound on the largest value and
    ``delta`` the threshold Schmidt coefficients are counted against.
    """

    values: np.ndarray
    lambda_star: float | None = None
    delta: float | None = None

    def __post_init__(self):
        vals = np.sort(np.asarray(self.values, dtype=float).reshape(-1))[::-1].copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        lam = self.lambda_star
        if lam is None:
            lam = float(vals[0]) if vals.size else 0.0
            object.__setattr__(self, "lambda_star", lam)
        if vals.size and vals[0] > lam + 1e-10:
            raise ArgumentError(f"largest value {vals[0]} exceeds lambda_star {lam}")
        if self.delta is not None and not self.delta > 0:
            raise ArgumentError("delta must be positive")

    def with_promise(self, lambda_star: float, delta: float) -> "SchmidtSpectrum":
        return SchmidtSpectrum(self.values, lambda_star, delta)

    def scaled(self, factor: float) -> "SchmidtSpectrum":
        delta = None if self.delta is None else self.delta * factor
        return SchmidtSpectrum(self.values * factor, self.lambda_star * factor, delta)


def _pure_reduced(amps: np.ndarray, n: int, keep: Sequence[int]) -> np.ndarray:
    """Partial trace of ``|amps><amps|``; leading axes beyond the n qubits are traced."""
    lead = amps.shape[: amps.ndim - 1] if amps.ndim > 1 else ()
    psi = amps.reshape(lead + (2,) * n)
    off = len(lead)
    src = [off + n - 1 - q for q in reversed(keep)]
    moved = np.moveaxis(psi, src, list(range(len(keep))))
    m = moved.reshape(2 ** len(keep), -1)
    return m @ m.conj().T


def _check_keep(keep: Sequence[int], n: int) -> list[int]:
    keep = [int(q) for q in keep]
    if not keep:
        raise ArgumentError("keep set must be non-empty")
    if len(set(keep)) != len(keep) or any(not 0 <= q < n for q in keep):
        raise ArgumentError(f"invalid keep set {keep} for {n} qubits")
    return keep


def reduced_density_matrix(psi: Statevector, keep: Sequence[int]) -> DensityMatrix:
    """Trace out every qubit not in ``keep``; ``keep[0]`` becomes the LSB."""
    keep = _check_keep(keep, psi.num_qubits)
    rho = _pure_reduced(psi.amplitudes, psi.num_qubits, keep)
    rho = (rho + rho.conj().T) / 2
    return DensityMatrix(len(keep), rho, normalized=psi.normalized)


def schmidt_spectrum(rho: DensityMatrix) -> SchmidtSpectrum:
    vals = np.linalg.eigvalsh(rho.entries)
    if vals.size and vals.min() < -CLAMP_TOL:
        raise NotPSDError(f"eigenvalue {vals.min():.3e} is negative")
    vals = np.where(vals < 0, 0.0, vals)
    return SchmidtSpectrum(vals)


def uev(psi: Statevector, projector: Sequence[tuple[int, int]]) -> float:
    """``<psi|P|psi>`` on raw amplitudes for a product projector on basis outcomes."""
    n = psi.num_qubits
    t = psi.amplitudes.reshape((2,) * n)
    idx: list = [slice(None)] * n
    seen = set()
    for q, outcome in projector:
        if not 0 <= q < n or q in seen or outcome not in (0, 1):
            raise ArgumentError(f"bad projector entry ({q}, {outcome})")
        seen.add(q)
        idx[n - 1 - q] = outcome
    sub = t[tuple(idx)]
    return float(np.vdot(sub, sub).real)


def prepare_max_entangled(n: int) -> Statevector:
    """(1/sqrt(2^n)) sum_x |x>|x> on 2n qubits."""
    if n < 1:
        raise ArgumentError("n must be at least 1")
    _check_cap(2 * n)
    amps = np.zeros(4**n, dtype=complex)
    x = np.arange(2**n)
    amps[(x << n) | x] = 2 ** (-n / 2)
    return Statevector(2 * n, amps)


def apply_circuit(circuit: Circuit, psi: Statevector) -> Statevector:
    if circuit.num_qubits != psi.num_qubits:
        raise DimensionError(
            f"circuit width {circuit.num_qubits} != state width {psi.num_qubits}"
        )
    out = simulate(circuit, psi.amplitudes)
    has_projection = any(isinstance(s, Project) for s in circuit.steps)
    normalized = psi.normalized and not has_projection
    return Statevector(psi.num_qubits, out, normalized)


def post_selected_block(
    circuit: Circuit,
    system: Sequence[int],
    postselect: dict[int, int] | None = None,
) -> np.ndarray:
    """Operator on ``system`` left after post-selecting every other qubit.

    Columns are probed with every non-system qubit starting in |0>. Unless
    ``postselect`` says otherwise, those qubits are post-selected on 0.
    """
    n = circuit.num_qubits
    system = list(system)
    others = [q for q in range(n) if q not in system]
    want = {q: 0 for q in others}
    if postselect:
        want.update(postselect)
    _check_cap(n + len(system))
    dim_s = 2 ** len(system)
    cols = np.arange(dim_s)
    full_index = np.zeros(dim_s, dtype=np.int64)
    for j, q in enumerate(system):
        full_index |= ((cols >> j) & 1) << q
    amps = np.zeros((2**n, dim_s), dtype=complex)
    amps[full_index, cols] = 1.0
    out = simulate(circuit, amps)
    base = sum(v << q for q, v in want.items() if q not in system)
    rows = base | full_index
    return out[rows, :]


def simulate_sparse(circuit: Circuit, initial: dict[int, complex] | None = None) -> dict[int, complex]:
    """Dictionary-backed simulation for circuits whose state stays on few basis states.

    Width is not capped, which makes it suitable for wide but sparse registers
    such as unary counters.
    """
    state = dict(initial) if initial is not None else {0: 1.0 + 0j}
    for step in circuit.steps:
        if isinstance(step, Project):
            state = {x: a for x, a in state.items() if (x >> step.qubit) & 1 == step.outcome}
            continue
        k = len(step.targets)
        new: dict[int, complex] = {}
        for x, amp in state.items():
            if any((x >> q) & 1 != v for q, v in zip(step.controls, step.control_values)):
                new[x] = new.get(x, 0) + amp
                continue
            local = sum(((x >> q) & 1) << j for j, q in enumerate(step.targets))
            base = x
            for q in step.targets:
                base &= ~(1 << q)
            column = step.matrix[:, local]
            for out in range(2**k):
                if column[out] == 0:
                    continue
                y = base
                for j, q in enumerate(step.targets):
                    y |= ((out >> j) & 1) << q
                new[y] = new.get(y, 0) + amp * column[out]
        state = {x: a for x, a in new.items() if a != 0}
    return state
