"""2-CNF formulas, brute-force model counting and the clause-penalty Hamiltonian.

Assignment indices put variable 0 (x1) in the most significant bit, so the
index of ``x1 x2 x3`` reads like the written bitstring. In a qubit register
variable ``v`` therefore lives on qubit ``n - 1 - v``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import DensityMatrix
from .errors import ArgumentError, DegenerateError, FormatError, ScaleError

Literal = tuple[int, bool]  # (variable index, negated)
Clause = tuple[Literal, Literal]

MAX_BRUTE_FORCE_VARS = 24


@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple[Clause, ...]
    max_clauses: int | None = None

    def __post_init__(self):
        if self.num_vars < 1:
            raise ArgumentError("a formula needs at least one variable")
        clauses = tuple(
            tuple((int(v), bool(neg)) for v, neg in clause) for clause in self.clauses
        )
        if not clauses:
            raise ArgumentError("a formula needs at least one clause")
        for clause in clauses:
            if len(clause) != 2:
                raise ArgumentError(f"clause {clause} does not have exactly two literals")
            for v, _ in clause:
                if not 0 <= v < self.num_vars:
                    raise ArgumentError(f"variable {v} out of range for n={self.num_vars}")
        cap = self.max_clauses if self.max_clauses is not None else self.num_vars**3
        if len(clauses) > max(cap, 1):
            raise ArgumentError(f"{len(clauses)} clauses exceeds the cap of {cap}")
        object.__setattr__(self, "clauses", clauses)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.num_vars} {self.num_clauses}"]
        for clause in self.clauses:
            lits = " ".join(str(-(v + 1) if neg else v + 1) for v, neg in clause)
            lines.append(f"{lits} 0")
        return "\n".join(lines) + "\n"

    def relabel(self, perm: Iterable[int]) -> "CnfFormula":
        """Rename variable ``v`` to ``perm[v]``."""
        perm = list(perm)
        if sorted(perm) != list(range(self.num_vars)):
            raise ArgumentError("relabelling must be a permutation of the variables")
        clauses = tuple(tuple((perm[v], neg) for v, neg in c) for c in self.clauses)
        return CnfFormula(self.num_vars, clauses, self.max_clauses)


@dataclass(frozen=True, eq=False)
class DiagonalHamiltonian:
    """H = sum_x N_x |x><x| with N_x the number of clauses x violates."""

    num_vars: int
    num_clauses: int
    violations: np.ndarray

    def __post_init__(self):
        viol = np.asarray(self.violations, dtype=np.int64).reshape(-1)
        if viol.shape[0] != 2**self.num_vars:
            raise ArgumentError("violations vector must have length 2^n")
        if viol.min() < 0 or viol.max() > self.num_clauses:
            raise ArgumentError("violation counts must lie in [0, #C]")
        viol.setflags(write=False)
        object.__setattr__(self, "violations", viol)

    @property
    def trace(self) -> int:
        return int(self.violations.sum())

    def eigenvalues(self) -> np.ndarray:
        return self.violations.astype(float)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.violations.astype(complex))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["assignment", "bitstring", "violations"])
        for x, nx in enumerate(self.violations):
            w.writerow([x, format(x, f"0{self.num_vars}b"), int(nx)])
        return buf.getvalue()


def parse_dimacs(text: str) -> CnfFormula:
    """Parse width-2 DIMACS CNF; variables become 0-based."""
    header = None
    literals: list[int] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            parts = line.split()
            if header is not None or len(parts) != 4 or parts[1] != "cnf":
                raise FormatError(f"malformed header: {raw!r}")
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError as exc:
                raise FormatError(f"malformed header: {raw!r}") from exc
            if header[0] < 1 or header[1] < 0:
                raise FormatError(f"malformed header: {raw!r}")
            continue
        if header is None:
            raise FormatError("clause data before the 'p cnf' header")
        try:
            literals.extend(int(tok) for tok in line.split())
        except ValueError as exc:
            raise FormatError(f"non-integer literal in {raw!r}") from exc
    if header is None:
        raise FormatError("missing 'p cnf' header")
    n, m = header
    clauses: list[Clause] = []
    current: list[int] = []
    for lit in literals:
        if lit == 0:
            if len(current) != 2:
                raise FormatError(f"clause {current} has width {len(current)}, expected 2")
            clauses.append(tuple((abs(x) - 1, x < 0) for x in current))
            current = []
            continue
        if abs(lit) > n:
            raise FormatError(f"literal {lit} exceeds declared variable count {n}")
        current.append(lit)
    if current:
        raise FormatError("last clause is not terminated by 0")
    if len(clauses) != m:
        raise FormatError(f"header declares {m} clauses, found {len(clauses)}")
    if m == 0:
        raise FormatError("formula has no clauses")
    return CnfFormula(n, tuple(clauses), max_clauses=max(m, n**3))


def _assignment_bits(n: int) -> np.ndarray:
    """bits[v, x] = value of variable v in assignment x (variable 0 is the MSB)."""
    x = np.arange(2**n, dtype=np.int64)
    return np.array([(x >> (n - 1 - v)) & 1 for v in range(n)], dtype=bool)


def brute_force_count(f: CnfFormula) -> int:
    """Number of satisfying assignments, by evaluating every clause on every x."""
    if f.num_vars > MAX_BRUTE_FORCE_VARS:
        raise ScaleError(f"brute force limited to n <= {MAX_BRUTE_FORCE_VARS}")
    bits = _assignment_bits(f.num_vars)
    sat = np.ones(2**f.num_vars, dtype=bool)
    for clause in f.clauses:
        value = np.zeros_like(sat)
        for v, neg in clause:
            value |= ~bits[v] if neg else bits[v]
        sat &= value
    return int(sat.sum())


def unsatisfying_pattern(clause: Clause) -> dict[int, int] | None:
    """Local assignment violating the clause, or None for a tautology."""
    pattern: dict[int, int] = {}
    for v, neg in clause:
        want = 1 if neg else 0
        if pattern.get(v, want) != want:
            return None
        pattern[v] = want
    return pattern


def build_hamiltonian(f: CnfFormula) -> DiagonalHamiltonian:
    n = f.num_vars
    if n > MAX_BRUTE_FORCE_VARS:
        raise ScaleError(f"dense violations vector limited to n <= {MAX_BRUTE_FORCE_VARS}")
    x = np.arange(2**n, dtype=np.int64)
    viol = np.zeros(2**n, dtype=np.int64)
    for clause in f.clauses:
        pattern = unsatisfying_pattern(clause)
        if pattern is None:
            continue
        hit = np.ones(2**n, dtype=bool)
        for v, s in pattern.items():
            hit &= ((x >> (n - 1 - v)) & 1) == s
        viol += hit
    return DiagonalHamiltonian(n, f.num_clauses, viol)


def lambda_star(n: int) -> float:
    """Upper bound 1/2^(n-2) on the largest eigenvalue of H/Tr(H)."""
    return 2.0 ** (2 - n)


def spectral_gap(n: int, num_clauses: int) -> float:
    """Smallest non-zero eigenvalue 1/(2^(n-2) #C) of H/Tr(H)."""
    return 1.0 / (2.0 ** (n - 2) * num_clauses)


def hamiltonian_to_density(h: DiagonalHamiltonian) -> DensityMatrix:
    tr = h.trace
    if tr == 0:
        raise DegenerateError(
            f"every assignment satisfies the formula; the count is 2^{h.num_vars} = {2**h.num_vars}"
        )
    return DensityMatrix(h.num_vars, np.diag(h.violations / tr).astype(complex))


def random_formula(n: int, num_clauses: int, rng: np.random.Generator) -> CnfFormula:
    """Random 2-CNF with two distinct variables and random signs per clause."""
    if n < 2:
        raise ArgumentError("random 2-CNF needs n >= 2")
    clauses = []
    for _ in range(num_clauses):
        i, j = rng.choice(n, size=2, replace=False)
        ni, nj = rng.integers(0, 2, size=2)
        clauses.append(((int(i), bool(ni)), (int(j), bool(nj))))
    return CnfFormula(n, tuple(clauses), max_clauses=max(num_clauses, n**3))


EXAMPLE_FORMULA = CnfFormula(3, (((0, True), (1, False)), ((0, False), (2, True))))
