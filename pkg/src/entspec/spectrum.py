"""Threshold counting on entanglement spectra and on Hamiltonian spectra."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .cnf import DiagonalHamiltonian
from .core import DensityMatrix, SchmidtSpectrum, schmidt_spectrum
from .errors import ArgumentError, PromiseViolation

__all__ = [
    "CountPromise",
    "SchmidtSpectrum",
    "count_above",
    "count_ground_degeneracy",
    "entanglement_hamiltonian_spectrum",
    "midgap_delta",
    "polynomial_delta",
    "check_delta_polynomial",
    "spectrum_csv",
    "count_report",
]

DEFAULT_ETA = 0.25
EIG_TOL = 1e-9


@dataclass(frozen=True)
class CountPromise:
    """No eigenvalue lies strictly between ``b`` (threshold) and ``a``."""

    a: float
    b: float
    min_gap: float = 0.0

    def __post_init__(self):
        if not self.a > self.b:
            raise ArgumentError("promise needs a > b")
        if self.a - self.b < self.min_gap:
            raise ArgumentError(f"gap {self.a - self.b} below the required {self.min_gap}")

    @property
    def gap(self) -> float:
        return self.a - self.b


def count_above(s: SchmidtSpectrum, eta: float = DEFAULT_ETA) -> int:
    """|{a : lambda_a > delta}|, refusing to answer if the promise window is occupied."""
    if s.delta is None:
        raise ArgumentError("spectrum carries no delta to count against")
    if not 0 <= eta < 1:
        raise ArgumentError("eta must lie in [0, 1)")
    lo, hi = s.delta * (1 - eta), s.delta * (1 + eta)
    inside = s.values[(s.values >= lo) & (s.values <= hi)]
    if inside.size:
        raise PromiseViolation(
            f"eigenvalue {inside[0]:.6g} inside promise window [{lo:.6g}, {hi:.6g}]",
            offending=float(inside[0]),
        )
    return int(np.count_nonzero(s.values > s.delta))


def _eigenvalues(h) -> np.ndarray:
    if isinstance(h, DiagonalHamiltonian):
        return h.eigenvalues()
    m = np.asarray(h, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ArgumentError("Hamiltonian must be a square matrix")
    if not np.allclose(m, m.conj().T, atol=1e-10, rtol=0):
        raise ArgumentError("Hamiltonian is not Hermitian")
    return np.linalg.eigvalsh(m)


def count_ground_degeneracy(h, p: CountPromise) -> int:
    """Number of eigenvalues <= b, with multiplicity.

    Dense eigensolvers return a or b only up to rounding, so values within
    EIG_TOL of either end count as sitting on it.
    """
    vals = _eigenvalues(h)
    bad = vals[(vals > p.b + EIG_TOL) & (vals < p.a - EIG_TOL)]
    if bad.size:
        raise PromiseViolation(
            f"eigenvalue {bad[0]:.6g} inside ({p.b}, {p.a})", offending=float(bad[0])
        )
    return int(np.count_nonzero(vals <= p.b + EIG_TOL))


def entanglement_hamiltonian_spectrum(rho: DensityMatrix | SchmidtSpectrum) -> np.ndarray:
    """Entanglement energies -ln(lambda) of the non-zero spectrum, ascending."""
    s = rho if isinstance(rho, SchmidtSpectrum) else schmidt_spectrum(rho)
    positive = s.values[s.values > 0]
    return np.sort(-np.log(positive))


def midgap_delta(n: int, num_clauses: int) -> float:
    """Threshold halfway into the gap (0, 1/(2^(n-2) #C)) of a formula's density matrix."""
    return 1.0 / (2.0 ** (n - 2) * num_clauses * 2)


def polynomial_delta(lambda_star: float, n: int, exponent: int) -> float:
    return lambda_star / float(n) ** exponent


def check_delta_polynomial(s: SchmidtSpectrum, n: int, exponent: int) -> None:
    """Raise unless delta >= lambda_star / n^exponent."""
    if s.delta is None or s.delta < polynomial_delta(s.lambda_star, n, exponent) * (1 - 1e-12):
        raise PromiseViolation(
            f"delta {s.delta} is below lambda_star/n^{exponent}", offending=s.delta
        )


def spectrum_csv(s: SchmidtSpectrum) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "eigenvalue"])
    for i, v in enumerate(s.values):
        w.writerow([i, repr(float(v))])
    return buf.getvalue()


def count_report(s: SchmidtSpectrum, n: int, eta: float = DEFAULT_ETA) -> dict:
    try:
        count, ok = count_above(s, eta), True
    except PromiseViolation:
        count, ok = None, False
    return {
        "n": n,
        "lambda_star": s.lambda_star,
        "delta": s.delta,
        "count": count,
        "promise_ok": ok,
    }


def count_report_json(s: SchmidtSpectrum, n: int, eta: float = DEFAULT_ETA) -> str:
    rep = count_report(s, n, eta)
    return json.dumps(rep, sort_keys=True)


def log_threshold(delta: float) -> float:
    return -math.log(delta)
