"""Desk-scale simulation of counting entanglement spectra.

Modules: ``core`` (statevector simulator), ``cnf`` (2-CNF reduction),
``spectrum`` (threshold counting), ``qpe`` (phase-estimation counter),
``lcu`` (truncated-Taylor LCU), ``history`` (history-state Hamiltonian)
and ``cli``.
"""
from .cnf import (
    EXAMPLE_FORMULA,
    CnfFormula,
    DiagonalHamiltonian,
    brute_force_count,
    build_hamiltonian,
    hamiltonian_to_density,
    parse_dimacs,
    random_formula,
)
from .core import (
    Circuit,
    DensityMatrix,
    Gate,
    Project,
    SchmidtSpectrum,
    Statevector,
    apply_circuit,
    prepare_max_entangled,
    reduced_density_matrix,
    schmidt_spectrum,
    uev,
)
from .errors import EntspecError
from .spectrum import CountPromise, count_above, count_ground_degeneracy

__all__ = [
    "EXAMPLE_FORMULA",
    "Circuit",
    "CnfFormula",
    "CountPromise",
    "DensityMatrix",
    "DiagonalHamiltonian",
    "EntspecError",
    "Gate",
    "Project",
    "SchmidtSpectrum",
    "Statevector",
    "apply_circuit",
    "brute_force_count",
    "build_hamiltonian",
    "count_above",
    "count_ground_degeneracy",
    "hamiltonian_to_density",
    "parse_dimacs",
    "prepare_max_entangled",
    "random_formula",
    "reduced_density_matrix",
    "schmidt_spectrum",
    "uev",
]

__version__ = "0.1.0"
