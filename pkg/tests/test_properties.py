import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

import invariants
from entspec.cnf import brute_force_count, build_hamiltonian, hamiltonian_to_density, random_formula
from entspec.core import SchmidtSpectrum, schmidt_spectrum
from entspec.lcu import TaylorPlan, assemble_exp, choose_K, pauli_decompose
from entspec.qpe import run_counting_pipeline
from entspec.spectrum import CountPromise, count_above, count_ground_degeneracy, midgap_delta
from oracles import enumerate_violations, random_density

seeds = st.integers(min_value=0, max_value=2**32 - 1)
PROPS = settings(derandomize=True, max_examples=100, deadline=None)
SLOW = settings(derandomize=True, max_examples=20, deadline=None)


def _formula(seed, n_lo=2, n_hi=8, per_var=3):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_lo, n_hi + 1))
    return random_formula(n, int(rng.integers(1, per_var * n + 1)), rng), rng


@PROPS
@given(seeds)
def test_unitarity(seed):
    invariants.check_unitarity(seed)


@PROPS
@given(seeds)
def test_post_selection_matches_projector_product(seed):
    invariants.check_post_selection(seed)


@PROPS
@given(seeds)
def test_schmidt_symmetry_and_trace(seed):
    invariants.check_schmidt_symmetry(seed)


@PROPS
@given(seeds)
def test_pauli_recomposition(seed):
    invariants.check_pauli_recomposition(seed)


@PROPS
@given(seeds)
def test_count_monotone_in_delta(seed):
    invariants.check_count_monotone(seed)


@PROPS
@given(seeds)
def test_count_scaling_covariance(seed):
    invariants.check_scaling_covariance(seed)


@PROPS
@given(seeds)
def test_ground_count_is_model_count(seed):
    f, _ = _formula(seed, n_hi=10)
    h = build_hamiltonian(f)
    assert int(np.sum(h.violations == 0)) == brute_force_count(f)
    assert h.violations.tolist() == enumerate_violations(f.num_vars, f.clauses)


@PROPS
@given(seeds)
def test_violation_trace_identity(seed):
    f, _ = _formula(seed)
    assert int(build_hamiltonian(f).violations.sum()) == 2 ** (f.num_vars - 2) * f.num_clauses


@PROPS
@given(seeds)
def test_relabel_permutes_violations(seed):
    f, rng = _formula(seed, n_hi=6)
    n = f.num_vars
    perm = [int(p) for p in rng.permutation(n)]
    base = build_hamiltonian(f).violations
    moved = build_hamiltonian(f.relabel(perm)).violations
    for x in range(2**n):
        bits = [(x >> (n - 1 - v)) & 1 for v in range(n)]
        y = sum(bits[v] << (n - 1 - perm[v]) for v in range(n))
        assert moved[y] == base[x]


@PROPS
@given(seeds)
def test_cgd_plus_ces_is_dimension(seed):
    f, _ = _formula(seed, n_hi=10)
    n = f.num_vars
    h = build_hamiltonian(f)
    if h.trace == 0:
        return
    s = schmidt_spectrum(hamiltonian_to_density(h)).with_promise(2.0 ** (2 - n), midgap_delta(n, f.num_clauses))
    assert count_ground_degeneracy(h, CountPromise(1.0, 0.0)) + count_above(s) == 2**n


@SLOW
@given(seeds)
def test_pipeline_post_selection_accounting(seed):
    f, _ = _formula(seed, n_hi=3, per_var=2)
    res = run_counting_pipeline(build_hamiltonian(f), CountPromise(1.0, 0.0))
    assert abs(res.post_selection_probability + res.discarded_weight - 1) < 1e-12
    assert abs(res.uev - brute_force_count(f)) < 1e-9


@PROPS
@given(st.floats(min_value=0.0, max_value=30.0), st.floats(min_value=0.0, max_value=30.0),
       st.sampled_from([1e-2, 1e-6, 1e-10]))
def test_choose_K_monotone(x, y, eps):
    lo, hi = sorted((x, y))
    assert choose_K(lo, eps) <= choose_K(hi, eps)
    K = choose_K(hi, eps)
    assert hi == 0 or (math.e * hi / (K + 1)) ** (K + 1) <= eps


@SLOW
@given(seeds, st.sampled_from([math.pi / 4, 1.0, math.pi]))
def test_assembled_exponential_is_nearly_unitary(seed, t):
    rng = np.random.default_rng(seed)
    rho = random_density(int(rng.integers(1, 3)), rng)
    A = pauli_decompose(rho)
    lam = float(np.linalg.eigvalsh(rho).max())
    plan = TaylorPlan.for_time(t, lam, 1e-8)
    u = assemble_exp(A, plan, extraction="blocks").operator
    dev = np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]), 2)
    assert dev <= 2 * plan.epsilon


@PROPS
@given(seeds)
def test_scaled_spectrum_keeps_promise(seed):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0, 1, size=int(rng.integers(1, 9)))
    s = SchmidtSpectrum(vals, float(vals.max()), float(vals.max()) / 2)
    c = float(rng.uniform(0.1, 10))
    scaled = s.scaled(c)
    assert np.allclose(scaled.values, s.values * c)
    assert scaled.lambda_star == s.lambda_star * c
