import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from entspec.core import Circuit, DensityMatrix, Statevector, prepare_max_entangled, reduced_density_matrix, simulate
from entspec.errors import ArgumentError, PrepError, ScaleError, TruncationError
from entspec.gates import CNOT_LOCAL, H, real_state_prep
from entspec.lcu import (
    TaylorLayout,
    TaylorPlan,
    assemble_exp,
    assemble_exp_circuit,
    choose_K,
    encode_A,
    exact_exp,
    pauli_decompose,
    taylor_error,
    taylor_unitary,
    truncation_bound,
    unary_superposition,
    v_rho_t,
    v_taylor,
    v_taylor_block,
)
from oracles import random_density, smallest_K


def _dm(m):
    return DensityMatrix(int(math.log2(len(m))), np.asarray(m, dtype=complex))


DIAG = _dm(np.diag([0.75, 0.25]))


def test_pauli_examples():
    assert np.allclose(pauli_decompose(_dm(np.eye(2) / 2)).coefficients, [0.5, 0, 0, 0])
    assert np.allclose(pauli_decompose(_dm(np.diag([1, 0]))).coefficients, [0.5, 0, 0, 0.5])


def test_pauli_recomposition():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        rho = random_density(n, rng)
        A = pauli_decompose(rho)
        assert A.coefficients[0] == pytest.approx(1 / 2**n, abs=1e-15)
        assert np.max(np.abs(A.recompose() - rho)) < 1e-12


def test_pauli_scale_limit():
    with pytest.raises(ScaleError):
        pauli_decompose(np.eye(2**7) / 2**7)


def test_v_rho_t_block():
    rng = np.random.default_rng(1)
    for n, t in ((1, 1.0), (2, -0.7)):
        rho = random_density(n, rng)
        enc = v_rho_t(pauli_decompose(rho), t)
        assert enc.scale == pytest.approx(1 / (2**n * pauli_decompose(rho).norm * 1j * t))
        assert np.linalg.norm(enc.normalized_block() - 1j * t * rho, 2) < 1e-10


def test_v_rho_t_identity_and_kernel():
    enc = v_rho_t(pauli_decompose(_dm(np.eye(2) / 2)), 1.0)
    block = enc.block()
    assert np.allclose(block, block[0, 0] * np.eye(2), atol=1e-12)
    proj = v_rho_t(pauli_decompose(_dm(np.diag([1, 0]))), 1.0).block()
    assert np.allclose(proj @ [0, 1], 0, atol=1e-12)
    with pytest.raises(ArgumentError):
        v_rho_t(pauli_decompose(_dm(np.diag([1, 0]))), 0.0)


def test_v_rho_t_eigenvector_scaling():
    rng = np.random.default_rng(2)
    rho = random_density(2, rng)
    vals, vecs = np.linalg.eigh(rho)
    block = v_rho_t(pauli_decompose(rho), 0.4).normalized_block()
    for lam, v in zip(vals, vecs.T):
        assert np.allclose(block @ v, 1j * 0.4 * lam * v, atol=1e-10)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_v_taylor_block_powers(k):
    rng = np.random.default_rng(3)
    rho = random_density(1, rng)
    t = 0.8
    enc = v_taylor_block(pauli_decompose(rho), t, 2, k)
    expected = np.linalg.matrix_power(1j * t * rho, k) / math.factorial(k)
    assert np.linalg.norm(enc.normalized_block() - expected, 2) < 1e-9


def test_v_taylor_common_factor_matches_v_rho_t():
    rng = np.random.default_rng(4)
    A = pauli_decompose(random_density(1, rng))
    t = 2.5  # c = 1 above |t| = 1
    one = v_taylor_block(A, t, 1, 1)
    assert one.scale == pytest.approx(v_rho_t(A, t).scale)
    assert np.linalg.norm(one.block() - v_rho_t(A, t).block(), 2) < 1e-10


def test_v_taylor_errors():
    A = pauli_decompose(DIAG)
    with pytest.raises(ArgumentError):
        v_taylor(A, 1.0, 0)
    with pytest.raises(ArgumentError):
        v_taylor_block(A, 1.0, 2, 3)
    with pytest.raises(ArgumentError):
        v_taylor(pauli_decompose(np.diag([1.0, 0.5])), 1.0, 1)


def test_layout_width():
    lay = TaylorLayout(2, 3)
    assert lay.num_qubits == 2 + 12 + 6
    assert lay.unary_qubits == [17, 18, 19]


def _unary_amps(K):
    return simulate(unary_superposition(K), np.eye(2 ** max(K, 1))[:, 0])


def test_unary_superposition_examples():
    out = _unary_amps(3)
    expected = np.zeros(8)
    expected[[0b000, 0b001, 0b011, 0b111]] = 0.5
    assert np.allclose(out, expected, atol=1e-12)
    assert np.allclose(_unary_amps(0), [1, 0], atol=1e-12)
    out7 = _unary_amps(7)
    support = [(1 << k) - 1 for k in range(8)]
    assert np.allclose(out7[support], 1 / math.sqrt(8), atol=1e-12)
    assert np.sum(np.abs(out7) ** 2) == pytest.approx(1)


def test_choose_K_examples():
    assert choose_K(1.0, 1e-8) == 12 == smallest_K(1.0, 1e-8)
    assert choose_K(0.0, 1e-8) == 0
    for norm in (0.3, 1.0, 2.5, 7.0):
        for eps in (1e-3, 1e-8, 1e-12):
            assert choose_K(norm, eps) == smallest_K(norm, eps)
    with pytest.raises(ArgumentError):
        choose_K(1.0, 1.0)


def test_choose_K_monotone():
    norms = np.linspace(0.01, 10, 40)
    ks = [choose_K(x, 1e-6) for x in norms]
    assert all(a <= b for a, b in zip(ks, ks[1:]))
    ks = [choose_K(2.0, e) for e in (1e-2, 1e-4, 1e-8, 1e-12)]
    assert all(a <= b for a, b in zip(ks, ks[1:]))


def test_taylor_plan():
    plan = TaylorPlan.for_time(math.pi, 0.75, 1e-8)
    assert truncation_bound(plan.norm_bound, plan.K) <= 1e-8
    rec = json.loads(plan.to_json(1e-9))
    assert set(rec) == {"K", "t", "norm_bound", "epsilon", "achieved_error"}
    with pytest.raises(ArgumentError):
        TaylorPlan(2, 1.0, 1e-8, 1.0)


def test_assemble_exp_diag_at_pi():
    A = pauli_decompose(DIAG)
    plan = TaylorPlan.for_time(math.pi, 1.0, 1e-8)
    res = assemble_exp(A, plan, extraction="blocks")
    exact = expm(1j * math.pi * np.diag([0.75, 0.25]))
    assert np.linalg.norm(res.operator - exact, 2) <= 1e-8
    assert res.achieved_error <= 1e-8
    u = res.operator
    assert np.linalg.norm(u.conj().T @ u - np.eye(2), 2) <= 2 * 1e-8


def test_assemble_exp_t_zero():
    res = assemble_exp(pauli_decompose(DIAG), TaylorPlan.for_time(0.0, 1.0, 1e-8))
    assert np.allclose(res.operator, np.eye(2))


def test_circuit_and_block_extraction_agree():
    rng = np.random.default_rng(5)
    A = pauli_decompose(random_density(1, rng))
    enc = assemble_exp_circuit(A, 0.5, 2)
    from entspec.lcu import _blocks_extraction

    assert np.linalg.norm(enc.block() - _blocks_extraction(A, 0.5, 2), 2) < 1e-12
    expected = sum(np.linalg.matrix_power(1j * 0.5 * A.recompose(), k) / math.factorial(k) for k in range(3))
    assert np.linalg.norm(enc.normalized_block() - expected, 2) < 1e-10


def test_assembled_scale_matches_composed_factors():
    rng = np.random.default_rng(6)
    A = pauli_decompose(random_density(1, rng))
    t, K = 0.6, 3
    c = max(1.0, 1 / t)
    expected = (1 / (1j * t * 2 * A.norm * c)) ** K * 2 ** (-K / 2) / math.sqrt(K + 1)
    assert abs(assemble_exp_circuit(A, t, K).scale - expected) < 1e-12


def test_error_decreases_once_K_exceeds_norm():
    rng = np.random.default_rng(7)
    for t in (math.pi / 4, math.pi, 4 * math.pi):
        A = pauli_decompose(random_density(1, rng))
        norm = t * float(np.max(np.linalg.eigvalsh(A.recompose())))
        start = math.ceil(norm)
        errs = [taylor_error(A, t, K) for K in range(start, start + 12)]
        assert all(b < a for a, b in zip(errs, errs[1:]))


def test_truncation_error_reported():
    A = pauli_decompose(DIAG)
    plan = TaylorPlan(1, math.pi, 0.5, 0.1)  # understated norm
    with pytest.raises(TruncationError) as info:
        assemble_exp(A, plan)
    assert info.value.achieved > 0.5


def test_taylor_unitary_long_time():
    rng = np.random.default_rng(8)
    h = random_density(2, rng) * 1.7
    u = taylor_unitary(h, -20.0, 1e-9)
    assert np.linalg.norm(u - expm(-20j * h), 2) < 1e-8


def test_exact_exp_accepts_arrays():
    assert np.allclose(exact_exp(np.diag([1.0, 0.0]), math.pi), np.diag([-1, 1]))


def _bell_prep():
    prep = Circuit(3)
    prep.gate(H, (0,))
    prep.gate(H, (1,))
    prep.gate(CNOT_LOCAL, (2, 1))
    return prep


def test_encode_A_bell():
    xi = prepare_max_entangled(1)
    enc = encode_A(xi, _bell_prep(), [0], 0)
    a = pauli_decompose(reduced_density_matrix(xi, [0])).coefficients
    assert enc.factor == pytest.approx(1 / math.sqrt(2))
    assert np.allclose(enc.output(), enc.factor * a, atol=1e-12)


def test_encode_A_random_states():
    rng = np.random.default_rng(9)
    for keep in ([0], [1], [0, 2]):
        amps = rng.standard_normal(8)
        amps /= np.linalg.norm(amps)
        xi = Statevector(3, amps)
        prep = Circuit(4)
        prep.gate(H, (0,))
        prep.extend(real_state_prep(amps, [1, 2, 3]))
        enc = encode_A(xi, prep, keep, 0)
        a = pauli_decompose(reduced_density_matrix(xi, keep)).coefficients
        assert np.allclose(enc.output(), enc.factor * a, atol=1e-10)


def test_encode_A_rejects_bad_prep():
    xi = prepare_max_entangled(1)
    prep = Circuit(3)
    prep.gate(H, (1,))
    with pytest.raises(PrepError):
        encode_A(xi, prep, [0], 0)
    with pytest.raises(ArgumentError):
        encode_A(xi, Circuit(2), [0], 0)


def test_prep_branch_orthogonal_to_xi_complement():
    # <0, xi_perp| V |0, 0> vanishes for every xi_perp orthogonal to xi
    prep = _bell_prep()
    out = simulate(prep, np.eye(8)[:, 0])
    xi = prepare_max_entangled(1).amplitudes
    basis = np.linalg.svd(xi.reshape(1, -1))[2][1:].conj()
    flag0 = out[0::2]
    for perp in basis:
        assert abs(np.vdot(perp, flag0)) < 1e-12
