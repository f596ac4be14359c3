import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from fedqt import kernels, qsim, vqc, _fallback
from fedqt.errors import ConfigurationError


def arch(n, layers, enc=True):
    return vqc.VqcArchitecture(n, layers, enc)


def test_param_count():
    assert arch(5, 10).n_params == 50
    assert arch(11, 10, False).n_params == 110
    with pytest.raises(ConfigurationError):
        arch(0, 1)
    with pytest.raises(ConfigurationError):
        arch(2, 0)


def test_encode_zero_is_uniform():
    s = vqc.encode(arch(3, 1), np.zeros(3))
    np.testing.assert_allclose(qsim.probabilities(s), np.full(8, 1 / 8), atol=1e-15)


def test_encode_single_qubit_closed_form():
    # Ry(pi/2) H |0> = [cos(pi/4) - sin(pi/4), sin(pi/4) + cos(pi/4)] / sqrt(2) = [0, 1]
    c = s = math.sqrt(2) / 2
    expected = np.array([c - s, s + c]) / math.sqrt(2)
    np.testing.assert_allclose(expected, [0, 1], atol=1e-15)
    np.testing.assert_allclose(vqc.encode(arch(1, 1), [math.pi / 2]).amplitudes, expected, atol=1e-15)


def _reduced_density(amps, q, n):
    psi = amps.reshape([2] * n)
    psi = np.moveaxis(psi, q, 0).reshape(2, -1)
    return psi @ psi.conj().T


def test_encode_perturbation_is_local():
    a = arch(3, 1)
    x = np.array([0.3, -0.5, 0.7])
    y = x.copy()
    y[1] += 0.4
    sx, sy = vqc.encode(a, x), vqc.encode(a, y)
    for q in (0, 2):
        np.testing.assert_allclose(_reduced_density(sx.amplitudes, q, 3), _reduced_density(sy.amplitudes, q, 3), atol=1e-14)
    assert not np.allclose(_reduced_density(sx.amplitudes, 1, 3), _reduced_density(sy.amplitudes, 1, 3))


def test_encode_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        vqc.encode(arch(3, 1), np.zeros(2))
    with pytest.raises(ConfigurationError):
        vqc.encode(arch(3, 1, enc=False), np.zeros(3))


def test_variational_identity_cases():
    a = arch(2, 1)
    s = vqc.apply_variational(qsim.new_zero_state(2), a, np.zeros(2))
    np.testing.assert_allclose(s.amplitudes, [1, 0, 0, 0])
    a = arch(4, 3)
    s = vqc.apply_variational(vqc.hadamard_layer(a), a, np.zeros(12))
    np.testing.assert_allclose(qsim.probabilities(s), np.full(16, 1 / 16), atol=1e-14)
    with pytest.raises(ConfigurationError):
        vqc.apply_variational(s, a, np.zeros(11))


@pytest.mark.parametrize("n", range(1, 7))
def test_cnot_chain_index_matches_gate_sequence(n):
    rng = np.random.default_rng(n)
    v = rng.normal(size=2 ** n)
    s = qsim.StateVector(n, v.astype(complex))
    for q in range(n - 1):
        s = qsim.apply_cnot(s, q, q + 1)
    np.testing.assert_array_equal(s.amplitudes.real, v[vqc.cnot_chain_source(n)])


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 4), layers=st.integers(1, 3), seed=st.integers(0, 2 ** 32 - 1))
def test_expectations_match_dense_oracle(n, layers, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-math.pi, math.pi, n)
    th = rng.uniform(-2 * math.pi, 2 * math.pi, n * layers)
    psi = oracles.circuit_unitary(n, layers, th) @ oracles.encode_state(x)
    np.testing.assert_allclose(vqc.expectations(arch(n, layers), x, th), oracles.z_expectations(psi), atol=1e-12)
    s = vqc.apply_variational(vqc.encode(arch(n, layers), x), arch(n, layers), th)
    np.testing.assert_allclose(s.amplitudes, psi, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 4), layers=st.integers(1, 3), seed=st.integers(0, 2 ** 32 - 1))
def test_basis_probs_match_dense_oracle(n, layers, seed):
    th = np.random.default_rng(seed).uniform(-2 * math.pi, 2 * math.pi, n * layers)
    psi = oracles.circuit_unitary(n, layers, th) @ oracles.kron_all([oracles.H] * n) @ oracles.zero(n)
    p = vqc.basis_probs(arch(n, layers, False), th)
    np.testing.assert_allclose(p, np.abs(psi) ** 2, atol=1e-12)
    assert abs(p.sum() - 1) < 1e-10


def test_basis_probs_examples():
    np.testing.assert_allclose(vqc.basis_probs(arch(3, 2, False), np.zeros(6)), np.full(8, 1 / 8), atol=1e-15)
    th = [math.pi, 0.0]
    psi = oracles.circuit_unitary(2, 1, th) @ oracles.kron_all([oracles.H] * 2) @ oracles.zero(2)
    np.testing.assert_allclose(vqc.basis_probs(arch(2, 1, False), th), np.abs(psi) ** 2, atol=1e-12)


def test_expectation_single_qubit_closed_form():
    # Ry(t) Ry(x) H|0> = Ry(t + x + pi/2)|0>, so <Z> = cos(x + t + pi/2) = -sin(x + t)
    rng = np.random.default_rng(5)
    a = arch(1, 1)
    assert vqc.expectations(a, [0.0], [math.pi / 2])[0] == pytest.approx(-1.0, abs=1e-15)
    for x, t in rng.uniform(-math.pi, math.pi, (50, 2)):
        assert vqc.expectations(a, [x], [t])[0] == pytest.approx(-math.sin(x + t), abs=1e-14)


def test_expectations_zero_config():
    np.testing.assert_allclose(vqc.expectations(arch(4, 2), np.zeros(4), np.zeros(8)), 0.0, atol=1e-15)


def test_expectations_bounded():
    rng = np.random.default_rng(9)
    a = arch(3, 2)
    xs = rng.uniform(-math.pi, math.pi, (10_000, 3))
    th = rng.uniform(-10, 10, (10_000, 6))
    out = vqc.batch_expectations(a, xs, th)
    assert out.shape == (10_000, 3)
    assert np.all(np.abs(out) <= 1 + 1e-12)


def test_periodicity():
    rng = np.random.default_rng(4)
    a = arch(3, 2)
    for _ in range(10):
        x, th = rng.uniform(-3, 3, 3), rng.uniform(-3, 3, 6)
        np.testing.assert_allclose(vqc.expectations(a, x, th), vqc.expectations(a, x, th + 2 * math.pi), atol=1e-10)


def test_param_shift_vs_finite_differences_examples():
    rng = np.random.default_rng(12)
    a = arch(4, 3)
    x, th = rng.uniform(-3, 3, 4), rng.uniform(-3, 3, 12)
    jac = vqc.param_shift_grad(a, x, th)
    num = oracles.central_diff(lambda t: oracles.z_expectations(oracles.circuit_unitary(4, 3, t) @ oracles.encode_state(x)), th, 1e-4)
    assert jac.shape == (4, 12)
    assert np.abs(jac - num).max() < 1e-6


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 4), layers=st.integers(1, 3), enc=st.booleans(), seed=st.integers(0, 2 ** 32 - 1))
def test_param_shift_matches_finite_differences(n, layers, enc, seed):
    rng = np.random.default_rng(seed)
    a = arch(n, layers, enc)
    th = rng.uniform(-math.pi, math.pi, a.n_params)
    x = rng.uniform(-math.pi, math.pi, n)
    if enc:
        f = lambda t: oracles.z_expectations(oracles.circuit_unitary(n, layers, t) @ oracles.encode_state(x))
    else:
        init = oracles.kron_all([oracles.H] * n) @ oracles.zero(n)
        f = lambda t: np.abs(oracles.circuit_unitary(n, layers, t) @ init) ** 2
    oracles.assert_grad_close(vqc.param_shift_grad(a, x, th), oracles.central_diff(f, th, 1e-5))


def test_probability_jacobian_rows_sum_to_zero():
    rng = np.random.default_rng(2)
    for n, layers in [(3, 2), (5, 3), (6, 2)]:
        a = arch(n, layers, False)
        jac = vqc.param_shift_grad(a, None, rng.uniform(0, 6, a.n_params))
        assert np.abs(jac.sum(axis=0)).max() < 1e-10


def test_unused_parameter_has_zero_gradient():
    # the final-layer Ry on qubit 0 cannot change <Z_1> on a 2-qubit circuit
    # since it acts after the last entangler on a different qubit
    a = arch(2, 1)
    jac = vqc.param_shift_grad(a, [0.2, -0.4], [0.7, 1.1])
    assert abs(jac[1, 0]) < 1e-12


def test_input_gradients_match_finite_differences():
    rng = np.random.default_rng(21)
    a = arch(3, 2)
    xs = rng.uniform(-2, 2, (4, 3))
    th = rng.uniform(-3, 3, 6)
    f, jt, jx = vqc.expectations_with_grads(a, xs, th)
    for b in range(4):
        np.testing.assert_allclose(f[b], vqc.expectations(a, xs[b], th), atol=1e-15)
        np.testing.assert_allclose(jt[b], vqc.param_shift_grad(a, xs[b], th), atol=1e-15)
        num = oracles.central_diff(lambda x: oracles.z_expectations(oracles.circuit_unitary(3, 2, th) @ oracles.encode_state(x)), xs[b], 1e-5)
        oracles.assert_grad_close(jx[b], num)


def test_circuit_counter_tracks_shift_evaluations():
    a = arch(5, 10)
    vqc.circuit_counter.reset()
    vqc.param_shift_grad(a, np.zeros(5), np.zeros(50))
    assert vqc.circuit_counter.count == 2 * 50


def test_backends_agree():
    rng = np.random.default_rng(8)
    for n, layers, b in [(1, 2, 3), (5, 10, 40), (11, 2, 3)]:
        psi = rng.normal(size=(b, 2 ** n))
        ang = rng.uniform(-3, 3, (b, layers, n))
        c, s = np.cos(ang / 2), np.sin(ang / 2)
        src = vqc.cnot_chain_source(n)
        ref = _fallback.evolve(psi.copy(), c, s, src)
        out = kernels.evolve(psi.copy(), c, s, src)
        np.testing.assert_allclose(out, ref, atol=1e-13)
