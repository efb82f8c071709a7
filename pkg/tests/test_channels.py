"""Choi duality, fidelities and noise models."""

import numpy as np
import pytest

from gateverify.channels import (
    ChoiState,
    QuantumChannel,
    UnitaryGate,
    apply_noise,
    average_gate_fidelity,
    channel_of_choi,
    choi_of_channel,
    depolarizing_noise,
    entanglement_fidelity,
    haar_state,
    haar_unitary,
    max_entangled_projector,
    max_entangled_state,
    no_noise,
    overrotation_noise,
    random_channel,
)
from gateverify.errors import DimensionMismatch, GateVerifyError
from gateverify.gates import gate_library
from gateverify.linalg import DenseOperator


def unitary_channel(matrix, dims=None):
    m = np.asarray(matrix, dtype=complex)
    dims = dims or (m.shape[0],)
    return QuantumChannel((DenseOperator(m, dims, dims),))


def test_choi_of_identity_is_max_entangled():
    chi = choi_of_channel(unitary_channel(np.eye(2)))
    np.testing.assert_allclose(chi.matrix.entries, max_entangled_projector(2), atol=1e-12)


def test_choi_of_fully_depolarizing():
    # Brute-force oracle: apply the 4-Kraus depolarizing set to |Phi><Phi|.
    gate = gate_library("identity", n=1, d1=2)
    channel = apply_noise(gate, depolarizing_noise(1.0))
    chi = choi_of_channel(channel)
    np.testing.assert_allclose(chi.matrix.entries, np.eye(4) / 4, atol=1e-12)


def test_choi_of_unitary_x():
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    chi = choi_of_channel(unitary_channel(x))
    xi = np.kron(x, np.eye(2))
    expected = xi @ max_entangled_projector(2) @ xi.conj().T
    np.testing.assert_allclose(chi.matrix.entries, expected, atol=1e-12)


def test_channel_of_choi_identity():
    chi = ChoiState(DenseOperator(max_entangled_projector(2), (2, 2), (2, 2)))
    channel = channel_of_choi(chi)
    rng = np.random.default_rng(3)
    rho = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    rho = rho @ rho.conj().T
    rho /= np.trace(rho)
    np.testing.assert_allclose(channel.apply(rho), rho, atol=1e-9)


def test_channel_of_choi_fully_depolarizing():
    # Evaluating the duality on a matrix basis by brute force gives L(rho) = 1/d.
    chi = ChoiState(DenseOperator(np.eye(4) / 4, (2, 2), (2, 2)))
    channel = channel_of_choi(chi)
    for i in range(2):
        rho = np.zeros((2, 2), dtype=complex)
        rho[i, i] = 1.0
        np.testing.assert_allclose(channel.apply(rho), np.eye(2) / 2, atol=1e-9)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_duality_round_trip_on_operator_basis(d):
    rng = np.random.default_rng(d)
    channel = random_channel(d, kraus_rank=3, rng=rng)
    chi = choi_of_channel(channel)
    back = channel_of_choi(chi)
    for a in range(d):
        for b in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[a, b] = 1.0
            np.testing.assert_allclose(channel.apply(e), back.apply(e), atol=1e-9)
    chi2 = choi_of_channel(back)
    np.testing.assert_allclose(chi.matrix.entries, chi2.matrix.entries, atol=1e-9)


def test_choi_marginal_invariant():
    rng = np.random.default_rng(7)
    for d in (2, 3):
        channel = random_channel(d, kraus_rank=2, rng=rng)
        choi_of_channel(channel)  # constructor enforces tr_1 chi = 1/d


def test_entanglement_fidelity_of_target_is_one():
    rng = np.random.default_rng(1)
    u = haar_unitary(3, rng)
    gate = gate_library("explicit", matrix=u)
    assert np.isclose(entanglement_fidelity(unitary_channel(u), gate), 1.0)


def test_entanglement_fidelity_depolarizing():
    gate = gate_library("identity", n=1, d1=2)
    channel = apply_noise(gate, depolarizing_noise(0.1))
    # Direct dense oracle: tr(chi_L chi_U).
    chi = choi_of_channel(channel).matrix.entries
    expected = np.trace(chi @ max_entangled_projector(2)).real
    assert np.isclose(expected, 0.925, atol=1e-12)
    assert np.isclose(entanglement_fidelity(channel, gate), 0.925, atol=1e-12)


def test_entanglement_fidelity_orthogonal():
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    gate = gate_library("identity", n=1, d1=2)
    assert np.isclose(entanglement_fidelity(unitary_channel(x), gate), 0.0, atol=1e-12)


def test_average_gate_fidelity_arithmetic():
    gate = gate_library("identity", n=1, d1=2)
    channel = apply_noise(gate, depolarizing_noise(0.1))
    assert np.isclose(average_gate_fidelity(channel, gate), 0.95, atol=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_average_gate_fidelity_matches_haar_monte_carlo(d):
    rng = np.random.default_rng(100 + d)
    channel = random_channel(d, kraus_rank=2, rng=rng)
    gate = gate_library("explicit", matrix=haar_unitary(d, rng))
    fa = average_gate_fidelity(channel, gate)
    samples = []
    n_samples = 20000
    target = gate.matrix.entries
    for _ in range(n_samples):
        psi = haar_state(d, rng).amplitudes
        out = channel.apply(np.outer(psi, psi.conj()))
        ideal = target @ psi
        samples.append((ideal.conj() @ out @ ideal).real)
    mc = np.mean(samples)
    stderr = np.std(samples, ddof=1) / np.sqrt(n_samples)
    assert abs(mc - fa) <= 3 * stderr + 1e-12


def test_fidelities_stay_in_unit_interval():
    rng = np.random.default_rng(17)
    for d in (2, 3):
        channel = random_channel(d, kraus_rank=d, rng=rng)
        gate = gate_library("explicit", matrix=haar_unitary(d, rng))
        fe = entanglement_fidelity(channel, gate)
        fa = average_gate_fidelity(channel, gate)
        assert -1e-12 <= fe <= 1 + 1e-12
        assert -1e-12 <= fa <= 1 + 1e-12


def test_fidelity_dimension_mismatch():
    gate = gate_library("identity", n=1, d1=3)
    with pytest.raises(DimensionMismatch):
        entanglement_fidelity(unitary_channel(np.eye(2)), gate)


def test_apply_noise_noiseless_single_kraus():
    gate = gate_library("cz", n=2)
    channel = apply_noise(gate, no_noise())
    assert len(channel.kraus_ops) == 1
    np.testing.assert_allclose(channel.kraus_ops[0].entries, gate.matrix.entries)


def test_apply_noise_depolarizing_fidelity():
    for d1, n in ((2, 1), (2, 2), (3, 1)):
        gate = gate_library("identity", n=n, d1=d1)
        d = d1**n
        p = 0.2
        channel = apply_noise(gate, depolarizing_noise(p))
        expected = 1 - p * (d**2 - 1) / d**2
        assert np.isclose(entanglement_fidelity(channel, gate), expected, atol=1e-12)


def test_apply_noise_overrotation_zero_angle():
    gate = gate_library("cz", n=2)
    h = np.diag([0.0, 0.0, 0.0, 1.0])
    channel = apply_noise(gate, overrotation_noise(h, 0.0))
    np.testing.assert_allclose(channel.kraus_ops[0].entries, gate.matrix.entries, atol=1e-12)


def test_invalid_depolarizing_probability():
    gate = gate_library("identity", n=1, d1=2)
    with pytest.raises(GateVerifyError):
        apply_noise(gate, depolarizing_noise(1.5))


def test_max_entangled_state_is_unit():
    phi = max_entangled_state(4)
    assert np.isclose(np.linalg.norm(phi.amplitudes), 1.0)
    assert phi.factor_dims == (4, 4)
