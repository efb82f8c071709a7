"""Ensemble constructions and preparation spectral gaps."""

import numpy as np
import pytest

from gateverify.channels import PureState, basis_state, max_entangled_projector
from gateverify.ensembles import (
    is_two_design,
    make_ensemble,
    pauli_eigenbases,
    preparation_report,
    product_mub_ensemble,
    product_two_design_ensemble,
)
from gateverify.errors import GateVerifyError


def test_pauli_eigenbases_counts_and_unbiasedness():
    for d1, expected in [(2, 3), (3, 4), (4, 3), (5, 6)]:
        bases = pauli_eigenbases(d1)
        assert len(bases) == expected
        for i in range(len(bases)):
            for j in range(i + 1, len(bases)):
                overlaps = np.abs(bases[i].matrix.conj().T @ bases[j].matrix) ** 2
                np.testing.assert_allclose(overlaps, np.full((d1, d1), 1 / d1), atol=1e-9)


def test_pauli_eigenbases_rejects_trivial_dim():
    with pytest.raises(Exception):
        pauli_eigenbases(1)


def test_two_qubit_mub_ensemble_r3():
    ensemble = product_mub_ensemble([2, 2], r=3)
    assert len(ensemble) == 12
    np.testing.assert_allclose(ensemble.probs, np.full(12, 1 / 12))
    assert ensemble.balanced
    report = preparation_report(ensemble)
    assert np.isclose(report.nu_P, 2 / 3, atol=1e-9)


def test_two_qubit_mub_ensemble_r2():
    report = preparation_report(product_mub_ensemble([2, 2], r=2))
    assert np.isclose(report.nu_P, 1 / 2, atol=1e-9)


def test_qutrit_complete_mub_is_haar_equivalent():
    ensemble = product_mub_ensemble([3], r=4)
    report = preparation_report(ensemble)
    assert np.isclose(report.nu_P, 3 / 4, atol=1e-9)
    d = 3
    expected = (d * max_entangled_projector(d) + np.eye(d * d)) / (d + 1)
    np.testing.assert_allclose(report.theta_P.entries, expected, atol=1e-9)


@pytest.mark.parametrize("d1", [2, 3, 4, 5])
def test_mub_gap_formula_all_valid_r(d1):
    bases = pauli_eigenbases(d1)
    for r in range(1, len(bases) + 1):
        report = preparation_report(product_mub_ensemble([d1], r=r))
        assert np.isclose(report.nu_P, (r - 1) / r, atol=1e-9)


def test_mub_ensemble_rejects_excess_r():
    with pytest.raises(GateVerifyError):
        product_mub_ensemble([4], r=4)  # only 3 bases for non-prime d
    with pytest.raises(GateVerifyError):
        product_mub_ensemble([2, 3], r=4)  # min over sites is 3


def test_single_qubit_two_design_is_six_stabilizer_states():
    ensemble = product_two_design_ensemble([2])
    assert len(ensemble) == 6
    assert ensemble.balanced
    second_moment = np.zeros((4, 4), dtype=complex)
    for psi, p in ensemble.items():
        v = psi.amplitudes
        second_moment += p * np.kron(np.outer(v, v.conj()), np.outer(v, v.conj()).conj())
    expected = (2 * max_entangled_projector(2) + np.eye(4)) / 6
    np.testing.assert_allclose(second_moment, expected, atol=1e-9)


def test_two_qubit_product_two_design():
    ensemble = product_two_design_ensemble([2, 2])
    assert len(ensemble) == 36
    report = preparation_report(ensemble)
    assert np.isclose(report.nu_P, 2 / 3, atol=1e-9)


def test_qutrit_two_design():
    ensemble = product_two_design_ensemble([3])
    assert len(ensemble) == 12
    assert is_two_design(ensemble)
    report = preparation_report(ensemble)
    assert np.isclose(report.nu_P, 3 / 4, atol=1e-9)


def test_two_design_unavailable_for_nonprime_site():
    with pytest.raises(GateVerifyError):
        product_two_design_ensemble([4])


def test_is_two_design_detects_qubit_stabilizer_states():
    assert is_two_design(product_two_design_ensemble([2]))


def test_two_mub_is_not_a_two_design():
    assert not is_two_design(product_mub_ensemble([2], r=2))


def test_single_basis_has_zero_gap():
    report = preparation_report(product_mub_ensemble([2], r=1))
    assert report.nu_P == 0.0


def test_balanced_beta_lower_bound():
    # For any balanced ensemble beta_P >= 1/(d+1).
    rng = np.random.default_rng(9)
    for d in (2, 3, 4):
        from gateverify.channels import haar_unitary

        bases = [haar_unitary(d, rng) for _ in range(3)]
        states = [PureState(b[:, i], (d,)) for b in bases for i in range(d)]
        probs = np.full(len(states), 1.0 / len(states))
        ensemble = make_ensemble(states, probs)
        assert ensemble.balanced
        report = preparation_report(ensemble)
        assert report.beta_P >= 1 / (d + 1) - 1e-9


def test_heterogeneous_dims_mub_ensemble():
    ensemble = product_mub_ensemble([2, 3], r=3)
    assert ensemble.balanced
    assert len(ensemble) == 18
    report = preparation_report(ensemble)
    assert np.isclose(report.nu_P, 2 / 3, atol=1e-9)
    # nu_P never exceeds d_min/(d_min + 1) for product ensembles
    assert report.nu_P <= 2 / 3 + 1e-9


def test_product_ensemble_gap_cap():
    for dims in ([2, 2], [2, 3], [3, 3]):
        d_min = min(dims)
        report = preparation_report(product_two_design_ensemble(dims))
        assert report.nu_P <= d_min / (d_min + 1) + 1e-9


def test_unbalanced_ensemble_flag():
    states = [basis_state(0, 2), basis_state(1, 2)]
    skewed = make_ensemble(states, [0.9, 0.1])
    assert not skewed.balanced
