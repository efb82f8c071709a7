"""State verifiers: stabilizer, generator, coloring and product protocols."""

import numpy as np
import pytest

from gateverify.channels import PureState, basis_state, product_state
from gateverify.errors import GateVerifyError, InvariantViolation, StrategyError
from gateverify.gates import controlled_z, gate_library
from gateverify.paulis import fourier_basis
from gateverify.stabilizers import extract_stabilizer_group
from gateverify.verifiers import (
    exact_product_verifier,
    generator_verifier,
    hyperedge_coloring_verifier,
    make_local_test,
    make_verifier,
    uniform_stabilizer_verifier,
    product_factors,
    completion_basis,
    SiteSetting,
)


def bell_state():
    v = np.zeros(4, dtype=complex)
    v[0] = v[3] = 1 / np.sqrt(2)
    return PureState(v, (2, 2))


def ghz_state(n):
    v = np.zeros(2**n, dtype=complex)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return PureState(v, (2,) * n)


def qutrit_bell():
    from gateverify.gates import sum_gate
    from gateverify.paulis import fourier_matrix

    f = np.kron(fourier_matrix(3), np.eye(3))
    vec = sum_gate(3) @ f @ basis_state(0, (3, 3)).amplitudes
    return PureState(vec, (3, 3))


def stabilizer_gap(d1, n):
    return (d1**n - d1 ** (n - 1)) / (d1**n - 1)


def test_uniform_stabilizer_bell_gap():
    psi = bell_state()
    v = uniform_stabilizer_verifier(psi, extract_stabilizer_group(psi))
    assert np.isclose(v.nu_j, 2 / 3, atol=1e-12)
    np.testing.assert_allclose(v.omega.entries @ psi.amplitudes, psi.amplitudes, atol=1e-10)


def test_uniform_stabilizer_ghz_gap():
    psi = ghz_state(3)
    v = uniform_stabilizer_verifier(psi, extract_stabilizer_group(psi))
    assert np.isclose(v.nu_j, 4 / 7, atol=1e-12)


def test_uniform_stabilizer_qutrit_gap():
    psi = qutrit_bell()
    v = uniform_stabilizer_verifier(psi, extract_stabilizer_group(psi))
    assert np.isclose(v.nu_j, 3 / 4, atol=1e-12)


@pytest.mark.parametrize("d1,n", [(2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (3, 3)])
def test_uniform_stabilizer_gap_formula(d1, n):
    # random stabilizer-ish states: start from |0...0> and apply circuit steps
    from gateverify.gates import circuit_unitary

    steps = []
    if n >= 2:
        steps = [("fourier", [0])] + [("sum", [k, k + 1]) for k in range(n - 1)]
    else:
        steps = [("fourier", [0])]
    m = circuit_unitary(steps, n=n, d1=d1)
    psi = PureState(m @ basis_state(0, (d1,) * n).amplitudes, (d1,) * n)
    v = uniform_stabilizer_verifier(psi, extract_stabilizer_group(psi))
    assert np.isclose(v.nu_j, stabilizer_gap(d1, n), atol=1e-9)


def test_generator_verifier_bell():
    psi = bell_state()
    group = extract_stabilizer_group(psi)
    v = generator_verifier(psi, group)
    assert np.isclose(v.nu_j, 1 / 2, atol=1e-12)


def test_generator_verifier_ghz():
    psi = ghz_state(3)
    v = generator_verifier(psi, extract_stabilizer_group(psi))
    assert np.isclose(v.nu_j, 1 / 3, atol=1e-12)


def test_generator_verifier_single_site():
    psi = PureState(np.array([1, 0], dtype=complex), (2,))
    v = generator_verifier(psi, extract_stabilizer_group(psi))
    assert np.isclose(v.nu_j, 1.0, atol=1e-12)


def test_generator_verifier_rejects_dependent_choice():
    psi = bell_state()
    group = extract_stabilizer_group(psi)
    rows = group.generator_rows()
    with pytest.raises(GateVerifyError):
        generator_verifier(psi, group, generator_rows=[rows[0], rows[0]])


def test_coloring_verifier_cz2():
    plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
    state = product_state([plus, plus], (2, 2))
    out = PureState(controlled_z(2) @ state.amplitudes, (2, 2))
    v = hyperedge_coloring_verifier(out)
    assert np.isclose(v.nu_j, 1 / 2, atol=1e-12)
    # tests are X (x) Z and Z (x) X
    labels = [tuple(s.basis_label for s in test.settings) for test, _ in v.tests]
    assert ("X", "Z") in labels and ("Z", "X") in labels
    np.testing.assert_allclose(v.omega.entries @ out.amplitudes, out.amplitudes, atol=1e-10)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_coloring_verifier_gap(n):
    plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
    minus = np.array([1, -1], dtype=complex) / np.sqrt(2)
    kets = [plus if k % 2 == 0 else minus for k in range(n)]
    state = product_state(kets, (2,) * n)
    out = PureState(controlled_z(n) @ state.amplitudes, (2,) * n)
    v = hyperedge_coloring_verifier(out)
    assert np.isclose(v.nu_j, 1 / n, atol=1e-12)


def test_coloring_verifier_rejects_other_states():
    with pytest.raises(StrategyError):
        hyperedge_coloring_verifier(bell_state())


def test_exact_product_verifier_computational():
    psi = basis_state(0b01, (2, 2))
    v = exact_product_verifier(psi)
    assert np.isclose(v.nu_j, 1.0, atol=1e-12)
    test, p = v.tests[0]
    assert p == 1.0
    assert tuple(s.basis_label for s in test.settings) == ("Z", "Z")
    assert test.accept == frozenset({(0, 1)})


def test_exact_product_verifier_x_basis():
    plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
    minus = np.array([1, -1], dtype=complex) / np.sqrt(2)
    psi = product_state([plus, minus], (2, 2))
    v = exact_product_verifier(psi)
    test, _ = v.tests[0]
    assert tuple(s.basis_label for s in test.settings) == ("X", "X")
    assert test.accept == frozenset({(0, 1)})


def test_exact_product_verifier_rejects_entangled():
    with pytest.raises(StrategyError):
        exact_product_verifier(bell_state())


def test_product_factors_recovers_kets():
    rng = np.random.default_rng(4)
    kets = []
    for d in (2, 3):
        v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        kets.append(v / np.linalg.norm(v))
    psi = product_state(kets, (2, 3))
    factors = product_factors(psi)
    assert factors is not None
    rebuilt = np.kron(factors[0], factors[1])
    overlap = abs(np.vdot(rebuilt, psi.amplitudes))
    assert np.isclose(overlap, 1.0, atol=1e-10)


def test_completion_basis_deterministic_and_orthonormal():
    rng = np.random.default_rng(2)
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    v /= np.linalg.norm(v)
    b1 = completion_basis(v)
    b2 = completion_basis(v)
    np.testing.assert_allclose(b1, b2, atol=0)
    np.testing.assert_allclose(b1.conj().T @ b1, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(b1[:, 0], v, atol=1e-10)


def test_make_verifier_rejects_non_passing_target():
    psi = basis_state(0, (2,))
    other = basis_state(1, (2,))
    test = make_local_test([SiteSetting("Z", np.eye(2, dtype=complex))], [(1,)])
    with pytest.raises(InvariantViolation):
        make_verifier(psi, [(test, 1.0)])


def test_local_test_is_projective():
    test = make_local_test(
        [SiteSetting("Z", np.eye(2, dtype=complex)), SiteSetting("X", fourier_basis(2))],
        [(0, 0), (1, 1)],
    )
    assert test.is_projective
    eigs = np.linalg.eigvalsh(test.operator.entries)
    assert eigs[0] >= -1e-12 and eigs[-1] <= 1 + 1e-12
