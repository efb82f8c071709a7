"""Stabilizer-group extraction by Weyl enumeration."""

import numpy as np
import pytest

from gateverify.channels import PureState, basis_state
from gateverify.errors import GateVerifyError, NotStabilizerState
from gateverify.gates import gate_library
from gateverify.stabilizers import (
    StabilizerGroup,
    apply_weyl_word,
    extract_stabilizer_group,
    independent_over_gf,
)


def bell_state():
    v = np.zeros(4, dtype=complex)
    v[0] = v[3] = 1 / np.sqrt(2)
    return PureState(v, (2, 2))


def ghz_state(n):
    v = np.zeros(2**n, dtype=complex)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return PureState(v, (2,) * n)


def test_computational_state_group():
    group = extract_stabilizer_group(basis_state(0, (2, 2)))
    assert len(group) == 4
    labels = {tuple(row) for row in group.labels}
    # II, ZI, IZ, ZZ: X exponents all zero
    assert labels == {(0, 0, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1), (0, 0, 1, 1)}
    np.testing.assert_allclose(group.phases, np.ones(4), atol=1e-12)


def test_bell_state_group_matches_textbook():
    group = extract_stabilizer_group(bell_state())
    assert len(group) == 4
    labels = {tuple(row): phase for row, phase in zip(group.labels.tolist(), group.phases)}
    # II, XX, ZZ carry +1; the bare word (XZ)(x)(XZ) = -YY also carries +1.
    assert np.isclose(labels[(0, 0, 0, 0)], 1.0)
    assert np.isclose(labels[(1, 1, 0, 0)], 1.0)
    assert np.isclose(labels[(0, 0, 1, 1)], 1.0)
    assert np.isclose(labels[(1, 1, 1, 1)], 1.0)


def test_every_element_fixes_the_state():
    psi = ghz_state(3)
    group = extract_stabilizer_group(psi)
    assert len(group) == 8
    for row in range(len(group)):
        m = group.element_matrix(row)
        out = m @ psi.amplitudes
        np.testing.assert_allclose(out, group.phases[row] * psi.amplitudes, atol=1e-8)
    assert group.is_closed()


def test_cswap_output_is_stabilizer():
    # control |+>, targets |+>, |->: entangled output with an 8-element group.
    plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
    minus = np.array([1, -1], dtype=complex) / np.sqrt(2)
    vec = np.kron(plus, np.kron(plus, minus))
    gate = gate_library("cswap")
    out = gate.matrix.entries @ vec
    group = extract_stabilizer_group(PureState(out, (2, 2, 2)))
    assert len(group) == 8
    assert group.is_closed()


def test_non_stabilizer_state_rejected():
    v = np.array([np.cos(0.3), np.sin(0.3) * np.exp(0.4j)], dtype=complex)
    with pytest.raises(NotStabilizerState):
        extract_stabilizer_group(PureState(v, (2,)))


def test_qutrit_stabilizer_state():
    # SUM |0,0> after Fourier on site 0: qutrit analogue of a Bell state.
    from gateverify.gates import sum_gate
    from gateverify.paulis import fourier_matrix

    f = np.kron(fourier_matrix(3), np.eye(3))
    vec = sum_gate(3) @ f @ basis_state(0, (3, 3)).amplitudes
    group = extract_stabilizer_group(PureState(vec, (3, 3)))
    assert len(group) == 9
    assert group.is_closed()


def test_generator_rows_are_independent():
    group = extract_stabilizer_group(ghz_state(3))
    rows = group.generator_rows()
    assert len(rows) == 3
    assert independent_over_gf([group.labels[r] for r in rows], 2)


def test_enumeration_cap():
    with pytest.raises(GateVerifyError):
        extract_stabilizer_group(basis_state(0, (2,) * 7))


def test_apply_weyl_word_matches_matrix():
    rng = np.random.default_rng(8)
    dims = (3, 3)
    v = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    v /= np.linalg.norm(v)
    from gateverify.paulis import weyl_word

    for a, b in [((1, 2), (0, 1)), ((2, 0), (2, 2))]:
        m = np.kron(weyl_word(3, a[0], b[0]), weyl_word(3, a[1], b[1]))
        np.testing.assert_allclose(apply_weyl_word(v, dims, a, b), m @ v, atol=1e-10)
