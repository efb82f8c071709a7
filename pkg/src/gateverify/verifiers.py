"""Per-output-state verifiers built from local (Pauli) measurements.

A verifier for a target output state |psi> is a weighted set of two-outcome
tests {E, 1 - E} with E|psi> = |psi>; the verification operator
Omega = sum_l p_l E_l then has largest eigenvalue 1 on the target, and its
spectral gap nu = 1 - ||Omega - |psi><psi||| controls how fast wrong states
are caught.

Protocols implemented here:

* uniform stabilizer: measure every nontrivial stabilizer Weyl word with
  equal probability; gap (d1^n - d1^(n-1))/(d1^n - 1).
* stabilizer generators: measure n independent generators uniformly; gap 1/n.
* hyperedge coloring for outputs of C^(n-1)Z on X-basis product states:
  n tests, each measuring X on one qubit and Z elsewhere; gap 1/n.
* exact product: one projective test in a product basis containing the
  target; gap 1.

All tests are projective and carry an explicit acceptance truth table over
per-site outcomes, which is what an experiment needs to execute them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from . import paulis
from .channels import PureState
from .errors import (
    DimensionMismatch,
    GateVerifyError,
    InvariantViolation,
    StrategyError,
)
from .gates import controlled_z
from .linalg import DenseOperator, operator_norm
from .stabilizers import StabilizerGroup, independent_over_gf

PASS_ATOL = 1e-8
PHASE_MATCH_ATOL = 1e-6


@dataclass(frozen=True)
class SiteSetting:
    """Measurement basis on one site; outcome o projects onto column o."""

    basis_label: str
    kets: np.ndarray
    weyl: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        m = np.array(self.kets, dtype=complex, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "kets", m)

    @property
    def dim(self) -> int:
        return self.kets.shape[0]


@dataclass(frozen=True)
class LocalTest:
    """Two-outcome test {E, 1 - E} with its local realization.

    ``settings``/``accept`` describe the product measurement and acceptance
    truth table when the test is local; explicit (possibly entangling) test
    operators carry ``settings = None``.
    """

    operator: DenseOperator
    settings: tuple[SiteSetting, ...] | None = None
    accept: frozenset | None = None

    def __post_init__(self) -> None:
        eigs = np.linalg.eigvalsh(self.operator.entries)
        if eigs[0] < -PASS_ATOL or eigs[-1] > 1 + PASS_ATOL:
            raise InvariantViolation(
                f"test operator eigenvalues [{eigs[0]:.3e}, {eigs[-1]:.3e}] leave [0, 1]"
            )

    @property
    def is_projective(self) -> bool:
        e = self.operator.entries
        return operator_norm(e @ e - e) <= 1e-9


def make_local_test(settings: Sequence[SiteSetting], accept: Sequence[tuple[int, ...]]) -> LocalTest:
    """Assemble the accept projector from per-site bases and a truth table."""
    dims = tuple(s.dim for s in settings)
    b = reduce(np.kron, [s.kets for s in settings])
    mask = np.zeros(math.prod(dims))
    for outcome in accept:
        mask[np.ravel_multi_index(tuple(outcome), dims)] = 1.0
    e = (b * mask) @ b.conj().T
    e = 0.5 * (e + e.conj().T)
    return LocalTest(
        operator=DenseOperator(e, dims, dims),
        settings=tuple(settings),
        accept=frozenset(tuple(int(x) for x in o) for o in accept),
    )


def explicit_test(operator: np.ndarray, dims: Sequence[int]) -> LocalTest:
    dims = tuple(dims)
    return LocalTest(operator=DenseOperator(operator, dims, dims))


@dataclass(frozen=True)
class StateVerifier:
    """Verification operator Omega_j for one target output state."""

    target: PureState
    tests: tuple[tuple[LocalTest, float], ...]
    omega: DenseOperator
    beta_j: float
    nu_j: float


def make_verifier(target: PureState, tests: Sequence[tuple[LocalTest, float]]) -> StateVerifier:
    """Combine weighted tests, enforcing Omega psi = psi and 0 <= Omega <= 1."""
    if not tests:
        raise GateVerifyError("verifier needs at least one test")
    probs = np.array([p for _, p in tests], dtype=float)
    if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise GateVerifyError("test probabilities must be positive and sum to 1")
    d = target.dim
    omega = np.zeros((d, d), dtype=complex)
    for test, p in tests:
        if test.operator.shape != (d, d):
            raise DimensionMismatch("test operator does not match target dimension")
        omega += p * test.operator.entries
    omega = 0.5 * (omega + omega.conj().T)
    psi = target.amplitudes
    if np.linalg.norm(omega @ psi - psi) > PASS_ATOL:
        raise InvariantViolation("target state does not pass all tests with certainty")
    eigs = np.linalg.eigvalsh(omega)
    if eigs[0] < -PASS_ATOL or eigs[-1] > 1 + PASS_ATOL:
        raise InvariantViolation("verification operator leaves [0, 1]")
    rho = np.outer(psi, psi.conj())
    beta = operator_norm(omega - rho)
    nu = 1.0 - beta
    if abs(nu) < 1e-12:
        nu = 0.0
    return StateVerifier(
        target=target,
        tests=tuple(tests),
        omega=DenseOperator(omega, target.factor_dims, target.factor_dims),
        beta_j=float(beta),
        nu_j=float(nu),
    )


def _weyl_element_test(group: StabilizerGroup, row: int, dims: tuple[int, ...]) -> LocalTest:
    """Test measuring each site's Weyl eigenbasis; accept iff the product of
    local eigenvalues reproduces the element's phase on the target."""
    d1 = group.d1
    settings = []
    eig_vectors = []
    for a, b in group.site_exponents(row):
        label, kets, eigs = paulis.weyl_site_measurement(d1, a, b)
        settings.append(SiteSetting(basis_label=label, kets=kets, weyl=(a, b)))
        eig_vectors.append(eigs)
    prods = reduce(np.multiply.outer, eig_vectors)
    target_phase = group.phases[row]
    accept = [tuple(int(x) for x in idx) for idx in np.argwhere(np.abs(prods - target_phase) < PHASE_MATCH_ATOL)]
    if not accept:
        raise InvariantViolation("no outcome reproduces the stabilizer phase")
    return make_local_test(settings, accept)


def uniform_stabilizer_verifier(psi: PureState, group: StabilizerGroup) -> StateVerifier:
    """Measure all nontrivial stabilizer words with equal probability.

    The spectral gap is (d1^n - d1^(n-1))/(d1^n - 1), at least 1/2 for
    qubits.
    """
    dims = psi.factor_dims
    n_elements = len(group) - 1
    tests = []
    for row in range(len(group)):
        if not group.labels[row].any():
            continue
        tests.append((_weyl_element_test(group, row, dims), 1.0 / n_elements))
    return make_verifier(psi, tests)


def generator_verifier(
    psi: PureState,
    group: StabilizerGroup,
    generator_rows: Sequence[int] | None = None,
) -> StateVerifier:
    """Measure n independent stabilizer generators uniformly; gap 1/n."""
    n = group.n
    if generator_rows is None:
        rows = group.generator_rows()
    else:
        rows = list(generator_rows)
        labels = [group.labels[r] for r in rows]
        if len(rows) != n or not independent_over_gf(labels, group.d1):
            raise GateVerifyError("generator choice is not an independent set of size n")
    tests = [(_weyl_element_test(group, r, psi.factor_dims), 1.0 / n) for r in rows]
    verifier = make_verifier(psi, tests)
    if abs(verifier.nu_j - 1.0 / n) > 1e-9 and n > 1:
        raise InvariantViolation(
            f"generator protocol gap {verifier.nu_j} deviates from 1/{n}"
        )
    return verifier


def product_factors(psi: PureState, atol: float = PASS_ATOL) -> list[np.ndarray] | None:
    """Per-site kets of a product state, or None if any bipartition is entangled.

    Local kets are phase-fixed so that the largest-magnitude amplitude is
    real positive; the residual global phase is irrelevant to projectors.
    """
    dims = psi.factor_dims
    rest = psi.amplitudes
    factors: list[np.ndarray] = []
    for k, dk in enumerate(dims):
        m = rest.reshape(dk, -1)
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        if len(s) > 1 and s[1] > atol:
            return None
        ket = u[:, 0]
        pivot = np.argmax(np.abs(ket))
        ket = ket * (np.abs(ket[pivot]) / ket[pivot])
        factors.append(ket)
        rest = vh[0] / np.linalg.norm(vh[0])
    return factors


def match_canonical_basis(ket: np.ndarray, d: int) -> tuple[str, np.ndarray, int] | None:
    """Find a Pauli eigenbasis containing the ket (up to phase)."""
    for label, kets in paulis.mub_bases(d):
        overlaps = np.abs(kets.conj().T @ ket)
        hit = np.argmax(overlaps)
        if overlaps[hit] > 1 - 1e-8:
            return label, kets, int(hit)
    return None


def completion_basis(ket: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis with the given ket as column 0."""
    d = len(ket)
    m = np.concatenate([ket.reshape(-1, 1), np.eye(d, dtype=complex)], axis=1)
    q = np.linalg.qr(m)[0].copy()
    q[:, 0] = q[:, 0] * np.vdot(q[:, 0], ket)  # unit phase; column 0 becomes ket
    return q


def exact_product_verifier(psi: PureState) -> StateVerifier:
    """Single projective test in a product basis containing the target; gap 1."""
    factors = product_factors(psi)
    if factors is None:
        raise StrategyError("state is not a product state across every bipartition")
    settings = []
    accept_indices = []
    for ket, dk in zip(factors, psi.factor_dims):
        match = match_canonical_basis(ket, dk)
        if match is not None:
            label, kets, index = match
        else:
            label, kets, index = "custom", completion_basis(ket), 0
        settings.append(SiteSetting(basis_label=label, kets=kets))
        accept_indices.append(index)
    test = make_local_test(settings, [tuple(accept_indices)])
    return make_verifier(psi, [(test, 1.0)])


def hyperedge_coloring_verifier(output: PureState) -> StateVerifier:
    """Verifier for C^(n-1)Z acting on an X-basis product state.

    Test i measures X on qubit i and Z on the others and accepts iff
    x_i f(z) = (-1)^(a_i), where f(z) is -1 exactly when every other qubit
    reports |1>.  Each test has probability 1/n; the gap is 1/n.
    """
    dims = output.factor_dims
    if any(d != 2 for d in dims):
        raise StrategyError("coloring verifier is defined for qubits")
    n = len(dims)
    preimage = controlled_z(n) @ output.amplitudes
    factors = product_factors(PureState(preimage, dims))
    if factors is None:
        raise StrategyError("state is not C^(n-1)Z applied to an X-basis product state")
    x_kets = paulis.fourier_basis(2)
    a_bits = []
    for ket in factors:
        overlaps = np.abs(x_kets.conj().T @ ket)
        hit = int(np.argmax(overlaps))
        if overlaps[hit] < 1 - 1e-8:
            raise StrategyError("state is not C^(n-1)Z applied to an X-basis product state")
        a_bits.append(hit)
    z_kets = np.eye(2, dtype=complex)
    tests = []
    for i in range(n):
        settings = [
            SiteSetting("X", x_kets) if k == i else SiteSetting("Z", z_kets)
            for k in range(n)
        ]
        accept = []
        for outcome in itertools.product((0, 1), repeat=n):
            x_i = -1.0 if outcome[i] else 1.0
            all_ones = all(outcome[k] == 1 for k in range(n) if k != i)
            f_z = -1.0 if all_ones else 1.0
            if x_i * f_z == (-1.0) ** a_bits[i]:
                accept.append(outcome)
        tests.append((make_local_test(settings, accept), 1.0 / n))
    verifier = make_verifier(output, tests)
    if abs(verifier.nu_j - 1.0 / n) > 1e-9:
        raise InvariantViolation(f"coloring gap {verifier.nu_j} deviates from 1/{n}")
    return verifier
