"""Worst-case passing probabilities, SDP certification, test counts."""

import numpy as np
import pytest

from gateverify.channels import PureState, haar_unitary, max_entangled_projector
from gateverify.efficiency import (
    dykstra_project,
    feasible_start,
    num_tests,
    p_a,
    p_e_bound,
    p_e_sdp,
    property_suite,
    repeated_test_bound,
)
from gateverify.ensembles import make_ensemble, product_mub_ensemble, product_two_design_ensemble
from gateverify.errors import DimensionCapExceeded, GateVerifyError
from gateverify.gates import gate_library
from gateverify.strategies import build_strategy
from gateverify.verifiers import explicit_test, make_verifier


def two_design_theta(d):
    return (d * max_entangled_projector(d) + np.eye(d * d)) / (d + 1)


def cz_strategy():
    gate = gate_library("cz", n=2)
    return build_strategy(gate, product_mub_ensemble((2, 2), r=2), policy="coloring")


def random_balanced_strategy(d, rng, beta_max=0.8):
    """Identity-gate strategy with random orthonormal-basis ensemble and noisy
    verifiers: Omega_j = rho_j + (PSD junk orthogonal to the target)."""
    gate = gate_library("explicit", matrix=np.eye(d, dtype=complex))
    bases = [haar_unitary(d, rng) for _ in range(2)]
    states = [PureState(b[:, i], (d,)) for b in bases for i in range(d)]
    ensemble = make_ensemble(states, np.full(len(states), 1.0 / len(states)))
    assert ensemble.balanced
    verifiers = []
    for psi in states:
        rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
        q = np.eye(d) - rho
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        junk = q @ (g @ g.conj().T) @ q
        norm = np.linalg.norm(junk, 2)
        if norm > 0:
            junk *= rng.uniform(0.2, beta_max) / norm
        omega = rho + junk
        verifiers.append(make_verifier(psi, [(explicit_test(omega, (d,)), 1.0)]))
    return build_strategy(gate, ensemble, verifiers=verifiers)


def test_p_e_bound_arithmetic():
    s = cz_strategy()
    # nu = 1/4 exactly for this strategy
    assert np.isclose(p_e_bound(s, 0.1), 1 - s.gaps.nu * 0.1)
    assert p_e_bound(s, 0.0) == 1.0


def test_p_e_bound_rejects_unbalanced():
    from gateverify.channels import basis_state

    gate = gate_library("explicit", matrix=np.eye(2, dtype=complex))
    states = [basis_state(0, 2), basis_state(1, 2)]
    ensemble = make_ensemble(states, [0.9, 0.1])
    verifiers = [
        make_verifier(psi, [(explicit_test(np.outer(psi.amplitudes, psi.amplitudes.conj()), (2,)), 1.0)])
        for psi in states
    ]
    s = build_strategy(gate, ensemble, verifiers=verifiers)
    with pytest.raises(GateVerifyError):
        p_e_bound(s, 0.1)


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
def test_sdp_on_optimal_two_design(d, eps):
    res = p_e_sdp(two_design_theta(d), eps, tol=1e-7)
    assert res.converged
    assert abs(res.value - (1 - d * eps / (d + 1))) <= 1e-6


def test_sdp_at_zero_eps_returns_one():
    s = cz_strategy()
    res = p_e_sdp(s, 0.0)
    assert abs(res.value - 1.0) <= 1e-9
    # witness is essentially the maximally entangled state
    phi = max_entangled_projector(4)
    overlap = np.real(np.vdot(phi, res.witness.matrix.entries))
    assert overlap > 1 - 1e-6


def test_sdp_respects_gap_bound_on_cz():
    s = cz_strategy()
    for eps in (0.05, 0.2):
        res = p_e_sdp(s, eps, tol=1e-7)
        assert res.value <= p_e_bound(s, eps) + 1e-9
        assert res.converged


def test_sdp_witness_is_feasible_choi_state():
    s = cz_strategy()
    res = p_e_sdp(s, 0.15)
    chi = res.witness.matrix.entries
    assert np.linalg.eigvalsh(chi)[0] >= -1e-7
    phi = np.eye(4, dtype=complex).reshape(-1) / 2
    fid = np.real(phi.conj() @ chi @ phi)
    assert fid <= 0.85 + 1e-7


def test_sdp_oracle_net_on_cz():
    # Independent oracle: evaluate the objective over a net of feasible
    # perturbations chi = (1-eps) Phi + eps sigma repaired by Dykstra, plus
    # light projected-ascent refinement along Theta.
    s = cz_strategy()
    d, eps = 4, 0.2
    theta = s.theta.entries
    rng = np.random.default_rng(5)
    best = -np.inf
    for _ in range(40):
        g = rng.standard_normal((d * d, d * d)) + 1j * rng.standard_normal((d * d, d * d))
        sigma = g @ g.conj().T
        sigma /= np.trace(sigma).real
        cand = (1 - eps) * max_entangled_projector(d) + eps * sigma
        cand = dykstra_project(cand, d, eps, iterations=600)
        for _ in range(30):
            cand = dykstra_project(cand + 0.05 * theta, d, eps, iterations=200)
        best = max(best, float(np.real(np.vdot(theta, cand))))
    res = p_e_sdp(s, eps, tol=1e-7)
    assert best <= res.value + 1e-6
    assert res.value <= p_e_bound(s, eps) + 1e-6


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_sdp_sandwich_on_random_strategies(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.choice([2, 3, 4, 5]))
    s = random_balanced_strategy(d, rng)
    eps = float(rng.uniform(0.05, 0.3))
    res = p_e_sdp(s, eps, tol=1e-6)
    start_value = float(np.real(np.vdot(s.theta.entries, feasible_start(d, eps))))
    assert start_value <= res.value + 1e-9
    assert res.value <= 1 - s.gaps.nu * eps + 1e-6


def test_p_a_rescaling_and_floor():
    d = 2
    res = p_a(two_design_theta(d), 0.1, tol=1e-7)
    assert abs(res.value - 0.9) <= 1e-6  # p_A = 1 - eps for the optimal strategy
    s = cz_strategy()
    for eps in (0.05, 0.15):
        res = p_a(s, eps, tol=1e-7)
        assert res.value >= 1 - eps - 1e-6  # p_A >= 1 - eps always
    with pytest.raises(GateVerifyError):
        p_a(s, 0.9)  # rescaled infidelity exceeds 1


def test_num_tests_optimal_strategy_average_kind():
    gate = gate_library("explicit", matrix=np.eye(2, dtype=complex))
    ensemble = product_two_design_ensemble((2,))
    s = build_strategy(gate, ensemble, policy="exact-product")
    report = num_tests(s, eps=0.01, delta=0.01, fidelity_kind="average", tol=1e-8)
    assert report.exact.N == 459  # ceil(ln 0.01 / ln 0.99)
    assert report.linearized_bound.N == 461  # ceil(100 ln 100)


def test_num_tests_cz_bound_form():
    s = cz_strategy()
    report = num_tests(s, eps=0.01, delta=0.01)
    assert report.linearized_bound.N == 1843  # ceil(4 * 100 * ln 100)
    assert report.exact.N is not None
    assert report.exact.N <= report.linearized_bound.N


def test_num_tests_unverifiable_for_zero_gap():
    from gateverify.channels import basis_state

    gate = gate_library("explicit", matrix=np.eye(2, dtype=complex))
    ensemble = product_mub_ensemble((2,), r=1)
    s = build_strategy(gate, ensemble, policy="exact-product")
    report = num_tests(s, eps=0.1, delta=0.01)
    # a single-basis ensemble has nu_P = 0: the SDP optimum stays at 1
    assert report.exact.N is None
    assert report.linearized_bound.N is None


def test_num_tests_validates_inputs():
    s = cz_strategy()
    with pytest.raises(GateVerifyError):
        num_tests(s, eps=0.0, delta=0.01)
    with pytest.raises(GateVerifyError):
        num_tests(s, eps=0.1, delta=1.0)


def test_repeated_test_bound_equal_eps_is_tight():
    s = cz_strategy()
    eps = [0.1, 0.1]
    bound = repeated_test_bound(s, eps, tol=1e-7)
    single = p_e_sdp(s, 0.1, tol=1e-7).value
    assert np.isclose(bound, single**2, atol=1e-8)


def test_repeated_test_bound_dominates_product():
    s = cz_strategy()
    rng = np.random.default_rng(11)
    eps = [float(e) for e in rng.uniform(0.02, 0.3, size=3)]
    bound = repeated_test_bound(s, eps, tol=1e-7)
    product = 1.0
    for e in eps:
        product *= p_e_sdp(s, e, tol=1e-7).value
    assert product <= bound + 1e-6
    assert repeated_test_bound(s, [0.0, 0.0], tol=1e-7) == pytest.approx(1.0, abs=1e-9)


def test_property_suite_on_cz():
    s = cz_strategy()
    report = property_suite(s, eps_grid=[0.0, 0.1, 0.2, 0.3], seed=3, tol=1e-7)
    assert report.passed, report.failures()


def test_sdp_dimension_cap():
    with pytest.raises(DimensionCapExceeded):
        p_e_sdp(np.eye(17**2), 0.1)
