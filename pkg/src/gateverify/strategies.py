"""Assemble full verification strategies and their process operators.

A strategy pins down, for a target gate U and a test ensemble {rho_j, p_j},
one verifier Omega_j per output state U(rho_j).  The process verification
operators

    Theta~ = d sum_j p_j Omega_j (x) rho_j*      (lab frame)
    Theta  = d sum_j p_j U^dag(Omega_j) (x) rho_j*   (error frame)

compress the whole protocol: tr(Theta~ chi_L) is the average passing
probability of a device realizing the channel L.  For balanced ensembles
|Phi><Phi| <= Theta_P <= Theta <= 1, and the spectral gap nu of Theta obeys
nu >= nu_P nu_M.

Measurement policies:

* ``clifford-pauli``: every output must be a stabilizer state; measure all
  nontrivial stabilizer words uniformly.
* ``generator``: measure n independent stabilizer generators uniformly.
* ``coloring``: for controlled-Z/X type gates; computational-branch outputs
  get an exact product measurement, the conjugate branch gets the
  hypergraph coloring tests (gap 1/n).
* ``exact-product``: every output must be a product state; gap 1.
* ``auto``: per state, the first of exact-product, coloring (when the gate
  descriptor allows it), uniform stabilizer that applies.
* ``user``: caller supplies one StateVerifier per ensemble state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import PureState, UnitaryGate, max_entangled_projector
from .ensembles import (
    TestEnsemble,
    make_ensemble,
    preparation_report,
    product_basis_ensemble,
    product_mub_ensemble,
)
from .errors import (
    DimensionMismatch,
    GateVerifyError,
    InvariantViolation,
    StrategyError,
)
from .gates import hadamard_on_last
from .linalg import DenseOperator, operator_norm, spectral_gap
from .paulis import is_prime, mub_bases
from .stabilizers import extract_stabilizer_group
from .verifiers import (
    LocalTest,
    SiteSetting,
    StateVerifier,
    exact_product_verifier,
    explicit_test,
    generator_verifier,
    hyperedge_coloring_verifier,
    make_local_test,
    make_verifier,
    uniform_stabilizer_verifier,
)

CHECK_ATOL = 1e-8

POLICIES = ("auto", "clifford-pauli", "generator", "coloring", "exact-product", "user")


@dataclass(frozen=True)
class GapReport:
    """Spectral gaps of a strategy: preparation, measurement, total."""

    nu_P: float
    beta_P: float
    nu_M: float
    beta_M: float
    nu: float
    beta: float

    @property
    def nu_lower_bound(self) -> float:
        return self.nu_P * self.nu_M


@dataclass(frozen=True)
class VerificationStrategy:
    gate: UnitaryGate
    ensemble: TestEnsemble
    verifiers: tuple[StateVerifier, ...]
    theta_tilde: DenseOperator
    theta: DenseOperator
    theta_P: DenseOperator
    gaps: GapReport
    policy: str = "user"

    @property
    def dim(self) -> int:
        return self.gate.dim

    @property
    def balanced(self) -> bool:
        return self.ensemble.balanced


def assemble_strategy(
    gate: UnitaryGate,
    ensemble: TestEnsemble,
    verifiers: Sequence[StateVerifier],
    policy: str = "user",
    check: bool = True,
    atol: float = CHECK_ATOL,
) -> VerificationStrategy:
    """Build the process operators from per-state verifiers and run all checks."""
    if len(verifiers) != len(ensemble):
        raise DimensionMismatch("one verifier per ensemble state is required")
    d = gate.dim
    if ensemble.dim != d:
        raise DimensionMismatch("ensemble and gate dimensions differ")
    u = gate.matrix.entries
    theta_tilde = np.zeros((d * d, d * d), dtype=complex)
    for (psi, p), verifier in zip(ensemble.items(), verifiers):
        out = u @ psi.amplitudes
        if abs(abs(np.vdot(verifier.target.amplitudes, out)) - 1.0) > atol:
            raise StrategyError("verifier target does not match the gate output state")
        rho_conj = np.outer(psi.amplitudes.conj(), psi.amplitudes)
        theta_tilde += d * p * np.kron(verifier.omega.entries, rho_conj)
    theta_tilde = 0.5 * (theta_tilde + theta_tilde.conj().T)
    ui = np.kron(u, np.eye(d))
    theta = ui.conj().T @ theta_tilde @ ui
    theta = 0.5 * (theta + theta.conj().T)

    prep = preparation_report(ensemble)
    phi = max_entangled_projector(d)
    beta = operator_norm(theta - phi)
    nu = 1.0 - beta
    if abs(nu) < 1e-12:
        nu = 0.0
    beta_m = max(v.beta_j for v in verifiers)
    nu_m = min(v.nu_j for v in verifiers)
    gaps = GapReport(
        nu_P=prep.nu_P,
        beta_P=prep.beta_P,
        nu_M=float(nu_m),
        beta_M=float(beta_m),
        nu=float(nu),
        beta=float(beta),
    )
    strategy = VerificationStrategy(
        gate=gate,
        ensemble=ensemble,
        verifiers=tuple(verifiers),
        theta_tilde=DenseOperator(theta_tilde, (d, d), (d, d)),
        theta=DenseOperator(theta, (d, d), (d, d)),
        theta_P=prep.theta_P,
        gaps=gaps,
        policy=policy,
    )
    if check:
        check_strategy_invariants(strategy, atol=atol)
    return strategy


def check_strategy_invariants(s: VerificationStrategy, atol: float = CHECK_ATOL) -> None:
    """Structural invariants; raises InvariantViolation with the failing check."""
    d = s.dim
    theta = s.theta.entries
    theta_p = s.theta_P.entries
    phi = max_entangled_projector(d)
    u = s.gate.matrix.entries
    w = u.reshape(-1) / np.sqrt(d)
    perfect = float(np.real(w.conj() @ s.theta_tilde.entries @ w))
    if abs(perfect - 1.0) > 1e-9:
        raise InvariantViolation(f"perfect gate passes with probability {perfect}, not 1")
    if s.balanced:
        checks = {
            "Theta_P >= |Phi><Phi|": np.linalg.eigvalsh(theta_p - phi)[0],
            "Theta >= Theta_P": np.linalg.eigvalsh(theta - theta_p)[0],
            "Theta <= 1": np.linalg.eigvalsh(np.eye(d * d) - theta)[0],
            "Theta <= nu_M Theta_P + beta_M": np.linalg.eigvalsh(
                s.gaps.nu_M * theta_p + s.gaps.beta_M * np.eye(d * d) - theta
            )[0],
        }
        for name, min_eig in checks.items():
            if min_eig < -atol:
                raise InvariantViolation(f"{name} violated (min eigenvalue {min_eig:.3e})")
        if abs(np.trace(theta_p).real - d) > atol * d:
            raise InvariantViolation("tr(Theta_P) deviates from d")
        if s.gaps.nu < s.gaps.nu_P * s.gaps.nu_M - 1e-9:
            raise InvariantViolation(
                f"nu = {s.gaps.nu} below nu_P nu_M = {s.gaps.nu_P * s.gaps.nu_M}"
            )


def _is_coloring_gate(gate: UnitaryGate) -> bool:
    return gate.descriptor in ("controlled-Z-type", "controlled-X-type")


def _coloring_verifier(gate: UnitaryGate, psi: PureState) -> StateVerifier:
    """Coloring dispatch for one test state of a controlled-Z/X type gate."""
    out = gate.apply(psi)
    if gate.descriptor == "controlled-Z-type":
        factors_ok = _try_exact_product(out)
        if factors_ok is not None:
            return factors_ok
        return hyperedge_coloring_verifier(out)
    # controlled-X: conjugate the controlled-Z construction by H on the last site.
    direct = _try_exact_product(out)
    if direct is not None:
        return direct
    n = len(gate.factor_dims)
    h = hadamard_on_last(n)
    mirror = h.apply(out)
    cz_side = hyperedge_coloring_verifier(mirror)
    site_ops = [np.eye(2, dtype=complex)] * (n - 1) + [
        np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    ]
    return conjugate_verifier_by_sites(cz_side, site_ops, out)


def _try_exact_product(psi: PureState) -> StateVerifier | None:
    try:
        return exact_product_verifier(psi)
    except StrategyError:
        return None


def _policy_verifier(gate: UnitaryGate, psi: PureState, policy: str) -> StateVerifier:
    out = gate.apply(psi)
    if policy == "exact-product":
        return exact_product_verifier(out)
    if policy == "clifford-pauli":
        return uniform_stabilizer_verifier(out, extract_stabilizer_group(out))
    if policy == "generator":
        return generator_verifier(out, extract_stabilizer_group(out))
    if policy == "coloring":
        if not _is_coloring_gate(gate):
            raise StrategyError(
                f"coloring policy needs a controlled-Z/X type gate, got {gate.descriptor}"
            )
        return _coloring_verifier(gate, psi)
    if policy == "auto":
        verifier = _try_exact_product(out)
        if verifier is not None:
            return verifier
        if _is_coloring_gate(gate):
            try:
                return _coloring_verifier(gate, psi)
            except StrategyError:
                pass
        try:
            return uniform_stabilizer_verifier(out, extract_stabilizer_group(out))
        except GateVerifyError as exc:
            raise StrategyError(f"no verifier construction applies to an output state: {exc}")
    raise StrategyError(f"unknown policy {policy!r}; expected one of {POLICIES}")


def build_strategy(
    gate: UnitaryGate,
    ensemble: TestEnsemble,
    policy: str = "auto",
    verifiers: Sequence[StateVerifier] | None = None,
    check: bool = True,
) -> VerificationStrategy:
    """Construct verifiers for every output state under the given policy."""
    if policy == "user" or verifiers is not None:
        if verifiers is None:
            raise StrategyError("policy 'user' needs explicit verifiers")
        return assemble_strategy(gate, ensemble, verifiers, policy="user", check=check)
    built = [_policy_verifier(gate, psi, policy) for psi, _ in ensemble.items()]
    return assemble_strategy(gate, ensemble, built, policy=policy, check=check)


def default_ensemble(gate: UnitaryGate, kind: str = "mub", r: int | None = None) -> TestEnsemble:
    """The natural test ensemble for a gate (used by the CLI layer).

    ``mub`` builds r mutually unbiased product bases (default: 2 for
    controlled-Z/X gates, otherwise all constructible bases up to d_min + 1);
    controlled-X gates get the Hadamard-conjugated pair so that the coloring
    protocol applies.  ``two-design`` builds the product 2-design.
    """
    dims = gate.factor_dims
    if kind == "two-design":
        from .ensembles import product_two_design_ensemble

        return product_two_design_ensemble(dims)
    if kind != "mub":
        raise GateVerifyError(f"unknown ensemble kind {kind!r}")
    if gate.descriptor == "controlled-X-type":
        n = len(dims)
        if r not in (None, 2):
            raise GateVerifyError("the controlled-X protocol uses exactly 2 bases")
        assignments = [["Z"] * (n - 1) + ["X"], ["X"] * (n - 1) + ["Z"]]
        return product_basis_ensemble(dims, assignments)
    if gate.descriptor == "controlled-Z-type":
        return product_mub_ensemble(dims, r or 2)
    if r is None:
        r = min(len(mub_bases(dk)) for dk in dims)
    return product_mub_ensemble(dims, r)


# ---------------------------------------------------------------------------
# Unitary conjugation of strategies


def operator_product_factors(
    matrix: np.ndarray, dims: Sequence[int], atol: float = 1e-9
) -> list[np.ndarray] | None:
    """Factor a unitary into per-site unitaries, or None when entangling."""
    dims = tuple(dims)
    rest = np.asarray(matrix, dtype=complex)
    rest_dims = dims
    factors: list[np.ndarray] = []
    while len(rest_dims) > 1:
        d0 = rest_dims[0]
        dr = math.prod(rest_dims[1:])
        t = rest.reshape(d0, dr, d0, dr).transpose(0, 2, 1, 3).reshape(d0 * d0, dr * dr)
        u_, s_, vh_ = np.linalg.svd(t, full_matrices=False)
        if len(s_) > 1 and s_[1] > atol * s_[0]:
            return None
        site = u_[:, 0].reshape(d0, d0) * np.sqrt(d0)
        if np.abs(site.conj().T @ site - np.eye(d0)).max() > 1e-8:
            return None
        factors.append(site)
        rest = np.einsum("ij,ikjl->kl", site.conj(), rest.reshape(d0, dr, d0, dr)) / d0
        rest_dims = rest_dims[1:]
    factors.append(rest)
    if np.abs(rest.conj().T @ rest - np.eye(rest_dims[0])).max() > 1e-8:
        return None
    return factors


def _canonicalize_setting(kets: np.ndarray) -> tuple[str, np.ndarray, list[int]] | None:
    """Match a basis to a canonical Pauli eigenbasis up to phases and outcome order."""
    d = kets.shape[0]
    for label, canon in mub_bases(d):
        m = np.abs(canon.conj().T @ kets)
        perm = m.argmax(axis=0)
        if len(set(perm.tolist())) == d and np.all(m[perm, np.arange(d)] > 1 - 1e-8):
            return label, canon, [int(x) for x in perm]
    return None


def conjugate_verifier_by_sites(
    verifier: StateVerifier, site_ops: Sequence[np.ndarray], new_target: PureState
) -> StateVerifier:
    """Rotate every local test by per-site unitaries; relabel where canonical."""
    tests = []
    for test, p in verifier.tests:
        if test.settings is None:
            g = site_ops[0]
            for op in site_ops[1:]:
                g = np.kron(g, op)
            new_e = g @ test.operator.entries @ g.conj().T
            tests.append((explicit_test(new_e, new_target.factor_dims), p))
            continue
        new_settings = []
        perms = []
        for setting, v in zip(test.settings, site_ops):
            rotated = v @ setting.kets
            match = _canonicalize_setting(rotated)
            if match is not None:
                label, canon, perm = match
                new_settings.append(SiteSetting(basis_label=label, kets=canon))
                perms.append(perm)
            else:
                new_settings.append(SiteSetting(basis_label="custom", kets=rotated))
                perms.append(list(range(setting.dim)))
        accept = [
            tuple(perms[k][o] for k, o in enumerate(outcome)) for outcome in test.accept
        ]
        tests.append((make_local_test(new_settings, accept), p))
    return make_verifier(new_target, tests)


def conjugate_strategy(
    strategy: VerificationStrategy,
    v: UnitaryGate | np.ndarray,
    new_gate: UnitaryGate | None = None,
    check: bool = True,
) -> VerificationStrategy:
    """Unitarily shifted strategy: test states V(rho_j), tests (U' V U^dag)(E).

    Without ``new_gate`` this is the twirl of the strategy for the same gate,
    whose process operator is (V (x) V*)(Theta) and whose gaps and worst-case
    passing probabilities coincide with the original.  With ``new_gate`` set
    to U' = V U V^dag the same transformation transports the strategy to the
    new gate (e.g. controlled-Z to controlled-X via a Hadamard).
    """
    v_matrix = v.matrix.entries if isinstance(v, UnitaryGate) else np.asarray(v, dtype=complex)
    gate = strategy.gate
    d = gate.dim
    if v_matrix.shape != (d, d):
        raise DimensionMismatch("conjugating unitary has wrong dimension")
    dev = np.abs(v_matrix.conj().T @ v_matrix - np.eye(d)).max()
    if dev > 1e-9:
        raise InvariantViolation(f"conjugating matrix deviates from unitarity by {dev:.3e}")
    target_gate = new_gate if new_gate is not None else gate
    if new_gate is not None:
        expected = v_matrix @ gate.matrix.entries @ v_matrix.conj().T
        if np.abs(expected - new_gate.matrix.entries).max() > 1e-8:
            raise StrategyError("new_gate must equal V U V^dag")
    transformer = target_gate.matrix.entries @ v_matrix @ gate.matrix.entries.conj().T
    site_factors = operator_product_factors(transformer, gate.factor_dims)

    new_states = [
        PureState(v_matrix @ psi.amplitudes, psi.factor_dims)
        for psi, _ in strategy.ensemble.items()
    ]
    new_ensemble = make_ensemble(
        new_states, strategy.ensemble.probs, kind=f"conjugated({strategy.ensemble.kind})"
    )
    new_verifiers = []
    for verifier, psi in zip(strategy.verifiers, new_states):
        new_target = PureState(
            target_gate.matrix.entries @ psi.amplitudes, psi.factor_dims
        )
        if site_factors is not None:
            new_verifiers.append(
                conjugate_verifier_by_sites(verifier, site_factors, new_target)
            )
        else:
            tests = []
            for test, p in verifier.tests:
                new_e = transformer @ test.operator.entries @ transformer.conj().T
                tests.append((explicit_test(new_e, psi.factor_dims), p))
            new_verifiers.append(make_verifier(new_target, tests))
    return assemble_strategy(
        target_gate, new_ensemble, new_verifiers, policy=strategy.policy, check=check
    )


# ---------------------------------------------------------------------------
# Protocol export


def _complex_matrix_doc(m: np.ndarray) -> dict:
    return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}


def strategy_document(strategy: VerificationStrategy) -> dict:
    """Executable description of the protocol: preparations, settings, truth tables."""
    doc = {
        "schema": "gateverify/protocol/v1",
        "gate": {
            "name": strategy.gate.name,
            "descriptor": strategy.gate.descriptor,
            "factor_dims": list(strategy.gate.factor_dims),
        },
        "policy": strategy.policy,
        "gaps": {
            "nu_P": strategy.gaps.nu_P,
            "nu_M": strategy.gaps.nu_M,
            "nu": strategy.gaps.nu,
            "nu_lower_bound": strategy.gaps.nu_lower_bound,
        },
        "states": [],
    }
    for i, ((psi, p), verifier) in enumerate(zip(strategy.ensemble.items(), strategy.verifiers)):
        prep = strategy.ensemble.settings[i]
        state_doc = {
            "index": i,
            "probability": float(p),
            "preparation": (
                [{"site": k, "basis": label, "ket_index": idx} for k, (label, idx) in enumerate(prep)]
                if prep is not None
                else {"amplitudes": _complex_matrix_doc(psi.amplitudes.reshape(1, -1))}
            ),
            "tests": [],
        }
        for test, w in verifier.tests:
            if test.settings is not None:
                test_doc = {
                    "probability": float(w),
                    "settings": [
                        {
                            "site": k,
                            "basis": s.basis_label,
                            **({"weyl": list(s.weyl)} if s.weyl is not None else {}),
                            **(
                                {"kets": _complex_matrix_doc(s.kets)}
                                if s.basis_label == "custom"
                                else {}
                            ),
                        }
                        for k, s in enumerate(test.settings)
                    ],
                    "accept": sorted(list(o) for o in test.accept),
                }
            else:
                test_doc = {
                    "probability": float(w),
                    "operator": _complex_matrix_doc(test.operator.entries),
                }
            state_doc["tests"].append(test_doc)
        doc["states"].append(state_doc)
    return doc
