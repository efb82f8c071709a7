"""Test-state ensembles: product MUB ensembles, 2-designs, preparation gaps.

An ensemble {rho_j, p_j} of pure product test states is *balanced* when
d sum_j p_j rho_j = 1, which makes {d p_j rho_j} formally a POVM.  The
quality of an ensemble for gate verification is captured by the preparation
operator Theta_P = d sum_j p_j rho_j (x) rho_j* on H (x) H and its spectral
gap nu_P = 1 - beta_P, where beta_P = ||Theta_P - |Phi><Phi||| is the second
largest eigenvalue of Theta_P for balanced ensembles.

Ensembles built from r mutually unbiased product bases achieve
nu_P = (r - 1)/r; product 2-designs achieve the local-preparation maximum
d_min/(d_min + 1).  Ensembles are stored explicitly; at desk scale r * d
stays below a few hundred states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import paulis
from .channels import PureState, max_entangled_projector, product_state
from .errors import DimensionMismatch, GateVerifyError, InvariantViolation
from .linalg import (
    DenseOperator,
    check_dim_cap,
    operator_norm,
    spectral_gap,
)

BALANCE_ATOL = 1e-8


@dataclass(frozen=True)
class OrthonormalBasis:
    """Labeled orthonormal basis; kets are the columns of ``matrix``."""

    matrix: np.ndarray
    label: str

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"basis matrix must be square, got {m.shape}")
        gram = m.conj().T @ m
        if np.abs(gram - np.eye(m.shape[0])).max() > 1e-9:
            raise InvariantViolation(f"basis {self.label!r} is not orthonormal within 1e-9")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def ket(self, index: int) -> np.ndarray:
        return self.matrix[:, index]

    @property
    def kets(self) -> list[PureState]:
        return [PureState(self.matrix[:, i], (self.dim,)) for i in range(self.dim)]


def pauli_eigenbases(d1: int) -> list[OrthonormalBasis]:
    """Mutually unbiased eigenbases of Z, X, XZ (and XZ^t for prime d1)."""
    return [OrthonormalBasis(m, label) for label, m in paulis.mub_bases(d1)]


@dataclass(frozen=True)
class TestEnsemble:
    """Weighted set of pure product test states with balancedness metadata.

    ``settings`` records, per state, the per-site (basis label, ket index)
    preparation instructions when the ensemble was built from labeled bases;
    ad-hoc ensembles carry ``None`` entries.
    """

    states: tuple[PureState, ...]
    probs: np.ndarray
    factor_dims: tuple[int, ...]
    balanced: bool
    settings: tuple[tuple[tuple[str, int], ...] | None, ...]
    kind: str = "explicit"

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float, copy=True)
        if len(p) != len(self.states):
            raise DimensionMismatch("probs and states length mismatch")
        if np.any(p <= 0):
            raise GateVerifyError("all ensemble probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-9:
            raise GateVerifyError(f"probabilities sum to {p.sum()}, expected 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def dim(self) -> int:
        return math.prod(self.factor_dims)

    def __len__(self) -> int:
        return len(self.states)

    def items(self):
        return zip(self.states, self.probs)

    def average_state(self) -> np.ndarray:
        d = self.dim
        out = np.zeros((d, d), dtype=complex)
        for psi, p in self.items():
            v = psi.amplitudes
            out += p * np.outer(v, v.conj())
        return out


def make_ensemble(
    states: Sequence[PureState],
    probs: Sequence[float],
    settings: Sequence[tuple[tuple[str, int], ...] | None] | None = None,
    kind: str = "explicit",
) -> TestEnsemble:
    """Assemble an ensemble, computing (not asserting) the balanced flag."""
    states = tuple(states)
    if not states:
        raise GateVerifyError("ensemble needs at least one state")
    dims = states[0].factor_dims
    if any(s.factor_dims != dims for s in states):
        raise DimensionMismatch("all test states must share factor_dims")
    d = math.prod(dims)
    p = np.asarray(probs, dtype=float)
    avg = np.zeros((d, d), dtype=complex)
    for psi, w in zip(states, p):
        v = psi.amplitudes
        avg += w * np.outer(v, v.conj())
    balanced = operator_norm(d * avg - np.eye(d)) <= BALANCE_ATOL
    if settings is None:
        settings_t: tuple = (None,) * len(states)
    else:
        settings_t = tuple(settings)
    return TestEnsemble(states, p, dims, balanced, settings_t, kind)


def product_mub_ensemble(factor_dims: Sequence[int], r: int) -> TestEnsemble:
    """Uniform ensemble over r mutually unbiased product bases.

    Basis s of the product is the tensor product of basis s of every site,
    drawn from the Pauli eigenbases in the fixed order Z, X, XZ, XZ^2, ...
    The common basis count is limited by the site with the fewest available
    bases (3 in general, d_k + 1 when every d_k is prime).
    """
    dims = tuple(int(d) for d in factor_dims)
    d = math.prod(dims)
    check_dim_cap(d, "ensemble")
    site_bases = [pauli_eigenbases(dk) for dk in dims]
    r_max = min(len(b) for b in site_bases)
    if not 1 <= r <= r_max:
        raise GateVerifyError(
            f"r={r} product bases requested but only {r_max} are constructible for dims {dims}"
        )
    states: list[PureState] = []
    settings: list[tuple[tuple[str, int], ...]] = []
    for s in range(r):
        bases = [site_bases[k][s] for k in range(len(dims))]
        for idx in range(d):
            digits = np.unravel_index(idx, dims)
            kets = [bases[k].ket(digits[k]) for k in range(len(dims))]
            states.append(product_state(kets, dims))
            settings.append(tuple((bases[k].label, int(digits[k])) for k in range(len(dims))))
    probs = np.full(len(states), 1.0 / (r * d))
    ensemble = make_ensemble(states, probs, settings, kind=f"mub(r={r})")
    if not ensemble.balanced:
        raise InvariantViolation("MUB product ensemble failed the balance check")
    return ensemble


def product_basis_ensemble(
    factor_dims: Sequence[int], assignments: Sequence[Sequence[str]]
) -> TestEnsemble:
    """Uniform ensemble over product bases given as per-site Pauli basis labels.

    Each assignment names one basis per site (e.g. ``["Z", "Z", "X"]``); the
    ensemble is uniform over all basis states of all assignments.  Used for
    protocols whose preparation bases differ between sites, such as the
    Hadamard-conjugated controlled-X strategy.
    """
    dims = tuple(int(d) for d in factor_dims)
    d = math.prod(dims)
    check_dim_cap(d, "ensemble")
    site_bases = [{b.label: b for b in pauli_eigenbases(dk)} for dk in dims]
    states: list[PureState] = []
    settings: list[tuple[tuple[str, int], ...]] = []
    for labels in assignments:
        if len(labels) != len(dims):
            raise GateVerifyError(f"assignment {labels} does not cover {len(dims)} sites")
        try:
            bases = [site_bases[k][labels[k]] for k in range(len(dims))]
        except KeyError as exc:
            raise GateVerifyError(f"unknown basis label in {labels}") from exc
        for idx in range(d):
            digits = np.unravel_index(idx, dims)
            kets = [bases[k].ket(digits[k]) for k in range(len(dims))]
            states.append(product_state(kets, dims))
            settings.append(tuple((labels[k], int(digits[k])) for k in range(len(dims))))
    probs = np.full(len(states), 1.0 / len(states))
    ensemble = make_ensemble(states, probs, settings, kind="product-basis")
    if not ensemble.balanced:
        raise InvariantViolation("product basis ensemble failed the balance check")
    return ensemble


def product_two_design_ensemble(factor_dims: Sequence[int]) -> TestEnsemble:
    """Tensor product of single-site 2-designs (complete MUB per prime site).

    Achieves the local-preparation optimum nu_P = d_min/(d_min + 1).  Sites
    with non-prime dimension have no implemented 2-design and raise.
    """
    dims = tuple(int(d) for d in factor_dims)
    d = math.prod(dims)
    check_dim_cap(d, "ensemble")
    site_states: list[list[tuple[np.ndarray, tuple[str, int]]]] = []
    for dk in dims:
        if not paulis.is_prime(dk):
            raise GateVerifyError(
                f"no 2-design construction available for local dimension {dk} (prime required)"
            )
        local = []
        for basis in pauli_eigenbases(dk):
            for i in range(dk):
                local.append((basis.ket(i), (basis.label, i)))
        site_states.append(local)
    states: list[PureState] = []
    settings: list[tuple[tuple[str, int], ...]] = []
    counts = [len(s) for s in site_states]
    for combo in np.ndindex(*counts):
        kets = [site_states[k][combo[k]][0] for k in range(len(dims))]
        states.append(product_state(kets, dims))
        settings.append(tuple(site_states[k][combo[k]][1] for k in range(len(dims))))
    probs = np.full(len(states), 1.0 / len(states))
    ensemble = make_ensemble(states, probs, settings, kind="two-design")
    if not ensemble.balanced:
        raise InvariantViolation("product 2-design ensemble failed the balance check")
    return ensemble


@dataclass(frozen=True)
class PreparationReport:
    """Preparation operator with its spectral gap."""

    theta_P: DenseOperator
    beta_P: float
    nu_P: float


def preparation_operator(ensemble: TestEnsemble) -> DenseOperator:
    """Theta_P = d sum_j p_j rho_j (x) rho_j* on H (x) H."""
    d = ensemble.dim
    check_dim_cap(d, "preparation operator")
    # rho (x) rho* is the rank-1 projector onto psi (x) psi*.
    cols = np.empty((d * d, len(ensemble)), dtype=complex)
    for i, (psi, _) in enumerate(ensemble.items()):
        v = psi.amplitudes
        cols[:, i] = np.kron(v, v.conj())
    weights = d * ensemble.probs
    theta = (cols * weights) @ cols.conj().T
    theta = 0.5 * (theta + theta.conj().T)
    return DenseOperator(theta, (d, d), (d, d))


def preparation_report(ensemble: TestEnsemble) -> PreparationReport:
    """Exact Theta_P with beta_P = ||Theta_P - |Phi><Phi||| and nu_P = 1 - beta_P."""
    d = ensemble.dim
    theta = preparation_operator(ensemble)
    phi = max_entangled_projector(d)
    beta = operator_norm(theta.entries - phi)
    nu = 1.0 - beta
    if nu < 1e-9:
        nu = 0.0
    if ensemble.balanced:
        _check_balanced_sandwich(theta.entries, phi, "Theta_P")
    return PreparationReport(theta_P=theta, beta_P=float(beta), nu_P=float(nu))


def _check_balanced_sandwich(theta: np.ndarray, phi: np.ndarray, name: str) -> None:
    lo = np.linalg.eigvalsh(theta - phi)[0]
    hi = np.linalg.eigvalsh(np.eye(theta.shape[0]) - theta)[0]
    if lo < -BALANCE_ATOL or hi < -BALANCE_ATOL:
        raise InvariantViolation(
            f"balanced sandwich |Phi><Phi| <= {name} <= 1 violated "
            f"(min eigs {lo:.3e}, {hi:.3e})"
        )


def is_two_design(ensemble: TestEnsemble, atol: float = 1e-8) -> bool:
    """Check sum_j p_j rho_j (x) rho_j* = (d |Phi><Phi| + 1)/(d (d + 1))."""
    d = ensemble.dim
    theta = preparation_operator(ensemble).entries / d
    target = (d * max_entangled_projector(d) + np.eye(d * d)) / (d * (d + 1))
    return operator_norm(theta - target) <= atol
