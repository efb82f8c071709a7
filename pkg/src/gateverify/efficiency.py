"""Worst-case passing probabilities, SDP solves, and test counts.

The central quantity is

    p_E(Theta, eps) = max tr(Theta chi)
      over  chi >= 0,  tr_1 chi = 1/d,  <Phi|chi|Phi> <= 1 - eps,

the largest average passing probability any channel with entanglement
fidelity at most 1 - eps can reach against a strategy with process operator
Theta.  Its average-fidelity sibling satisfies
p_A(Theta, eps) = p_E(Theta, (d+1) eps / d).

For balanced strategies p_E(Theta, eps) <= 1 - nu eps <= 1 - nu_P nu_M eps,
and the minimum number of tests to reach significance level delta is
N = ceil(ln delta / ln p) with p the relevant passing probability.

Solver: the feasible set is an intersection of three sets with exact
projections (PSD cone, the marginal affine subspace, the fidelity
halfspace).  A scaled ADMM splitting between the PSD cone and the
affine-plus-halfspace piece drives the solve; a cyclic Dykstra projection
onto all three sets repairs the final iterate into an exactly feasible
witness (lower bound), and a rounded dual-feasible pair certifies an upper
bound.  ``converged`` means the two-sided gap closed below tolerance; the
result always carries honest bounds either way.

Every solve is deterministic; independent solves are trivially parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import ChoiState, max_entangled_projector
from .errors import DimensionCapExceeded, GateVerifyError, InvariantViolation
from .linalg import DenseOperator
from .strategies import VerificationStrategy

SDP_DEFAULT_TOL = 1e-6
SDP_MAX_DIM = 16
WITNESS_ATOL = 1e-7


# ---------------------------------------------------------------------------
# Problem normal form


@dataclass(frozen=True)
class _Problem:
    theta: np.ndarray
    d: int
    eps: float
    nu: float | None  # spectral gap usable for the 1 - nu eps certificate
    strategy: VerificationStrategy | None


def _coerce_problem(target, eps: float) -> _Problem:
    if not 0.0 <= eps <= 1.0:
        raise GateVerifyError(f"eps must be in [0, 1], got {eps}")
    strategy = None
    if isinstance(target, VerificationStrategy):
        strategy = target
        theta = target.theta.entries
        d = target.dim
        nu = target.gaps.nu if target.balanced else None
    else:
        theta = target.entries if isinstance(target, DenseOperator) else np.asarray(target)
        d2 = theta.shape[0]
        d = math.isqrt(d2)
        if d * d != d2 or theta.shape != (d2, d2):
            raise GateVerifyError("process operator must be square on H (x) H")
        nu = _balanced_gap(theta, d)
    if d > SDP_MAX_DIM:
        raise DimensionCapExceeded(f"SDP solves are capped at d <= {SDP_MAX_DIM}, got {d}")
    theta = 0.5 * (theta + theta.conj().T)
    return _Problem(theta=theta, d=d, eps=float(eps), nu=nu, strategy=strategy)


def _balanced_gap(theta: np.ndarray, d: int) -> float | None:
    """Spectral gap when |Phi><Phi| <= Theta <= 1 holds; None otherwise."""
    phi = max_entangled_projector(d)
    if np.linalg.eigvalsh(theta - phi)[0] < -1e-8:
        return None
    if np.linalg.eigvalsh(np.eye(d * d) - theta)[0] < -1e-8:
        return None
    beta = float(np.linalg.norm(theta - phi, 2))
    return max(1.0 - beta, 0.0)


# ---------------------------------------------------------------------------
# Exact projections


def _tr1(chi: np.ndarray, d: int) -> np.ndarray:
    return np.einsum("aiaj->ij", chi.reshape(d, d, d, d))


def _project_marginal(chi: np.ndarray, d: int) -> np.ndarray:
    """Orthogonal projection onto {tr_1 chi = 1/d}."""
    defect = _tr1(chi, d) - np.eye(d) / d
    return chi - np.kron(np.eye(d), defect) / d


def _phi_vector(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)


def _project_marginal_and_fidelity(chi: np.ndarray, d: int, eps: float) -> np.ndarray:
    """Projection onto {tr_1 chi = 1/d} intersected with {<Phi|chi|Phi> <= 1 - eps}."""
    out = _project_marginal(chi, d)
    phi = _phi_vector(d)
    fid = float(np.real(phi.conj() @ out @ phi))
    excess = fid - (1.0 - eps)
    if excess <= 0:
        return out
    # in-subspace direction of the fidelity functional
    t = np.outer(phi, phi.conj()) - np.eye(d * d) / d**2
    return out - (excess / (1.0 - 1.0 / d**2)) * t


def _project_psd(chi: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (chi + chi.conj().T))
    clipped = np.clip(vals, 0.0, None)
    return (vecs * clipped) @ vecs.conj().T


def dykstra_project(
    chi: np.ndarray, d: int, eps: float, iterations: int = 400, tol: float = 1e-12
) -> np.ndarray:
    """Cyclic Dykstra projection onto the feasible set of the SDP.

    Ends on the PSD projection, so the result is exactly PSD with residual
    marginal/fidelity violations at the convergence tolerance.
    """
    x = chi.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(iterations):
        y = _project_marginal_and_fidelity(x + p, d, eps)
        p = x + p - y
        x_new = _project_psd(y + q)
        q = y + q - x_new
        if np.linalg.norm(x_new - x) <= tol:
            x = x_new
            break
        x = x_new
    return x


def _feasibility_violation(chi: np.ndarray, d: int, eps: float) -> float:
    """Max of marginal deviation and fidelity excess (PSD is exact by repair)."""
    marg = float(np.abs(_tr1(chi, d) - np.eye(d) / d).max())
    phi = _phi_vector(d)
    fid = float(np.real(phi.conj() @ chi @ phi))
    return max(marg, fid - (1.0 - eps))


def feasible_start(d: int, eps: float) -> np.ndarray:
    """chi0 = (1 - eps)|Phi><Phi| + eps (1 - |Phi><Phi|)/(d^2 - 1); always feasible."""
    phi = max_entangled_projector(d)
    return (1.0 - eps) * phi + eps * (np.eye(d * d) - phi) / (d * d - 1)


# ---------------------------------------------------------------------------
# Dual rounding


def _dual_upper_bound(m: np.ndarray, theta: np.ndarray, d: int, eps: float) -> float:
    """Round (Theta - rho u) onto the dual cone and evaluate its objective.

    Dual feasibility requires S = 1 (x) Y + y |Phi><Phi| - Theta >= 0 and
    y >= 0, with objective (1 - eps) y + tr(Y)/d; any such pair upper-bounds
    the primal by weak duality.
    """
    phi = _phi_vector(d)
    phi_proj = np.outer(phi, phi.conj())
    t = phi_proj - np.eye(d * d) / d**2
    m_sub = np.kron(np.eye(d), _tr1(m, d)) / d
    m_perp = m - m_sub
    y = float(np.real(np.vdot(t, m_perp))) / (1.0 - 1.0 / d**2)
    y = max(y, 0.0)
    yy = (_tr1(m, d) - y * np.eye(d) / d) / d
    yy = 0.5 * (yy + yy.conj().T)
    s = np.kron(np.eye(d), yy) + y * phi_proj - theta
    shift = float(np.linalg.eigvalsh(s)[0])
    if shift < 0:
        yy = yy - shift * np.eye(d)
    return (1.0 - eps) * y + float(np.trace(yy).real) / d


# ---------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class SdpResult:
    """Certified solve: value is the objective of the feasible witness."""

    value: float
    witness: ChoiState
    upper_certificate: float
    iterations: int
    converged: bool
    eps: float

    def __post_init__(self) -> None:
        if self.value > self.upper_certificate + 1e-6:
            raise InvariantViolation(
                f"witness value {self.value} exceeds certificate {self.upper_certificate}"
            )


def p_e_bound(strategy: VerificationStrategy, eps: float) -> float:
    """Analytic bound 1 - nu eps for balanced strategies."""
    if not 0.0 <= eps <= 1.0:
        raise GateVerifyError(f"eps must be in [0, 1], got {eps}")
    if not strategy.balanced:
        raise GateVerifyError("the 1 - nu eps bound requires a balanced strategy")
    return 1.0 - strategy.gaps.nu * eps


def p_e_sdp(
    target,
    eps: float,
    tol: float = SDP_DEFAULT_TOL,
    max_iterations: int = 40000,
    check_interval: int = 100,
) -> SdpResult:
    """Solve the worst-case passing probability SDP for a strategy or operator.

    The returned value is the objective of an exactly repaired feasible
    witness; ``upper_certificate`` is the best of the analytic 1 - nu eps
    bound, the trivial bound 1, and a rounded dual-feasible bound.
    ``converged`` is True when certificate - value <= tol.
    """
    prob = _coerce_problem(target, eps)
    theta, d, eps = prob.theta, prob.d, prob.eps
    cheap_ub = 1.0
    if prob.nu is not None:
        cheap_ub = min(cheap_ub, 1.0 - prob.nu * eps)

    rho = max(float(np.linalg.norm(theta, 2)), 1e-3)
    alpha = 1.6  # over-relaxation
    chi = feasible_start(d, eps)
    z = chi.copy()
    u = np.zeros_like(chi)

    best_value = float(np.real(np.vdot(theta, chi)))
    best_witness = chi
    upper = cheap_ub
    iterations_done = 0

    for it in range(1, max_iterations + 1):
        chi = _project_marginal_and_fidelity(z - u + theta / rho, d, eps)
        chi_relaxed = alpha * chi + (1.0 - alpha) * z
        z_new = _project_psd(chi_relaxed + u)
        r_primal = float(np.linalg.norm(chi - z_new))
        s_dual = rho * float(np.linalg.norm(z_new - z))
        z = z_new
        u = u + chi_relaxed - z
        iterations_done = it

        if it % check_interval == 0 or it == max_iterations:
            witness = dykstra_project(z, d, eps, iterations=150)
            value = float(np.real(np.vdot(theta, witness)))
            # only a verified-feasible witness may move the lower bound
            if _feasibility_violation(witness, d, eps) <= 1e-9 and value > best_value:
                best_value = value
                best_witness = witness
            dual_ub = _dual_upper_bound(theta - rho * u, theta, d, eps)
            upper = min(upper, dual_ub)
            if upper - best_value <= tol:
                break
            # residual balancing keeps the splitting well conditioned
            if r_primal > 10 * s_dual:
                rho *= 2.0
                u = u / 2.0
            elif s_dual > 10 * r_primal:
                rho /= 2.0
                u = u * 2.0

    converged = upper - best_value <= tol
    witness_state = ChoiState(
        DenseOperator(best_witness, (d, d), (d, d)), atol=WITNESS_ATOL
    )
    phi = _phi_vector(d)
    fid = float(np.real(phi.conj() @ best_witness @ phi))
    if fid > 1.0 - eps + WITNESS_ATOL:
        raise InvariantViolation(f"witness fidelity {fid} exceeds 1 - eps = {1 - eps}")
    result = SdpResult(
        value=best_value,
        witness=witness_state,
        upper_certificate=float(upper),
        iterations=iterations_done,
        converged=converged,
        eps=eps,
    )
    if prob.strategy is not None:
        _cross_check_lab_frame(prob.strategy, best_witness, best_value)
    return result


def _cross_check_lab_frame(
    strategy: VerificationStrategy, chi_err: np.ndarray, value: float
) -> None:
    """tr(Theta~ chi_Lambda) with chi_Lambda = (U (x) 1) chi_E (U (x) 1)^dag
    must reproduce tr(Theta chi_E)."""
    d = strategy.dim
    ui = np.kron(strategy.gate.matrix.entries, np.eye(d))
    chi_lab = ui @ chi_err @ ui.conj().T
    lab_value = float(np.real(np.vdot(strategy.theta_tilde.entries, chi_lab)))
    if abs(lab_value - value) > 1e-9:
        raise InvariantViolation(
            f"lab-frame and error-frame objectives disagree: {lab_value} vs {value}"
        )


def p_a(target, eps: float, tol: float = SDP_DEFAULT_TOL, **kwargs) -> SdpResult:
    """Worst-case passing probability at average-gate infidelity eps."""
    if isinstance(target, VerificationStrategy):
        d = target.dim
    else:
        theta = target.entries if isinstance(target, DenseOperator) else np.asarray(target)
        d = math.isqrt(theta.shape[0])
    eps_e = (d + 1) * eps / d
    if eps_e > 1.0 + 1e-12:
        raise GateVerifyError(
            f"average infidelity {eps} maps to entanglement infidelity {eps_e} > 1"
        )
    return p_e_sdp(target, min(eps_e, 1.0), tol=tol, **kwargs)


# ---------------------------------------------------------------------------
# Test counts


@dataclass(frozen=True)
class TestCount:
    """Number of tests needed for significance delta, or None when p = 1."""

    N: int | None
    basis: str
    p: float | None = None

    @property
    def unverifiable(self) -> bool:
        return self.N is None


@dataclass(frozen=True)
class TestCountReport:
    exact: TestCount
    gap_bound: TestCount
    linearized_bound: TestCount
    sdp: SdpResult
    fidelity_kind: str


def _count_from_probability(p: float, delta: float, basis: str) -> TestCount:
    # probabilities within solver resolution of 1 are unverifiable
    if p >= 1.0 - 1e-9:
        return TestCount(N=None, basis=basis, p=p)
    p = max(p, 1e-15)
    return TestCount(N=max(1, math.ceil(math.log(delta) / math.log(p))), basis=basis, p=p)


def num_tests(
    strategy: VerificationStrategy,
    eps: float,
    delta: float,
    fidelity_kind: str = "entanglement",
    tol: float = SDP_DEFAULT_TOL,
) -> TestCountReport:
    """Minimum test counts from the exact SDP value and from the gap bounds.

    ``linearized_bound`` is the ceil(ln(1/delta) / (nu_P nu_M eps)) form used
    in the summary tables; the exact count never exceeds it.
    """
    if not 0.0 < eps < 1.0 or not 0.0 < delta < 1.0:
        raise GateVerifyError("eps and delta must lie strictly inside (0, 1)")
    if fidelity_kind not in ("entanglement", "average"):
        raise GateVerifyError(f"unknown fidelity kind {fidelity_kind!r}")
    d = strategy.dim
    eps_e = eps if fidelity_kind == "entanglement" else (d + 1) * eps / d
    if eps_e > 1.0:
        raise GateVerifyError("rescaled infidelity exceeds 1")
    sdp = p_e_sdp(strategy, eps_e, tol=tol)
    exact = _count_from_probability(sdp.value, delta, basis="sdp")
    if not strategy.balanced:
        raise GateVerifyError("gap-based test counts require a balanced strategy")
    nu = strategy.gaps.nu
    gap = _count_from_probability(1.0 - nu * eps_e, delta, basis="gap-bound")
    nu_prod = strategy.gaps.nu_P * strategy.gaps.nu_M
    if nu_prod <= 0:
        linearized = TestCount(N=None, basis="nu-product-linearized", p=None)
    else:
        linearized = TestCount(
            N=max(1, math.ceil(math.log(1.0 / delta) / (nu_prod * eps_e))),
            basis="nu-product-linearized",
            p=None,
        )
    return TestCountReport(
        exact=exact,
        gap_bound=gap,
        linearized_bound=linearized,
        sdp=sdp,
        fidelity_kind=fidelity_kind,
    )


def repeated_test_bound(
    strategy: VerificationStrategy, eps_list: Sequence[float], tol: float = SDP_DEFAULT_TOL
) -> float:
    """Bound p_E(Theta, mean eps)^N on the acceptance probability of N runs.

    Also verifies that the bound dominates the product of per-run worst-case
    probabilities (equality when all eps_r agree).
    """
    eps_arr = [float(e) for e in eps_list]
    if not eps_arr:
        raise GateVerifyError("eps_list must be nonempty")
    n = len(eps_arr)
    mean_eps = sum(eps_arr) / n
    bound = p_e_sdp(strategy, mean_eps, tol=tol).value ** n
    product = 1.0
    for e in eps_arr:
        product *= p_e_sdp(strategy, e, tol=tol).value
    if product > bound + 1e-6:
        raise InvariantViolation(
            f"per-run product {product} exceeds mean-infidelity bound {bound}"
        )
    return bound


# ---------------------------------------------------------------------------
# Structural property suite


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class PropertySuiteReport:
    checks: tuple[PropertyCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[PropertyCheck]:
        return [c for c in self.checks if not c.passed]


def property_suite(
    strategy: VerificationStrategy,
    eps_grid: Sequence[float] | None = None,
    seed: int = 0,
    tol: float = SDP_DEFAULT_TOL,
) -> PropertySuiteReport:
    """Monotonicity/concavity in eps, convexity in Theta, twirl invariance.

    Each check is run against SDP values with a 2 tol slack.
    """
    from .channels import haar_unitary

    rng = np.random.default_rng(seed)
    d = strategy.dim
    theta = strategy.theta.entries
    if eps_grid is None:
        eps_grid = [0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5]
    values = {e: p_e_sdp(theta, e, tol=tol).value for e in eps_grid}
    checks: list[PropertyCheck] = []

    ordered = sorted(eps_grid)
    mono_ok, mono_detail = True, "nonincreasing on grid"
    for e1, e2 in zip(ordered, ordered[1:]):
        if values[e2] > values[e1] + 2 * tol:
            mono_ok = False
            mono_detail = f"p({e2}) = {values[e2]} > p({e1}) = {values[e1]}"
            break
    checks.append(PropertyCheck("monotone-in-eps", mono_ok, mono_detail))

    conc_ok, conc_detail = True, "midpoint concavity on grid"
    for e1, e2 in zip(ordered, ordered[2:]):
        mid = 0.5 * (e1 + e2)
        p_mid = p_e_sdp(theta, mid, tol=tol).value
        rhs = 0.5 * (values[e1] + values[e2])
        if p_mid < rhs - 2 * tol:
            conc_ok = False
            conc_detail = f"p({mid}) = {p_mid} < {rhs}"
            break
    checks.append(PropertyCheck("concave-in-eps", conc_ok, conc_detail))

    eps_ref = 0.1
    p_ref = p_e_sdp(theta, eps_ref, tol=tol).value
    conv_ok, conv_detail = True, "midpoint convexity against twirls"
    twirl_ok, twirl_detail = True, "p_E(Theta_V) = p_E(Theta)"
    for _ in range(2):
        v = haar_unitary(d, rng)
        g = np.kron(v, v.conj())
        theta_v = g @ theta @ g.conj().T
        p_v = p_e_sdp(theta_v, eps_ref, tol=tol).value
        if abs(p_v - p_ref) > 2 * tol:
            twirl_ok = False
            twirl_detail = f"p(Theta_V) = {p_v} vs p(Theta) = {p_ref}"
        mu = float(rng.uniform(0.2, 0.8))
        mix = mu * theta + (1 - mu) * theta_v
        p_mix = p_e_sdp(mix, eps_ref, tol=tol).value
        rhs = mu * p_ref + (1 - mu) * p_v
        if p_mix > rhs + 2 * tol:
            conv_ok = False
            conv_detail = f"p(mix) = {p_mix} > {rhs}"
    checks.append(PropertyCheck("convex-in-theta", conv_ok, conv_detail))
    checks.append(PropertyCheck("twirl-invariance", twirl_ok, twirl_detail))
    return PropertySuiteReport(checks=tuple(checks))
