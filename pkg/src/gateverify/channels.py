"""States, unitaries, CPTP channels, Choi duality and fidelities.

Conventions, fixed once and used everywhere:

* The maximally entangled reference state is Phi = (sum_j |jj>)/sqrt(d) in
  the computational product basis.
* The Choi state of a channel L is chi_L = (L (x) 1)(|Phi><Phi|); its second
  reduced state is the maximally mixed state, tr_1 chi_L = 1/d.
* Complex conjugation (rho*, V*) is always taken entrywise in the
  computational basis.
* Tensor factor 0 is the most significant slot; subsystem permutations move
  slots, not labels.

All objects are immutable; operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import paulis
from .errors import DimensionMismatch, GateVerifyError, InvariantViolation
from .linalg import (
    DEFAULT_RTOL,
    DenseOperator,
    check_dim_cap,
    hermitian_eig,
    partial_trace,
)

CHANNEL_ATOL = 1e-8


@dataclass(frozen=True)
class PureState:
    """Unit vector with tensor-factor metadata."""

    amplitudes: np.ndarray
    factor_dims: tuple[int, ...]

    def __post_init__(self) -> None:
        v = np.array(self.amplitudes, dtype=complex, copy=True).reshape(-1)
        dims = tuple(int(d) for d in self.factor_dims)
        if math.prod(dims) != v.size:
            raise DimensionMismatch(f"factor_dims {dims} do not match vector of size {v.size}")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > 1e-9:
            raise InvariantViolation(f"state norm {norm} deviates from 1 beyond 1e-9")
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)
        object.__setattr__(self, "factor_dims", dims)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density(self) -> DenseOperator:
        v = self.amplitudes
        return DenseOperator(np.outer(v, v.conj()), self.factor_dims, self.factor_dims)

    def conj(self) -> "PureState":
        return PureState(self.amplitudes.conj(), self.factor_dims)

    def overlap(self, other: "PureState") -> complex:
        if self.dim != other.dim:
            raise DimensionMismatch("overlap of states with different dimensions")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def basis_state(index: int, dims: Sequence[int] | int) -> PureState:
    if isinstance(dims, int):
        dims = (dims,)
    d = math.prod(dims)
    v = np.zeros(d, dtype=complex)
    v[index] = 1.0
    return PureState(v, tuple(dims))


def product_state(kets: Sequence[np.ndarray], dims: Sequence[int]) -> PureState:
    v = np.array([1.0], dtype=complex)
    for ket in kets:
        v = np.kron(v, np.asarray(ket, dtype=complex).reshape(-1))
    return PureState(v, tuple(dims))


def max_entangled_state(d: int) -> PureState:
    """Phi = (sum_j |jj>)/sqrt(d) on H (x) H."""
    v = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    return PureState(v, (d, d))


def max_entangled_projector(d: int) -> np.ndarray:
    v = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class UnitaryGate:
    """Unitary operator together with a coarse structural descriptor.

    The descriptor drives measurement-policy dispatch: one of ``explicit``,
    ``clifford-circuit``, ``controlled-Z-type``, ``controlled-X-type``,
    ``cswap`` or ``subsystem-permutation``.
    """

    matrix: DenseOperator
    descriptor: str = "explicit"
    name: str = ""

    def __post_init__(self) -> None:
        m = self.matrix.entries
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionMismatch("unitary must be square")
        dev = np.abs(m.conj().T @ m - np.eye(m.shape[0])).max()
        if dev > 1e-9:
            raise InvariantViolation(f"matrix deviates from unitarity by {dev:.3e}")

    @property
    def factor_dims(self) -> tuple[int, ...]:
        return self.matrix.row_dims

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, psi: PureState) -> PureState:
        if psi.dim != self.dim:
            raise DimensionMismatch("gate and state dimensions differ")
        return PureState(self.matrix.entries @ psi.amplitudes, self.factor_dims)

    def transform(self, op: np.ndarray) -> np.ndarray:
        """Heisenberg action U op U^dagger."""
        u = self.matrix.entries
        return u @ op @ u.conj().T

    def adjoint(self) -> "UnitaryGate":
        return UnitaryGate(self.matrix.dagger(), self.descriptor, self.name + "^dagger")


@dataclass(frozen=True)
class QuantumChannel:
    """CPTP map in Kraus form."""

    kraus_ops: tuple[DenseOperator, ...]

    def __post_init__(self) -> None:
        ops = tuple(self.kraus_ops)
        if not ops:
            raise GateVerifyError("channel needs at least one Kraus operator")
        shape = ops[0].shape
        if any(k.shape != shape for k in ops):
            raise DimensionMismatch("all Kraus operators must share one shape")
        total = sum(k.entries.conj().T @ k.entries for k in ops)
        dev = np.abs(total - np.eye(shape[1])).max()
        if dev > CHANNEL_ATOL:
            raise InvariantViolation(f"Kraus completeness violated by {dev:.3e}")
        object.__setattr__(self, "kraus_ops", ops)

    @classmethod
    def from_unitary(cls, gate: UnitaryGate) -> "QuantumChannel":
        return cls((gate.matrix,))

    @property
    def dim(self) -> int:
        return self.kraus_ops[0].shape[0]

    @property
    def factor_dims(self) -> tuple[int, ...]:
        return self.kraus_ops[0].row_dims

    def apply(self, rho: np.ndarray | DenseOperator) -> np.ndarray:
        m = rho.entries if isinstance(rho, DenseOperator) else np.asarray(rho, dtype=complex)
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for k in self.kraus_ops:
            out += k.entries @ m @ k.entries.conj().T
        return out

    def apply_pure(self, psi: PureState) -> np.ndarray:
        return self.apply(psi.density())


@dataclass(frozen=True)
class ChoiState:
    """State on H (x) H whose second marginal is maximally mixed."""

    matrix: DenseOperator
    atol: float = CHANNEL_ATOL

    def __post_init__(self) -> None:
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatch("Choi state must be square")
        d2 = m.shape[0]
        d = int(round(math.isqrt(d2)))
        if d * d != d2:
            raise DimensionMismatch(f"Choi state dimension {d2} is not a perfect square")
        if m.row_dims != (d, d):
            object.__setattr__(self, "matrix", DenseOperator(m.entries, (d, d), (d, d)))
        spec = hermitian_eig(self.matrix, rtol=1e-7)
        if spec.eigenvalues[-1] < -self.atol:
            raise InvariantViolation(f"Choi state has eigenvalue {spec.eigenvalues[-1]:.3e} < 0")
        tr = self.matrix.trace()
        if abs(tr - 1.0) > self.atol:
            raise InvariantViolation(f"Choi state trace {tr} deviates from 1")
        marginal = partial_trace(self.matrix, keep=[1]).entries
        dev = np.abs(marginal - np.eye(d) / d).max()
        if dev > self.atol:
            raise InvariantViolation(f"second marginal deviates from 1/d by {dev:.3e}")

    @property
    def dim(self) -> int:
        return self.matrix.row_dims[0]


def choi_of_channel(channel: QuantumChannel) -> ChoiState:
    """chi = (L (x) 1)(|Phi><Phi|)."""
    d = channel.dim
    check_dim_cap(d, "Choi state")
    chi = np.zeros((d * d, d * d), dtype=complex)
    for k in channel.kraus_ops:
        w = k.entries.reshape(-1) / np.sqrt(d)  # (K (x) 1)|Phi> in row-major layout
        chi += np.outer(w, w.conj())
    return ChoiState(DenseOperator(chi, (d, d), (d, d)))


def channel_of_choi(chi: ChoiState, cutoff: float = 1e-10) -> QuantumChannel:
    """Kraus form of the channel determined by a Choi state.

    Eigenvectors of chi with eigenvalue lambda become Kraus operators
    sqrt(d lambda) unvec(v); eigenvalues below ``cutoff`` are dropped.
    """
    d = chi.dim
    spec = hermitian_eig(chi.matrix, rtol=1e-7)
    kraus = []
    for lam, vec in zip(spec.eigenvalues, spec.eigenvectors.T):
        if lam <= cutoff:
            continue
        k = np.sqrt(d * lam) * vec.reshape(d, d)
        kraus.append(DenseOperator.square(k))
    return QuantumChannel(tuple(kraus))


def entanglement_fidelity(channel: QuantumChannel, gate: UnitaryGate) -> float:
    """Overlap tr(chi_L chi_U) of the Choi states; equals <Phi|chi_E|Phi>."""
    if channel.dim != gate.dim:
        raise DimensionMismatch("channel and gate dimensions differ")
    d = gate.dim
    u = gate.matrix.entries
    total = 0.0
    for k in channel.kraus_ops:
        total += abs(np.trace(u.conj().T @ k.entries)) ** 2
    return float(total) / d**2


def entanglement_infidelity(channel: QuantumChannel, gate: UnitaryGate) -> float:
    return 1.0 - entanglement_fidelity(channel, gate)


def average_gate_fidelity(channel: QuantumChannel, gate: UnitaryGate) -> float:
    """F_A = (d F_E + 1)/(d + 1)."""
    d = gate.dim
    return (d * entanglement_fidelity(channel, gate) + 1.0) / (d + 1.0)


def average_gate_infidelity(channel: QuantumChannel, gate: UnitaryGate) -> float:
    """eps_A = d eps_E / (d + 1)."""
    d = gate.dim
    return d * entanglement_infidelity(channel, gate) / (d + 1.0)


# ---------------------------------------------------------------------------
# Noise models


@dataclass(frozen=True)
class NoiseModel:
    """Descriptor for the noise applied on top of an ideal gate.

    Kinds: ``none``, ``depolarizing`` (probability p of full depolarization),
    ``per-site-depolarizing`` (independent local depolarizing per factor),
    ``overrotation`` (extra unitary exp(-i theta H)) and ``kraus-explicit``.
    """

    kind: str
    p: float | None = None
    theta: float | None = None
    generator: np.ndarray | None = None
    kraus: tuple[np.ndarray, ...] | None = None

    def noise_kraus(self, dims: tuple[int, ...]) -> list[np.ndarray]:
        """Kraus operators of the noise channel alone, on the given space."""
        d = math.prod(dims)
        if self.kind == "none":
            return [np.eye(d, dtype=complex)]
        if self.kind == "depolarizing":
            return _depolarizing_kraus(d, self._checked_p())
        if self.kind == "per-site-depolarizing":
            p = self._checked_p()
            site_sets = [_depolarizing_kraus(dk, p) for dk in dims]
            out = [np.array([[1.0]], dtype=complex)]
            for site in site_sets:
                out = [np.kron(a, b) for a in out for b in site]
            return [k for k in out if np.abs(k).max() > 0]
        if self.kind == "overrotation":
            if self.generator is None or self.theta is None:
                raise GateVerifyError("overrotation noise needs generator and theta")
            h = np.asarray(self.generator, dtype=complex)
            if h.shape != (d, d):
                raise DimensionMismatch(f"generator shape {h.shape} does not match dim {d}")
            vals, vecs = np.linalg.eigh(0.5 * (h + h.conj().T))
            u = (vecs * np.exp(-1j * self.theta * vals)) @ vecs.conj().T
            return [u]
        if self.kind == "kraus-explicit":
            if not self.kraus:
                raise GateVerifyError("kraus-explicit noise needs Kraus operators")
            return [np.asarray(k, dtype=complex) for k in self.kraus]
        raise GateVerifyError(f"unknown noise kind {self.kind!r}")

    def _checked_p(self) -> float:
        if self.p is None or not 0.0 <= self.p <= 1.0:
            raise GateVerifyError(f"depolarizing probability must be in [0, 1], got {self.p}")
        return float(self.p)


def _depolarizing_kraus(d: int, p: float) -> list[np.ndarray]:
    """Weyl Kraus set of the depolarizing channel rho -> (1-p) rho + p 1/d."""
    if p == 0.0:
        return [np.eye(d, dtype=complex)]
    ops = [np.sqrt(1.0 - p + p / d**2) * np.eye(d, dtype=complex)]
    for a in range(d):
        for b in range(d):
            if a == 0 and b == 0:
                continue
            ops.append(np.sqrt(p) / d * paulis.weyl_word(d, a, b))
    return ops


def no_noise() -> NoiseModel:
    return NoiseModel(kind="none")


def depolarizing_noise(p: float) -> NoiseModel:
    return NoiseModel(kind="depolarizing", p=p)


def per_site_depolarizing_noise(p: float) -> NoiseModel:
    return NoiseModel(kind="per-site-depolarizing", p=p)


def overrotation_noise(generator: np.ndarray, theta: float) -> NoiseModel:
    return NoiseModel(kind="overrotation", generator=np.asarray(generator, dtype=complex), theta=theta)


def explicit_noise(kraus: Sequence[np.ndarray]) -> NoiseModel:
    return NoiseModel(kind="kraus-explicit", kraus=tuple(np.asarray(k, dtype=complex) for k in kraus))


def apply_noise(gate: UnitaryGate, noise: NoiseModel) -> QuantumChannel:
    """Channel realized by the noisy device: noise composed after the gate."""
    dims = gate.factor_dims
    u = gate.matrix.entries
    kraus = tuple(
        DenseOperator(n @ u, dims, dims) for n in noise.noise_kraus(dims)
    )
    return QuantumChannel(kraus)


# ---------------------------------------------------------------------------
# Random objects (Haar measure), used for tests and for noise calibration.


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a Ginibre matrix."""
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    phases = np.diag(r).copy()
    phases /= np.abs(phases)
    return q * phases


def haar_state(dims: Sequence[int] | int, rng: np.random.Generator) -> PureState:
    if isinstance(dims, int):
        dims = (dims,)
    d = math.prod(dims)
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return PureState(v / np.linalg.norm(v), tuple(dims))


def random_channel(d: int, kraus_rank: int, rng: np.random.Generator) -> QuantumChannel:
    """Random CPTP map from a Haar-random Stinespring isometry."""
    g = rng.standard_normal((d * kraus_rank, d)) + 1j * rng.standard_normal((d * kraus_rank, d))
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    kraus = tuple(DenseOperator.square(q[i * d : (i + 1) * d, :]) for i in range(kraus_rank))
    return QuantumChannel(kraus)
