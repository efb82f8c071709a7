"""Stabilizer groups of prime-qudit states by exhaustive Weyl enumeration.

A state |psi> on n sites of prime dimension d1 is a stabilizer state iff
exactly d1^n of the bare Weyl words W(a, b) = prod_k X^(a_k) Z^(b_k) satisfy
W|psi> = c |psi> with |c| = 1.  Enumeration over all d1^(2n) words keeps the
construction independent of tableau algebra, which matters because some
verified gates (CSWAP) are not Clifford while still producing stabilizer
outputs.  At desk scale (n <= 6 qubits, n <= 4 qutrits) the enumeration is
cheap.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import paulis
from .channels import PureState
from .errors import DimensionMismatch, GateVerifyError, InvariantViolation, NotStabilizerState

_ENUM_LIMITS = {2: 6, 3: 4}


def apply_weyl_word(psi: np.ndarray, dims: tuple[int, ...], a: tuple[int, ...], b: tuple[int, ...]) -> np.ndarray:
    """Apply prod_k X^(a_k) Z^(b_k) to a state vector without forming matrices."""
    tensor = psi.reshape(dims)
    for k, dk in enumerate(dims):
        if b[k] % dk:
            phases = paulis.omega(dk) ** (b[k] * np.arange(dk))
            shape = [1] * len(dims)
            shape[k] = dk
            tensor = tensor * phases.reshape(shape)
        if a[k] % dk:
            tensor = np.roll(tensor, a[k], axis=k)
    return tensor.reshape(-1)


@dataclass(frozen=True)
class StabilizerGroup:
    """All Weyl-word stabilizers of one state: labels (a|b) and phases.

    ``labels`` has shape (d1^n, 2n) with the X exponents first; ``phases``
    holds the complex eigenvalue c of the bare word on the state.  Row 0 is
    the identity word.
    """

    n: int
    d1: int
    labels: np.ndarray
    phases: np.ndarray

    def __post_init__(self) -> None:
        labels = np.array(self.labels, dtype=int, copy=True)
        phases = np.array(self.phases, dtype=complex, copy=True)
        labels.setflags(write=False)
        phases.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "phases", phases)

    def __len__(self) -> int:
        return len(self.labels)

    def site_exponents(self, row: int) -> list[tuple[int, int]]:
        """Per-site (a_k, b_k) exponents of element ``row``."""
        lab = self.labels[row]
        return [(int(lab[k]), int(lab[self.n + k])) for k in range(self.n)]

    def element_matrix(self, row: int) -> np.ndarray:
        mats = [paulis.weyl_word(self.d1, a, b) for a, b in self.site_exponents(row)]
        out = np.array([[1.0]], dtype=complex)
        for m in mats:
            out = np.kron(out, m)
        return out

    def is_closed(self) -> bool:
        """Label vectors form a subgroup of Z_d1^(2n)."""
        rows = {tuple(r) for r in self.labels}
        sample = list(rows)
        for r1 in sample:
            for r2 in sample:
                s = tuple((x + y) % self.d1 for x, y in zip(r1, r2))
                if s not in rows:
                    return False
        return True

    def generator_rows(self) -> list[int]:
        """Indices of n independent generators, chosen greedily."""
        rows: list[int] = []
        basis: list[np.ndarray] = []
        for i in range(1, len(self.labels)):
            v = self.labels[i].copy()
            if _reduce_mod_p(v, basis, self.d1) is not None:
                rows.append(i)
                basis.append(self.labels[i].copy())
            if len(rows) == self.n:
                break
        if len(rows) != self.n:
            raise InvariantViolation("stabilizer group labels do not span n dimensions")
        return rows


def _reduce_mod_p(v: np.ndarray, basis: list[np.ndarray], p: int) -> np.ndarray | None:
    """Reduce v against echelonized rows over GF(p); None when dependent."""
    v = v.copy() % p
    rows = [b.copy() % p for b in basis]
    # Gaussian elimination with the current basis rows (kept unechelonized,
    # so re-eliminate from scratch; sizes are tiny).
    pivots: list[tuple[int, np.ndarray]] = []
    for r in rows:
        r = r.copy()
        for col, pr in pivots:
            if r[col] % p:
                r = (r - r[col] * pr) % p
        nz = np.nonzero(r)[0]
        if len(nz) == 0:
            continue
        col = nz[0]
        r = (r * pow(int(r[col]), -1, p)) % p
        pivots.append((col, r))
    for col, pr in pivots:
        if v[col] % p:
            v = (v - v[col] * pr) % p
    return v if np.any(v % p) else None


def independent_over_gf(vectors: list[np.ndarray], p: int) -> bool:
    basis: list[np.ndarray] = []
    for v in vectors:
        if _reduce_mod_p(np.asarray(v), basis, p) is None:
            return False
        basis.append(np.asarray(v))
    return True


def extract_stabilizer_group(psi: PureState, atol: float = 1e-8) -> StabilizerGroup:
    """Find all d1^n stabilizing Weyl words of a prime-qudit state.

    Raises ``NotStabilizerState`` when fewer (or more) than d1^n words
    stabilize the state.
    """
    dims = psi.factor_dims
    d1 = dims[0]
    if any(dk != d1 for dk in dims):
        raise DimensionMismatch(f"stabilizer extraction needs equal local dims, got {dims}")
    if not paulis.is_prime(d1):
        raise GateVerifyError(f"stabilizer extraction needs prime local dimension, got {d1}")
    n = len(dims)
    limit = _ENUM_LIMITS.get(d1)
    if limit is not None and n > limit:
        raise GateVerifyError(f"stabilizer enumeration capped at n <= {limit} for d1 = {d1}")
    vec = psi.amplitudes
    labels: list[tuple[int, ...]] = []
    phases: list[complex] = []
    for word in itertools.product(range(d1), repeat=2 * n):
        a, b = word[:n], word[n:]
        out = apply_weyl_word(vec, dims, a, b)
        c = np.vdot(vec, out)
        if abs(abs(c) - 1.0) <= atol and np.linalg.norm(out - c * vec) <= atol:
            labels.append(word)
            phases.append(complex(c))
    expected = d1**n
    if len(labels) != expected:
        raise NotStabilizerState(
            f"found {len(labels)} stabilizing Weyl words, expected {expected}"
        )
    return StabilizerGroup(n=n, d1=d1, labels=np.array(labels, dtype=int), phases=np.array(phases))
