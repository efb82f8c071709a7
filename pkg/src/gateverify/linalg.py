"""Dense complex linear algebra over tensor-product spaces.

Everything downstream (channels, verification operators, SDP solves) runs on
the small set of exact dense primitives in this module: Kronecker products,
partial traces, Hermitian eigendecompositions and operator norms.  All
functions are pure and operate on immutable values, so they are safe to call
concurrently.

Operators are represented densely.  The total dimension of a single tensor
factor space is capped (default 64, so matrices on H (x) H reach at most
4096 x 4096); the cap can be raised through the ``GATEVERIFY_MAX_DIM``
environment variable.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionCapExceeded, DimensionMismatch, NotHermitian

#: Default relative tolerance for structural checks (Hermiticity, unitarity).
DEFAULT_RTOL = 1e-9

#: Degeneracy tolerance when reading off a "second largest" eigenvalue.
GAP_DEGENERACY_TOL = 1e-9

_DIM_CAP_ENV = "GATEVERIFY_MAX_DIM"
_DIM_CAP_DEFAULT = 64


def max_dim() -> int:
    """Dimension cap for a single tensor-factor space H."""
    raw = os.environ.get(_DIM_CAP_ENV)
    if raw is None:
        return _DIM_CAP_DEFAULT
    try:
        value = int(raw)
    except ValueError as exc:
        raise DimensionCapExceeded(f"invalid {_DIM_CAP_ENV}={raw!r}") from exc
    if value < 2:
        raise DimensionCapExceeded(f"{_DIM_CAP_ENV} must be >= 2, got {value}")
    return value


def check_dim_cap(d: int, context: str = "operator") -> None:
    """Raise if a space of dimension ``d`` exceeds the configured cap."""
    cap = max_dim()
    if d > cap:
        raise DimensionCapExceeded(
            f"{context} needs dimension {d} > cap {cap}; "
            f"set {_DIM_CAP_ENV} to override"
        )


def _as_dims(dims: Iterable[int], length: int, what: str) -> tuple[int, ...]:
    out = tuple(int(d) for d in dims)
    if any(d < 1 for d in out):
        raise DimensionMismatch(f"{what} must be positive, got {out}")
    if math.prod(out) != length:
        raise DimensionMismatch(
            f"product of {what} {out} is {math.prod(out)}, expected {length}"
        )
    return out


@dataclass(frozen=True)
class DenseOperator:
    """A dense complex matrix with tensor-factor metadata per axis.

    ``row_dims`` and ``col_dims`` list the factor dimensions whose products
    equal the number of rows and columns respectively.  Factor index 0 is the
    most significant tensor slot (standard Kronecker ordering).
    """

    entries: np.ndarray
    row_dims: tuple[int, ...]
    col_dims: tuple[int, ...]

    def __post_init__(self) -> None:
        m = np.array(self.entries, dtype=complex, copy=True)
        if m.ndim != 2:
            raise DimensionMismatch(f"entries must be a matrix, got shape {m.shape}")
        object.__setattr__(self, "row_dims", _as_dims(self.row_dims, m.shape[0], "row_dims"))
        object.__setattr__(self, "col_dims", _as_dims(self.col_dims, m.shape[1], "col_dims"))
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def square(cls, entries: np.ndarray, dims: Sequence[int] | None = None) -> "DenseOperator":
        """Wrap a square matrix, defaulting to a single tensor factor."""
        entries = np.asarray(entries)
        if entries.shape[0] != entries.shape[1]:
            raise DimensionMismatch(f"expected square matrix, got {entries.shape}")
        if dims is None:
            dims = (entries.shape[0],)
        return cls(entries, tuple(dims), tuple(dims))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape  # type: ignore[return-value]

    @property
    def dim(self) -> int:
        if self.shape[0] != self.shape[1]:
            raise DimensionMismatch("dim is only defined for square operators")
        return self.shape[0]

    def dagger(self) -> "DenseOperator":
        return DenseOperator(self.entries.conj().T, self.col_dims, self.row_dims)

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def is_hermitian(self, rtol: float = DEFAULT_RTOL) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        scale = max(np.abs(self.entries).max(), 1.0)
        return bool(np.abs(self.entries - self.entries.conj().T).max() <= rtol * scale)


@dataclass(frozen=True)
class HermitianSpectrum:
    """Eigenvalues (descending) and orthonormal eigenvectors of a Hermitian operator."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.eigenvalues, dtype=float, copy=True)
        vecs = np.array(self.eigenvectors, dtype=complex, copy=True)
        vals.setflags(write=False)
        vecs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenvectors", vecs)

    @property
    def largest(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def second_largest(self) -> float:
        if len(self.eigenvalues) < 2:
            return float("-inf")
        return float(self.eigenvalues[1])

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def kron(a: DenseOperator, b: DenseOperator) -> DenseOperator:
    """Kronecker product; factor dimension lists concatenate."""
    return DenseOperator(
        np.kron(a.entries, b.entries),
        a.row_dims + b.row_dims,
        a.col_dims + b.col_dims,
    )


def kron_all(ops: Sequence[DenseOperator]) -> DenseOperator:
    if not ops:
        raise DimensionMismatch("kron_all needs at least one operator")
    out = ops[0]
    for op in ops[1:]:
        out = kron(out, op)
    return out


def partial_trace(a: DenseOperator, keep: Iterable[int]) -> DenseOperator:
    """Trace out all tensor factors except those in ``keep``.

    The trace of the input is preserved.  Raises ``IndexError`` when a kept
    index is out of range.
    """
    if a.row_dims != a.col_dims:
        raise DimensionMismatch("partial_trace requires matching row/col factor dims")
    dims = a.row_dims
    n = len(dims)
    keep_list = sorted(set(int(k) for k in keep))
    for k in keep_list:
        if not 0 <= k < n:
            raise IndexError(f"subsystem index {k} out of range for {n} factors")
    tensor = a.entries.reshape(dims + dims)
    # Pair bra/ket axes of every traced factor with an einsum contraction.
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise DimensionMismatch("too many tensor factors for partial_trace")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for j in range(n):
        if j not in keep_list:
            col[j] = row[j]
    out_axes = [row[j] for j in keep_list] + [col[j] for j in keep_list]
    spec = "".join(row + col) + "->" + "".join(out_axes)
    kept_dims = tuple(dims[j] for j in keep_list)
    d_out = math.prod(kept_dims) if kept_dims else 1
    reduced = np.einsum(spec, tensor).reshape(d_out, d_out)
    return DenseOperator(reduced, kept_dims or (1,), kept_dims or (1,))


def require_hermitian(a: DenseOperator, rtol: float = DEFAULT_RTOL, what: str = "operator") -> np.ndarray:
    """Return a Hermitized copy of ``a.entries`` or raise ``NotHermitian``."""
    if a.shape[0] != a.shape[1]:
        raise NotHermitian(f"{what} is not square: {a.shape}")
    m = a.entries
    scale = max(np.abs(m).max(), 1.0)
    dev = np.abs(m - m.conj().T).max()
    if dev > rtol * scale:
        raise NotHermitian(f"{what} deviates from Hermitian by {dev:.3e} (scale {scale:.3e})")
    return 0.5 * (m + m.conj().T)


def hermitian_eig(a: DenseOperator, rtol: float = DEFAULT_RTOL) -> HermitianSpectrum:
    """Eigendecomposition of a Hermitian operator, eigenvalues descending."""
    m = require_hermitian(a, rtol)
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(vals)[::-1]
    return HermitianSpectrum(vals[order], vecs[:, order])


def operator_norm(a: DenseOperator | np.ndarray) -> float:
    """Largest singular value."""
    m = a.entries if isinstance(a, DenseOperator) else np.asarray(a)
    return float(np.linalg.norm(m, 2))


def psd_clip(a: DenseOperator, rtol: float = DEFAULT_RTOL) -> DenseOperator:
    """Zero out negative eigenvalues of a Hermitian operator."""
    spec = hermitian_eig(a, rtol)
    clipped = np.clip(spec.eigenvalues, 0.0, None)
    v = spec.eigenvectors
    out = (v * clipped) @ v.conj().T
    out = 0.5 * (out + out.conj().T)
    return DenseOperator(out, a.row_dims, a.col_dims)


def frobenius_inner(a: DenseOperator | np.ndarray, b: DenseOperator | np.ndarray) -> complex:
    """Hilbert-Schmidt inner product tr(a^dagger b)."""
    ma = a.entries if isinstance(a, DenseOperator) else np.asarray(a)
    mb = b.entries if isinstance(b, DenseOperator) else np.asarray(b)
    if ma.shape != mb.shape:
        raise DimensionMismatch(f"shape mismatch {ma.shape} vs {mb.shape}")
    return complex(np.vdot(ma, mb))


def spectral_gap(eigenvalues: np.ndarray, degeneracy_tol: float = GAP_DEGENERACY_TOL) -> float:
    """Gap 1 - (second largest eigenvalue), with degenerate tops reported as 0.

    Eigenvalues must be sorted in descending order and scaled so the target
    eigenvalue is 1.  A second eigenvalue within ``degeneracy_tol`` of 1
    collapses the gap to exactly 0.
    """
    if len(eigenvalues) < 2:
        return 1.0
    gap = 1.0 - float(eigenvalues[1])
    if gap < degeneracy_tol:
        return 0.0
    return gap


def identity(dims: Sequence[int] | int) -> DenseOperator:
    if isinstance(dims, int):
        dims = (dims,)
    d = math.prod(dims)
    return DenseOperator(np.eye(d, dtype=complex), tuple(dims), tuple(dims))
