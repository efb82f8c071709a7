"""Generalized Pauli (Weyl-Heisenberg) operators and their eigenbases.

The phase operator Z and shift operator X on a d-dimensional space act as
Z|j> = w^j |j> and X|j> = |j+1 mod d> with w = exp(2 pi i / d).  The
eigenbasis of Z is the computational basis, the eigenbasis of X is the
Fourier basis with kets (1/sqrt d) sum_j w^(-s j) |j>, and the eigenbasis of
X Z^t for t >= 1 consists of the kets (1/sqrt d) sum_j tau^(t (s-j)^2) |j>
with tau = -exp(i pi / d).  For prime d the eigenbases of Z, X, XZ, ...,
XZ^(d-1) form a complete set of d+1 mutually unbiased bases; for general d
the first three are still pairwise unbiased.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch

_PRIME_CACHE: dict[int, bool] = {}


def is_prime(d: int) -> bool:
    if d not in _PRIME_CACHE:
        _PRIME_CACHE[d] = d >= 2 and all(d % k for k in range(2, int(d**0.5) + 1))
    return _PRIME_CACHE[d]


def omega(d: int) -> complex:
    return np.exp(2j * np.pi / d)


def tau(d: int) -> complex:
    return -np.exp(1j * np.pi / d)


def phase_matrix(d: int) -> np.ndarray:
    """Z with Z|j> = w^j |j>."""
    return np.diag(omega(d) ** np.arange(d)).astype(complex)


def shift_matrix(d: int) -> np.ndarray:
    """X with X|j> = |j+1 mod d>."""
    m = np.zeros((d, d), dtype=complex)
    for j in range(d):
        m[(j + 1) % d, j] = 1.0
    return m


def weyl_word(d: int, a: int, b: int) -> np.ndarray:
    """X^a Z^b on one site (no extra phase convention)."""
    a %= d
    b %= d
    m = np.diag(omega(d) ** (b * np.arange(d))).astype(complex)
    return np.roll(m, a, axis=0)


def fourier_matrix(d: int) -> np.ndarray:
    """F|j> = (1/sqrt d) sum_k w^(j k) |k>; diagonalizes X."""
    j = np.arange(d)
    return omega(d) ** np.outer(j, j) / np.sqrt(d)


def fourier_basis(d: int) -> np.ndarray:
    """Columns s = 0..d-1: eigenvectors (1/sqrt d) sum_j w^(-s j) |j> of X."""
    j = np.arange(d)
    return omega(d) ** (-np.outer(j, j)) / np.sqrt(d)


def xz_power_basis(d: int, t: int) -> np.ndarray:
    """Columns s = 0..d-1: eigenvectors (1/sqrt d) sum_j tau^(t (s-j)^2) |j> of X Z^t."""
    if t % d == 0:
        raise DimensionMismatch("t = 0 is the shift operator X; use fourier_basis")
    s = np.arange(d)
    j = np.arange(d).reshape(-1, 1)
    return tau(d) ** (t * (s - j) ** 2) / np.sqrt(d)


def mub_bases(d: int) -> list[tuple[str, np.ndarray]]:
    """Labeled mutually unbiased bases built from Pauli eigenbases.

    Returns [Z, X, XZ] for every d >= 2 and the full set
    [Z, X, XZ, XZ^2, ..., XZ^(d-1)] when d is prime.  For d = 2 the XZ
    eigenbasis is the Y basis (with the convention Y = i X Z).
    """
    if d < 2:
        raise DimensionMismatch(f"local dimension must be >= 2, got {d}")
    bases: list[tuple[str, np.ndarray]] = [
        ("Z", np.eye(d, dtype=complex)),
        ("X", fourier_basis(d)),
        ("XZ", xz_power_basis(d, 1)),
    ]
    if is_prime(d):
        for t in range(2, d):
            bases.append((f"XZ^{t}", xz_power_basis(d, t)))
    return bases


def weyl_site_measurement(d: int, a: int, b: int) -> tuple[str, np.ndarray, np.ndarray]:
    """Measurement basis diagonalizing X^a Z^b on one site.

    Returns (basis label, kets as columns, eigenvalue of X^a Z^b per ket).
    For a != 0 with b != 0 this needs a^(-1) mod d, hence prime d.  The
    identity word is measured in the computational basis and every outcome
    carries eigenvalue 1.
    """
    a %= d
    b %= d
    if a == 0:
        label, kets = "Z", np.eye(d, dtype=complex)
    elif b == 0:
        label, kets = "X", fourier_basis(d)
    else:
        if not is_prime(d):
            raise DimensionMismatch(
                f"eigenbasis of X^{a} Z^{b} needs prime local dimension, got {d}"
            )
        t = (b * pow(a, -1, d)) % d
        label = "XZ" if t == 1 else f"XZ^{t}"
        kets = xz_power_basis(d, t)
    w = weyl_word(d, a, b)
    eigs = np.einsum("ij,jk,ki->i", kets.conj().T, w, kets)
    return label, kets, eigs
