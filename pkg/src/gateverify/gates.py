"""Gate library: qudit Paulis, Fourier, controlled gates, permutations, circuits.

Controlled-Z / controlled-X families (``cz``/``cx`` with n sites) are qubit
gates; the library also provides qudit Z, X, Fourier, the qudit SUM gate and
subsystem permutations for any local dimension.  Circuits are given as
sequences of (gate name, sites) steps applied left to right.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from . import paulis
from .channels import UnitaryGate
from .errors import DimensionMismatch, GateVerifyError
from .linalg import DenseOperator, check_dim_cap


def permutation_unitary(perm: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Unitary mapping tensor slot perm[k] of the input to slot k of the output."""
    n = len(dims)
    if sorted(perm) != list(range(n)):
        raise GateVerifyError(f"not a permutation of {n} slots: {perm}")
    if any(dims[perm[k]] != dims[k] for k in range(n)):
        raise DimensionMismatch("permutation must move between equal local dimensions")
    d = math.prod(dims)
    m = np.zeros((d, d), dtype=complex)
    for idx in range(d):
        digits = np.unravel_index(idx, tuple(dims))
        target = tuple(digits[perm[k]] for k in range(n))
        m[np.ravel_multi_index(target, tuple(dims)), idx] = 1.0
    return m


def _reorder_matrix(order: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Matrix mapping |x_0 ... x_{n-1}> to |x_order[0], ..., x_order[n-1]>."""
    d = math.prod(dims)
    out_dims = tuple(dims[k] for k in order)
    m = np.zeros((d, d), dtype=complex)
    for idx in range(d):
        digits = np.unravel_index(idx, tuple(dims))
        target = tuple(digits[k] for k in order)
        m[np.ravel_multi_index(target, out_dims), idx] = 1.0
    return m


def embed(op: np.ndarray, sites: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Place an operator on the given sites (in order), identity elsewhere."""
    n = len(dims)
    sites = list(sites)
    if len(set(sites)) != len(sites):
        raise GateVerifyError(f"duplicate sites {sites}")
    if any(not 0 <= s < n for s in sites):
        raise IndexError(f"site out of range in {sites}")
    d_sites = math.prod(dims[s] for s in sites)
    op = np.asarray(op, dtype=complex)
    if op.shape != (d_sites, d_sites):
        raise DimensionMismatch(f"operator shape {op.shape} does not fit sites {sites}")
    rest = [k for k in range(n) if k not in sites]
    d_rest = math.prod([dims[k] for k in rest]) if rest else 1
    full = np.kron(op, np.eye(d_rest, dtype=complex))
    # full acts on the space reordered as (sites..., rest...); conjugate back.
    p = _reorder_matrix(sites + rest, dims)
    return p.conj().T @ full @ p


def controlled_z(n: int) -> np.ndarray:
    """C^(n-1)Z on n qubits: -1 phase on |1...1>."""
    if n < 1:
        raise GateVerifyError("controlled-Z needs n >= 1")
    diag = np.ones(2**n, dtype=complex)
    diag[-1] = -1.0
    return np.diag(diag)


def controlled_x(n: int) -> np.ndarray:
    """C^(n-1)X on n qubits: flips the last qubit iff all controls are |1>."""
    if n < 1:
        raise GateVerifyError("controlled-X needs n >= 1")
    d = 2**n
    m = np.eye(d, dtype=complex)
    m[[d - 2, d - 1]] = m[[d - 1, d - 2]]
    return m


def cswap_matrix() -> np.ndarray:
    """Controlled-SWAP on 3 qubits; control is the most significant slot."""
    swap = permutation_unitary([1, 0], [2, 2])
    m = np.eye(8, dtype=complex)
    m[4:, 4:] = swap
    return m


def qubit_hadamard() -> np.ndarray:
    return np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def phase_gate(d: int) -> np.ndarray:
    """Clifford phase gate: diag(1, i) for qubits, diag(w^(j(j-1)/2)) for odd d."""
    if d == 2:
        return np.diag([1.0, 1j]).astype(complex)
    j = np.arange(d)
    return np.diag(paulis.omega(d) ** (j * (j - 1) // 2)).astype(complex)


def sum_gate(d: int) -> np.ndarray:
    """SUM|i, j> = |i, i + j mod d>; the qudit generalization of CNOT."""
    m = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            m[i * d + (i + j) % d, i * d + j] = 1.0
    return m


_CIRCUIT_ONE_SITE: Mapping[str, object] = {
    "h": lambda d: _require_qubit(d, "h") or qubit_hadamard(),
    "s": phase_gate,
    "x": paulis.shift_matrix,
    "z": paulis.phase_matrix,
    "fourier": paulis.fourier_matrix,
}

_CIRCUIT_TWO_SITE: Mapping[str, object] = {
    "cnot": lambda d: _require_qubit(d, "cnot") or controlled_x(2),
    "cz": lambda d: _require_qubit(d, "cz") or controlled_z(2),
    "sum": sum_gate,
    "swap": lambda d: permutation_unitary([1, 0], [d, d]),
}


def _require_qubit(d: int, name: str) -> None:
    if d != 2:
        raise GateVerifyError(f"circuit gate {name!r} requires qubits, got d={d}")


def circuit_unitary(steps: Sequence[tuple[str, Sequence[int]]], n: int, d1: int) -> np.ndarray:
    """Compose a circuit of named one- and two-site gates on n equal sites."""
    dims = [d1] * n
    total = np.eye(d1**n, dtype=complex)
    for name, sites in steps:
        key = name.lower()
        if key in _CIRCUIT_ONE_SITE and len(sites) == 1:
            op = _CIRCUIT_ONE_SITE[key](d1)  # type: ignore[operator]
        elif key in _CIRCUIT_TWO_SITE and len(sites) == 2:
            op = _CIRCUIT_TWO_SITE[key](d1)  # type: ignore[operator]
        else:
            raise GateVerifyError(f"unknown circuit step {name!r} on sites {list(sites)}")
        total = embed(op, sites, dims) @ total
    return total


def gate_library(
    name: str,
    n: int | None = None,
    d1: int = 2,
    perm: Sequence[int] | None = None,
    circuit: Sequence[tuple[str, Sequence[int]]] | None = None,
    matrix: np.ndarray | None = None,
    factor_dims: Sequence[int] | None = None,
) -> UnitaryGate:
    """Construct a named unitary with its structural descriptor.

    Supported names: ``identity``, ``z``, ``x``, ``fourier``, ``h``, ``s``,
    ``sum``, ``cz`` / ``cx`` (n-site controlled gates, qubits; ``cnot``,
    ``toffoli`` and ``ccz`` are aliases), ``swap``, ``cswap``,
    ``permutation`` (with ``perm``), ``circuit`` (with ``circuit`` steps) and
    ``explicit`` (with ``matrix``).
    """
    key = name.lower()
    if key in ("cnot",):
        key, n = "cx", 2
    elif key in ("toffoli", "ccx"):
        key, n = "cx", 3
    elif key == "ccz":
        key, n = "cz", 3

    if key == "explicit":
        if matrix is None:
            raise GateVerifyError("explicit gate needs a matrix")
        m = np.asarray(matrix, dtype=complex)
        dims = tuple(factor_dims) if factor_dims else (m.shape[0],)
        check_dim_cap(m.shape[0], "gate")
        return UnitaryGate(DenseOperator(m, dims, dims), "explicit", "explicit")

    if key == "identity":
        dims = tuple(factor_dims) if factor_dims else (d1,) * (n or 1)
        d = math.prod(dims)
        check_dim_cap(d, "gate")
        return UnitaryGate(DenseOperator(np.eye(d, dtype=complex), dims, dims), "clifford-circuit", "identity")

    if key in ("z", "x", "fourier", "h", "s"):
        m = _CIRCUIT_ONE_SITE[key](d1)  # type: ignore[operator]
        return UnitaryGate(DenseOperator(m, (d1,), (d1,)), "clifford-circuit", key)

    if key == "sum":
        return UnitaryGate(DenseOperator(sum_gate(d1), (d1, d1), (d1, d1)), "clifford-circuit", "sum")

    if key in ("cz", "cx"):
        if d1 != 2:
            raise GateVerifyError(f"{key} gates are implemented for qubits only (d1=2)")
        if n is None or n < 2:
            raise GateVerifyError(f"{key} needs n >= 2 sites")
        check_dim_cap(2**n, "gate")
        m = controlled_z(n) if key == "cz" else controlled_x(n)
        descriptor = "controlled-Z-type" if key == "cz" else "controlled-X-type"
        return UnitaryGate(DenseOperator(m, (2,) * n, (2,) * n), descriptor, f"c{n - 1}{key[-1]}")

    if key == "swap":
        dims = (d1, d1)
        m = permutation_unitary([1, 0], dims)
        return UnitaryGate(DenseOperator(m, dims, dims), "subsystem-permutation", "swap")

    if key in ("cswap", "fredkin"):
        if d1 != 2:
            raise GateVerifyError("cswap is a 3-qubit gate (d1=2)")
        return UnitaryGate(DenseOperator(cswap_matrix(), (2, 2, 2), (2, 2, 2)), "cswap", "cswap")

    if key == "permutation":
        if perm is None or n is None and factor_dims is None:
            raise GateVerifyError("permutation gate needs perm and n (or factor_dims)")
        dims = tuple(factor_dims) if factor_dims else (d1,) * (n or len(perm))
        check_dim_cap(math.prod(dims), "gate")
        m = permutation_unitary(perm, dims)
        return UnitaryGate(DenseOperator(m, dims, dims), "subsystem-permutation", f"permutation{tuple(perm)}")

    if key == "circuit":
        if circuit is None or n is None:
            raise GateVerifyError("circuit gate needs steps and n")
        check_dim_cap(d1**n, "gate")
        m = circuit_unitary(circuit, n, d1)
        return UnitaryGate(DenseOperator(m, (d1,) * n, (d1,) * n), "clifford-circuit", "circuit")

    raise GateVerifyError(f"unknown gate {name!r}")


def hadamard_on_last(n: int) -> UnitaryGate:
    """H on the n-th qubit of n; conjugates C^(n-1)Z into C^(n-1)X."""
    m = embed(qubit_hadamard(), [n - 1], [2] * n)
    return UnitaryGate(DenseOperator(m, (2,) * n, (2,) * n), "clifford-circuit", f"H_{n}")
