"""Quantum state construction, fidelity, and Hermitian vectorization.

Density matrices are plain complex ndarrays. Qubit 0 is always the leftmost
(most significant) tensor factor, so basis index bits read left to right as
qubit 0, 1, ..., n-1. Separable states keep their single-qubit factors in a
:class:`ProductState` and are only expanded on request.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError

# Largest qubit count whose dense density matrix may be materialized by
# default; a dense n-qubit state needs 16 * 4**n bytes (n=15 is ~8.6 GB).
DEFAULT_DENSE_QUBITS = 14

STATE_KINDS = ("w", "ghz", "random_product", "random_pure")

_SQRT2 = math.sqrt(2.0)


def num_qubits(dim):
    """Qubit count for a Hilbert-space dimension, validating it is 2**n."""
    dim = int(dim)
    n = dim.bit_length() - 1
    if dim <= 0 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def check_dense_capacity(n, max_qubits=DEFAULT_DENSE_QUBITS):
    """Raise :class:`CapacityError` if a dense n-qubit matrix is too large."""
    if n > max_qubits:
        raise CapacityError(
            f"dense representation of {n} qubits exceeds the configured cap of "
            f"{max_qubits} qubits ({16.0 * 4.0 ** max_qubits / 1e9:.2f} GB)"
        )


@dataclass(frozen=True, eq=False)
class ProductState:
    """Separable n-qubit state stored as its 2x2 single-qubit factors."""

    factors: tuple

    def __post_init__(self):
        if len(self.factors) < 1:
            raise ValueError("a product state needs at least one factor")
        for f in self.factors:
            if np.asarray(f).shape != (2, 2):
                raise ValueError("product-state factors must be 2x2 matrices")

    @property
    def n(self):
        return len(self.factors)

    def to_dense(self, max_qubits=DEFAULT_DENSE_QUBITS):
        """Expand to the full 2**n x 2**n density matrix (capacity checked)."""
        check_dense_capacity(self.n, max_qubits)
        rho = np.array([[1.0 + 0.0j]])
        for f in self.factors:
            rho = np.kron(rho, np.asarray(f, dtype=complex))
        return rho


def w_state_vector(n):
    """Amplitudes of the n-qubit W state (single excitation, equal weights)."""
    psi = np.zeros(1 << n, dtype=complex)
    for j in range(n):
        psi[1 << (n - 1 - j)] = 1.0 / math.sqrt(n)
    return psi


def ghz_state_vector(n):
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = psi[-1] = 1.0 / _SQRT2
    return psi


def _pure_density(psi):
    return np.outer(psi, psi.conj())


def _random_single_qubit_factor(rng):
    # Haar-random pure qubit mixed toward I/2 with a uniform weight in
    # [0, 0.2]; keeps every factor slightly mixed so all Pauli sampling
    # weights stay nondegenerate while the state remains nearly pure.
    v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    v /= np.linalg.norm(v)
    w = rng.uniform(0.0, 0.2)
    return (1.0 - w) * np.outer(v, v.conj()) + w * np.eye(2) / 2.0


def make_state(kind, n, seed=0, max_dense_qubits=DEFAULT_DENSE_QUBITS):
    """Construct a named target state.

    Args:
        kind: one of ``"w"``, ``"ghz"``, ``"random_pure"`` (dense density
            matrices) or ``"random_product"`` (a :class:`ProductState`).
        n: qubit count.
        seed: RNG seed for the random kinds; same seed gives the same state.
        max_dense_qubits: capacity cap for the dense kinds.

    Returns:
        A dense density matrix ndarray, or a ProductState for
        ``"random_product"``.
    """
    if n < 1:
        raise ValueError("qubit count must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "w":
        check_dense_capacity(n, max_dense_qubits)
        return _pure_density(w_state_vector(n))
    if kind == "ghz":
        check_dense_capacity(n, max_dense_qubits)
        return _pure_density(ghz_state_vector(n))
    if kind == "random_pure":
        check_dense_capacity(n, max_dense_qubits)
        psi = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
        psi /= np.linalg.norm(psi)
        return _pure_density(psi)
    if kind == "random_product":
        return ProductState(tuple(_random_single_qubit_factor(rng) for _ in range(n)))
    raise ValueError(f"unknown state kind {kind!r}; expected one of {STATE_KINDS}")


def depolarize(rho, p):
    """Mix a state with the maximally mixed one: (1-p) rho + p I/d."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing level must be in [0, 1], got {p}")
    rho = np.asarray(rho)
    d = rho.shape[0]
    return (1.0 - p) * rho + (p * np.trace(rho).real / d) * np.eye(d)


def purity(rho):
    """tr(rho^2), real for Hermitian input."""
    return float(np.vdot(rho, rho).real)


def check_density_matrix(rho, herm_tol=1e-12, trace_tol=1e-10, psd_tol=1e-10):
    """Validate the density-matrix invariants, raising ValueError on failure."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {rho.shape}")
    num_qubits(rho.shape[0])
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValueError(f"not Hermitian: max asymmetry {herm:.3e} > {herm_tol:.0e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace {tr!r} deviates from 1 by more than {trace_tol:.0e}")
    lo = float(np.linalg.eigvalsh(rho)[0])
    if lo < -psd_tol:
        raise ValueError(f"not PSD: smallest eigenvalue {lo:.3e} < -{psd_tol:.0e}")


def _psd_sqrt(rho):
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho, sigma, pure_tol=1e-10):
    """Fidelity F(rho, sigma) = (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    Falls back to the exact simplification F = tr(rho sigma) when either
    state is pure (purity within ``pure_tol`` of 1). Square roots go through
    Hermitian eigendecompositions with eigenvalues clamped at zero.
    """
    rho = np.asarray(rho)
    sigma = np.asarray(sigma)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    if purity(rho) >= 1.0 - pure_tol or purity(sigma) >= 1.0 - pure_tol:
        return float(np.trace(rho @ sigma).real)
    sq = _psd_sqrt(rho)
    w = np.linalg.eigvalsh(sq @ sigma @ sq)
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)


def hvec(rho, herm_tol=1e-10):
    """Isometric vectorization of a Hermitian matrix into R^(d^2).

    Layout: the d real diagonal entries in index order, then for each upper
    triangular entry in row-major order sqrt(2)*Re followed by sqrt(2)*Im.
    With this layout dot(hvec(a), hvec(b)) = tr(a b) for Hermitian a, b.
    """
    rho = np.asarray(rho)
    d = rho.shape[0]
    asym = np.max(np.abs(rho - rho.conj().T)) if d else 0.0
    if asym > herm_tol:
        raise ValueError(f"input is not Hermitian: max asymmetry {asym:.3e}")
    iu = np.triu_indices(d, k=1)
    off = rho[iu] * _SQRT2
    v = np.empty(d * d)
    v[:d] = np.diagonal(rho).real
    v[d::2] = off.real
    v[d + 1 :: 2] = off.imag
    return v


def hmat(v):
    """Inverse of :func:`hvec`; rebuilds the Hermitian matrix."""
    v = np.asarray(v, dtype=float)
    d = math.isqrt(v.size)
    if d * d != v.size:
        raise ValueError(f"length {v.size} is not a perfect square")
    rho = np.zeros((d, d), dtype=complex)
    rho[np.diag_indices(d)] = v[:d]
    iu = np.triu_indices(d, k=1)
    off = (v[d::2] + 1j * v[d + 1 :: 2]) / _SQRT2
    rho[iu] = off
    rho[(iu[1], iu[0])] = off.conj()
    return rho


# ---------------------------------------------------------------------------
# JSON serialization: {"n": int, "kind": str, "dense": [[...]] | "factors": [...]}
# Complex matrices are encoded entrywise as [re, im] pairs. Product states
# never expand to dense form on disk.

def _matrix_to_json(m):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def _matrix_from_json(rows):
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def state_to_json(state, kind="custom"):
    if isinstance(state, ProductState):
        return {
            "n": state.n,
            "kind": kind,
            "factors": [_matrix_to_json(f) for f in state.factors],
        }
    state = np.asarray(state)
    return {
        "n": num_qubits(state.shape[0]),
        "kind": kind,
        "dense": _matrix_to_json(state),
    }


def state_from_json(doc):
    if "factors" in doc:
        return ProductState(tuple(_matrix_from_json(f) for f in doc["factors"]))
    if "dense" in doc:
        rho = _matrix_from_json(doc["dense"])
        if rho.shape[0] != 1 << int(doc["n"]):
            raise ValueError("dense matrix size does not match the qubit count")
        return rho
    raise ValueError("state document needs a 'dense' or 'factors' entry")


def save_state(path, state, kind="custom"):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state_to_json(state, kind), fh)
        fh.write("\n")


def load_state(path):
    with open(path, "r", encoding="utf-8") as fh:
        return state_from_json(json.load(fh))
