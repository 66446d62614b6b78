"""POVM ensembles: Pauli binary POVMs, the tetrahedral POVM, and weighted
selection of Pauli observables for the low-memory regime.

Pauli strings are encoded base-4 over {0: I, 1: X, 2: Y, 3: Z}. digits[0]
acts on qubit 0 (the leftmost tensor factor) and is the most significant
base-4 digit of the integer index, so the all-identity string has index 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError
from .states import ProductState

PAULI_LABELS = "IXYZ"

PAULI_1Q = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

# Directions toward the face centers of a regular tetrahedron inscribed in
# the Bloch sphere; each normalized direction gives a rank-1 POVM element.
TETRA_DIRECTIONS = np.array(
    [[1, 1, 1], [-1, -1, 1], [-1, 1, -1], [1, -1, -1]], dtype=float
)


def tetra_elements_1q():
    """The four single-qubit tetrahedral POVM elements, shape (4, 2, 2)."""
    out = np.empty((4, 2, 2), dtype=complex)
    for k, e in enumerate(TETRA_DIRECTIONS):
        bloch = sum(e[i] * PAULI_1Q[i + 1] for i in range(3)) / math.sqrt(3.0)
        out[k] = 0.25 * (PAULI_1Q[0] + bloch)
    return out


@dataclass(frozen=True)
class PauliString:
    """A tensor product of single-qubit Paulis, base-4 encoded."""

    n: int
    digits: tuple

    def __post_init__(self):
        if self.n < 1 or len(self.digits) != self.n:
            raise ValueError(f"expected {self.n} digits, got {len(self.digits)}")
        if any(q not in (0, 1, 2, 3) for q in self.digits):
            raise ValueError(f"digits must be in {{0,1,2,3}}: {self.digits}")

    @classmethod
    def from_index(cls, n, index):
        index = int(index)
        if not 0 <= index < 4**n:
            raise ValueError(f"index {index} out of range for {n} qubits")
        digits = []
        for _ in range(n):
            digits.append(index & 3)
            index >>= 2
        return cls(n, tuple(reversed(digits)))

    @property
    def index(self):
        value = 0
        for q in self.digits:
            value = (value << 2) | q
        return value

    @property
    def label(self):
        return "".join(PAULI_LABELS[q] for q in self.digits)

    @property
    def weight(self):
        """Number of non-identity factors."""
        return sum(1 for q in self.digits if q)


def dense_pauli(string, max_qubits=12):
    """Materialize the full 2**n x 2**n Pauli matrix (small n only)."""
    if string.n > max_qubits:
        raise CapacityError(
            f"dense Pauli on {string.n} qubits exceeds the cap of {max_qubits}"
        )
    w = np.array([[1.0 + 0.0j]])
    for q in string.digits:
        w = np.kron(w, PAULI_1Q[q])
    return w


@dataclass(eq=False)
class PovmEnsemble:
    """A measured set of POVMs over n qubits.

    For the Pauli family, ``indices`` lists the measured (non-identity)
    Pauli strings and each string contributes one binary POVM
    {(I + W)/2, (I - W)/2}. The tetrahedral family is a single POVM whose
    4**n elements are tensor products of the four single-qubit elements.
    """

    family: str
    n: int
    indices: np.ndarray | None = None
    _strings: list = field(default=None, repr=False, init=False)

    def __post_init__(self):
        if self.family not in ("pauli", "tetrahedral"):
            raise ValueError(f"unknown POVM family {self.family!r}")
        if self.n < 1:
            raise ValueError("qubit count must be >= 1")
        if self.family == "pauli":
            if self.indices is None:
                raise ValueError("a Pauli ensemble needs a list of string indices")
            idx = np.asarray(self.indices, dtype=np.int64)
            if idx.ndim != 1 or idx.size == 0:
                raise ValueError("Pauli ensemble needs at least one string")
            if np.any(idx <= 0) or np.any(idx >= 4**self.n):
                raise ValueError("Pauli indices must lie in [1, 4^n); identity excluded")
            if np.unique(idx).size != idx.size:
                raise ValueError("duplicate Pauli strings in ensemble")
            object.__setattr__(self, "indices", idx)
        elif self.indices is not None:
            raise ValueError("the tetrahedral ensemble carries no string list")

    @property
    def m_each(self):
        """Outcomes per POVM."""
        return 2 if self.family == "pauli" else 4**self.n

    @property
    def num_povms(self):
        return len(self.indices) if self.family == "pauli" else 1

    @property
    def m_total(self):
        return self.m_each * self.num_povms

    def strings(self):
        """The measured Pauli strings, materialized once and cached."""
        if self.family != "pauli":
            raise ValueError("only the Pauli family has explicit strings")
        if self._strings is None:
            self._strings = [PauliString.from_index(self.n, i) for i in self.indices]
        return self._strings

    def to_json_dict(self):
        doc = {"family": self.family, "n": self.n}
        if self.family == "pauli":
            doc["indices"] = [int(i) for i in self.indices]
        return doc

    @classmethod
    def from_json_dict(cls, doc):
        family = doc["family"]
        if family == "pauli":
            return cls("pauli", int(doc["n"]), np.asarray(doc["indices"], np.int64))
        return cls("tetrahedral", int(doc["n"]))


def full_pauli_ensemble(n, max_qubits=10):
    """All 4**n - 1 non-identity Pauli strings, sorted by index."""
    if n > max_qubits:
        raise CapacityError(
            f"full Pauli ensemble on {n} qubits has {4**n - 1} strings, over the "
            f"cap of {max_qubits} qubits"
        )
    return PovmEnsemble("pauli", n, np.arange(1, 4**n, dtype=np.int64))


def tetrahedral_ensemble(n, max_qubits=10):
    """The single n-qubit tetrahedral POVM with 4**n outcomes."""
    if n > max_qubits:
        raise CapacityError(
            f"tetrahedral ensemble on {n} qubits has {4**n} outcomes, over the "
            f"cap of {max_qubits} qubits"
        )
    return PovmEnsemble("tetrahedral", n)


def dense_tetra_elements(n, max_qubits=6):
    """All 4**n tetrahedral elements as dense matrices, shape (4**n, d, d).

    Element k is the tensor product indexed by the base-4 digits of k with
    digits[0] most significant, matching the probability-vector layout.
    """
    if n > max_qubits:
        raise CapacityError(f"dense tetrahedral elements capped at {max_qubits} qubits")
    single = tetra_elements_1q()
    out = single.copy()
    for _ in range(n - 1):
        out = np.einsum("aij,bkl->abikjl", out, single).reshape(
            out.shape[0] * 4, out.shape[1] * 2, out.shape[2] * 2
        )
    return out


def dfe_budget(delta, epsilon):
    """Measurement budget ceil(ln(1/delta) / epsilon^2) for additive error
    epsilon at failure probability delta."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"failure probability must be in (0, 1), got {delta}")
    if epsilon <= 0.0:
        raise ValueError(f"additive error must be positive, got {epsilon}")
    return int(math.ceil(math.log(1.0 / delta) / epsilon**2))


def pauli_weights(factor):
    """Unnormalized per-qubit sampling weights tr(sigma rho)^2 for sigma in
    {I, X, Y, Z}; equals {1, rx^2, ry^2, rz^2} for rho = (I + r.sigma)/2."""
    f = np.asarray(factor, dtype=complex)
    return np.array([np.trace(PAULI_1Q[q] @ f).real ** 2 for q in range(4)])


def _sample_digit_matrix(rng, probs, count):
    """Draw ``count`` digit rows; probs is a list of per-qubit 4-vectors."""
    cols = [rng.choice(4, size=count, p=p) for p in probs]
    return np.stack(cols, axis=1)


def _encode_rows(rows):
    idx = np.zeros(rows.shape[0], dtype=np.int64)
    for j in range(rows.shape[1]):
        idx = (idx << 2) | rows[:, j]
    return idx


def sample_pauli_strings(target, budget, seed=0, redraw_cap_factor=50):
    """Draw distinct non-identity Pauli strings for a separable target.

    Each string is drawn with probability proportional to the product of the
    per-qubit weights tr(sigma_q rho_j)^2; the all-identity string and
    duplicates are rejected and redrawn. If the support of the distribution
    (identity excluded) holds fewer than ``budget`` strings, all of it is
    returned and the truncation flag is set.

    Returns:
        (strings, truncated): list of :class:`PauliString` and a bool that is
        True when the support was smaller than the budget.
    """
    if not isinstance(target, ProductState):
        raise ValueError("weighted Pauli sampling needs a ProductState target")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n = target.n
    weights = [pauli_weights(f) for f in target.factors]
    probs = [w / w.sum() for w in weights]
    support_sizes = [int(np.count_nonzero(w > 0.0)) for w in weights]
    support_total = int(np.prod([float(s) for s in support_sizes])) - 1  # minus identity

    if support_total <= budget and n <= 20:
        strings = _enumerate_support(n, weights)
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(strings))
        return [strings[i] for i in order], support_total < budget

    rng = np.random.default_rng(seed)
    selected = {}
    attempts = 0
    cap = redraw_cap_factor * budget
    while len(selected) < budget and attempts < cap:
        batch = budget - len(selected)
        rows = _sample_digit_matrix(rng, probs, batch)
        attempts += batch
        for idx, row in zip(_encode_rows(rows), rows):
            if idx == 0 or idx in selected:
                continue
            selected[int(idx)] = tuple(int(q) for q in row)
    if len(selected) < budget:
        # Near-degenerate support: fall back to exact enumeration and draw
        # the remainder without replacement from the renormalized weights.
        if n > 20:
            raise RuntimeError(
                "redraw cap hit and support enumeration is limited to 20 qubits"
            )
        strings = _enumerate_support(n, weights)
        pool = [s for s in strings if s.index not in selected]
        pw = np.array(
            [math.prod(weights[j][q] for j, q in enumerate(s.digits)) for s in pool]
        )
        take = min(budget - len(selected), len(pool))
        picks = rng.choice(len(pool), size=take, replace=False, p=pw / pw.sum())
        for i in picks:
            selected[pool[i].index] = pool[i].digits
    return [PauliString(n, digits) for digits in selected.values()], False


def _enumerate_support(n, weights):
    choices = [tuple(int(q) for q in np.nonzero(w > 0.0)[0]) for w in weights]
    out = []
    for digits in itertools.product(*choices):
        if any(digits):
            out.append(PauliString(n, digits))
    return out
