"""Fast measurement kernels.

Two evaluation regimes are provided:

* a dense transform that produces every Pauli expectation tr(W rho) of a
  stored density matrix at once (and its adjoint, which synthesizes the
  matrix sum(c_l W_l) from a coefficient vector), generalized to the
  tetrahedral POVM by swapping the 4x4 single-qubit block;
* a memory-free kernel that applies one Pauli string to a d x r factor via
  row permutations and sign patterns, never forming any d x d matrix.

Expectation vectors are ordered by base-4 string index: digit j of the index
selects the Pauli acting on qubit j, with digit 0 most significant.
"""

from __future__ import annotations

import numpy as np

from .errors import SingularProbabilityError
from .povm import PAULI_1Q, tetra_elements_1q
from .states import num_qubits

# Single-qubit transform blocks. Column p holds the row-major vectorization
# of operator p, so block.conj().T contracts a (row, col) index pair of the
# state with each operator (the trace over that qubit), while block itself
# synthesizes entry pairs from operator coefficients.
_PAULI_BLOCK = PAULI_1Q.reshape(4, 4).T.copy()
_TETRA_BLOCK = tetra_elements_1q().reshape(4, 4).T.copy()


def shuffle_forward(rho):
    """View a d x d matrix as a rank-2n tensor with interleaved axes.

    Axis order becomes (i_1, j_1, i_2, j_2, ...) where i_k / j_k are the
    row / column bits of qubit k. Pure index remapping; no data is copied.
    """
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {rho.shape}")
    n = num_qubits(rho.shape[0])
    t = rho.reshape((2,) * (2 * n))
    perm = [a for k in range(n) for a in (k, n + k)]
    return t.transpose(perm)


def shuffle_backward(tensor):
    """Inverse of :func:`shuffle_forward`; returns the d x d matrix."""
    tensor = np.asarray(tensor)
    n = tensor.ndim // 2
    if tensor.ndim != 2 * n or tensor.shape != (2,) * (2 * n):
        raise ValueError("expected a rank-2n tensor of 2-dim axes")
    perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    return tensor.transpose(perm).reshape(1 << n, 1 << n)


def _transform_forward(rho, block):
    n = num_qubits(np.asarray(rho).shape[0])
    x = shuffle_forward(rho)
    x = x.reshape(4, -1)
    adj = block.conj().T
    for _ in range(n):
        x = adj @ x
        x = np.ascontiguousarray(x.T)
        x = x.reshape(4, -1)
    # After n rounds the flat layout is (q_1, ..., q_n) base-4, most
    # significant digit first.
    return x.reshape(-1)


def _transform_synthesis(coeffs, block):
    coeffs = np.asarray(coeffs)
    m = coeffs.size
    n = num_qubits(m) // 2
    if 4**n != m:
        raise ValueError(f"coefficient length {m} is not 4^n")
    x = coeffs.astype(complex).reshape(4, -1)
    for _ in range(n):
        x = block @ x
        x = np.ascontiguousarray(x.T)
        x = x.reshape(4, -1)
    return shuffle_backward(x.reshape((2,) * (2 * n)))


def qmt(rho):
    """All 4**n Pauli expectations tr(W_l rho) of a dense Hermitian state.

    Entry 0 (the identity string) equals tr(rho). Cost O(d^2 log d).
    """
    return _transform_forward(rho, _PAULI_BLOCK).real


def pauli_synthesis(coeffs):
    """Dense matrix sum_l coeffs[l] W_l from a length-4**n coefficient vector.

    This is the adjoint of :func:`qmt` up to the Pauli normalization and runs
    at the same O(d^2 log d) cost, which is what makes dense gradient
    accumulation over all measured strings cheap.
    """
    return _transform_synthesis(coeffs, _PAULI_BLOCK)


def tetra_probabilities(rho):
    """All 4**n tetrahedral outcome probabilities tr(A_k rho), base-4 order."""
    return _transform_forward(rho, _TETRA_BLOCK).real


def tetra_synthesis(coeffs):
    """Dense matrix sum_k coeffs[k] A_k over the tetrahedral elements."""
    return _transform_synthesis(coeffs, _TETRA_BLOCK)


def pauli_outcome_stats(x_measured, trace_val, freqs_plus, freqs_minus, p_tol=0.0):
    """Per-string outcome probabilities and likelihood coefficients.

    Given expectations x for the measured strings, the trace of the state
    (the identity-string expectation; 1 for a normalized state but not for a
    general factor), and the (+/-) outcome frequencies, returns
    (p_plus, p_minus, c_plus, c_minus) where p = (trace_val +/- x)/2 and
    c = f / p on outcomes with f > 0 and 0 elsewhere. Raises
    :class:`SingularProbabilityError` if f > 0 meets p <= p_tol.
    """
    p_plus = 0.5 * (trace_val + x_measured)
    p_minus = 0.5 * (trace_val - x_measured)
    bad = ((freqs_plus > 0.0) & (p_plus <= p_tol)) | (
        (freqs_minus > 0.0) & (p_minus <= p_tol)
    )
    if np.any(bad):
        k = int(np.argmax(bad))
        raise SingularProbabilityError(
            f"measured POVM #{k} has positive frequency on a zero-probability "
            f"outcome (x = {x_measured[k]!r})"
        )
    c_plus = np.zeros_like(p_plus)
    c_minus = np.zeros_like(p_minus)
    np.divide(freqs_plus, p_plus, out=c_plus, where=freqs_plus > 0.0)
    np.divide(freqs_minus, p_minus, out=c_minus, where=freqs_minus > 0.0)
    return p_plus, p_minus, c_plus, c_minus


def qmt_gradient(rho, freqs, p_tol=0.0):
    """Dense gradient of the negative log-likelihood at ``rho``.

    Accumulates -sum_i f_i / tr(A_i rho) * A_i over both outcomes
    (I +/- W)/2 of every measured Pauli POVM. The per-string weights are
    folded into one coefficient vector and synthesized in a single adjoint
    transform instead of a dense loop over strings.
    """
    ens = freqs.ensemble
    if ens.family != "pauli":
        raise ValueError("qmt_gradient applies to Pauli frequency tables")
    x = qmt(rho)
    idx = ens.indices
    f = np.asarray(freqs.freqs)
    _, _, c_plus, c_minus = pauli_outcome_stats(x[idx], x[0], f[0::2], f[1::2], p_tol)
    coeffs = np.zeros(x.size)
    coeffs[idx] = -0.5 * (c_plus - c_minus)
    coeffs[0] = -0.5 * float(np.sum(c_plus + c_minus))
    g = pauli_synthesis(coeffs)
    return 0.5 * (g + g.conj().T)


def apply_pauli(u, string):
    """Product W u of a Pauli string with a d x r factor, out of place.

    digit j of the string acts on bit position n-1-j of the row index. X
    swaps the row pairs of that bit, Z flips the sign where the bit is set,
    and Y composes the Z sign pattern with the X permutation and a global
    factor i (Y = i X Z). Cost O(d r) per non-identity digit; no d x d
    matrix is ever formed.
    """
    u = np.asarray(u)
    vec_input = u.ndim == 1
    mat = u.reshape(u.shape[0], -1)
    d, r = mat.shape
    if 1 << string.n != d:
        raise ValueError(f"factor has {d} rows but the string spans {string.n} qubits")
    if not np.iscomplexobj(mat) and 2 in string.digits:
        mat = mat.astype(complex)
    work = mat
    for j, q in enumerate(string.digits):
        if q == 0:
            continue
        k = string.n - 1 - j
        v = work.reshape(d >> (k + 1), 2, (1 << k) * r)
        nxt = np.empty_like(v)
        if q == 1:  # X
            nxt[:, 0, :] = v[:, 1, :]
            nxt[:, 1, :] = v[:, 0, :]
        elif q == 2:  # Y = i X Z
            np.multiply(v[:, 1, :], -1j, out=nxt[:, 0, :])
            np.multiply(v[:, 0, :], 1j, out=nxt[:, 1, :])
        else:  # Z
            nxt[:, 0, :] = v[:, 0, :]
            np.negative(v[:, 1, :], out=nxt[:, 1, :])
        work = nxt.reshape(d, r)
    if work is mat:
        work = mat.copy()
    return work.reshape(u.shape[0]) if vec_input else work


def probs_lowmem(u, strings):
    """Expectations Re tr(u^H W u) for a list of Pauli strings.

    Evaluated through :func:`apply_pauli` plus an inner product, so memory
    stays at O(d r) regardless of how many strings are measured.
    """
    if len(strings) == 0:
        raise ValueError("strings must be nonempty")
    u = np.asarray(u)
    out = np.empty(len(strings))
    for i, s in enumerate(strings):
        out[i] = np.vdot(u, apply_pauli(u, s)).real
    return out
