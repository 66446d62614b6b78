"""A-posteriori optimality certificate for candidate factors.

For any feasible density matrix rho (obtained here by normalizing a factor),
duality gives the computable bound

    L(rho) - L_opt <= tr(grad_L(rho) rho) + mu,
    mu = -min(0, lambda_min(grad_L(rho))),

so the sub-optimality of an iterate can be bounded without knowing L_opt.
Two minimum-eigenvalue paths are provided: a dense eigendecomposition, and a
matrix-free Lanczos iteration whose operator products go through the
low-memory Pauli kernel so no d x d matrix is ever formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SingularProbabilityError

LANCZOS_MAX_ITERS = 200
LANCZOS_TOL = 1e-8


@dataclass
class Certificate:
    """Upper bound on the likelihood sub-optimality of a candidate state."""

    bound: float
    trace_term: float
    mu: float
    min_eig: float
    method: str
    lanczos_residual: float = 0.0
    converged: bool = True

    def to_json_dict(self):
        return {
            "bound": self.bound,
            "trace_term": self.trace_term,
            "mu": self.mu,
            "method": self.method,
        }


def lanczos_min_eig(matvec, dim, rng, max_iters=LANCZOS_MAX_ITERS, tol=LANCZOS_TOL):
    """Smallest eigenvalue of a Hermitian operator given only matvecs.

    Lanczos with full reorthogonalization from a random start vector.
    Convergence is declared when the Ritz residual drops below ``tol`` times
    the operator-norm estimate (largest Ritz magnitude); exact breakdown
    (an invariant subspace) also terminates.

    Returns:
        (min_eig, residual, converged)
    """
    k_max = min(max_iters, dim)
    q = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    q /= np.linalg.norm(q)
    basis = np.empty((k_max, dim), dtype=complex)
    alphas = np.empty(k_max)
    betas = np.empty(k_max)
    theta = 0.0
    residual = math.inf
    for k in range(k_max):
        basis[k] = q
        w = matvec(q)
        alphas[k] = np.vdot(q, w).real
        # Full reorthogonalization (two passes) keeps the basis orthonormal;
        # it also subsumes the usual alpha/beta recurrence subtractions.
        w -= basis[: k + 1].T @ (basis[: k + 1].conj() @ w)
        w -= basis[: k + 1].T @ (basis[: k + 1].conj() @ w)
        beta = float(np.linalg.norm(w))
        betas[k] = beta
        t = np.diag(alphas[: k + 1])
        if k:
            off = betas[:k]
            t += np.diag(off, 1) + np.diag(off, -1)
        evals, evecs = np.linalg.eigh(t)
        theta = float(evals[0])
        scale = max(float(np.max(np.abs(evals))), 1e-300)
        residual = beta * abs(float(evecs[-1, 0]))
        if residual <= tol * scale or beta <= 1e-14 * scale:
            return theta, residual, True
        q = w / beta
    return theta, residual, False


def _pauli_gradient_operator(u_hat, ctx, p_tol=0.0):
    """Coefficients for v -> grad_L(rho) v as identity plus Pauli terms."""
    f = ctx.freqs.freqs
    strings = ctx.freqs.ensemble.strings()
    x = kernels.probs_lowmem(u_hat, strings)
    trace_val = float(np.vdot(u_hat, u_hat).real)
    _, _, c_plus, c_minus = kernels.pauli_outcome_stats(
        x, trace_val, f[0::2], f[1::2], p_tol
    )
    a0 = -0.5 * float(np.sum(c_plus + c_minus))
    b = -0.5 * (c_plus - c_minus)
    active = [(strings[i], b[i]) for i in range(len(strings)) if b[i] != 0.0]

    def matvec(v):
        out = a0 * v
        for s, coeff in active:
            out += coeff * kernels.apply_pauli(v, s)
        return out

    return matvec


def gap_bound(u, ctx, method="auto", seed=0, max_iters=LANCZOS_MAX_ITERS, tol=LANCZOS_TOL):
    """Duality-gap certificate at a candidate factor u (any scale).

    The factor is normalized internally, so the certificate is invariant
    under positive rescaling of u. ``method`` picks how the minimum
    eigenvalue of the gradient is computed: "dense" eigendecomposes the
    explicit matrix, "lanczos" uses matrix-vector products through the
    low-memory kernel (Pauli families only), "auto" follows the context
    engine. On Lanczos non-convergence, mu is inflated by the residual and
    the certificate is flagged.
    """
    u = np.asarray(u)
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        raise ValueError("the zero factor has no normalized state")
    u_hat = u / norm
    if method == "auto":
        method = "dense" if ctx.engine == "qmt" else "lanczos"
    if method not in ("dense", "lanczos"):
        raise ValueError(f"unknown certificate method {method!r}")

    if method == "dense":
        rho = u_hat @ u_hat.conj().T
        if ctx.freqs.ensemble.family == "pauli":
            grad = kernels.qmt_gradient(rho, ctx.freqs)
        else:
            p = kernels.tetra_probabilities(rho)
            f = ctx.freqs.freqs
            active = f > 0.0
            if np.any(p[active] <= 0.0):
                raise SingularProbabilityError(
                    "positive frequency on a zero-probability outcome"
                )
            coeffs = np.zeros_like(p)
            np.divide(f, p, out=coeffs, where=active)
            grad = kernels.tetra_synthesis(-coeffs)
        trace_term = float(np.vdot(u_hat, grad @ u_hat).real)
        min_eig = float(np.linalg.eigvalsh(grad)[0])
        mu = max(0.0, -min_eig)
        return Certificate(trace_term + mu, trace_term, mu, min_eig, "dense")

    if ctx.freqs.ensemble.family != "pauli":
        raise ValueError("the lanczos path supports Pauli families only")
    matvec = _pauli_gradient_operator(u_hat, ctx)
    cols = u_hat.reshape(u_hat.shape[0], -1)
    trace_term = 0.0
    for c in range(cols.shape[1]):
        trace_term += float(np.vdot(cols[:, c], matvec(cols[:, c])).real)
    rng = np.random.default_rng(seed)
    min_eig, residual, converged = lanczos_min_eig(
        matvec, cols.shape[0], rng, max_iters=max_iters, tol=tol
    )
    if converged:
        mu = max(0.0, -min_eig)
    else:
        mu = max(0.0, -(min_eig - residual))
    return Certificate(
        trace_term + mu, trace_term, mu, min_eig, "lanczos", residual, converged
    )
