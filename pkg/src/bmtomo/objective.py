"""Maximum-likelihood objectives over density matrices and low-rank factors.

The measured data live in a :class:`FrequencyTable`. The convex objective is
the negative log-likelihood L(rho) = -sum_i f_i log tr(A_i rho); the factored
objective J(U) = L(U U^H) is minimized through the penalized form
J_lam(U) = J(U) + lam ||U||_F^2 whose multiplier lam = sum_i f_i is known in
closed form, so any non-zero stationary point automatically has unit norm.

Outcome layout: linear index i = k + l * m_each, i.e. one contiguous block of
m_each outcomes per POVM, POVMs ordered as in the ensemble. For Pauli POVMs
the block is (f_plus, f_minus) for the elements (I + W)/2, (I - W)/2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import SingularProbabilityError, ValidationError
from .povm import PovmEnsemble
from .states import hvec

FREQ_SUM_TOL = 1e-12  # per-POVM normalization tolerance on ingestion


@dataclass(eq=False)
class FrequencyTable:
    """Measured POVM specification plus empirical outcome frequencies.

    ``shots`` is the per-POVM repetition count; ``math.inf`` marks exact
    (infinite-data) frequencies.
    """

    ensemble: PovmEnsemble
    freqs: np.ndarray
    shots: float

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        if f.ndim != 1 or f.size != self.ensemble.m_total:
            raise ValidationError(
                f"expected {self.ensemble.m_total} frequencies, got {f.size}"
            )
        if np.any(f < 0.0) or not np.all(np.isfinite(f)):
            raise ValidationError("frequencies must be finite and nonnegative")
        sums = f.reshape(self.ensemble.num_povms, self.ensemble.m_each).sum(axis=1)
        worst = float(np.max(np.abs(sums - 1.0)))
        if worst > FREQ_SUM_TOL:
            raise ValidationError(
                f"per-POVM frequencies must sum to 1 within {FREQ_SUM_TOL:.0e}; "
                f"worst deviation {worst:.3e}"
            )
        if not (self.shots == math.inf or (float(self.shots).is_integer() and self.shots >= 1)):
            raise ValidationError(f"shots must be a positive integer or inf, got {self.shots}")
        self.freqs = f

    # -- JSON schema: {"n", "family", "indices" (pauli only), "shots", "freqs"}

    def to_json_dict(self):
        doc = {"n": self.ensemble.n, "family": self.ensemble.family}
        if self.ensemble.family == "pauli":
            doc["indices"] = [int(i) for i in self.ensemble.indices]
        doc["shots"] = "inf" if self.shots == math.inf else int(self.shots)
        doc["freqs"] = [float(v) for v in self.freqs]
        return doc

    @classmethod
    def from_json_dict(cls, doc):
        try:
            family = doc["family"]
            n = int(doc["n"])
            shots = math.inf if doc["shots"] == "inf" else int(doc["shots"])
            freqs = np.asarray(doc["freqs"], dtype=float)
            if family == "pauli":
                ens = PovmEnsemble("pauli", n, np.asarray(doc["indices"], np.int64))
            elif family == "tetrahedral":
                ens = PovmEnsemble("tetrahedral", n)
            else:
                raise ValidationError(f"unknown family {family!r}")
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed frequency table: {exc}") from exc
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        return cls(ens, freqs, shots)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def lambda_from_frequencies(freqs):
    """The closed-form penalty multiplier lam = sum_i f_i (> 0)."""
    lam = float(np.sum(freqs.freqs))
    if lam <= 0.0:
        raise ValueError("all frequencies are zero; the likelihood is empty")
    return lam


def outcome_probabilities(rho, ensemble):
    """Born probabilities of a dense state, aligned with the table layout."""
    rho = np.asarray(rho)
    if ensemble.family == "pauli":
        x = kernels.qmt(rho)
        xs = x[ensemble.indices]
        probs = np.empty(2 * xs.size)
        probs[0::2] = 0.5 * (x[0] + xs)
        probs[1::2] = 0.5 * (x[0] - xs)
        return probs
    return kernels.tetra_probabilities(rho)


def nll(state_or_probs, freqs):
    """Negative log-likelihood -sum_i f_i log p_i.

    Accepts either a dense density matrix or a precomputed probability
    vector aligned with the table layout. Outcomes with f_i = 0 contribute
    exactly 0; if any outcome with f_i > 0 has p_i <= 0 the sentinel value
    +inf is returned (not an exception) so line searches can reject the
    evaluation point cheaply.
    """
    arr = np.asarray(state_or_probs)
    if arr.ndim == 2:
        probs = outcome_probabilities(arr, freqs.ensemble)
    else:
        probs = arr
        if probs.size != freqs.ensemble.m_total:
            raise ValueError("probability vector does not match the table layout")
    f = freqs.freqs
    active = f > 0.0
    p_active = probs[active]
    if np.any(p_active <= 0.0):
        return math.inf
    return float(-np.dot(f[active], np.log(p_active)))


@dataclass(eq=False)
class PenalizedObjectiveContext:
    """Frozen description of one J_lam minimization problem."""

    freqs: FrequencyTable
    lam: float
    engine: str
    strings: list = field(default=None, repr=False, init=False)

    def __post_init__(self):
        if self.engine not in ("qmt", "lowmem"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.engine == "lowmem":
            if self.freqs.ensemble.family != "pauli":
                raise ValueError("the low-memory engine supports Pauli POVMs only")
            self.strings = self.freqs.ensemble.strings()

    @property
    def n(self):
        return self.freqs.ensemble.n

    @property
    def dim(self):
        return 1 << self.freqs.ensemble.n


def make_context(freqs, engine="auto", dense_cap=14):
    """Build an evaluation context, resolving engine="auto" by size.

    auto picks the dense transform when n <= dense_cap and the low-memory
    path otherwise (Pauli families only).
    """
    if engine == "auto":
        engine = "qmt" if freqs.ensemble.n <= dense_cap else "lowmem"
    return PenalizedObjectiveContext(freqs, lambda_from_frequencies(freqs), engine)


def _value_grad_qmt(u, ctx):
    f = ctx.freqs.freqs
    lam = ctx.lam
    rho = u @ u.conj().T
    if ctx.freqs.ensemble.family == "pauli":
        idx = ctx.freqs.ensemble.indices
        x = kernels.qmt(rho)
        xs = x[idx]
        fp, fm = f[0::2], f[1::2]
        # tr(A rho) = (tr(rho) +/- x)/2; the factor is not unit-norm in
        # general, so the trace comes from the identity-string expectation.
        pp = 0.5 * (x[0] + xs)
        pm = 0.5 * (x[0] - xs)
        if np.any(((fp > 0.0) & (pp <= 0.0)) | ((fm > 0.0) & (pm <= 0.0))):
            return math.inf, np.zeros_like(u)
        value = 0.0
        mp, mm = fp > 0.0, fm > 0.0
        value -= float(np.dot(fp[mp], np.log(pp[mp])))
        value -= float(np.dot(fm[mm], np.log(pm[mm])))
        cp = np.zeros_like(pp)
        cm = np.zeros_like(pm)
        np.divide(fp, pp, out=cp, where=mp)
        np.divide(fm, pm, out=cm, where=mm)
        coeffs = np.zeros(x.size)
        coeffs[idx] = -0.5 * (cp - cm)
        coeffs[0] = -0.5 * float(np.sum(cp + cm))
        grad_l = kernels.pauli_synthesis(coeffs)
    else:
        p = kernels.tetra_probabilities(rho)
        active = f > 0.0
        if np.any(p[active] <= 0.0):
            return math.inf, np.zeros_like(u)
        value = float(-np.dot(f[active], np.log(p[active])))
        coeffs = np.zeros_like(p)
        np.divide(f, p, out=coeffs, where=active)
        grad_l = kernels.tetra_synthesis(-coeffs)
    norm2 = float(np.vdot(u, u).real)
    value += lam * norm2
    grad = 2.0 * (grad_l @ u) + (2.0 * lam) * u
    return value, grad


def _value_grad_lowmem(u, ctx):
    f = ctx.freqs.freqs
    fp, fm = f[0::2], f[1::2]
    lam = ctx.lam
    norm2 = float(np.vdot(u, u).real)  # = tr(u u^H), the identity expectation
    value = 0.0
    sum_c = 0.0
    grad_w = np.zeros_like(u)
    for i, s in enumerate(ctx.strings):
        wu = kernels.apply_pauli(u, s)
        x = np.vdot(u, wu).real
        pp = 0.5 * (norm2 + x)
        pm = 0.5 * (norm2 - x)
        cp = cm = 0.0
        if fp[i] > 0.0:
            if pp <= 0.0:
                return math.inf, np.zeros_like(u)
            value -= fp[i] * math.log(pp)
            cp = fp[i] / pp
        if fm[i] > 0.0:
            if pm <= 0.0:
                return math.inf, np.zeros_like(u)
            value -= fm[i] * math.log(pm)
            cm = fm[i] / pm
        sum_c += cp + cm
        if cp != cm:
            grad_w += (cm - cp) * wu
    value += lam * norm2
    # -2 sum_i (f_i/p_i) A_i u with A = (I +/- W)/2 splits into a multiple of
    # u (the identity parts, plus the penalty) and the accumulated W u terms.
    grad = grad_w + (2.0 * lam - sum_c) * u
    return value, grad


def bm_value_and_grad(u, ctx):
    """Value and gradient of J_lam at a d x r factor.

    The qmt engine forms rho = u u^H once and uses the dense transforms; the
    lowmem engine sweeps the measured strings with the memory-free kernel,
    sharing each W u between the probability and the gradient term. Both
    return (+inf, zero gradient) at infeasible points.
    """
    u = np.asarray(u)
    if ctx.engine == "qmt":
        return _value_grad_qmt(u, ctx)
    return _value_grad_lowmem(u, ctx)


def pack(u):
    """Flatten a complex d x r factor to 2 d r reals.

    Column-major real parts first, then imaginary parts; with this layout the
    Euclidean dot product of packed vectors equals Re<A, B> on factor space,
    so packed gradients line up with directional derivatives.
    """
    u = np.asarray(u)
    return np.concatenate([u.real.ravel(order="F"), u.imag.ravel(order="F")])


def unpack(v, d, r):
    """Inverse of :func:`pack` for a d x r factor."""
    v = np.asarray(v, dtype=float)
    h = d * r
    if v.size != 2 * h:
        raise ValueError(f"expected a length-{2 * h} vector, got {v.size}")
    re = v[:h].reshape((d, r), order="F")
    im = v[h:].reshape((d, r), order="F")
    return re + 1j * im


def packed_objective(ctx, rank):
    """J_lam as a callable over flat real vectors: x -> (value, gradient)."""
    d = ctx.dim

    def objective(x):
        value, grad = bm_value_and_grad(unpack(x, d, rank), ctx)
        return value, pack(grad)

    return objective


def _dense_outcome_rows(ensemble):
    from .povm import dense_pauli, dense_tetra_elements

    d = 1 << ensemble.n
    if ensemble.family == "pauli":
        eye = np.eye(d, dtype=complex)
        rows = np.empty((ensemble.m_total, d * d))
        for k, s in enumerate(ensemble.strings()):
            w = dense_pauli(s)
            rows[2 * k] = hvec(0.5 * (eye + w))
            rows[2 * k + 1] = hvec(0.5 * (eye - w))
        return rows
    elements = dense_tetra_elements(ensemble.n)
    return np.stack([hvec(a) for a in elements])


def vec_grad_hess(x, freqs, max_qubits=4):
    """Gradient and Hessian of the likelihood in hvec coordinates.

    Small-system diagnostic: builds the dense outcome matrix with rows
    hvec(A_i), then grad = -sum f_i/(a_i.x) a_i and
    hess = sum f_i/(a_i.x)^2 a_i a_i^T (positive semidefinite).
    """
    ens = freqs.ensemble
    if ens.n > max_qubits:
        raise ValueError(f"vec_grad_hess is limited to {max_qubits} qubits")
    a = _dense_outcome_rows(ens)
    x = np.asarray(x, dtype=float)
    p = a @ x
    f = freqs.freqs
    active = f > 0.0
    if np.any(p[active] <= 0.0):
        k = int(np.argmax(active & (p <= 0.0)))
        raise SingularProbabilityError(
            f"outcome {k} has positive frequency but probability {p[k]!r}"
        )
    w = np.zeros_like(p)
    np.divide(f, p, out=w, where=active)
    grad = -(a.T @ w)
    w2 = np.zeros_like(p)
    np.divide(f, p * p, out=w2, where=active)
    hess = a.T @ (a * w2[:, None])
    return grad, 0.5 * (hess + hess.T)
