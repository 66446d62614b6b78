"""Measurement data generation: exact Born-rule frequencies or finite-shot
empirical frequencies with binomial / multinomial noise.

Randomness uses the counter-based Philox generator with one spawned
substream per POVM, so the output is reproducible and independent of any
parallel evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericError
from .objective import FrequencyTable
from .povm import PAULI_1Q
from .states import DEFAULT_DENSE_QUBITS, ProductState

PROB_CLAMP_TOL = 1e-9  # computed probabilities may undershoot 0 by this much


@dataclass(frozen=True)
class ShotPlan:
    """Per-POVM repetition count (math.inf for exact data) plus RNG seed."""

    shots: float
    seed: int = 0

    def __post_init__(self):
        ok = self.shots == math.inf or (
            float(self.shots).is_integer() and self.shots >= 1
        )
        if not ok:
            raise ValueError(f"shots must be a positive integer or inf, got {self.shots}")


def product_expectations(state, strings):
    """Pauli expectations of a separable state, one per string.

    tr(W rho) factorizes over qubits, so only the 4 x n table of single-qubit
    traces is ever formed.
    """
    table = np.empty((state.n, 4))
    for j, f in enumerate(state.factors):
        for q in range(4):
            table[j, q] = np.trace(PAULI_1Q[q] @ f).real
    digits = np.array([s.digits for s in strings], dtype=np.int64)
    return np.prod(table[np.arange(state.n)[None, :], digits], axis=1)


def _clamp_probs(p):
    lo = float(np.min(p)) if p.size else 0.0
    if lo < -PROB_CLAMP_TOL:
        raise NumericError(f"computed probability {lo!r} below -{PROB_CLAMP_TOL:.0e}")
    return np.clip(p, 0.0, None)


def _exact_pauli_expectations(state, ensemble, depolarize):
    if isinstance(state, ProductState):
        x = product_expectations(state, ensemble.strings())
    else:
        x = kernels.qmt(np.asarray(state))[ensemble.indices]
    # Global depolarizing noise scales every non-identity Pauli expectation
    # by (1 - p); the identity string is excluded from ensembles, so the
    # scaling applies uniformly and no dense state is needed.
    if depolarize:
        x = (1.0 - depolarize) * x
    return x


def simulate_frequencies(state, ensemble, plan, depolarize=0.0, max_dense_qubits=DEFAULT_DENSE_QUBITS):
    """Generate a :class:`FrequencyTable` for a state and an ensemble.

    With ``plan.shots == math.inf`` the frequencies equal the exact outcome
    probabilities; otherwise each POVM draws its counts from an independent
    substream (binomial for Pauli POVMs, multinomial for the tetrahedral
    POVM) and per-POVM frequencies sum to 1 exactly.

    ``depolarize`` mixes the target with I/d at the stated level before
    measuring; separable targets stay factored throughout.
    """
    if not 0.0 <= depolarize <= 1.0:
        raise ValueError(f"depolarizing level must be in [0, 1], got {depolarize}")
    if ensemble.family == "pauli":
        x = _exact_pauli_expectations(state, ensemble, depolarize)
        p_plus = _clamp_probs(0.5 * (1.0 + x))
        p_plus = np.clip(p_plus, 0.0, 1.0)
        if plan.shots == math.inf:
            f_plus = p_plus
        else:
            shots = int(plan.shots)
            streams = np.random.SeedSequence(plan.seed).spawn(len(p_plus))
            f_plus = np.empty_like(p_plus)
            for k, ss in enumerate(streams):
                rng = np.random.Generator(np.random.Philox(ss))
                f_plus[k] = rng.binomial(shots, p_plus[k]) / shots
        freqs = np.empty(2 * f_plus.size)
        freqs[0::2] = f_plus
        freqs[1::2] = 1.0 - f_plus
        return FrequencyTable(ensemble, freqs, plan.shots)

    # Tetrahedral: dense-only evaluation (moderate n); separable targets are
    # expanded under the capacity cap.
    rho = state.to_dense(max_dense_qubits) if isinstance(state, ProductState) else np.asarray(state)
    if depolarize:
        d = rho.shape[0]
        rho = (1.0 - depolarize) * rho + (depolarize / d) * np.eye(d)
    p = _clamp_probs(kernels.tetra_probabilities(rho))
    if plan.shots == math.inf:
        freqs = p / p.sum()
    else:
        shots = int(plan.shots)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(plan.seed)))
        counts = rng.multinomial(shots, p / p.sum())
        freqs = counts / shots
    return FrequencyTable(ensemble, freqs, plan.shots)
