"""Rank-controlled maximum-likelihood quantum state tomography.

The density matrix is parameterized as U U^H with a d x r factor U, the unit
trace constraint is replaced by the penalty lam ||U||_F^2 with the multiplier
lam = sum_i f_i known in closed form, and the resulting unconstrained problem
is minimized with L-BFGS or accelerated gradient descent. Measurement
statistics come from a dense all-observables transform for moderate sizes or
a memory-free Pauli kernel for large ones, and any candidate factor can be
certified a posteriori with a duality-gap bound.
"""

from .certify import Certificate, gap_bound, lanczos_min_eig
from .errors import CapacityError, NumericError, SingularProbabilityError, ValidationError
from .kernels import (
    apply_pauli,
    pauli_synthesis,
    probs_lowmem,
    qmt,
    qmt_gradient,
    shuffle_backward,
    shuffle_forward,
    tetra_probabilities,
    tetra_synthesis,
)
from .objective import (
    FrequencyTable,
    PenalizedObjectiveContext,
    bm_value_and_grad,
    lambda_from_frequencies,
    make_context,
    nll,
    outcome_probabilities,
    pack,
    packed_objective,
    unpack,
    vec_grad_hess,
)
from .povm import (
    PauliString,
    PovmEnsemble,
    dense_pauli,
    dfe_budget,
    full_pauli_ensemble,
    sample_pauli_strings,
    tetrahedral_ensemble,
)
from .simulate import ShotPlan, product_expectations, simulate_frequencies
from .solvers import (
    SolveResult,
    SolverConfig,
    accgd_solve,
    init_factor,
    lbfgs_solve,
    solve_mle,
    trace_to_csv,
)
from .states import (
    DEFAULT_DENSE_QUBITS,
    ProductState,
    check_density_matrix,
    depolarize,
    fidelity,
    hmat,
    hvec,
    load_state,
    make_state,
    purity,
    save_state,
    state_from_json,
    state_to_json,
)

__version__ = "0.1.0"
