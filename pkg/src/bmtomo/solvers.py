"""First-order solvers over flat real vectors plus the MLE driver.

Both drivers minimize a callable x -> (value, gradient). An objective may
return +inf at an infeasible trial point; the L-BFGS line search and the
accelerated-descent safeguard treat that as "step too long" and back off.

Shared stopping rules: gradient norm below ``grad_tol``, relative objective
decrease below ``f_rel_tol`` over a 5-iteration window, the iteration cap,
or (L-BFGS only) an unrecoverable line-search failure. When a certificate
callback is installed, its bound lands in the trace and can terminate the
run early at ``cert_tol``.
"""

from __future__ import annotations

import math
import time
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import certify, objective
from .errors import CapacityError

F_WINDOW = 5  # iterations spanned by the relative-decrease stopping rule

TraceRow = namedtuple("TraceRow", "iteration seconds value grad_norm bound")


@dataclass
class SolverConfig:
    method: str = "lbfgs"
    max_iters: int = 5000
    history: int = 10
    step_size: float = 1e-2  # accgd only
    grad_tol: float = 1e-7
    f_rel_tol: float = 1e-12
    certificate_every: int = 0  # 0 disables certificate checkpoints
    cert_tol: float = None  # stop once the certificate bound falls below
    seed: int = 0
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    theta: float = None  # accgd momentum override; None means t/(t+3)

    def __post_init__(self):
        if self.method not in ("lbfgs", "accgd"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError("need 0 < wolfe_c1 < wolfe_c2 < 1")
        if self.grad_tol <= 0.0 or self.f_rel_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.history < 1 or self.max_iters < 1 or self.step_size <= 0.0:
            raise ValueError("history, max_iters and step_size must be positive")
        if self.certificate_every < 0:
            raise ValueError("certificate_every must be >= 0")


@dataclass
class SolveResult:
    x: np.ndarray
    trace: list
    termination: str
    n_evals: int
    wolfe_checks: list = field(default_factory=list, repr=False)

    @property
    def final_value(self):
        return self.trace[-1].value


def init_factor(n, r, seed=0):
    """Random d x r start factor: i.i.d. standard complex Gaussian entries
    scaled to unit Frobenius norm."""
    if r < 1 or n < 1:
        raise ValueError("need n >= 1 and r >= 1")
    rng = np.random.default_rng(seed)
    d = 1 << n
    u = (rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))) / math.sqrt(2.0)
    return u / np.linalg.norm(u)


def trace_to_csv(trace, fh):
    """Write trace rows as CSV: iter, seconds, objective, grad_norm, bound."""
    fh.write("iter,seconds,objective,grad_norm,bound\n")
    for row in trace:
        bound = "" if row.bound is None else repr(float(row.bound))
        fh.write(
            f"{row.iteration},{row.seconds!r},{row.value!r},{row.grad_norm!r},{bound}\n"
        )


class _Telemetry:
    """Trace bookkeeping and the stopping rules shared by both drivers."""

    def __init__(self, config, certificate_fn):
        self.config = config
        self.certificate_fn = certificate_fn
        self.trace = []
        self.values = []
        self.t0 = time.perf_counter()
        self.stop_reason = None

    def record(self, iteration, x, value, grad_norm):
        bound = None
        every = self.config.certificate_every
        if self.certificate_fn is not None and every > 0 and iteration % every == 0 and iteration > 0:
            bound = float(self.certificate_fn(x))
            if self.config.cert_tol is not None and bound <= self.config.cert_tol:
                self.stop_reason = "certificate"
        self.trace.append(
            TraceRow(iteration, time.perf_counter() - self.t0, value, grad_norm, bound)
        )
        self.values.append(value)
        if self.stop_reason is None:
            if grad_norm <= self.config.grad_tol:
                self.stop_reason = "grad_tol"
            elif len(self.values) > F_WINDOW:
                old, new = self.values[-F_WINDOW - 1], self.values[-1]
                if old - new <= self.config.f_rel_tol * max(1.0, abs(new)):
                    self.stop_reason = "f_rel_tol"
        return self.stop_reason


def _two_loop_direction(grad, mem_s, mem_y, mem_rho):
    q = grad.copy()
    alphas = []
    for s, y, rho in zip(reversed(mem_s), reversed(mem_y), reversed(mem_rho)):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    if mem_s:
        s, y = mem_s[-1], mem_y[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(mem_s, mem_y, mem_rho), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def _interp_step(a_lo, f_lo, g_lo, a_hi, f_hi):
    # Minimizer of the quadratic through (a_lo, f_lo, g_lo) and (a_hi, f_hi);
    # falls back to bisection when the data are unusable (e.g. f_hi = inf).
    if not math.isfinite(f_hi):
        return 0.5 * (a_lo + a_hi)
    denom = 2.0 * (f_hi - f_lo - g_lo * (a_hi - a_lo))
    if denom == 0.0:
        return 0.5 * (a_lo + a_hi)
    step = a_lo - g_lo * (a_hi - a_lo) ** 2 / denom
    span = abs(a_hi - a_lo)
    lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
    if not (lo + 0.1 * span <= step <= hi - 0.1 * span):
        return 0.5 * (a_lo + a_hi)
    return step


class _LineSearchEval:
    def __init__(self, objective_fn, x, p):
        self.objective_fn = objective_fn
        self.x = x
        self.p = p
        self.n_evals = 0

    def __call__(self, alpha):
        value, grad = self.objective_fn(self.x + alpha * self.p)
        self.n_evals += 1
        if math.isnan(value):
            value = math.inf
        dphi = float(grad @ self.p) if math.isfinite(value) else math.nan
        return value, grad, dphi


def _strong_wolfe(evaluate, f0, dphi0, c1, c2, alpha0=1.0, max_evals=30):
    """Strong Wolfe line search (bracket then zoom).

    Returns (alpha, value, grad) or None on failure. +inf trial values are
    treated as overshoot and shrink the bracket. The sufficient-decrease test
    carries a few-ulp noise allowance so that progress whose true decrease
    falls below double-precision resolution of the objective (common in the
    quasi-Newton endgame, where steps still shrink the gradient) is not
    rejected; the curvature condition stays strict.
    """
    noise = 16.0 * np.finfo(float).eps * max(1.0, abs(f0))

    def sufficient(a, val):
        return val <= f0 + c1 * a * dphi0 + noise

    def zoom(a_lo, f_lo, d_lo, a_hi, f_hi):
        for _ in range(max_evals):
            if abs(a_hi - a_lo) <= 1e-14 * max(1.0, abs(a_lo)):
                return None
            a = _interp_step(a_lo, f_lo, d_lo, a_hi, f_hi)
            val, grad, dphi = evaluate(a)
            if not math.isfinite(val) or not sufficient(a, val) or val >= f_lo + noise:
                a_hi, f_hi = a, val
                continue
            if abs(dphi) <= -c2 * dphi0:
                return a, val, grad
            if dphi * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi = a_lo, f_lo
            a_lo, f_lo, d_lo = a, val, dphi
        return None

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    alpha = alpha0
    for i in range(max_evals):
        val, grad, dphi = evaluate(alpha)
        if not math.isfinite(val) or not sufficient(alpha, val) or (i > 0 and val >= f_prev + noise):
            return zoom(a_prev, f_prev, d_prev, alpha, val)
        if abs(dphi) <= -c2 * dphi0:
            return alpha, val, grad
        if dphi >= 0.0:
            return zoom(alpha, val, dphi, a_prev, f_prev)
        a_prev, f_prev, d_prev = alpha, val, dphi
        alpha *= 2.0
    return None


def lbfgs_solve(objective_fn, x0, config, certificate_fn=None):
    """Two-loop-recursion L-BFGS with a strong Wolfe line search.

    Every accepted step satisfies the sufficient-decrease and curvature
    conditions (the margins are recorded in ``wolfe_checks``), so the traced
    objective is non-increasing. On a line-search failure the curvature
    memory is discarded once and the step retried along steepest descent;
    a repeat failure terminates with status "line_search_failure".
    """
    x = np.array(x0, dtype=float)
    f, g = objective_fn(x)
    n_evals = 1
    if not math.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    tele = _Telemetry(config, certificate_fn)
    mem_s, mem_y, mem_rho = [], [], []
    wolfe_checks = []
    gnorm = float(np.linalg.norm(g))
    reason = tele.record(0, x, f, gnorm)
    termination = "max_iters"
    if reason:
        termination = reason
    else:
        for it in range(1, config.max_iters + 1):
            p = _two_loop_direction(g, mem_s, mem_y, mem_rho)
            dphi0 = float(g @ p)
            if dphi0 >= 0.0:
                # Stale curvature made the direction non-descending.
                mem_s, mem_y, mem_rho = [], [], []
                p = -g
                dphi0 = float(g @ p)
            evaluate = _LineSearchEval(objective_fn, x, p)
            alpha0 = 1.0 if mem_s else min(1.0, 1.0 / max(1.0, gnorm))
            hit = _strong_wolfe(evaluate, f, dphi0, config.wolfe_c1, config.wolfe_c2, alpha0)
            n_evals += evaluate.n_evals
            if hit is None and mem_s:
                # Restart the inverse-Hessian memory once, then give up.
                mem_s, mem_y, mem_rho = [], [], []
                p = -g
                dphi0 = float(g @ p)
                evaluate = _LineSearchEval(objective_fn, x, p)
                hit = _strong_wolfe(
                    evaluate, f, dphi0, config.wolfe_c1, config.wolfe_c2,
                    min(1.0, 1.0 / max(1.0, gnorm)),
                )
                n_evals += evaluate.n_evals
            if hit is None:
                termination = "line_search_failure"
                break
            alpha, f_new, g_new = hit
            wolfe_checks.append(
                (
                    f_new - (f + config.wolfe_c1 * alpha * dphi0),
                    abs(float(g_new @ p)) - config.wolfe_c2 * abs(dphi0),
                )
            )
            s = alpha * p
            y = g_new - g
            sy = float(s @ y)
            if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
                mem_s.append(s)
                mem_y.append(y)
                mem_rho.append(1.0 / sy)
                if len(mem_s) > config.history:
                    mem_s.pop(0)
                    mem_y.pop(0)
                    mem_rho.pop(0)
            x = x + s
            f, g = f_new, g_new
            gnorm = float(np.linalg.norm(g))
            reason = tele.record(it, x, f, gnorm)
            if reason:
                termination = reason
                break
    return SolveResult(x, tele.trace, termination, n_evals, wolfe_checks)


def accgd_solve(objective_fn, x0, config, certificate_fn=None):
    """Accelerated gradient descent with momentum t/(t+3).

    The step is u_{t+1} = v_t - eta grad(v_t) followed by the extrapolation
    v_{t+1} = u_{t+1} + theta_t (u_{t+1} - u_t). When a trial point evaluates
    to +inf, eta is halved for that step and the momentum term reset.
    """
    u = np.array(x0, dtype=float)
    f_u, g_u = objective_fn(u)
    n_evals = 1
    if not math.isfinite(f_u):
        raise ValueError("objective is not finite at the starting point")
    tele = _Telemetry(config, certificate_fn)
    termination = "max_iters"
    reason = tele.record(0, u, f_u, float(np.linalg.norm(g_u)))
    if reason:
        termination = reason
    else:
        v = u.copy()
        f_v, g_v = f_u, g_u
        for it in range(1, config.max_iters + 1):
            eta = config.step_size
            u_next, f_next, g_next = None, math.inf, None
            for _ in range(60):
                u_next = v - eta * g_v
                f_next, g_next = objective_fn(u_next)
                n_evals += 1
                if math.isfinite(f_next):
                    break
                eta *= 0.5
                v = u
                f_v, g_v = f_u, g_u
            if not math.isfinite(f_next):
                termination = "line_search_failure"
                break
            theta = config.theta if config.theta is not None else it / (it + 3.0)
            v = u_next + theta * (u_next - u)
            u = u_next
            f_u, g_u = f_next, g_next
            reason = tele.record(it, u, f_u, float(np.linalg.norm(g_u)))
            if reason:
                termination = reason
                break
            f_v, g_v = objective_fn(v)
            n_evals += 1
            if not math.isfinite(f_v):
                # Extrapolated too far; restart momentum from u.
                v = u.copy()
                f_v, g_v = f_u, g_u
    return SolveResult(u, tele.trace, termination, n_evals)


def solve_mle(freqs, rank, config, engine="auto", dense_cap=14, x0=None):
    """Minimize J_lam for a frequency table at the given rank.

    Builds the packed objective, optionally wires the certificate callback
    (dense for the qmt engine, matrix-free Lanczos for lowmem), runs the
    configured driver, and returns (final_factor, SolveResult).
    """
    ctx = objective.make_context(freqs, engine, dense_cap)
    n = ctx.n
    d = ctx.dim
    if rank < 1 or rank > d:
        raise ValueError(f"rank must be in [1, {d}], got {rank}")
    if ctx.engine == "qmt" and n > dense_cap:
        raise CapacityError(f"qmt engine capped at {dense_cap} qubits, got {n}")
    if x0 is None:
        x0 = objective.pack(init_factor(n, rank, config.seed))
    fn = objective.packed_objective(ctx, rank)
    certificate_fn = None
    if config.certificate_every > 0:
        method = "dense" if ctx.engine == "qmt" else "lanczos"

        def certificate_fn(x):
            u = objective.unpack(x, d, rank)
            return certify.gap_bound(u, ctx, method=method, seed=config.seed).bound

    driver = lbfgs_solve if config.method == "lbfgs" else accgd_solve
    result = driver(fn, x0, config, certificate_fn)
    return objective.unpack(result.x, d, rank), result
