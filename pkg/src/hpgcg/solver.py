"""Hybrid proximal generalized conditional gradient iteration.

The solver minimizes ``f + g`` where ``f`` is smooth and ``g`` is convex,
given a :class:`ProblemOracle` that knows how to solve the hybrid
subproblem

    min_w  <grad f(u), w> - <u, w>_P + 0.5 * ||w||_P^2 + g(w)

for a positive semidefinite metric ``P``. With ``P = 0`` the iteration is
the generalized conditional gradient method; with ``P`` positive definite
and unit steps it is the (preconditioned) forward-backward method.

Points can be any objects supporting ``+``, ``-`` and multiplication by a
float (numpy arrays, or the product-space points used by the learning
problem).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ProblemOracle",
    "SolverConfig",
    "SolveTrace",
    "InfeasibleIterateError",
    "OracleConsistencyError",
    "residual",
    "step_size",
    "hpgcg_solve",
]

log = logging.getLogger(__name__)

# residuals in [-CLAMP_REL * scale, 0) are round-off and become 0
CLAMP_REL = 1e-9


class InfeasibleIterateError(ValueError):
    """Raised when an iterate lies outside the domain of ``g``."""


class OracleConsistencyError(RuntimeError):
    """Raised when the residual is negative beyond round-off.

    A minimizer of the hybrid subproblem can never have a larger value
    than the current point, so this indicates a broken oracle.
    """


class ProblemOracle:
    """Composite problem ``f + g`` seen through the operations the solver needs.

    Subclasses implement :meth:`grad_f`, :meth:`hybrid_argmin`, :meth:`df`
    and :meth:`objective`. The defaults describe ``P = 0`` and ``g`` being
    an indicator that is zero on every point the solver produces.
    """

    def grad_f(self, u):
        raise NotImplementedError

    def hybrid_argmin(self, u, grad=None):
        """Return a minimizer ``v(u)`` of the hybrid subproblem at ``u``.

        ``grad`` is ``grad_f(u)`` when the caller already has it.
        """
        raise NotImplementedError

    def df(self, u, v):
        """Majorant of the Bregman gap of ``f`` that scales quadratically on segments."""
        raise NotImplementedError

    def p_seminorm_sq(self, w):
        return 0.0

    def objective(self, u):
        raise NotImplementedError

    def g(self, u):
        return 0.0

    def inner(self, a, b):
        return float(np.vdot(a, b))

    def stopping_measure(self, u, v, d):
        """Quantity compared with the tolerance; the residual unless overridden."""
        return d


@dataclass
class SolverConfig:
    residual_tolerance: float = 1e-6
    max_iterations: int = 10000
    trace_every: int = 1

    def __post_init__(self):
        if not self.residual_tolerance > 0:
            raise ValueError("residual_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.trace_every < 1:
            raise ValueError("trace_every must be at least 1")


@dataclass
class SolveTrace:
    """Per-iterate record of a run.

    ``thetas[i]`` is the step taken from iterate ``iterations[i]``; it is NaN
    on the terminal record where no step was taken. ``objectives`` holds raw
    ``(f + g)(u^k)`` values since the optimal value is unknown.
    """

    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    p_gaps: list = field(default_factory=list)
    thetas: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    stop_values: list = field(default_factory=list)
    converged: bool = False
    n_iterations: int = 0
    events: dict = field(default_factory=dict)

    def record(self, k, d, p_gap, theta, obj, stop):
        self.iterations.append(k)
        self.residuals.append(d)
        self.p_gaps.append(p_gap)
        self.thetas.append(theta)
        self.objectives.append(obj)
        self.stop_values.append(stop)

    @property
    def final_residual(self):
        return self.residuals[-1] if self.residuals else math.nan

    def rows(self):
        """Yield ``(k, residual, theta, objective)`` tuples."""
        return zip(self.iterations, self.residuals, self.thetas, self.objectives)


def residual(problem, u, v, grad=None):
    """Residual ``D(u) = <grad f(u), u - v> + g(u) - g(v) - 0.5 ||u - v||_P^2``.

    ``v`` must be ``problem.hybrid_argmin(u)``. Small negative values from
    cancellation are clamped to zero; anything more negative than
    ``1e-9 * (1 + scale)`` raises :class:`OracleConsistencyError`.
    """
    gu = problem.g(u)
    if math.isinf(gu):
        raise InfeasibleIterateError("infeasible iterate: g(u) = +inf")
    if grad is None:
        grad = problem.grad_f(u)
    w = u - v
    lin = problem.inner(grad, w)
    gv = problem.g(v)
    half_p = 0.5 * problem.p_seminorm_sq(w)
    d = lin + gu - gv - half_p
    if d < 0.0:
        scale = abs(lin) + abs(gu) + abs(gv) + half_p
        if d < -CLAMP_REL * (1.0 + scale):
            raise OracleConsistencyError(f"negative residual {d:.3e} (scale {scale:.3e})")
        d = 0.0
    return d


def step_size(d_u, p_gap, df_val):
    """Adaptive step ``min(1, (D + p_gap) / (2 D_f))``; 1 when ``D_f = 0``."""
    num = d_u + p_gap
    if df_val <= 0.0:
        return 1.0
    return min(1.0, num / (2.0 * df_val))


def hpgcg_solve(problem, u0, config=None, callback=None):
    """Run the HPGCG iteration from ``u0``.

    Parameters
    ----------
    problem : ProblemOracle
    u0 : point
        Starting point, must lie in the domain of ``g``.
    config : SolverConfig, optional
    callback : callable, optional
        Called as ``callback(k, u, v, theta)`` after each step is chosen
        (``theta`` is NaN at the terminal iterate).

    Returns
    -------
    u : point
        Final iterate.
    trace : SolveTrace
        ``trace.converged`` is False when ``max_iterations`` was reached;
        that is a status, not an error.
    """
    if config is None:
        config = SolverConfig()
    trace = SolveTrace()
    u = u0
    k = 0
    while True:
        gf = problem.grad_f(u)
        v = problem.hybrid_argmin(u, gf)
        d = residual(problem, u, v, gf)
        p_gap = 0.5 * problem.p_seminorm_sq(u - v)
        stop = problem.stopping_measure(u, v, d)
        done = stop < config.residual_tolerance
        last = done or k >= config.max_iterations
        theta = math.nan if last else step_size(d, p_gap, problem.df(u, v))
        if last or k % config.trace_every == 0:
            trace.record(k, d, p_gap, theta, problem.objective(u), stop)
        if callback is not None:
            callback(k, u, v, theta)
        if last:
            break
        u = u + theta * (v - u)
        k += 1
    trace.converged = done
    trace.n_iterations = k
    if not done:
        log.info("hpgcg: no convergence after %d iterations (measure %.3e)", k, stop)
    return u, trace
