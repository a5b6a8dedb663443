"""Learning a TV parameter model by HPGCG on the monolevel gap problem.

For training pairs ``(u_i, xi_i)`` and a model ``alpha(xi)``, the training
problem is

    min  1/(2N) sum_i ||div(v_i) + xi_i||^2 + 1/N sum_i alpha(xi_i) TV(u_i)
    s.t. ||v_i||_{inf,2} <= alpha(xi_i)

over the model and the dual fields ``v_i``. Two model classes are
supported: quadratic, ``alpha(xi) = xibar^T A xibar`` with ``A`` PSD and
``xibar = [xi, 1]``, and nonnegative constants. The metric used by the
hybrid step acts on the model only (``lam * ||A||_F^2``, or ``lam * a^2``),
so the dual fields move by conditional-gradient steps and the model by a
proximal step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .solver import ProblemOracle, SolverConfig, hpgcg_solve, residual
from .tv import div, grad, norm_1_2, norm_inf_2, pixel_norms, tv

__all__ = [
    "FEAS_RTOL",
    "EIG_RTOL",
    "QuadraticModel",
    "ConstantModel",
    "TrainConfig",
    "LearningPoint",
    "LearningState",
    "LearningProblem",
    "InfeasibleStateError",
    "DimensionError",
    "lift",
    "psd_project",
    "model_alpha",
    "candidate_step",
    "learning_residual",
    "learning_objective",
    "train",
    "train_constant",
]

FEAS_RTOL = 1e-12
EIG_RTOL = 1e-9


class InfeasibleStateError(ValueError):
    pass


class DimensionError(ValueError):
    pass


def lift(xi):
    """Flatten patches row-major and append a constant 1: ``(..., p, p) -> (..., p*p + 1)``."""
    xi = np.asarray(xi, dtype=float)
    flat = xi.reshape(xi.shape[:-2] + (-1,))
    return np.concatenate([flat, np.ones(flat.shape[:-1] + (1,))], axis=-1)


def psd_project(s, return_clamped=False):
    """Frobenius-nearest positive semidefinite matrix to ``(s + s^T) / 2``.

    Negative eigenvalues are set to zero. With ``return_clamped`` the number
    of eigenvalues below ``-1e-9 * ||s||`` (i.e. clamped for a reason other
    than round-off) is returned as well.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise np.linalg.LinAlgError("eigendecomposition failed: non-finite input")
    sym = 0.5 * (s + s.T)
    w, q = np.linalg.eigh(sym)
    out = (q * np.maximum(w, 0.0)) @ q.T
    out = 0.5 * (out + out.T)
    if return_clamped:
        thresh = -EIG_RTOL * np.linalg.norm(sym)
        return out, int(np.count_nonzero(w < thresh))
    return out


def model_alpha(a, xi):
    """Quadratic form ``xibar^T A xibar`` for one patch or a stack of patches."""
    xb = lift(xi)
    a = np.asarray(a, dtype=float)
    if a.shape != (xb.shape[-1],) * 2:
        raise DimensionError(f"model of size {a.shape} does not fit patches of length {xb.shape[-1] - 1}")
    return np.sum((xb @ a) * xb, axis=-1)


@dataclass
class QuadraticModel:
    a: np.ndarray
    metadata: dict = field(default_factory=dict)

    kind = "quadratic"

    @property
    def patch_size(self):
        return int(round(math.sqrt(self.a.shape[0] - 1)))

    def alpha(self, xi):
        return model_alpha(self.a, xi)

    @classmethod
    def from_constant(cls, alpha, p):
        a = np.zeros((p * p + 1, p * p + 1))
        a[-1, -1] = alpha
        return cls(a)


@dataclass
class ConstantModel:
    value: float
    metadata: dict = field(default_factory=dict)

    kind = "constant"
    patch_size = None

    def alpha(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.full(xi.shape[:-2], self.value) if xi.ndim > 2 else self.value


@dataclass
class TrainConfig:
    lam: float = 50.0
    residual_tolerance: float = 1e-4
    max_iterations: int = 20000
    model_kind: str = "quadratic"
    lipschitz: float | None = None  # None means 8 / N
    trace_every: int = 1

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise ValueError("lipschitz must be positive")
        if self.model_kind not in ("quadratic", "constant"):
            raise ValueError(f"unknown model_kind {self.model_kind!r}")

    def solver_config(self):
        return SolverConfig(self.residual_tolerance, self.max_iterations, self.trace_every)


class LearningPoint:
    """Joint variable ``(v_1..v_N, A)``; ``a`` is a matrix or a 0-d array for constants."""

    __slots__ = ("v", "a")

    def __init__(self, v, a):
        self.v = v
        self.a = a

    def __add__(self, other):
        return LearningPoint(self.v + other.v, self.a + other.a)

    def __sub__(self, other):
        return LearningPoint(self.v - other.v, self.a - other.a)

    def __mul__(self, t):
        return LearningPoint(t * self.v, t * self.a)

    __rmul__ = __mul__

    def __repr__(self):
        return f"LearningPoint(v{self.v.shape}, a{np.shape(self.a)})"


def _arrays(data):
    if hasattr(data, "ground_truth"):
        gts, xis = data.ground_truth, data.noisy
    else:
        gts, xis = data
    gts = np.asarray(gts, dtype=float)
    xis = np.asarray(xis, dtype=float)
    if xis.ndim == 2:
        gts, xis = gts[None], xis[None]
    if gts.shape != xis.shape or xis.ndim != 3 or xis.shape[0] < 1:
        raise ValueError(f"bad dataset shapes {gts.shape} / {xis.shape}")
    return gts, xis


class LearningProblem(ProblemOracle):
    """The training problem over ``LearningPoint`` s.

    ``D_f(x, y) = (L / 2) ||x - y||^2`` on the concatenated variable, with
    ``L = 8 / N`` unless overridden: ``f`` is affine in the model and each
    dual block has curvature at most ``8 / N``.
    """

    def __init__(self, data, lam=50.0, lipschitz=None, model_kind="quadratic"):
        self.gts, self.xis = _arrays(data)
        self.n_patches = self.xis.shape[0]
        self.lam = float(lam)
        self.L = 8.0 / self.n_patches if lipschitz is None else float(lipschitz)
        self.kind = model_kind
        self.xbar = lift(self.xis)
        self.tv_gt = tv(self.gts)
        if model_kind == "quadratic":
            self._grad_a = (self.xbar.T * self.tv_gt) @ self.xbar / self.n_patches
        else:
            self._grad_a = np.asarray(self.tv_gt.mean())
        self.n_clamped = 0

    def zero_point(self):
        p = self.xis.shape[-1]
        a = np.zeros((p * p + 1,) * 2) if self.kind == "quadratic" else np.asarray(0.0)
        return LearningPoint(np.zeros(self.xis.shape + (2,)), a)

    def alphas(self, a):
        if self.kind == "quadratic":
            return np.sum((self.xbar @ a) * self.xbar, axis=1)
        return np.full(self.n_patches, float(a))

    def primals(self, x):
        return div(x.v) + self.xis

    def grad_f(self, x):
        return LearningPoint(-grad(self.primals(x)) / self.n_patches, self._grad_a)

    def hybrid_argmin(self, x, grad=None):
        if grad is None:
            grad = self.grad_f(x)
        # grad.v = -grad(u_i) / N, so the per-pixel direction is -grad.v
        gu = -grad.v * self.n_patches
        c = self.tv_gt - norm_1_2(gu)
        if self.kind == "quadratic":
            s = x.a - (self.xbar.T * c) @ self.xbar / (self.lam * self.n_patches)
            a_new, clamped = psd_project(s, return_clamped=True)
            self.n_clamped += clamped > 0
        else:
            a_new = np.asarray(max(0.0, float(x.a) - c.mean() / self.lam))
        # round-off can make xibar^T A xibar slightly negative for PSD A
        radius = np.maximum(self.alphas(a_new), 0.0)
        n = pixel_norms(gu)
        scale = np.divide(radius[:, None, None], n, out=np.zeros_like(n), where=n > 0)
        return LearningPoint(gu * scale[..., None], a_new)

    def df(self, x, y):
        d = x - y
        return 0.5 * self.L * (float(np.sum(d.v ** 2)) + float(np.sum(d.a ** 2)))

    def p_seminorm_sq(self, w):
        return self.lam * float(np.sum(np.asarray(w.a) ** 2))

    def inner(self, x, y):
        return float(np.vdot(x.v, y.v)) + float(np.sum(x.a * y.a))

    def feasible(self, x):
        # the model iterates are convex combinations of PSD projections,
        # so only the dual radii are checked here
        radius = np.maximum(self.alphas(x.a), 0.0)
        return bool(np.all(norm_inf_2(x.v) <= radius * (1.0 + FEAS_RTOL)))

    def g(self, x):
        return 0.0 if self.feasible(x) else math.inf

    def smooth_value(self, x):
        u = self.primals(x)
        return (0.5 * float(np.sum(u ** 2)) / self.n_patches
                + float(np.dot(self.alphas(x.a), self.tv_gt)) / self.n_patches)

    def objective(self, x):
        if not self.feasible(x):
            return math.inf
        return self.smooth_value(x)


@dataclass
class LearningState:
    """Current model and duals of a training run."""

    a: np.ndarray
    duals: np.ndarray
    k: int = 0
    residuals: list = field(default_factory=list)

    @property
    def point(self):
        return LearningPoint(np.asarray(self.duals, dtype=float), np.asarray(self.a, dtype=float))


def _problem(data, cfg, state=None):
    kind = cfg.model_kind
    if state is not None and np.ndim(state.a) == 0:
        kind = "constant"
    return LearningProblem(data, cfg.lam, cfg.lipschitz, kind)


def candidate_step(state, data, cfg):
    """One candidate ``(A~, v~)`` of the training iteration from ``state``.

    Returns the new model (a PSD matrix, or a 0-d array for constants) and
    the stacked candidate duals.
    """
    prob = _problem(data, cfg, state)
    x = state.point
    if not prob.feasible(x):
        raise InfeasibleStateError("state violates ||v_i|| <= alpha(xi_i)")
    y = prob.hybrid_argmin(x)
    return y.a, y.v


def learning_residual(state, candidate, data, cfg):
    """Residual of ``state`` given its candidate ``(A~, v~)`` from :func:`candidate_step`."""
    prob = _problem(data, cfg, state)
    x = state.point
    a_new, v_new = candidate
    y = LearningPoint(np.asarray(v_new, dtype=float), np.asarray(a_new, dtype=float))
    if not (prob.feasible(x) and prob.feasible(y)):
        raise InfeasibleStateError("residual needs two feasible points")
    return residual(prob, x, y)


def learning_objective(state, data):
    """Training objective at a feasible state (quadratic or constant model)."""
    kind = "constant" if np.ndim(state.a) == 0 else "quadratic"
    prob = LearningProblem(data, model_kind=kind)
    x = state.point
    if not prob.feasible(x):
        raise InfeasibleStateError("state violates ||v_i|| <= alpha(xi_i)")
    return prob.smooth_value(x)


def _run(data, cfg, callback):
    prob = LearningProblem(data, cfg.lam, cfg.lipschitz, cfg.model_kind)
    x, trace = hpgcg_solve(prob, prob.zero_point(), cfg.solver_config(), callback)
    trace.events["psd_clamps"] = prob.n_clamped
    return prob, x, trace


def train(data, cfg=None, callback=None):
    """Train a model of kind ``cfg.model_kind`` from ``A = 0, v = 0``.

    Returns ``(model, trace)`` where ``model`` is a :class:`QuadraticModel`
    or :class:`ConstantModel` carrying the final duals in
    ``model.metadata["state"]``. Non-convergence is reported through
    ``trace.converged``.
    """
    cfg = cfg or TrainConfig()
    prob, x, trace = _run(data, cfg, callback)
    meta = {
        "lambda": cfg.lam,
        "L": prob.L,
        "tolerance": cfg.residual_tolerance,
        "iterations": trace.n_iterations,
        "residual": trace.final_residual,
        "converged": trace.converged,
        "objective": trace.objectives[-1],
        "n_patches": prob.n_patches,
        "state": LearningState(x.a, x.v, trace.n_iterations, list(trace.residuals)),
    }
    if cfg.model_kind == "quadratic":
        model = QuadraticModel(np.asarray(x.a), meta)
    else:
        model = ConstantModel(float(x.a), meta)
    return model, trace


def train_constant(data, cfg=None, return_trace=False):
    """Best nonnegative constant parameter for ``data``."""
    cfg = cfg or TrainConfig()
    if cfg.model_kind != "constant":
        cfg = TrainConfig(cfg.lam, cfg.residual_tolerance, cfg.max_iterations,
                          "constant", cfg.lipschitz, cfg.trace_every)
    model, trace = train(data, cfg)
    return (model.value, trace) if return_trace else model.value
