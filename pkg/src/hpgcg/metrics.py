"""Evaluation of parameter models against per-patch best constants."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .learning import DimensionError, TrainConfig, train_constant
from .rof import RofInstance, denoise
from .solver import SolverConfig

__all__ = [
    "ALPHA_FLOOR",
    "EvaluationReport",
    "ModelScore",
    "best_alpha",
    "oracle_alphas",
    "predict_alphas",
    "mse_alpha",
    "mse_u",
    "reconstruction_errors",
    "constant_grid",
    "evaluate",
]

# alpha(xi) is floored here so every ROF instance stays well posed
ALPHA_FLOOR = 1e-12


def _map(fn, items, threads):
    # executor.map preserves input order, so reductions stay deterministic
    if threads is None or threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def best_alpha(pair, cfg=None):
    """Best constant parameter for a single ``(ground_truth, noisy)`` pair."""
    cfg = cfg or TrainConfig(residual_tolerance=1e-5, max_iterations=100000, model_kind="constant")
    return train_constant(pair, cfg)


def oracle_alphas(dataset, cfg=None, cache_dir=None, threads=1):
    """``best_alpha`` for every patch, optionally cached on disk by dataset checksum."""
    cfg = cfg or TrainConfig(residual_tolerance=1e-5, max_iterations=100000, model_kind="constant")
    cache = None
    if cache_dir is not None:
        key = f"{dataset.checksum():08x}_{cfg.lam:g}_{cfg.residual_tolerance:g}_{cfg.max_iterations}"
        cache = Path(cache_dir) / f"oracle_alphas_{key}.json"
        if cache.exists():
            vals = json.loads(cache.read_text())
            if len(vals) == len(dataset):
                return np.asarray(vals, dtype=float)
    pairs = [(dataset.ground_truth[i], dataset.noisy[i]) for i in range(len(dataset))]
    vals = np.asarray(_map(lambda pr: best_alpha(pr, cfg), pairs, threads), dtype=float)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        cache.write_text(json.dumps([float(a) for a in vals]))
    return vals


def predict_alphas(model, noisy):
    """Model parameters for a stack of patches; plain floats act as constant models."""
    noisy = np.asarray(noisy, dtype=float)
    if isinstance(model, (int, float, np.floating)):
        return np.full(noisy.shape[0], float(model))
    p = getattr(model, "patch_size", None)
    if p is not None and p != noisy.shape[-1]:
        raise DimensionError(f"model expects {p}x{p} patches, got {noisy.shape[-1]}x{noisy.shape[-1]}")
    return np.asarray(model.alpha(noisy), dtype=float).reshape(noisy.shape[0])


def mse_alpha(model, testset, oracle):
    """Mean of ``(alpha*_i - alpha(xi_i))^2``; ``model`` may also be an array of predictions."""
    oracle = np.asarray(oracle, dtype=float)
    if isinstance(model, np.ndarray):
        pred = model.astype(float)
    else:
        pred = predict_alphas(model, testset.noisy)
    if pred.shape != oracle.shape:
        raise ValueError(f"size mismatch: {pred.shape} predictions vs {oracle.shape} oracle values")
    return float(np.mean((oracle - pred) ** 2))


def reconstruction_errors(alphas, testset, solver_cfg=None, threads=1):
    """``||u_i - u_i^{alpha_i}||^2`` per patch, plus each solve's convergence flag."""
    solver_cfg = solver_cfg or SolverConfig(1e-8, 20000)

    def one(i):
        inst = RofInstance(testset.noisy[i], max(float(alphas[i]), ALPHA_FLOOR))
        pd, trace = denoise(inst, solver_cfg)
        return float(np.sum((testset.ground_truth[i] - pd.u) ** 2)), trace.converged

    out = _map(one, range(len(testset)), threads)
    return np.array([e for e, _ in out]), [c for _, c in out]


def mse_u(model, testset, cfg=None, threads=1):
    """Mean reconstruction error ``1/N sum ||u_i - u_i^{alpha(xi_i)}||^2``."""
    errs, _ = reconstruction_errors(predict_alphas(model, testset.noisy), testset, cfg, threads)
    return float(np.mean(errs))


def constant_grid(lo=1e-4, hi=1e-1, count=8):
    """Geometrically spaced constants, ``1e-4, 2.68e-4, ..., 1e-1`` by default."""
    return np.geomspace(lo, hi, count)


@dataclass
class ModelScore:
    name: str
    mse_alpha: float
    mse_u: float
    alphas: list
    errors: list
    converged: list


@dataclass
class EvaluationReport:
    oracle: list
    scores: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def table(self):
        """Rows ``(name, mse_alpha, mse_u)``."""
        return [(s.name, s.mse_alpha, s.mse_u) for s in self.scores]

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "patch", "alpha_star", "alpha", "sq_error", "converged"])
            for s in self.scores:
                for i, (a, e, c) in enumerate(zip(s.alphas, s.errors, s.converged)):
                    w.writerow([s.name, i, repr(float(self.oracle[i])), repr(float(a)), repr(float(e)), int(c)])


def evaluate(models, testset, oracle, solver_cfg=None, threads=1):
    """Score named models (objects with ``alpha`` or plain constants) on ``testset``.

    ``models`` maps a display name to a model. Returns an :class:`EvaluationReport`
    with one :class:`ModelScore` per model, in insertion order.
    """
    solver_cfg = solver_cfg or SolverConfig(1e-8, 20000)
    oracle = np.asarray(oracle, dtype=float)
    if oracle.shape != (len(testset),):
        raise ValueError("one oracle value per test patch is required")
    report = EvaluationReport(oracle=[float(a) for a in oracle], settings={
        "residual_tolerance": solver_cfg.residual_tolerance,
        "max_iterations": solver_cfg.max_iterations,
        "threads": threads,
        "alpha_floor": ALPHA_FLOOR,
    })
    for name, model in models.items():
        alphas = predict_alphas(model, testset.noisy)
        errs, conv = reconstruction_errors(alphas, testset, solver_cfg, threads)
        report.scores.append(ModelScore(
            name, mse_alpha(alphas, testset, oracle), float(np.mean(errs)),
            [float(a) for a in alphas], [float(e) for e in errs], conv))
    return report
