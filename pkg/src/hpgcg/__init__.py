"""Hybrid proximal generalized conditional gradient solver and TV parameter learning.

Modules
-------
solver   generic iteration, step-size rule and traces
tv       forward-difference gradient, divergence, mixed norms, TV
rof      ROF denoising through the dual, gap and Bregman certificates
learning quadratic and constant TV-parameter models trained on patch pairs
data     patch datasets, noise, PGM files and on-disk formats
metrics  best-constant oracle, parameter and reconstruction errors
cli      command line front end (``hpgcg`` / ``python -m hpgcg``)
"""

from .learning import (
    ConstantModel,
    QuadraticModel,
    TrainConfig,
    model_alpha,
    psd_project,
    train,
    train_constant,
)
from .rof import RofInstance, bregman_decomposition, denoise, primal_dual_gap
from .solver import ProblemOracle, SolverConfig, SolveTrace, hpgcg_solve, residual, step_size
from .tv import div, grad, norm_1_2, norm_inf_2, tv

__version__ = "0.1.0"

__all__ = [
    "ProblemOracle",
    "SolverConfig",
    "SolveTrace",
    "hpgcg_solve",
    "residual",
    "step_size",
    "grad",
    "div",
    "norm_1_2",
    "norm_inf_2",
    "tv",
    "RofInstance",
    "denoise",
    "primal_dual_gap",
    "bregman_decomposition",
    "QuadraticModel",
    "ConstantModel",
    "TrainConfig",
    "psd_project",
    "model_alpha",
    "train",
    "train_constant",
]
