"""Discrete differential operators and mixed norms on square pixel grids.

Scalar fields are arrays whose last two axes are the ``(p, p)`` grid; vector
fields carry one more trailing axis of length 2 holding the (x, y)
components, x being the difference along columns and y along rows. Leading
axes are treated as a batch, so a stack of ``N`` patches of shape
``(N, p, p)`` maps to a ``(N, p, p, 2)`` stack of gradients.
"""

from __future__ import annotations

import numpy as np

__all__ = ["grad", "div", "pixel_norms", "norm_1_2", "norm_inf_2", "tv"]


def grad(u):
    """Forward-difference gradient with zero differences on the last row/column.

    Parameters
    ----------
    u : array_like, shape (..., p, p)

    Returns
    -------
    ndarray, shape (..., p, p, 2)
    """
    u = np.asarray(u, dtype=float)
    g = np.zeros(u.shape + (2,))
    g[..., :, :-1, 0] = u[..., :, 1:] - u[..., :, :-1]
    g[..., :-1, :, 1] = u[..., 1:, :] - u[..., :-1, :]
    return g


def div(v):
    """Discrete divergence, the exact negative adjoint of :func:`grad`.

    ``<grad(u), v> == -<u, div(v)>`` holds for every pair with the plain
    Euclidean inner products, so the stencil is the transpose of the one
    in :func:`grad` with the sign flipped.
    """
    v = np.asarray(v, dtype=float)
    vx = v[..., 0]
    vy = v[..., 1]
    d = np.zeros(v.shape[:-1])
    d[..., :, :-1] += vx[..., :, :-1]
    d[..., :, 1:] -= vx[..., :, :-1]
    d[..., :-1, :] += vy[..., :-1, :]
    d[..., 1:, :] -= vy[..., :-1, :]
    return d


def pixel_norms(v):
    """Euclidean norm of every pixel vector, shape ``v.shape[:-1]``."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(v[..., 0] ** 2 + v[..., 1] ** 2)


def norm_1_2(v):
    """Sum over pixels of the Euclidean pixel norms (per batch element)."""
    return pixel_norms(v).sum(axis=(-2, -1))


def norm_inf_2(v):
    """Largest Euclidean pixel norm (per batch element)."""
    return pixel_norms(v).max(axis=(-2, -1))


def tv(u):
    """Isotropic total variation ``norm_1_2(grad(u))``."""
    return norm_1_2(grad(u))
