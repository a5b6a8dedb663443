"""Reference computations that share no code with the package under test."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp


def stencil_grad(u):
    """Forward differences by explicit loops over pixels."""
    p = len(u)
    out = np.zeros((p, p, 2))
    for i in range(p):
        for j in range(p):
            if j < p - 1:
                out[i, j, 0] = u[i][j + 1] - u[i][j]
            if i < p - 1:
                out[i, j, 1] = u[i + 1][j] - u[i][j]
    return out


def grad_matrix(p):
    """Sparse matrix of the forward-difference gradient, rows ordered (pixel, component)."""
    rows, cols, vals = [], [], []
    for i in range(p):
        for j in range(p):
            k = i * p + j
            if j < p - 1:
                rows += [2 * k, 2 * k]
                cols += [k + 1, k]
                vals += [1.0, -1.0]
            if i < p - 1:
                rows += [2 * k + 1, 2 * k + 1]
                cols += [k + p, k]
                vals += [1.0, -1.0]
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * p * p, p * p))


def brute_tv(u):
    g = stencil_grad(np.asarray(u, dtype=float))
    return float(sum(math.hypot(g[i, j, 0], g[i, j, 1]) for i in range(len(u)) for j in range(len(u))))


class PGDual:
    """Projected gradient with step 1/8 on the dual ROF problem."""

    def __init__(self, xi):
        self.xi = np.asarray(xi, dtype=float)
        self.p = self.xi.shape[0]
        self.G = grad_matrix(self.p)
        self.x = self.xi.ravel()

    def primal(self, w):
        # div = -G^T
        return self.x - self.G.T @ w

    def gap(self, w, alpha):
        u = self.primal(w)
        gu = (self.G @ u).reshape(-1, 2)
        return float((-(self.G.T @ w)) @ u + alpha * np.sqrt((gu ** 2).sum(1)).sum())

    def solve(self, alpha, tol=1e-10, max_iter=500000, w0=None):
        w = np.zeros(2 * self.p * self.p) if w0 is None else w0.copy()
        for _ in range(max_iter):
            if self.gap(w, alpha) < tol:
                break
            z = (w + (self.G @ self.primal(w)) / 8.0).reshape(-1, 2)
            n = np.sqrt((z ** 2).sum(1))
            z /= np.maximum(1.0, n / alpha)[:, None]
            w = z.ravel()
        return self.primal(w).reshape(self.p, self.p), w, self.gap(w, alpha)


def pg_denoise(xi, alpha, tol=1e-10):
    u, _, gap = PGDual(xi).solve(alpha, tol)
    return u, gap


def bilevel_grid(gt, xi, alphas, tol=1e-10):
    """Reconstruction error ``||gt - u^alpha||^2`` along an increasing alpha grid (warm started)."""
    solver = PGDual(xi)
    errs = []
    w = None
    for a in alphas:
        if a <= 0:
            errs.append(float(np.sum((gt - xi) ** 2)))
            continue
        if w is not None:
            z = w.reshape(-1, 2)
            n = np.sqrt((z ** 2).sum(1))
            w = (z / np.maximum(1.0, n / a)[:, None]).ravel()
        u, w, _ = solver.solve(a, tol, w0=w)
        errs.append(float(np.sum((gt - u) ** 2)))
    return np.array(errs)


def golden_section(fn, lo, hi, tol=1e-10):
    phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    while b - a > tol:
        if fn(c) < fn(d):
            b = d
        else:
            a = c
        c, d = b - phi * (b - a), a + phi * (b - a)
    return 0.5 * (a + b)


def power_iteration_gradnorm_sq(grad, div, p, iters=500, seed=0):
    """Largest eigenvalue of -div(grad(.)) = grad^T grad by power iteration."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((p, p))
    lam = 0.0
    for _ in range(iters):
        y = -div(grad(x))
        lam = float(np.sum(x * y) / np.sum(x * x))
        x = y / np.linalg.norm(y)
    return lam


def forward_backward(grad_f, prox_g, u0, n_steps):
    """Plain proximal-gradient iterates ``u_{k+1} = prox_g(u_k - grad_f(u_k))``."""
    out = [np.array(u0, dtype=float)]
    for _ in range(n_steps):
        out.append(prox_g(out[-1] - grad_f(out[-1])))
    return out
