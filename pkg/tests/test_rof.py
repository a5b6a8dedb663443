import math

import numpy as np
import pytest

from conftest import random_instance
from hpgcg.rof import (
    NotPrimalDualPairError,
    PrimalDualPair,
    RofInstance,
    bregman_decomposition,
    denoise,
    lmo_ball,
    primal_dual_gap,
    project_ball,
)
from hpgcg.solver import SolverConfig
from hpgcg.tv import norm_inf_2, tv
from oracles import PGDual


def test_instance_validation():
    with pytest.raises(ValueError):
        RofInstance(np.zeros((2, 2)), 0.0)
    with pytest.raises(ValueError):
        RofInstance(np.zeros((2, 3)), 1.0)
    with pytest.raises(ValueError):
        RofInstance(np.array([[np.nan, 0], [0, 0]]), 1.0)


def test_lmo_single_pixel():
    g = np.zeros((1, 1, 2))
    g[0, 0] = (3, 4)
    v = lmo_ball(g, 1.0)
    assert np.allclose(v[0, 0], (-0.6, -0.8), atol=1e-15)
    # brute force over sampled directions of the disc
    t = np.linspace(0, 2 * np.pi, 10000, endpoint=False)
    pts = np.stack([np.cos(t), np.sin(t)], 1)
    assert float(np.vdot(g[0, 0], v[0, 0])) <= float(np.min(pts @ g[0, 0])) + 1e-12


def test_lmo_degenerate_cases():
    assert np.array_equal(lmo_ball(np.zeros((3, 3, 2)), 1.0), np.zeros((3, 3, 2)))
    g = np.random.default_rng(0).standard_normal((3, 3, 2))
    assert np.array_equal(lmo_ball(g, 0.0), np.zeros((3, 3, 2)))


def test_project_ball():
    w = np.random.default_rng(1).standard_normal((4, 4, 2))
    q = project_ball(w, 0.5)
    assert norm_inf_2(q) <= 0.5 * (1 + 1e-15)
    n = np.sqrt((w ** 2).sum(-1))
    inside = n <= 0.5
    assert np.array_equal(q[inside], w[inside])


def test_denoise_constant():
    inst = RofInstance(np.full((4, 4), 0.7), 0.3)
    pd, trace = denoise(inst)
    assert trace.n_iterations == 0
    assert pd.gap == 0.0
    assert np.array_equal(pd.u, inst.xi) and not pd.v.any()


def test_denoise_checkerboard_large_alpha():
    inst = RofInstance(np.array([[0.0, 1.0], [1.0, 0.0]]), 2.0)
    pd, trace = denoise(inst, SolverConfig(1e-12, 10000))
    assert trace.converged
    assert np.allclose(pd.u, 0.5, atol=1e-6)
    # brute force: by symmetry u = [[a, b], [b, a]]; ROF energy on a fine grid
    grid = np.linspace(0, 1, 201)
    best = min(
        ((0.5 * (2 * a * a + 2 * (b - 1) ** 2) + 2.0 * 4 * abs(b - a)), a, b)
        for a in grid for b in grid)
    assert best[1] == pytest.approx(0.5) and best[2] == pytest.approx(0.5)


@pytest.mark.parametrize("metric_weight", [0.5, 0.0])
def test_denoise_matches_projected_gradient(metric_weight):
    inst = random_instance(11)
    u_pg, _, gap_pg = PGDual(inst.xi).solve(inst.alpha, 1e-8)
    cfg = SolverConfig(1e-8 if metric_weight else 1e-6, 200000)
    pd, trace = denoise(inst, cfg, metric_weight=metric_weight)
    assert trace.converged and gap_pg < 1e-8
    tol = 1e-4 if metric_weight else 2e-3
    assert np.linalg.norm(pd.u - u_pg) <= tol


def test_lipschitz_surrogate_option():
    inst = random_instance(2, p=6)
    a, _ = denoise(inst, SolverConfig(1e-10, 50000), df_kind="lipschitz")
    b, _ = denoise(inst, SolverConfig(1e-10, 50000))
    assert np.linalg.norm(a.u - b.u) <= 1e-4
    with pytest.raises(ValueError):
        denoise(inst, df_kind="nope")


def test_gap_examples():
    xi = np.array([[0.0, 1.0], [0.0, 1.0]])
    inst = RofInstance(xi, 0.25)
    assert primal_dual_gap(xi, np.zeros((2, 2, 2)), inst) == pytest.approx(2 * 0.25, abs=1e-15)
    v = np.zeros((2, 2, 2))
    v[0, 0, 0] = 0.5
    assert primal_dual_gap(xi, v, inst) == math.inf
    pd, _ = denoise(inst, SolverConfig(1e-10, 10000))
    assert pd.gap <= 1e-8


def test_gap_nonnegative_and_majorizes_distance():
    inst = random_instance(3, p=4, alpha=0.2)
    pd, _ = denoise(inst, SolverConfig(1e-12, 100000))
    rng = np.random.default_rng(0)
    for _ in range(50):
        u = inst.xi + rng.normal(0, 0.3, inst.xi.shape)
        v = project_ball(rng.normal(0, 0.3, (4, 4, 2)), inst.alpha)
        gap = primal_dual_gap(u, v, inst)
        assert gap >= -1e-10 * (1 + np.sum(inst.xi ** 2))
        assert gap >= 0.5 * np.sum((u - pd.u) ** 2) - 1e-7


def test_optimality_system_at_solution():
    inst = random_instance(4, p=6)
    pd, _ = denoise(inst, SolverConfig(1e-10, 50000))
    from hpgcg.tv import div

    assert np.linalg.norm(div(pd.v) + inst.xi - pd.u) <= math.sqrt(2 * max(pd.gap, 0.0)) + 1e-12
    assert norm_inf_2(pd.v) <= inst.alpha * (1 + 1e-12)
    assert tv(pd.u) <= tv(inst.xi)


def test_bregman_self_and_df():
    inst = random_instance(5, p=4)
    pd, _ = denoise(inst, SolverConfig(1e-12, 100000))
    z = bregman_decomposition(pd.u, pd.v, pd, inst)
    assert max(abs(z.d_f), abs(z.d_fstar), abs(z.d_gstar), abs(z.d_g)) <= 1e-12
    u = np.random.default_rng(0).random((4, 4))
    z = bregman_decomposition(u, pd.v, pd, inst)
    assert z.d_f == 0.5 * float(np.sum((u - pd.u) ** 2))


def test_bregman_sum_reproduces_gap():
    inst = random_instance(6, p=4, alpha=0.15)
    pd, _ = denoise(inst, SolverConfig(1e-12, 100000))
    rng = np.random.default_rng(1)
    for _ in range(50):
        u = rng.random((4, 4))
        v = project_ball(rng.normal(0, 0.2, (4, 4, 2)), inst.alpha)
        z = bregman_decomposition(u, v, pd, inst)
        gap = primal_dual_gap(u, v, inst)
        assert abs(gap - z.total) <= 1e-7
        assert min(z.d_f, z.d_fstar, z.d_gstar, z.d_g) >= -1e-9


def test_bregman_rejects_non_solution():
    inst = random_instance(7, p=4)
    bad = PrimalDualPair(inst.xi, np.zeros((4, 4, 2)), primal_dual_gap(inst.xi, np.zeros((4, 4, 2)), inst))
    with pytest.raises(NotPrimalDualPairError):
        bregman_decomposition(inst.xi, np.zeros((4, 4, 2)), bad, inst)
    pd, _ = denoise(inst, SolverConfig(1e-12, 100000))
    with pytest.raises(ValueError):
        bregman_decomposition(inst.xi, np.full((4, 4, 2), 10.0), pd, inst)
