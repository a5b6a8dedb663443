import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hpgcg.tv import div, grad, norm_1_2, norm_inf_2, tv
from oracles import brute_tv, power_iteration_gradnorm_sq, stencil_grad

SQ = np.array([[0.0, 1.0], [2.0, 3.0]])


def test_grad_constant_is_zero():
    assert np.array_equal(grad(np.full((5, 5), 0.3)), np.zeros((5, 5, 2)))


def test_grad_2x2_hand_values():
    g = grad(SQ)
    expected = {(0, 0): (1, 2), (0, 1): (0, 2), (1, 0): (1, 0), (1, 1): (0, 0)}
    for (i, j), pair in expected.items():
        assert tuple(g[i, j]) == pair
    assert np.array_equal(g, stencil_grad(SQ))


def test_grad_ramp():
    u = np.tile(np.arange(3.0), (3, 1))
    g = grad(u)
    assert np.array_equal(g[:, :2, 0], np.ones((3, 2)))
    assert np.array_equal(g[:, 2, 0], np.zeros(3))
    assert np.array_equal(g[..., 1], np.zeros((3, 3)))


@pytest.mark.parametrize("p", [1, 2, 5, 9])
def test_grad_matches_stencil_enumeration(p):
    u = np.random.default_rng(p).standard_normal((p, p))
    assert np.array_equal(grad(u), stencil_grad(u))


def test_grad_batched():
    u = np.random.default_rng(0).standard_normal((3, 4, 4))
    g = grad(u)
    for i in range(3):
        assert np.array_equal(g[i], grad(u[i]))
    assert np.allclose(div(g)[1], div(g[1]))


def test_div_zero():
    assert np.array_equal(div(np.zeros((4, 4, 2))), np.zeros((4, 4)))


def test_div_single_x_component():
    v = np.zeros((2, 2, 2))
    v[0, 0, 0] = 1.0
    # negative adjoint of grad: +1 where the difference is subtracted from, -1 at its neighbour
    assert np.array_equal(div(v), np.array([[1.0, -1.0], [0.0, 0.0]]))
    u = np.random.default_rng(1).standard_normal((2, 2))
    assert np.vdot(grad(u), v) == pytest.approx(-np.vdot(u, div(v)), abs=1e-15)


@pytest.mark.parametrize("p", [2, 3, 4, 8, 16])
def test_adjointness(p):
    rng = np.random.default_rng(p)
    for _ in range(50):
        u = rng.standard_normal((p, p))
        v = rng.standard_normal((p, p, 2))
        lhs = np.vdot(grad(u), v)
        assert abs(lhs + np.vdot(u, div(v))) <= 1e-12 * (1 + abs(lhs))


def test_operator_norm_bound():
    rng = np.random.default_rng(3)
    for p in (2, 3, 8, 16):
        for _ in range(10):
            u = rng.standard_normal((p, p))
            u /= np.linalg.norm(u)
            assert np.linalg.norm(div(grad(u))) <= 8.0
        lam = power_iteration_gradnorm_sq(grad, div, p)
        assert 0 < lam <= 8.0


def test_norms_examples():
    g = grad(SQ)
    assert norm_1_2(np.zeros((3, 3, 2))) == 0
    assert norm_1_2(g) == pytest.approx(3 + math.sqrt(5), abs=1e-15)
    single = np.zeros((2, 2, 2))
    single[1, 0] = (3, 4)
    assert norm_1_2(single) == 5
    assert norm_inf_2(np.zeros((3, 3, 2))) == 0
    assert norm_inf_2(g) == pytest.approx(math.sqrt(5), abs=1e-15)
    unit = np.zeros((3, 3, 2))
    unit[2, 1] = (0.6, 0.8)
    assert norm_inf_2(unit) == pytest.approx(1.0, abs=1e-15)


def test_tv_examples():
    assert tv(np.full((4, 4), 2.0)) == 0
    assert tv(np.array([[0.0, 1.0], [0.0, 1.0]])) == 2
    assert tv(SQ) == pytest.approx(3 + math.sqrt(5), abs=1e-15)
    u = np.random.default_rng(0).random((6, 6))
    assert tv(u) == pytest.approx(brute_tv(u), rel=1e-14)


fields = arrays(np.float64, (4, 4, 2), elements=st.floats(-10, 10))


@settings(max_examples=50, deadline=None)
@given(fields)
def test_norm_duality(v):
    n = np.sqrt((v ** 2).sum(-1))
    w = np.divide(v, n[..., None], out=np.zeros_like(v), where=n[..., None] > 0)
    assert norm_inf_2(w) <= 1 + 1e-15
    assert np.vdot(v, w) == pytest.approx(norm_1_2(v), rel=1e-12, abs=1e-12)
    # any other field in the unit ball does no better
    z = np.random.default_rng(0).standard_normal(v.shape)
    z /= np.maximum(1.0, np.sqrt((z ** 2).sum(-1)))[..., None]
    assert np.vdot(v, z) <= norm_1_2(v) + 1e-9


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-5, 5)), st.floats(-4, 4))
def test_tv_positive_homogeneity(u, t):
    assert tv(t * u) == pytest.approx(abs(t) * tv(u), rel=1e-12, abs=1e-10)
