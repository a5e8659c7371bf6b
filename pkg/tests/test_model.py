import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import central_difference
from transfer_lmr import lmr
from transfer_lmr.core import one_hot, rng_stream
from transfer_lmr.model import (ClassifierParams, OptimizerState, backward, ce_loss, checkpoint_bytes,
                                forward, init_params, load_checkpoint, loss_and_grads,
                                parse_checkpoint, save_checkpoint, sgd_step, soft_ce_loss)


def linear(W, b):
    return ClassifierParams("linear", {"W": np.asarray(W, float), "b": np.asarray(b, float)})


def test_forward_zero_and_identity():
    x = np.random.default_rng(0).standard_normal((4, 3))
    assert np.all(forward(linear(np.zeros((3, 3)), np.zeros(3)), x) == 0)
    assert np.array_equal(forward(linear(np.eye(3), np.zeros(3)), x), x)


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(1)
    p = init_params("linear", 5, 3, rng_stream(0, "init"))
    x = rng.standard_normal((4, 5))
    W, b = p.tensors["W"], p.tensors["b"]
    expected = [[sum(x[i, d] * W[d, j] for d in range(5)) + b[j] for j in range(3)] for i in range(4)]
    assert np.allclose(forward(p, x), expected, atol=1e-6)


def test_forward_mlp_loop_oracle():
    p = init_params("mlp", 3, 2, rng_stream(0, "init"), hidden=4)
    x = np.random.default_rng(2).standard_normal((2, 5, 3))
    t = p.tensors
    out = np.zeros((2, 2))
    for i in range(2):
        h = np.zeros(4)
        for s in range(5):
            h += np.array([math.tanh(sum(x[i, s, d] * t["W1"][d, k] for d in range(3)) + t["b1"][k])
                           for k in range(4)]) / 5
        out[i] = [sum(h[k] * t["W"][k, j] for k in range(4)) + t["b"][j] for j in range(2)]
    assert np.allclose(forward(p, x), out, atol=1e-6)


def test_forward_shape_mismatch():
    p = init_params("linear", 5, 3, rng_stream(0, "init"))
    with pytest.raises(ValueError):
        forward(p, np.zeros((2, 4)))


@pytest.mark.parametrize("C", [2, 5, 11])
def test_ce_uniform_logits(C):
    assert ce_loss(np.zeros((3, C)), [0, 1, C - 1]) == pytest.approx(math.log(C))


def test_ce_limit_and_brute_force():
    assert ce_loss(np.array([[50.0, 0.0, 0.0]]), [0]) < 1e-20
    logits = np.array([[0.2, -1.0, 3.0], [1.5, 0.5, -0.5]])
    labels = [2, 1]
    brute = 0.0
    for row, y in zip(logits, labels):
        z = sum(math.exp(v) for v in row)
        brute += -math.log(math.exp(row[y]) / z)
    assert ce_loss(logits, labels) == pytest.approx(brute / 2, abs=1e-7)


def test_soft_ce_examples():
    logits = np.random.default_rng(0).standard_normal((4, 3))
    y = np.array([0, 2, 1, 1])
    assert soft_ce_loss(logits, one_hot(y, 3)) == pytest.approx(ce_loss(logits, y), abs=1e-7)
    assert soft_ce_loss(np.zeros((1, 2)), [[0.5, 0.5]]) == pytest.approx(math.log(2))
    assert soft_ce_loss(np.zeros((1, 2)), [[0.75, 0.25]]) == pytest.approx(math.log(2))


@given(arrays(np.float64, (3, 4), elements=st.floats(-30, 30)),
       st.lists(st.integers(0, 3), min_size=3, max_size=3))
def test_soft_equals_hard_property(logits, labels):
    assert soft_ce_loss(logits, one_hot(labels, 4)) == pytest.approx(ce_loss(logits, labels), abs=1e-7)
    assert ce_loss(logits, labels) >= 0


@given(st.integers(2, 6), st.integers(0, 2**16))
def test_uniform_prediction_loss_is_log_c(C, seed):
    rng = np.random.default_rng(seed)
    targets = rng.dirichlet(np.ones(C), size=3)
    assert soft_ce_loss(np.full((3, C), 1.7), targets) == pytest.approx(math.log(C))


def _rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8))


def grad_check(arch, seed, refine=False):
    rng = np.random.default_rng(seed)
    D, C = int(rng.integers(1, 17)), int(rng.integers(2, 6))
    B, T = int(rng.integers(2, 7)), int(rng.integers(1, 4))
    p = init_params(arch, D, C, rng_stream(seed, "init"), hidden=int(rng.integers(1, 9)))
    x = rng.standard_normal((B, T, D))
    targets = rng.dirichlet(np.ones(C), size=B)
    refiner = None
    if refine:
        labels = rng.integers(0, C, size=B)
        table = lmr.contribution(rng.integers(1, 100, size=C), 0.4, 1.0)
        perm, coins, lam = rng.permutation(B), rng.random(B) < 0.5, rng.uniform(0.5, 1, B)

        def refiner(Z):
            out, tr = lmr.lmr_forward(Z, labels, table, 0.5, None, perm=perm, coins=coins, lam=lam)
            return out.M_star, out.Y_star, lambda g: lmr.lmr_backward(tr, g)

    _, grads = loss_and_grads(p, x, targets, refiner=refiner)
    worst = 0.0
    for name in p.names:
        num = central_difference(lambda: loss_and_grads(p, x, targets, refiner=refiner)[0],
                                 p.tensors[name], h=1e-4)
        worst = max(worst, _rel_err(grads[name], num))
    return worst


@pytest.mark.parametrize("arch", ["linear", "mlp"])
def test_gradients_finite_differences(arch):
    for seed in range(10):
        assert grad_check(arch, seed) <= 1e-4


def test_gradients_through_refinement():
    for seed in range(10):
        assert grad_check("mlp", seed, refine=True) <= 1e-4


def test_zero_gradient_at_stationary_point():
    p = linear(np.zeros((2, 3)), np.log([0.2, 0.3, 0.5]))
    g = backward(p, np.ones((2, 2)), np.tile([0.2, 0.3, 0.5], (2, 1)))
    assert np.allclose(g["W"], 0, atol=1e-15) and np.allclose(g["b"], 0, atol=1e-15)


def test_duplicated_batch_gradient():
    p = init_params("mlp", 4, 3, rng_stream(1, "init"), hidden=5)
    x = np.random.default_rng(0).standard_normal((1, 3, 4))
    y = one_hot([2], 3)
    g1 = backward(p, x, y)
    g4 = backward(p, np.repeat(x, 4, axis=0), np.repeat(y, 4, axis=0))
    for k in p.names:
        assert np.allclose(g1[k], g4[k], atol=1e-14)


def test_sgd_step_cases():
    p = linear([[1.0]], [2.0])
    g = {"W": np.array([[0.5]]), "b": np.array([1.0])}
    same, _ = sgd_step(p, g, OptimizerState(lr=0.0))
    assert same == p
    plain, st_ = sgd_step(p, g, OptimizerState(lr=0.1, momentum=0.0))
    assert plain.tensors["W"][0, 0] == pytest.approx(0.95) and st_.step == 1


def test_sgd_quadratic_recurrence():
    # f(w) = 0.5 * a * w^2 -> g = a * w
    a, lr, mu = 3.0, 0.1, 0.9
    p = linear([[2.0]], [0.0])
    state = OptimizerState(lr=lr, momentum=mu)
    w, v = 2.0, 0.0
    for _ in range(2):
        g = a * p.tensors["W"][0, 0]
        p, state = sgd_step(p, {"W": np.array([[g]]), "b": np.array([0.0])}, state)
        v = mu * v + a * w
        w = w - lr * v
    assert p.tensors["W"][0, 0] == pytest.approx(w, abs=1e-10)
    assert state.step == 2


def test_convergence_separable_two_class():
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.normal(-2, 0.5, (50, 1, 2)), rng.normal(2, 0.5, (50, 1, 2))])
    y = one_hot(np.repeat([0, 1], 50), 2)
    p = init_params("linear", 2, 2, rng_stream(0, "init"))
    state = OptimizerState(lr=0.1)
    for _ in range(500):
        loss, g = loss_and_grads(p, x, y)
        p, state = sgd_step(p, g, state)
    assert loss_and_grads(p, x, y)[0] < 0.1


def test_init_bounds():
    p = init_params("mlp", 16, 3, rng_stream(0, "init"), hidden=8)
    assert np.abs(p.tensors["W1"]).max() <= 1 / 4
    assert np.abs(p.tensors["W"]).max() <= 1 / math.sqrt(8)
    with pytest.raises(ValueError):
        init_params("resnet", 2, 2, rng_stream(0, "init"))


@pytest.mark.parametrize("arch", ["linear", "mlp"])
def test_checkpoint_roundtrip(tmp_path, arch):
    p = init_params(arch, 6, 4, rng_stream(3, "init"), hidden=5)
    save_checkpoint(p, tmp_path / "m.ckpt")
    q = load_checkpoint(tmp_path / "m.ckpt")
    assert q.arch == arch and q.names == p.names
    for k in p.names:
        assert np.array_equal(q.tensors[k], p.tensors[k].astype(np.float32))
    assert checkpoint_bytes(q) == checkpoint_bytes(p)
    buf = (tmp_path / "m.ckpt").read_bytes()
    assert buf[:4] == b"TLMC"
    with pytest.raises(ValueError):
        parse_checkpoint(buf[:-1])
