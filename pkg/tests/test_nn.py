import math

import numpy as np
import pytest

from actgap.nn import (Mlp, OptimizerState, adam_step, backward, clip_grad_norm, clone_parameters,
                       forward, from_bytes, mlp_init, parameter_count, predict, to_bytes)


def _net(weights, biases):
    return Mlp.from_blocks([np.array(w, dtype=float) for w in weights],
                           [np.array(b, dtype=float) for b in biases])


def test_init_deterministic_and_bounded():
    a = mlp_init([4, 64, 64, 2], seed=5)
    b = mlp_init([4, 64, 64, 2], seed=5)
    assert np.array_equal(a.flat, b.flat)
    assert all(not bias.any() for bias in a.biases)
    bound = math.sqrt(6 / 68)
    assert bound == pytest.approx(0.297, abs=5e-4)
    for seed in range(20):
        w = mlp_init([4, 64, 64, 2], seed).weights[0]
        assert np.abs(w).max() <= bound
    assert not np.array_equal(a.flat, mlp_init([4, 64, 64, 2], seed=6).flat)


def test_init_float32_matches_float64_draws():
    a = mlp_init([3, 8, 2], 1, dtype=np.float64)
    b = mlp_init([3, 8, 2], 1, dtype=np.float32)
    assert b.flat.dtype == np.float32
    assert np.array_equal(a.flat.astype(np.float32), b.flat)


def test_init_rejects_bad_dims():
    with pytest.raises(ValueError):
        mlp_init([4], 0)
    with pytest.raises(ValueError):
        mlp_init([4, 0, 2], 0)


def test_zero_network_outputs_zero():
    net = Mlp([3, 5, 2], np.zeros(parameter_count([3, 5, 2])))
    assert not predict(net, [1.0, -2.0, 3.0]).any()


def test_affine_single_layer():
    net = _net([[[2.0]]], [[1.0]])
    assert predict(net, [3.0]).tolist() == [7.0]


def test_rectifier_clamps():
    net = _net([[[-1.0]], [[4.0]]], [[0.0], [0.25]])
    assert predict(net, [2.0]).tolist() == [0.25]


def test_forward_batch_matches_single():
    net = mlp_init([3, 7, 4], 2)
    x = np.random.default_rng(0).normal(size=(5, 3))
    batch = predict(net, x)
    for i in range(5):
        assert np.allclose(predict(net, x[i]), batch[i], rtol=0, atol=1e-15)


def test_forward_shape_error():
    with pytest.raises(ValueError):
        forward(mlp_init([3, 2], 0), [1.0, 2.0])


def test_backward_zero_output_gradient():
    net = mlp_init([3, 6, 2], 0)
    out, cache = forward(net, np.ones((4, 3)))
    assert not backward(net, cache, np.zeros_like(out)).any()


def test_linear_squared_error_derivative():
    for w in (-1.5, 0.0, 0.7, 3.0):
        net = _net([[[w]]], [[0.0]])
        out, cache = forward(net, [1.0])
        # L = (w*1 - 0)^2
        grad = backward(net, cache, 2.0 * out)
        assert grad[0] == pytest.approx(2 * w, abs=1e-15)
        assert grad[1] == pytest.approx(2 * w, abs=1e-15)


def _finite_difference(net, x, g, step=1e-5):
    base = net.flat.copy()
    out = np.empty_like(base)
    for i in range(base.size):
        net.flat[i] = base[i] + step
        up = np.sum(predict(net, x) * g)
        net.flat[i] = base[i] - step
        down = np.sum(predict(net, x) * g)
        net.flat[i] = base[i]
        out[i] = (up - down) / (2 * step)
    return out


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(7)
    for trial in range(10):
        dims = [int(rng.integers(1, 5))] + [int(rng.integers(2, 7)) for _ in range(
            int(rng.integers(1, 4)))] + [int(rng.integers(1, 4))]
        net = mlp_init(dims, trial)
        net.flat[...] += rng.normal(scale=0.1, size=net.flat.size)
        x = rng.normal(size=(3, dims[0]))
        g = rng.normal(size=(3, dims[-1]))
        _, cache = forward(net, x)
        analytic = backward(net, cache, g)
        numeric = _finite_difference(net, x, g)
        rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
        assert rel.max() < 1e-4


def _reference_adam(p, g, m, v, t, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    mhat = m / (1 - b1 ** t)
    vhat = v / (1 - b2 ** t)
    return p - lr * mhat / (np.sqrt(vhat) + eps), m, v


def test_adam_zero_gradient_keeps_params():
    net = mlp_init([2, 3, 1], 0)
    state = OptimizerState.for_mlp(net)
    new, state2 = adam_step(net.flat, np.zeros_like(net.flat), state)
    assert np.array_equal(new, net.flat) and state2.step == 1


def test_adam_first_step_moves_by_lr():
    p = np.array([0.5])
    state = OptimizerState(np.zeros(1), np.zeros(1), learning_rate=0.1)
    new, _ = adam_step(p, np.array([1.0]), state)
    assert new[0] - 0.5 == pytest.approx(-0.1, rel=1e-6)


def test_adam_matches_reference_over_many_steps():
    rng = np.random.default_rng(3)
    p = rng.normal(size=50)
    state = OptimizerState(np.zeros(50), np.zeros(50), learning_rate=0.01)
    rp, rm, rv = p.copy(), np.zeros(50), np.zeros(50)
    for t in range(1, 200):
        g = rng.normal(size=50)
        p, state = adam_step(p, g, state)
        rp, rm, rv = _reference_adam(rp, g, rm, rv, t, lr=0.01)
    assert np.allclose(p, rp, rtol=1e-12, atol=1e-12)
    assert state.step == 199


def test_adam_is_pure():
    rng = np.random.default_rng(0)
    p, g = rng.normal(size=10), rng.normal(size=10)
    state = OptimizerState(rng.normal(size=10) ** 2, rng.normal(size=10) ** 2, step=4)
    snapshot = (p.copy(), g.copy(), state.m.copy(), state.v.copy())
    a = adam_step(p, g, state)
    b = adam_step(p, g, state)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1].m, b[1].m)
    for before, after in zip(snapshot, (p, g, state.m, state.v)):
        assert np.array_equal(before, after)
    assert state.step == 4


def test_adam_names_block_with_bad_gradient():
    net = mlp_init([2, 3, 1], 0)
    state = OptimizerState.for_mlp(net)
    g = np.zeros_like(net.flat)
    g[-1] = np.nan
    with pytest.raises(FloatingPointError, match="layer1.bias"):
        adam_step(net.flat, g, state)


def test_adam_float32_flushes_tiny_moments():
    p = np.ones(4, dtype=np.float32)
    state = OptimizerState(np.full(4, 1e-36, np.float32), np.full(4, 1e-36, np.float32), step=10)
    _, s = adam_step(p, np.zeros(4, np.float32), state)
    assert not s.m.any() and not s.v.any()


def test_clip_grad_norm():
    g, norm = clip_grad_norm(np.array([3.0, 4.0]), 1.0)
    assert norm == 5.0 and np.allclose(g, [0.6, 0.8])
    g2, _ = clip_grad_norm(np.array([0.3, 0.4]), 1.0)
    assert g2.tolist() == [0.3, 0.4]


def test_clone_is_independent():
    src = mlp_init([3, 4, 2], 1)
    dup = clone_parameters(src)
    x = np.random.default_rng(0).normal(size=(6, 3))
    assert np.array_equal(predict(src, x), predict(dup, x))
    expected = predict(dup, x)
    src.flat[...] += 1.0
    assert np.array_equal(predict(dup, x), expected)
    assert np.array_equal(clone_parameters(clone_parameters(dup)).flat, dup.flat)


def test_views_share_the_flat_buffer():
    net = mlp_init([2, 3, 1], 0)
    net.flat[0] = 42.0
    assert net.weights[0][0, 0] == 42.0


def test_bytes_roundtrip():
    net = mlp_init([4, 5, 3], 9)
    blob = to_bytes(net)
    assert blob[:4] == b"AGNN"
    back = from_bytes(blob)
    assert back.layer_dims == net.layer_dims and np.array_equal(back.flat, net.flat)
    with pytest.raises(ValueError):
        from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        from_bytes(blob[:-8])
