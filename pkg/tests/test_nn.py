import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invpomdp import nn


def _zero_net(sizes, output="linear", out_scale=1.0, out_shift=0.0):
    ws = [np.zeros((i, o)) for i, o in zip(sizes[:-1], sizes[1:])]
    bs = [np.zeros(o) for o in sizes[1:]]
    acts = ["relu"] * (len(sizes) - 2) + [output]
    return nn.Mlp(ws, bs, acts, out_scale, out_shift)


def test_zero_weights():
    critic = _zero_net([5, 4, 4, 1])
    assert np.all(nn.forward(critic, np.ones((3, 5))) == 0)
    actor = _zero_net([4, 4, 4, 1], "scaled_sigmoid", out_scale=12.0)
    assert np.all(nn.forward(actor, np.ones((3, 4))) == 6.0)


def test_one_unit_by_hand():
    net = nn.Mlp([np.array([[2.0]]), np.array([[-3.0]])], [np.array([-1.0]), np.array([0.5])],
                 ["relu", "scaled_sigmoid"], out_scale=4.0, out_shift=-1.0)
    # x = 1.5: relu(2*1.5 - 1) = 2, -3*2 + 0.5 = -5.5
    expect = -1.0 + 4.0 / (1.0 + math.exp(5.5))
    assert nn.forward(net, np.array([1.5]))[0] == pytest.approx(expect, rel=1e-15)
    # x = 0: hidden unit off, output = -1 + 4 * logistic(0.5)
    assert nn.forward(net, np.array([0.0]))[0] == pytest.approx(-1 + 4 / (1 + math.exp(-0.5)))


def test_single_vector_and_batch_agree(rng):
    net = nn.init_mlp([3, 7, 7, 1], rng)
    x = rng.normal(size=(4, 3))
    batch = nn.forward(net, x)
    for k in range(4):
        assert np.array_equal(nn.forward(net, x[k]), batch[k])


@pytest.mark.parametrize("sizes,output", [([10, 11, 11, 1], "linear"),
                                          ([2, 3, 3, 1], "scaled_sigmoid"),
                                          ([11, 10, 10, 1], "scaled_sigmoid")])
def test_gradients_match_finite_differences(rng, sizes, output):
    net = nn.init_mlp(sizes, rng, hidden="tanh", output=output, out_scale=15.0, out_shift=-3.0)
    x = rng.normal(size=(5, sizes[0]))
    gout = rng.normal(size=(5, 1))

    def loss(n, xx):
        return float(np.sum(nn.forward(n, xx) * gout))

    grads, g_in = nn.grad(net, x, gout)
    h = 1e-5
    for p, g in zip(net.params(), grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss(net, x)
            p[idx] = old - h
            dn = loss(net, x)
            p[idx] = old
            fd = (up - dn) / (2 * h)
            assert abs(fd - g[idx]) <= 1e-4 * max(1.0, abs(fd))
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fd = (loss(net, xp) - loss(net, xm)) / (2 * h)
        assert abs(fd - g_in[idx]) <= 1e-4 * max(1.0, abs(fd))


def test_relu_gradient_spot_check(rng):
    net = nn.init_mlp([4, 6, 6, 1], rng)
    x = rng.normal(size=(3, 4))
    gout = np.ones((3, 1))
    grads, _ = nn.grad(net, x, gout)
    p, h = net.weights[0], 1e-6
    old = p[1, 2]
    p[1, 2] = old + h
    up = nn.forward(net, x).sum()
    p[1, 2] = old - h
    dn = nn.forward(net, x).sum()
    p[1, 2] = old
    assert grads[0][1, 2] == pytest.approx((up - dn) / (2 * h), rel=1e-5, abs=1e-9)


def test_mean_loss_gradient_is_mean_of_per_sample(rng):
    net = nn.init_mlp([3, 5, 5, 1], rng)
    x = rng.normal(size=(6, 3))
    gb, _ = nn.grad(net, x, np.full((6, 1), 1 / 6))
    per = [nn.grad(net, x[k:k + 1], np.ones((1, 1)))[0] for k in range(6)]
    for j, g in enumerate(gb):
        assert np.allclose(g, sum(p[j] for p in per) / 6, rtol=0, atol=1e-13)


def test_adam_zero_gradient_leaves_params():
    p = [np.array([0.3, -2.0])]
    st_ = nn.AdamState(lr=0.1)
    for _ in range(5):
        nn.adam_step(p, [np.zeros(2)], st_)
    assert np.array_equal(p[0], [0.3, -2.0])


def test_adam_first_step_moves_by_lr():
    p = [np.zeros(1)]
    nn.adam_step(p, [np.ones(1)], nn.AdamState(lr=1e-3, beta1=0.999, beta2=0.999))
    assert p[0][0] == pytest.approx(-1e-3, rel=1e-6)


def test_adam_moves_downhill_monotonically():
    p = [np.zeros(1)]
    st_ = nn.AdamState(lr=1e-2)
    prev = 0.0
    for _ in range(50):
        nn.adam_step(p, [np.ones(1)], st_)
        assert p[0][0] < prev
        prev = p[0][0]


def test_adam_minimises_quadratic():
    p = [np.array([5.0, -3.0])]
    st_ = nn.AdamState(lr=0.05)
    for _ in range(2000):
        nn.adam_step(p, [2 * p[0]], st_)
    assert np.all(np.abs(p[0]) < 1e-2)


def test_soft_update_cases(rng):
    a = nn.init_mlp([3, 4, 1], rng)
    b = nn.init_mlp([3, 4, 1], rng)
    t = a.copy()
    nn.soft_update(t, b, 0.0)
    assert all(np.array_equal(x, y) for x, y in zip(t.params(), a.params()))
    nn.soft_update(t, b, 1.0)
    assert all(np.array_equal(x, y) for x, y in zip(t.params(), b.params()))
    t = a.copy()
    nn.soft_update(t, b, 0.25)
    assert all(np.allclose(x, 0.75 * y + 0.25 * z) for x, y, z in zip(t.params(), a.params(), b.params()))


def test_copy_is_deep(rng):
    a = nn.init_mlp([2, 3, 1], rng)
    c = a.copy()
    c.weights[0][0, 0] += 1
    assert c.weights[0][0, 0] != a.weights[0][0, 0]


def test_save_load_bit_exact(tmp_path, rng):
    net = nn.init_mlp([5, 8, 8, 1], rng, output="scaled_sigmoid", out_scale=15.0, out_shift=-3.0)
    p = tmp_path / "net.json"
    nn.save(net, p)
    back = nn.load(p)
    assert back.out_scale == 15.0 and back.out_shift == -3.0
    assert back.activations == net.activations
    assert all(np.array_equal(x, y) for x, y in zip(back.params(), net.params()))
    x = rng.normal(size=(10, 5))
    assert np.array_equal(nn.forward(back, x), nn.forward(net, x))


def test_load_rejects_foreign_files():
    with pytest.raises(ValueError):
        nn.from_dict({"format": "other"})
    with pytest.raises(ValueError):
        nn.from_dict({"format": nn.FORMAT, "version": 99})


def test_bad_shapes_rejected():
    with pytest.raises(ValueError):
        nn.Mlp([np.zeros((2, 3)), np.zeros((4, 1))], [np.zeros(3), np.zeros(1)], ["relu", "linear"])
    with pytest.raises(ValueError):
        nn.Mlp([np.zeros((2, 1))], [np.zeros(1)], ["softmax"])


def test_init_bounds(rng):
    net = nn.init_mlp([16, 9, 1], rng)
    assert np.all(np.abs(net.weights[0]) <= 0.25)
    assert np.all(np.abs(net.weights[1]) <= 1 / 3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), st.integers(0, 2**31))
def test_actor_output_in_range(x, seed):
    net = nn.init_mlp([3, 6, 6, 1], np.random.default_rng(seed), output="scaled_sigmoid",
                      out_scale=15.0, out_shift=-3.0)
    y = nn.forward(net, np.array(x))[0]
    assert -3.0 <= y <= 12.0
