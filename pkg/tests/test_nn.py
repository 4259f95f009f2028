import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gradcheck import check_all_heads
from gridmend.marl.nn import Adam, CategoricalHead, GaussianHead, Mlp, ValueHead, gaussian_logp, masked_softmax


def test_equal_logits_are_uniform():
    np.testing.assert_allclose(masked_softmax(np.zeros(4)), [[0.25] * 4])


def test_dominant_logit_is_nearly_one_hot():
    p = masked_softmax([0.0, 30.0, 0.0, 0.0])[0]
    assert p[1] > 1 - 1e-12 and p.sum() == pytest.approx(1.0)


def test_mask_renormalises_survivors():
    p = masked_softmax(np.zeros(4), [True, False, True, False])[0]
    np.testing.assert_allclose(p, [0.5, 0, 0.5, 0])
    with pytest.raises(ValueError):
        masked_softmax(np.zeros(4), [False] * 4)


@given(arrays(float, 4, elements=st.floats(-50, 50)), st.floats(-1e3, 1e3))
def test_softmax_shift_invariance(logits, c):
    a = masked_softmax(logits)
    b = masked_softmax(logits + c)
    assert np.abs(a - b).max() < 1e-9
    assert a.sum() == pytest.approx(1.0, abs=1e-6)


def test_zero_weight_gaussian():
    rng = np.random.default_rng(0)
    head = GaussianHead(3, 1, rng)
    for p in head.net.params:
        p[...] = 0.0
    mu, sigma = head.params(np.ones(3))
    assert mu[0, 0] == 0.0 and sigma[0, 0] == pytest.approx(math.log(2))
    peak = gaussian_logp(mu, mu, sigma)[0]
    assert peak == pytest.approx(-math.log(sigma[0, 0] * math.sqrt(2 * math.pi)))


def test_gaussian_mean_respects_interval_and_samples_clip():
    rng = np.random.default_rng(1)
    head = GaussianHead(3, 1, rng, low=0.0, high=1.0, gain=50.0)
    for _ in range(200):
        obs = rng.normal(size=3) * 10
        mu, sigma = head.params(obs)
        assert 0.0 <= mu[0, 0] <= 1.0 and sigma[0, 0] > 0
        _, _, clipped = head.sample(rng, obs)
        assert 0.0 <= clipped[0] <= 1.0


def test_layer_widths_follow_hidden_sizes():
    rng = np.random.default_rng(0)
    net = Mlp.init((10, 128, 64, 4), rng)
    assert [p.shape for p in net.params] == [(10, 128), (128,), (128, 64), (64,), (64, 4), (4,)]
    with pytest.raises(ValueError):
        net.forward(np.zeros(9))


def test_small_output_gain_starts_near_uniform():
    head = CategoricalHead(8, 4, np.random.default_rng(0))
    p = head.probs(np.random.default_rng(1).normal(size=8))[0]
    assert np.abs(p - 0.25).max() < 0.01


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    errors = check_all_heads(seed)
    assert max(errors.values()) < 1e-4, errors


def test_adam_zero_gradient_keeps_params():
    p = np.array([1.0, -2.0])
    opt = Adam([p], lr=0.1)
    opt.step([np.zeros(2)])
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_adam_first_step_moves_by_learning_rate():
    p = np.array([0.0, 0.0])
    Adam([p], lr=1e-3).step([np.array([5.0, -0.2])])
    np.testing.assert_allclose(p, [-1e-3, 1e-3], rtol=1e-6)


def test_adam_quadratic_bowl_converges():
    target = np.array([3.0, -1.5, 0.25])
    x = np.zeros(3)
    opt = Adam([x], lr=0.05)
    for step in range(2000):
        opt.step([2 * (x - target)])
        if np.abs(x - target).max() < 1e-4:
            break
    assert np.abs(x - target).max() < 1e-4


def test_adam_rejects_shape_mismatch():
    opt = Adam([np.zeros(2)])
    with pytest.raises(ValueError):
        opt.step([np.zeros(3)])


def test_value_head_fits_constant():
    rng = np.random.default_rng(0)
    v = ValueHead(2, rng, hidden=(16,))
    opt = Adam(v.net.params, lr=1e-2)
    x = rng.normal(size=(32, 2))
    for _ in range(500):
        loss, grads = v.mse_grad(x, np.full(32, 2.0))
        opt.step(grads)
    assert loss < 1e-3
