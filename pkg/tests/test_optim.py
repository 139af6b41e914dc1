"""
優化器測試
Tests for wmnet.optim
"""

import numpy as np
import pytest

from wmnet.exceptions import ConfigError, DimensionError
from wmnet.network import NetShape, WeightStack, init_weights
from wmnet.numerics import RandomStream
from wmnet.optim import AdamState, Optimizer, OptimizerSpec, adam_step, init_adam, sgd_step
from wmnet.rules import UpdateStack, apply_regularization


@pytest.fixture
def weights():
    return init_weights(NetShape(3, (4,)), 0.5, RandomStream(21))


def _like(w, value):
    return [np.full_like(W, value) for W in w]


class TestSgd:

    def test_zero_rate_is_identity(self, weights):
        out = sgd_step(weights, _like(weights, 3.0), 0.0)
        for a, b in zip(out, weights):
            np.testing.assert_array_equal(a, b)

    def test_unit_rate_negated_weights(self, weights):
        out = sgd_step(weights, [-W for W in weights], 1.0)
        assert all(not np.any(W) for W in out)

    def test_linearity(self, weights):
        rng = RandomStream(1)
        u1 = [rng.uniform(-1, 1, size=W.shape) for W in weights]
        u2 = [rng.uniform(-1, 1, size=W.shape) for W in weights]
        two = sgd_step(sgd_step(weights, u1, 0.1), u2, 0.1)
        one = sgd_step(weights, [a + b for a, b in zip(u1, u2)], 0.1)
        for a, b in zip(two, one):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_shape_mismatch(self, weights):
        with pytest.raises(DimensionError):
            sgd_step(weights, [np.zeros((2, 2)), np.zeros((5, 1))], 0.1)

    def test_weight_decay_closed_form(self, weights):
        w = weights
        zero = UpdateStack(_like(w, 0.0))
        for _ in range(3):
            w = sgd_step(w, apply_regularization(zero, w, (0.5, 0.5)), 0.1)
        for a, b in zip(w, weights):
            np.testing.assert_allclose(a, 0.9 ** 3 * b, rtol=1e-12)


class TestAdam:

    def test_first_step_is_signed_rate(self, weights):
        state = init_adam(weights, lr=0.01)
        g = [np.where(np.arange(W.size).reshape(W.shape) % 2, 0.3, -2.0) for W in weights]
        out, state = adam_step(state, weights, g)
        for new, old, grad in zip(out, weights, g):
            np.testing.assert_allclose(new - old, 0.01 * np.sign(grad), rtol=1e-6)
        assert state.t == 1

    def test_zero_updates_keep_weights(self, weights):
        state = init_adam(weights)
        w = weights
        for _ in range(5):
            w, state = adam_step(state, w, _like(weights, 0.0))
        for a, b in zip(w, weights):
            np.testing.assert_array_equal(a, b)

    def test_step_bound(self, weights):
        rng = RandomStream(5)
        lr = 0.01
        state = init_adam(weights, lr=lr)
        w = weights
        bound = lr * (1 - 0.9) / np.sqrt(1 - 0.999)
        for _ in range(200):
            g = [rng.uniform(-3, 3, size=W.shape) for W in weights]
            new, state = adam_step(state, w, g)
            for a, b in zip(new, w):
                assert np.max(np.abs(a - b)) <= bound * (1 + 1e-9)
                assert np.all(np.isfinite(a))
            w = new
        assert all(np.all(v >= 0) for v in state.v)

    def test_state_shape_checked(self, weights):
        other = init_adam(init_weights(NetShape(2, (4,)), 0.1, RandomStream(0)))
        with pytest.raises(DimensionError):
            adam_step(other, weights, _like(weights, 1.0))

    def test_state_round_trip(self, weights):
        state = init_adam(weights)
        _, state = adam_step(state, weights, _like(weights, 0.7))
        restored = AdamState.from_dict(state.to_dict())
        assert restored.t == state.t
        for a, b in zip(restored.v, state.v):
            np.testing.assert_array_equal(a, b)


class TestOptimizer:

    def test_full_scale_settings(self):
        spec = OptimizerSpec.from_dict({"kind": "adam", "lr": 0.01, "beta1": 0.9, "beta2": 0.999})
        assert spec.eps == 1e-8

    def test_invalid_spec(self):
        with pytest.raises(ConfigError):
            OptimizerSpec("rmsprop")
        with pytest.raises(ConfigError):
            OptimizerSpec(lr=0.0)
        with pytest.raises(ConfigError):
            OptimizerSpec.from_dict({"momentum": 0.9})

    def test_resume_state(self, weights):
        spec = OptimizerSpec()
        a = Optimizer(spec, weights)
        w_a = a.step(weights, _like(weights, 0.5))
        b = Optimizer(spec, weights)
        b.load_state_dict(a.state_dict())
        g = _like(weights, -0.2)
        for x, y in zip(a.step(w_a, g), b.step(w_a, g)):
            np.testing.assert_array_equal(x, y)

    def test_sgd_kind(self, weights):
        opt = Optimizer(OptimizerSpec("sgd", lr=0.5), weights)
        out = opt.step(weights, _like(weights, 1.0))
        for a, b in zip(out, weights):
            np.testing.assert_allclose(a, b + 0.5)
        assert opt.state_dict().get('adam') is None
