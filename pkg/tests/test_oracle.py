"""
精確計算測試
Tests for wmnet.oracle
"""

import numpy as np
import pytest

from wmnet.envs import Multiplexer, random_toy_env, toy_env
from wmnet.exceptions import BudgetExceededError, DimensionError, DomainError
from wmnet.network import NetShape, WeightStack, forward_sample, init_weights
from wmnet.numerics import RandomStream, sigmoid
from wmnet.oracle import (SPREAD_LIMIT, EnumBudget, cosine, enumerate_joint, exact_action_prob,
                          exact_expected_reward, exact_expected_update, exact_gradient,
                          exact_score_gradient, fit_scale, lemma1_expansion, lemma2_expansion,
                          relative_error, residual_spread, theorem1_scaling_check)
from wmnet.rules import RuleSpec, ste_backprop, wm_direct, wm_reinforce


def _random_case(sizes, seed, scale=0.5):
    rng = RandomStream(seed)
    env = random_toy_env(sizes[0], rng.derive(0))
    w = init_weights(NetShape.from_sizes(sizes), scale, rng.derive(1))
    return w, env


class TestActionProbability:

    def test_zero_weights(self):
        w = init_weights(NetShape(3, (2,)), 0.0, RandomStream(0))
        assert exact_action_prob(w, [1.0, -1.0, 1.0]) == pytest.approx(0.5, abs=1e-15)

    def test_single_layer_closed_form(self):
        w = WeightStack(NetShape(2), [np.array([[0.4], [-0.3], [0.1]])])
        x = np.array([1.0, 1.0])
        assert exact_action_prob(w, x) == pytest.approx(sigmoid(0.2), abs=1e-15)

    def test_sums_to_one(self, deep_net):
        for x in ([1.0, 1.0, -1.0], [-1.0, 1.0, 1.0]):
            total = exact_action_prob(deep_net, x, 1) + exact_action_prob(deep_net, x, -1)
            assert abs(total - 1.0) < 1e-14

    def test_joint_is_normalized(self, deep_net, table3):
        joint = enumerate_joint(deep_net, table3)
        assert abs(joint.probs.sum() - 1.0) < 1e-13
        assert joint.trace.batch_size == 8 * 2 ** 5 * 2

    def test_matches_monte_carlo(self):
        w = init_weights(NetShape(2, (2,)), 1.0, RandomStream(31))
        x = np.array([1.0, -1.0])
        exact = exact_action_prob(w, x)
        trace = forward_sample(w, np.tile(x, (1_000_000, 1)), RandomStream(32))
        assert abs(np.mean(trace.actions == 1.0) - exact) < 0.005

    def test_batch_of_states(self, small_net):
        states = np.array([[1.0, 1.0], [-1.0, 1.0]])
        probs = exact_action_prob(small_net, states)
        assert probs.shape == (2,)
        assert probs[1] == pytest.approx(exact_action_prob(small_net, states[1]), abs=1e-15)


class TestExpectedReward:

    def test_saturating_mux_policy(self):
        # k=1：位址 s0，資料 s1 / s2；想要的輸出 = s1 (s0=-1) 或 s2 (s0=+1)
        c = 20.0
        shape = NetShape(3, (2,))
        w1 = np.array([[-c, c], [c, 0.0], [0.0, c], [-c, -c]])
        w2 = np.array([[c], [c], [c]])
        w = WeightStack(shape, [w1, w2])
        assert exact_expected_reward(w, Multiplexer(1)) >= 0.999

    def test_zero_weights_on_mux(self):
        w = init_weights(NetShape(3, (2,)), 0.0, RandomStream(0))
        assert abs(exact_expected_reward(w, Multiplexer(1))) < 1e-15

    def test_budget(self):
        w = init_weights(NetShape(6, (16, 8)), 0.1, RandomStream(0))
        with pytest.raises(BudgetExceededError):
            exact_expected_reward(w, Multiplexer(2))
        w = init_weights(NetShape(6, (4,)), 0.1, RandomStream(0))
        with pytest.raises(BudgetExceededError):
            exact_expected_reward(w, Multiplexer(2), EnumBudget(max_states=32))


class TestGradient:

    def test_single_unit_at_zero(self):
        env = toy_env([{"state": [1.0], "probability": 1.0, "r_plus": 1.0, "r_minus": -1.0}])
        w = WeightStack(NetShape(1, bias=False), [np.zeros((1, 1))])
        for method in ("finite_difference", "analytic"):
            grad = exact_gradient(w, env, method=method)
            np.testing.assert_allclose(grad[0], [[0.5]], atol=1e-9)

    @pytest.mark.parametrize("sizes, seed", [((2, 2, 1), 1), ((2, 2, 1), 2), ((3, 3, 2, 1), 3)])
    def test_finite_difference_agrees(self, sizes, seed):
        w, env = _random_case(sizes, seed)
        fd = exact_gradient(w, env, method="finite_difference")
        an = exact_gradient(w, env, method="analytic")
        assert relative_error(fd, an) < 1e-6

    def test_dead_unit_has_no_gradient(self, table2):
        shape = NetShape(2, (2,))
        w = WeightStack(shape, [np.full((3, 2), 0.4), np.array([[0.0], [0.7], [0.2]])])
        grad = exact_gradient(w, table2, method="analytic")
        np.testing.assert_allclose(grad[0][:, 0], 0.0, atol=1e-15)

    @pytest.mark.parametrize("sizes, seed", [((2, 2, 1), 4), ((3, 3, 2, 1), 5)])
    def test_score_function_forms_agree(self, sizes, seed):
        w, env = _random_case(sizes, seed)
        reference = exact_score_gradient(w, env, "layer")
        for condition in ("state", "layer_input"):
            other = exact_score_gradient(w, env, condition)
            for a, b in zip(other, reference):
                np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)

    def test_unknown_condition(self, small_net, table2):
        with pytest.raises(DomainError):
            exact_score_gradient(small_net, table2, "global")


class TestExpectedUpdate:

    @pytest.mark.parametrize("seed", range(5))
    def test_global_reinforce_is_twice_gradient(self, seed):
        w, env = _random_case((2, 2, 1), 40 + seed)
        update = exact_expected_update(w, env, RuleSpec("global_reinforce"))
        grad = exact_gradient(w, env, method="analytic")
        for u, g in zip(update, grad):
            np.testing.assert_allclose(u, 2.0 * g, rtol=0, atol=1e-10)

    def test_wm_reinforce_small_norm_direction(self):
        shape = NetShape(2, (2,))
        U = init_weights(shape, 1.0, RandomStream(50))
        w = WeightStack(shape, [0.05 * W for W in U])
        env = random_toy_env(2, RandomStream(51))
        update = exact_expected_update(w, env, RuleSpec("wm_reinforce"))
        grad = exact_gradient(w, env, method="analytic")
        for u, g in zip(update, grad):
            assert cosine(u, g) > 0.99

    def test_zero_reward_env(self, small_net):
        env = toy_env([{"state": [a, b], "probability": 0.25, "r_plus": 0.0, "r_minus": 0.0}
                       for a in (-1.0, 1.0) for b in (-1.0, 1.0)])
        for kind in ("global_reinforce", "wm_reinforce", "wm_direct", "wm_classification", "ste_backprop"):
            update = exact_expected_update(small_net, env, RuleSpec(kind))
            assert all(np.max(np.abs(u)) < 1e-15 for u in update)

    def test_binary_rewards_same_expectation_for_linear_rules(self, small_net):
        rows = random_toy_env(2, RandomStream(60)).states
        table = [{"state": list(s), "probability": 0.25, "r_plus": 0.3, "r_minus": -0.6} for s in rows]
        plain = toy_env(table)
        binary = toy_env({"rows": table, "binary_rewards": True})
        a = exact_expected_update(small_net, plain, RuleSpec("wm_reinforce"))
        b = exact_expected_update(small_net, binary, RuleSpec("wm_reinforce"))
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, atol=1e-14)

    def test_regularization_included(self, small_net, table2):
        spec = RuleSpec("wm_reinforce", reg_weights=(0.0, 0.5))
        plain = exact_expected_update(small_net, table2, RuleSpec("wm_reinforce"))
        reg = exact_expected_update(small_net, table2, spec)
        np.testing.assert_allclose(reg[1], plain[1] - small_net[1], atol=1e-15)


class TestScalingCheck:

    @pytest.mark.parametrize("seed", range(5))
    def test_second_order_residual(self, seed):
        env = random_toy_env(2, RandomStream(0).derive(50, seed))
        report = theorem1_scaling_check(NetShape(2, (2,)), env, (0.2, 0.1, 0.05), seed=seed)
        assert report['bounded']
        assert 1.0 < report['spread'] < SPREAD_LIMIT
        for layer in report['layers']:
            assert layer['cosine'][-1] > 0.99
        # 輸出層就是 REINFORCE，沒有近似
        assert max(report['layers'][-1]['residual']) < 1e-12
        assert report['layers'][-1]['spread'] == 1.0

    def test_spread_is_two_sided(self):
        eps = (0.2, 0.1, 0.05)
        assert residual_spread([4.0 * e ** 2 for e in eps], eps) == pytest.approx(1.0)
        # residual ∝ ε⁴：residual/ε² 隨 ε 變小而下降 16 倍
        assert residual_spread([e ** 4 for e in eps], eps) == pytest.approx(16.0)
        # residual ∝ ε：上升 4 倍
        assert residual_spread(list(eps), eps) == pytest.approx(4.0)

    def test_spread_negligible_and_zero(self):
        eps = (0.2, 0.1)
        assert residual_spread([1e-15, 1e-16], eps) == 1.0
        assert residual_spread([1e-3, 0.0], eps) == float('inf')
        with pytest.raises(DimensionError):
            residual_spread([1.0], eps)

    @pytest.mark.parametrize("eps", [(0.1, 0.0), (0.1, 0.2), (), (0.2, -0.1)])
    def test_rejects_bad_eps(self, eps, table2):
        with pytest.raises(DomainError):
            theorem1_scaling_check(NetShape(2, (2,)), table2, eps)


class TestExpansions:

    def test_lemma1_matches_wm_reinforce(self):
        for seed in range(50):
            rng = RandomStream(seed)
            w = init_weights(NetShape(2, (2,)), 1.0, rng.derive(0))
            trace = forward_sample(w, rng.bernoulli_pm1(np.full(2, 0.5)), rng.derive(1))
            r = float(rng.uniform(-1, 1))
            wm = wm_reinforce(trace, r, w)
            expanded = lemma1_expansion(trace, r, w)
            for l, (a, b) in enumerate(zip(wm.deltas, expanded.deltas), start=1):
                np.testing.assert_allclose(a, 2.0 * 4.0 ** (len(w) - l) * b, rtol=1e-10, atol=1e-14)

    def test_lemma1_zero_upstream_weights(self):
        shape = NetShape(2, (2,))
        w = WeightStack(shape, [np.full((3, 2), 0.3), np.zeros((3, 1))])
        trace = forward_sample(w, [1.0, 1.0], RandomStream(0))
        np.testing.assert_array_equal(lemma1_expansion(trace, 1.0, w).deltas[0], 0.0)

    def test_lemma2_equals_ste(self):
        for seed in range(100):
            rng = RandomStream(seed)
            w = init_weights(NetShape(3, (4, 2)), 1.0, rng.derive(0))
            x = rng.bernoulli_pm1(np.full((3, 3), 0.5))
            trace = forward_sample(w, x, rng.derive(1))
            r = rng.uniform(-1, 1, size=3)
            ste = ste_backprop(trace, r, w)
            expanded = lemma2_expansion(trace, r, w)
            for a, b in zip(ste.deltas, expanded.deltas):
                np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_lemma2_proportional_to_wm_direct(self):
        rng = RandomStream(80)
        w = init_weights(NetShape(3, (4, 2)), 1.0, rng.derive(0))
        trace = forward_sample(w, [1.0, -1.0, 1.0], rng.derive(1))
        direct = wm_direct(trace, 0.5, w)
        expanded = lemma2_expansion(trace, 0.5, w)
        for a, b in zip(direct.deltas, expanded.deltas):
            c = fit_scale(a, b)
            assert c > 0
            np.testing.assert_allclose(a, c * b, rtol=1e-9, atol=1e-14)


class TestHelpers:

    def test_cosine_and_scale(self):
        a = [np.array([[1.0, 2.0]]), np.array([[3.0]])]
        b = [2.0 * x for x in a]
        assert cosine(a, b) == pytest.approx(1.0)
        assert fit_scale(b, a) == pytest.approx(2.0)
        assert cosine(a, [np.zeros((1, 2)), np.zeros((1, 1))]) == 0.0
        assert relative_error(a, a) == 0.0
