#!/usr/bin/env python3
"""
精確計算模組 - 窮舉
Exact oracle: enumerates (state, hidden configuration, action) to get true
action probabilities, expected reward, gradients and expected rule updates

只適用小網路 / 小環境；超過 EnumBudget 會直接拒絕。
機率在 log 空間累加，每一項再取 exp。
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .envs import RewardOutcomes, SingleStepEnv
from .exceptions import BudgetExceededError, DimensionError, DomainError
from .network import (ForwardTrace, NetShape, WeightStack, init_weights, layer_log_prob,
                      trace_from_activations)
from .numerics import RandomStream, as_mat, sigmoid
from .rules import RuleSpec, UpdateStack, apply_regularization, compute_updates

logger = logging.getLogger(__name__)

Gradient = List[np.ndarray]
SCORE_CONDITIONS = ("state", "layer_input", "layer")
# residual(ε)/ε² 在整個 ε 列表上的最大/最小比值上限
SPREAD_LIMIT = 4.0


@dataclass(frozen=True)
class EnumBudget:
    """窮舉上限"""
    max_total_hidden_bits: int = 16
    max_states: int = 4096
    max_joint: int = 2 ** 22

    def check(self, shape: NetShape, num_states: int) -> None:
        if shape.hidden_bits > self.max_total_hidden_bits:
            raise BudgetExceededError(
                f"隱藏位元 {shape.hidden_bits} 超過上限 {self.max_total_hidden_bits}")
        if num_states > self.max_states:
            raise BudgetExceededError(f"狀態數 {num_states} 超過上限 {self.max_states}")
        joint = num_states * 2 ** shape.hidden_bits * 2
        if joint > self.max_joint:
            raise BudgetExceededError(f"聯合組合數 {joint} 超過上限 {self.max_joint}")

    @classmethod
    def from_dict(cls, d: Dict) -> "EnumBudget":
        return cls(max_total_hidden_bits=int(d.get('max_total_hidden_bits', 16)),
                   max_states=int(d.get('max_states', 4096)),
                   max_joint=int(d.get('max_joint', 2 ** 22)))


DEFAULT_BUDGET = EnumBudget()


@dataclass
class Joint:
    """窮舉結果：每列一組 (x, h¹…h^{L-1}, a)，probs 是聯合機率"""
    trace: ForwardTrace
    probs: np.ndarray
    num_states: int
    num_hidden_configs: int

    def grouped(self) -> np.ndarray:
        """機率重排成 (狀態, 隱藏組態, 動作)"""
        return self.probs.reshape(self.num_states, self.num_hidden_configs, 2)


# ==================== 窮舉 ====================

def _joint_over(w: WeightStack, states, state_probs, budget: EnumBudget) -> Joint:
    states = as_mat(states)
    state_probs = np.asarray(state_probs, dtype=np.float64).reshape(-1)
    if states.shape[0] != state_probs.shape[0]:
        raise DimensionError("enumerate_joint", states.shape, state_probs.shape)
    if states.shape[1] != w.shape.input_dim:
        raise DimensionError("enumerate_joint state", states.shape, (states.shape[0], w.shape.input_dim))
    keep = state_probs > 0
    states, state_probs = states[keep], state_probs[keep]
    S = states.shape[0]
    budget.check(w.shape, S)

    hb = w.shape.hidden_bits
    C = 2 ** hb
    configs = np.array(list(itertools.product((-1.0, 1.0), repeat=hb)), dtype=np.float64).reshape(C, hb)
    hidden = np.tile(np.repeat(configs, 2, axis=0), (S, 1))
    actions = np.tile(np.array([[-1.0], [1.0]]), (S * C, 1))

    activations = [np.repeat(states, 2 * C, axis=0)]
    start = 0
    for m in w.shape.hidden_sizes:
        activations.append(hidden[:, start:start + m])
        start += m
    activations.append(actions)

    log_p = np.repeat(np.log(state_probs), 2 * C)
    for l in range(1, w.shape.num_layers + 1):
        log_p = log_p + layer_log_prob(w, l, activations[l - 1], activations[l])
    trace = trace_from_activations(w, activations)
    return Joint(trace, np.exp(log_p), S, C)


def enumerate_joint(w: WeightStack, env: Union[SingleStepEnv, np.ndarray],
                    budget: EnumBudget = DEFAULT_BUDGET) -> Joint:
    """env 可以是環境或一組狀態 (視為等機率)"""
    if isinstance(env, SingleStepEnv):
        states, probs = env.enumerate_states(budget.max_states)
    else:
        states = as_mat(env)
        probs = np.full(states.shape[0], 1.0 / states.shape[0])
    joint = _joint_over(w, states, probs, budget)
    logger.debug(f"窮舉完成: {joint.trace.batch_size} 組 (狀態 {joint.num_states})")
    return joint


def exact_action_prob(w: WeightStack, x, action: float = 1.0,
                      budget: EnumBudget = DEFAULT_BUDGET) -> Union[float, np.ndarray]:
    """Pr(A=action | x)，對所有隱藏組態加總"""
    if action not in (-1, 1):
        raise DomainError(f"動作必須是 ±1: {action}")
    states = as_mat(x)
    # 每個狀態各自條件化：state_probs 全設 1
    joint = _joint_over(w, states, np.ones(states.shape[0]), budget)
    col = 1 if action > 0 else 0
    p = joint.grouped()[:, :, col].sum(axis=1)
    return float(p[0]) if np.ndim(x) <= 1 else p


def exact_expected_reward(w: WeightStack, env: SingleStepEnv,
                          budget: EnumBudget = DEFAULT_BUDGET) -> float:
    """E[R | π_W] = Σ_x d₀(x) Σ_a Pr(a|x) R(x,a)"""
    joint = enumerate_joint(w, env, budget)
    r = env.reward_function(joint.trace.states, joint.trace.actions)
    return float(np.dot(joint.probs, r))


def _weighted_outer(trace: ForwardTrace, i: int, weights: np.ndarray, signal: np.ndarray) -> np.ndarray:
    return trace.layer_input(i).T @ (weights[:, None] * signal)


def _score_signal(trace: ForwardTrace, i: int) -> np.ndarray:
    """∇ log π_l = ½ (H^{l-1})ᵀ (H^l - E[H^l|H^{l-1}])"""
    return 0.5 * (trace.activations[i + 1] - trace.expectation(i))


def _finite_difference(w: WeightStack, env: SingleStepEnv, h: float, budget: EnumBudget) -> Gradient:
    grads = []
    for i, W in enumerate(w):
        G = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            plus, minus = w.copy(), w.copy()
            plus.layers[i][idx] += h
            minus.layers[i][idx] -= h
            G[idx] = (exact_expected_reward(plus, env, budget)
                      - exact_expected_reward(minus, env, budget)) / (2.0 * h)
        grads.append(G)
    return grads


def exact_gradient(w: WeightStack, env: SingleStepEnv, h: float = 1e-5,
                   method: str = "finite_difference",
                   budget: EnumBudget = DEFAULT_BUDGET) -> Gradient:
    """∇_{W^l} E[R]，中央差分或解析 (score function 的精確期望)"""
    if method == "finite_difference":
        if h <= 0:
            raise DomainError(f"差分步長必須 > 0: {h}")
        return _finite_difference(w, env, h, budget)
    if method == "analytic":
        return exact_score_gradient(w, env, "layer", budget)
    raise DomainError(f"未知的梯度方法: {method!r}")


def _group_mean(keys: np.ndarray, weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """以 weights 對同一 key 的列取條件平均，再展開回每一列"""
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    n = inverse.max() + 1
    total = np.bincount(inverse, weights=weights, minlength=n)
    sums = np.zeros((n,) + values.shape[1:])
    np.add.at(sums, inverse, weights.reshape((-1,) + (1,) * (values.ndim - 1)) * values)
    denom = np.where(total > 0, total, 1.0).reshape((-1,) + (1,) * (values.ndim - 1))
    return (sums / denom)[inverse]


def exact_score_gradient(w: WeightStack, env: SingleStepEnv, condition: str = "layer",
                         budget: EnumBudget = DEFAULT_BUDGET) -> Gradient:
    """E[R ∇ log Pr(·)] 的三種寫法

    condition="state":       ∇ log Pr(A | X)
    condition="layer_input": ∇ log Pr(A | H^{l-1})
    condition="layer":       ∇ log π_l(H^{l-1}, H^l)
    三者都等於 ∇E[R]。
    """
    if condition not in SCORE_CONDITIONS:
        raise DomainError(f"condition 必須是 {SCORE_CONDITIONS}: {condition!r}")
    joint = enumerate_joint(w, env, budget)
    trace = joint.trace
    r = env.reward_function(trace.states, trace.actions)
    grads = []
    for i in range(trace.num_layers):
        # 每列的 score：(B, m^{l-1}+1, m^l)
        score = trace.layer_input(i)[:, :, None] * _score_signal(trace, i)[:, None, :]
        if condition != "layer":
            given = trace.activations[:1] if condition == "state" else trace.activations[:i + 1]
            keys = np.hstack(list(given) + [trace.activations[-1]])
            score = _group_mean(keys, joint.probs, score)
        grads.append(np.tensordot(joint.probs * r, score, axes=(0, 0)))
    return grads


def _outcomes(env: SingleStepEnv, trace: ForwardTrace) -> RewardOutcomes:
    return env.reward_outcomes(trace.states, trace.actions)


def exact_expected_update(w: WeightStack, env: SingleStepEnv, rule: RuleSpec,
                          step_size: Optional[float] = None,
                          budget: EnumBudget = DEFAULT_BUDGET) -> Gradient:
    """E[ΔW^l | π_W]：每列的規則訊號以聯合機率 × 獎勵機率加權 (含正則化)"""
    joint = enumerate_joint(w, env, budget)
    trace = joint.trace
    totals = [np.zeros_like(W) for W in w]
    for values, probs in _outcomes(env, trace):
        updates = compute_updates(rule, trace, values, w, step_size)
        weights = joint.probs * probs
        for i, G in enumerate(updates.signals):
            totals[i] += _weighted_outer(trace, i, weights, G)
    if rule.reg_weights:
        totals = apply_regularization(UpdateStack(totals, [], []), w, rule.reg_weights).deltas
    return totals


# ==================== 比較工具 ====================

def _flat(stack) -> np.ndarray:
    if isinstance(stack, np.ndarray):
        return stack.ravel()
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in stack])


def cosine(a, b) -> float:
    """兩個矩陣 (或矩陣串列) 攤平後的夾角餘弦；任一為零向量時回傳 0"""
    u, v = _flat(a), _flat(b)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def fit_scale(a, b) -> float:
    """最小平方 c = argmin ‖a - c·b‖"""
    u, v = _flat(a), _flat(b)
    vv = float(np.dot(v, v))
    return float(np.dot(u, v) / vv) if vv > 0 else 0.0


def relative_error(a, b) -> float:
    """‖a - b‖ / max(‖a‖, ‖b‖)"""
    u, v = _flat(a), _flat(b)
    scale = max(np.linalg.norm(u), np.linalg.norm(v))
    return float(np.linalg.norm(u - v) / scale) if scale > 0 else 0.0


def residual_spread(residuals: Sequence[float], eps_list: Sequence[float],
                    negligible: float = 1e-12) -> float:
    """residual(ε)/ε² 在整個 ε 列表上的 max/min

    殘差全部低於 negligible 時 (沒有近似誤差，例如輸出層) 回傳 1.0。
    """
    residuals = [float(r) for r in residuals]
    if len(residuals) != len(eps_list):
        raise DimensionError("residual_spread", (len(residuals),), (len(eps_list),))
    if not residuals:
        raise DomainError("residual_spread: ε 列表不可為空")
    if max(residuals) <= negligible:
        return 1.0
    scaled = [r / float(e) ** 2 for r, e in zip(residuals, eps_list)]
    low = min(scaled)
    return max(scaled) / low if low > 0 else float('inf')


def theorem1_scaling_check(shape: NetShape, env: SingleStepEnv,
                           eps_list: Sequence[float] = (0.2, 0.1, 0.05), seed: int = 0,
                           rule: Optional[RuleSpec] = None,
                           budget: EnumBudget = DEFAULT_BUDGET) -> Dict:
    """W = ε·U 時 E[ΔW^l] 與 ∇E[R] 的偏差應為二階

    每層擬合 c(ε)，回報 residual、residual/ε²、相鄰 ε 的比值、spread 與 cosine。
    bounded：每層 residual/ε² 的 max/min 小於 SPREAD_LIMIT (兩側都檢查)。
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise DomainError("eps_list 不可為空")
    if any(e <= 0 for e in eps_list):
        raise DomainError(f"ε 必須 > 0: {eps_list}")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise DomainError(f"eps_list 必須遞減: {eps_list}")
    rule = rule or RuleSpec("wm_reinforce")
    U = init_weights(shape, 1.0, RandomStream(seed).derive(1))

    layers = [{'layer': l, 'scale': [], 'residual': [], 'scaled': [], 'cosine': []}
              for l in range(1, shape.num_layers + 1)]
    for eps in eps_list:
        w = WeightStack(shape, [eps * W for W in U])
        update = exact_expected_update(w, env, rule, budget=budget)
        grad = exact_gradient(w, env, method="analytic", budget=budget)
        for entry, dW, g in zip(layers, update, grad):
            c = fit_scale(dW, g)
            res = float(np.linalg.norm(dW - c * g))
            entry['scale'].append(c)
            entry['residual'].append(res)
            entry['scaled'].append(res / eps ** 2)
            entry['cosine'].append(cosine(dW, g))

    bounded = True
    for entry in layers:
        s = entry['scaled']
        entry['ratios'] = [b / a if a > 0 else 0.0 for a, b in zip(s, s[1:])]
        entry['spread'] = residual_spread(entry['residual'], eps_list)
        entry['bounded'] = entry['spread'] < SPREAD_LIMIT
        bounded = bounded and entry['bounded']
    spread = max(entry['spread'] for entry in layers)
    logger.info(f"縮放檢查 seed={seed}: spread={spread:.3f}, bounded={bounded}")
    return {'eps': eps_list, 'seed': seed, 'layers': layers, 'spread': spread, 'bounded': bounded}


# ==================== 展開式 ====================

def _stack(trace: ForwardTrace, signals: List[np.ndarray]) -> UpdateStack:
    deltas = [trace.layer_input(i).T @ G / trace.batch_size for i, G in enumerate(signals)]
    return UpdateStack(deltas, signals, [None] * len(signals))


def _reward_col(trace: ForwardTrace, r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.ndim == 0:
        return np.full((trace.batch_size, 1), float(r))
    r = r.reshape(-1, 1)
    if r.shape[0] != trace.batch_size:
        raise DimensionError("reward", r.shape, (trace.batch_size, 1))
    return r


def lemma1_expansion(trace: ForwardTrace, r, w: WeightStack) -> UpdateStack:
    """ΔW^l ∝ rA (H^{l-1})ᵀ (diag(σ(-H^l⊙S^l)) M^{l+1}…M^L)ᵀ，M^k = W^k ⊙ σ(-H^k⊙S^k)"""
    L = trace.num_layers
    rA = _reward_col(trace, r) * trace.activations[L]
    gates = [sigmoid(-trace.activations[i + 1] * trace.pre_activations[i]) for i in range(L)]
    signals: List[np.ndarray] = [None] * L
    # chain = (M^{l+1}…M^L)ᵀ，逐列
    chain = np.ones((trace.batch_size, 1))
    signals[L - 1] = rA * gates[L - 1] * chain
    for i in range(L - 2, -1, -1):
        chain = (gates[i + 1] * chain) @ w.unit_rows(i + 1).T
        signals[i] = rA * gates[i] * chain
    return _stack(trace, signals)


def _diag(v: np.ndarray) -> np.ndarray:
    return v[:, :, None] * np.eye(v.shape[1])


def lemma2_expansion(trace: ForwardTrace, r, w: WeightStack) -> UpdateStack:
    """ΔW^l ∝ rAσ(-AS^L) (H^{l-1})ᵀ (diag(σ'(S^l)) M^{l+1}…M^{L-1} W^L)ᵀ，M^k = W^k ⊙ σ'(S^k)

    以明確的矩陣連乘計算 (每個樣本一個 (m^l × 1) 乘積)。
    """
    L = trace.num_layers
    A = trace.activations[L]
    coeff = _reward_col(trace, r) * A * sigmoid(-A * trace.pre_activations[L - 1])
    derivs = [sigmoid(s) * (1.0 - sigmoid(s)) for s in trace.pre_activations]
    signals: List[np.ndarray] = [None] * L
    signals[L - 1] = coeff
    for i in range(L - 1):
        prod = _diag(derivs[i])
        for k in range(i + 1, L - 1):
            prod = np.matmul(np.matmul(prod, w.unit_rows(k)), _diag(derivs[k]))
        prod = np.matmul(prod, w.unit_rows(L - 1))
        signals[i] = coeff * prod[:, :, 0]
    return _stack(trace, signals)
