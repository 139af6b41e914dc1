#!/usr/bin/env python3
"""
學習規則模組
Learning rules: single-unit rules and network-level Weight Maximization

所有規則回傳「未乘學習率」的更新量，由 optim 負責套用。
網路規則在一批 trace 上逐樣本計算各層訊號 G^l (每個樣本的
ΔW^l = (H^{l-1})ᵀ G^l)，批次更新量是逐樣本更新量的平均。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, DimensionError, DomainError
from .network import ForwardTrace, WeightStack
from .numerics import (hadamard, matmul, row_sum, sigmoid, sigmoid_prime,
                       transpose)

logger = logging.getLogger(__name__)

RULE_KINDS = ("global_reinforce", "wm_reinforce", "wm_direct", "wm_classification", "ste_backprop")
REWARD_TIMINGS = ("pre_update", "post_update")


@dataclass
class RuleSpec:
    """規則設定"""
    kind: str = "wm_reinforce"
    baseline: float = 0.0
    lam: float = 1.0
    reg_weights: Sequence[float] = ()
    reward_timing: str = "pre_update"
    exact_norm_reward: bool = False
    doubled_output_expectation: bool = False

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ConfigError(f"未知的規則 {self.kind!r}，可用: {', '.join(RULE_KINDS)}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda 必須在 [0,1]: {self.lam}")
        self.reg_weights = tuple(float(b) for b in self.reg_weights)
        if any(b < 0 for b in self.reg_weights):
            raise ConfigError(f"正則化權重必須 ≥ 0: {self.reg_weights}")
        if self.reward_timing not in REWARD_TIMINGS:
            raise ConfigError(f"reward_timing 只能是 {REWARD_TIMINGS}: {self.reward_timing!r}")

    @property
    def needs_step_size(self) -> bool:
        return self.reward_timing == "post_update" or self.exact_norm_reward

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind,
            'baseline': self.baseline,
            'lambda': self.lam,
            'reg_weights': list(self.reg_weights),
            'reward_timing': self.reward_timing,
            'exact_norm_reward': self.exact_norm_reward,
            'doubled_output_expectation': self.doubled_output_expectation,
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "RuleSpec":
        known = {'kind', 'baseline', 'lambda', 'reg_weights', 'reward_timing',
                 'exact_norm_reward', 'doubled_output_expectation'}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"rule 設定有未知欄位: {sorted(unknown)}")
        return cls(
            kind=d.get('kind', 'wm_reinforce'),
            baseline=float(d.get('baseline', 0.0)),
            lam=float(d.get('lambda', 1.0)),
            reg_weights=d.get('reg_weights', ()),
            reward_timing=d.get('reward_timing', 'pre_update'),
            exact_norm_reward=bool(d.get('exact_norm_reward', False)),
            doubled_output_expectation=bool(d.get('doubled_output_expectation', False)),
        )


@dataclass
class UpdateStack:
    """各層更新量 ΔW^l (批次平均)、逐樣本訊號 G^l 與層獎勵 R^l"""
    deltas: List[np.ndarray]
    signals: List[Optional[np.ndarray]] = field(default_factory=list)
    layer_rewards: List[Optional[np.ndarray]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.deltas)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.deltas[i]


# ==================== 單一單元 ====================

def _unit_expectation(x: np.ndarray, w: np.ndarray) -> float:
    """E[A|X] = 2σ(wᵀx) - 1"""
    return 2.0 * sigmoid(float(np.dot(w, x))) - 1.0


def _check_action(a: float, name: str = "a") -> None:
    if a not in (-1, 1):
        raise DomainError(f"{name} 必須是 ±1，收到 {a}")


def reinforce_1(x, a: float, r: float, b: float, w) -> np.ndarray:
    """Δw = (r-b)(a - E[A|X])x"""
    x, w = np.asarray(x, dtype=np.float64), np.asarray(w, dtype=np.float64)
    _check_action(a)
    return (r - b) * (a - _unit_expectation(x, w)) * x


def classification_1(x, a: float, r: float, w) -> np.ndarray:
    """Δw = (a·r - E[A|X])x，目標動作 A* = RA"""
    x, w = np.asarray(x, dtype=np.float64), np.asarray(w, dtype=np.float64)
    _check_action(a)
    _check_action(r, "r")
    return (a * r - _unit_expectation(x, w)) * x


def arp_1(x, a: float, r: float, w, lam: float) -> np.ndarray:
    """A_{R-P}：r=+1 時完整步長，r=-1 時乘上 λ"""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda 必須在 [0,1]: {lam}")
    x, w = np.asarray(x, dtype=np.float64), np.asarray(w, dtype=np.float64)
    _check_action(a)
    _check_action(r, "r")
    step = (r * a - _unit_expectation(x, w)) * x
    return step if r == 1 else lam * step


def direct_gradient_1(x, r_plus: float, r_minus: float, w) -> np.ndarray:
    """Δw = (R(x,+1) - R(x,-1))·2σ'(wᵀx)·x，與實際動作無關"""
    x, w = np.asarray(x, dtype=np.float64), np.asarray(w, dtype=np.float64)
    return (r_plus - r_minus) * 2.0 * sigmoid_prime(float(np.dot(w, x))) * x


# ==================== 網路層級 ====================

def _reward_column(r, batch: int) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.ndim == 0:
        return np.full((batch, 1), float(r))
    r = r.reshape(-1, 1)
    if r.shape[0] != batch:
        raise DimensionError("reward", r.shape, (batch, 1))
    return r


def _outer_mean(trace: ForwardTrace, i: int, signal: np.ndarray) -> np.ndarray:
    """批次平均的 (H^{i})ᵀ G"""
    H = trace.layer_input(i)
    return matmul(transpose(H), signal) / trace.batch_size


def _output_signal(trace: ForwardTrace, rcol: np.ndarray) -> np.ndarray:
    """輸出層 REINFORCE：r·(A - E[A|H^{L-1}])"""
    L = trace.num_layers
    return rcol * (trace.activations[L] - trace.expectation(L - 1))


def layer_reward(dW_next, W_next, units: Optional[int] = None) -> np.ndarray:
    """R^l = (2(ΔW^{l+1} ⊙ W^{l+1})k)ᵀ

    偏置不是單元：給 units = m^l 時只回傳前 m^l 列 (丟掉偏置列)。
    """
    dW = np.asarray(dW_next, dtype=np.float64)
    W = np.asarray(W_next, dtype=np.float64)
    if dW.shape != W.shape:
        raise DimensionError("layer_reward", dW.shape, W.shape)
    R = 2.0 * transpose(row_sum(hadamard(dW, W)))[0]
    return R if units is None else R[:units]


def _batched_layer_reward(trace: ForwardTrace, i: int, signal_next: np.ndarray,
                          w: WeightStack, step_size: Optional[float],
                          reward_timing: str, exact_norm_reward: bool) -> np.ndarray:
    """對每個樣本算 layer_reward(ΔW^{i+2}, W^{i+2})

    樣本 b 的 ΔW_{j,c} = H_{b,j} G_{b,c}，所以 2Σ_c ΔW_{j,c}W_{j,c} = 2H_{b,j}(G_b·W_j)。
    """
    H = trace.activations[i + 1]
    W_units = w.unit_rows(i + 1)
    R = 2.0 * hadamard(H, matmul(signal_next, transpose(W_units)))
    if reward_timing == "post_update" or exact_norm_reward:
        if step_size is None:
            raise ConfigError("post_update / exact_norm_reward 需要 step_size")
        # Σ_c ΔW_{j,c}² = H_j² Σ_c G_c²
        sq = (H ** 2) * (signal_next ** 2).sum(axis=1, keepdims=True)
        if reward_timing == "post_update":
            R = R + 2.0 * step_size * sq
        if exact_norm_reward:
            R = R + step_size * sq
    return R


def _reinforce_hidden(trace: ForwardTrace, i: int, R: np.ndarray) -> np.ndarray:
    return hadamard(R, trace.activations[i + 1] - trace.expectation(i))


def _direct_hidden(trace: ForwardTrace, i: int, R: np.ndarray) -> np.ndarray:
    return 2.0 * hadamard(hadamard(R, trace.activations[i + 1]),
                          sigmoid_prime(trace.pre_activations[i]))


def _classification_hidden(lam: float, doubled_output_expectation: bool) -> Callable:
    def signal(trace: ForwardTrace, i: int, R: np.ndarray) -> np.ndarray:
        H = trace.activations[i + 1]
        if doubled_output_expectation:
            L = trace.num_layers
            E = np.broadcast_to(2.0 * trace.expectation(L - 1), H.shape)
        else:
            E = trace.expectation(i)
        # sgn(0) = 0 → 零獎勵單元不更新
        G = np.abs(R) * (np.sign(R) * H - E)
        if lam < 1.0:
            G = lam * G + (1.0 - lam) * _reinforce_hidden(trace, i, R)
        return G
    return signal


def _weight_max_sweep(trace: ForwardTrace, r, w: WeightStack, hidden_signal: Callable,
                      baseline: float = 0.0, reward_timing: str = "pre_update",
                      step_size: Optional[float] = None, exact_norm_reward: bool = False,
                      hidden_reward: str = "weight_norm") -> UpdateStack:
    """由上而下：輸出層用全域獎勵，之後每層 R^l 取自上一層的原始 ΔW 與前向時的 W"""
    L = trace.num_layers
    rcol = _reward_column(r, trace.batch_size) - baseline
    signals: List[Optional[np.ndarray]] = [None] * L
    rewards: List[Optional[np.ndarray]] = [None] * L
    signals[L - 1] = _output_signal(trace, rcol)
    for i in range(L - 2, -1, -1):
        if hidden_reward == "global":
            R = np.broadcast_to(rcol, trace.activations[i + 1].shape).copy()
        elif hidden_reward == "weight_norm":
            R = _batched_layer_reward(trace, i, signals[i + 1], w, step_size,
                                      reward_timing, exact_norm_reward)
        else:
            raise ConfigError(f"未知的 hidden_reward: {hidden_reward!r}")
        rewards[i] = R
        signals[i] = hidden_signal(trace, i, R)
    deltas = [_outer_mean(trace, i, G) for i, G in enumerate(signals)]
    return UpdateStack(deltas, signals, rewards)


def global_reinforce(trace: ForwardTrace, r, w: WeightStack, baseline: float = 0.0) -> UpdateStack:
    """每個單元都用同一個全域獎勵做 REINFORCE"""
    L = trace.num_layers
    rcol = _reward_column(r, trace.batch_size) - baseline
    signals = [rcol * (trace.activations[i + 1] - trace.expectation(i)) for i in range(L)]
    deltas = [_outer_mean(trace, i, G) for i, G in enumerate(signals)]
    return UpdateStack(deltas, signals, [None] * L)


def wm_reinforce(trace: ForwardTrace, r, w: WeightStack, baseline: float = 0.0,
                 reward_timing: str = "pre_update", step_size: Optional[float] = None,
                 exact_norm_reward: bool = False, hidden_reward: str = "weight_norm") -> UpdateStack:
    """Weight Maximization + REINFORCE"""
    return _weight_max_sweep(trace, r, w, _reinforce_hidden, baseline, reward_timing,
                             step_size, exact_norm_reward, hidden_reward)


def wm_direct(trace: ForwardTrace, r, w: WeightStack, baseline: float = 0.0,
              reward_timing: str = "pre_update", step_size: Optional[float] = None,
              exact_norm_reward: bool = False) -> UpdateStack:
    """Weight Maximization + direct gradient：ΔW^l = (H^{l-1})ᵀ(2R^l ⊙ H^l ⊙ σ'(S^l))"""
    return _weight_max_sweep(trace, r, w, _direct_hidden, baseline, reward_timing,
                             step_size, exact_norm_reward)


def wm_classification(trace: ForwardTrace, r, w: WeightStack, baseline: float = 0.0,
                      reward_timing: str = "pre_update", step_size: Optional[float] = None,
                      exact_norm_reward: bool = False, lam: float = 1.0,
                      doubled_output_expectation: bool = False) -> UpdateStack:
    """Weight Maximization + classification (以 |R^l| 加權、目標 sgn(R^l)⊙H^l)"""
    hidden = _classification_hidden(lam, doubled_output_expectation)
    return _weight_max_sweep(trace, r, w, hidden, baseline, reward_timing, step_size,
                             exact_norm_reward)


def ste_backprop(trace: ForwardTrace, r, w: WeightStack, baseline: float = 0.0) -> UpdateStack:
    """輸出層 REINFORCE (×½)，隱藏層以 straight-through 反向傳播"""
    L = trace.num_layers
    rcol = _reward_column(r, trace.batch_size) - baseline
    A = trace.activations[L]
    # 1 - π(A) = σ(-A·S^L)
    delta = rcol * A * sigmoid(-A * trace.pre_activations[L - 1])
    signals: List[np.ndarray] = [None] * L
    signals[L - 1] = delta
    for i in range(L - 2, -1, -1):
        delta = hadamard(matmul(delta, transpose(w.unit_rows(i + 1))),
                         sigmoid_prime(trace.pre_activations[i]))
        signals[i] = delta
    deltas = [_outer_mean(trace, i, G) for i, G in enumerate(signals)]
    return UpdateStack(deltas, signals, [None] * L)


def apply_regularization(updates: UpdateStack, w: WeightStack, betas: Sequence[float]) -> UpdateStack:
    """L2 正則化：ΔW^l - 2β_l W^l (偏置列一併處理)"""
    betas = tuple(betas)
    if not betas:
        return updates
    if len(betas) != len(w):
        raise DimensionError("reg_weights", (len(betas),), (len(w),))
    if any(b < 0 for b in betas):
        raise DomainError(f"正則化權重必須 ≥ 0: {betas}")
    deltas = [dW - 2.0 * b * W if b else dW for dW, W, b in zip(updates.deltas, w, betas)]
    return UpdateStack(deltas, updates.signals, updates.layer_rewards)


def compute_updates(spec: RuleSpec, trace: ForwardTrace, r, w: WeightStack,
                    step_size: Optional[float] = None) -> UpdateStack:
    """依 RuleSpec.kind 分派 (不含正則化)"""
    kind = spec.kind
    if kind == "global_reinforce":
        return global_reinforce(trace, r, w, spec.baseline)
    if kind == "ste_backprop":
        return ste_backprop(trace, r, w, spec.baseline)
    common = dict(baseline=spec.baseline, reward_timing=spec.reward_timing,
                  step_size=step_size, exact_norm_reward=spec.exact_norm_reward)
    if kind == "wm_reinforce":
        return wm_reinforce(trace, r, w, **common)
    if kind == "wm_direct":
        return wm_direct(trace, r, w, **common)
    return wm_classification(trace, r, w, lam=spec.lam,
                             doubled_output_expectation=spec.doubled_output_expectation, **common)
