#!/usr/bin/env python3
"""
優化器模組
Optimizers: plain gradient ascent and Adam (ascent convention)

更新量本身已指向上坡 (最大化獎勵)，因此都是 W + α·(...)。
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .exceptions import ConfigError, DimensionError, DomainError
from .network import WeightStack
from .rules import UpdateStack

logger = logging.getLogger(__name__)

OPTIMIZER_KINDS = ("adam", "sgd")


@dataclass
class OptimizerSpec:
    """優化器設定 (α=0.01, β₁=0.9, β₂=0.999, ε=1e-8)"""
    kind: str = "adam"
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"未知的優化器 {self.kind!r}")
        if self.lr <= 0:
            raise ConfigError(f"學習率必須 > 0: {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"Adam β 必須在 [0,1): {self.beta1}, {self.beta2}")
        if self.eps <= 0:
            raise ConfigError(f"eps 必須 > 0: {self.eps}")

    def to_dict(self) -> Dict:
        return {'kind': self.kind, 'lr': self.lr, 'beta1': self.beta1,
                'beta2': self.beta2, 'eps': self.eps}

    @classmethod
    def from_dict(cls, d: Dict) -> "OptimizerSpec":
        unknown = set(d) - {'kind', 'lr', 'beta1', 'beta2', 'eps'}
        if unknown:
            raise ConfigError(f"optimizer 設定有未知欄位: {sorted(unknown)}")
        return cls(kind=d.get('kind', 'adam'), lr=float(d.get('lr', 0.01)),
                   beta1=float(d.get('beta1', 0.9)), beta2=float(d.get('beta2', 0.999)),
                   eps=float(d.get('eps', 1e-8)))


@dataclass
class AdamState:
    """Adam 一階/二階動量與步數"""
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def to_dict(self) -> Dict:
        return {
            't': self.t, 'lr': self.lr, 'beta1': self.beta1, 'beta2': self.beta2, 'eps': self.eps,
            'm': [[list(M.shape), M.ravel().tolist()] for M in self.m],
            'v': [[list(V.shape), V.ravel().tolist()] for V in self.v],
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "AdamState":
        def _mats(items):
            return [np.asarray(flat, dtype=np.float64).reshape(shape) for shape, flat in items]
        return cls(m=_mats(d['m']), v=_mats(d['v']), t=int(d['t']), lr=float(d['lr']),
                   beta1=float(d['beta1']), beta2=float(d['beta2']), eps=float(d['eps']))


def _deltas(updates) -> List[np.ndarray]:
    return updates.deltas if isinstance(updates, UpdateStack) else list(updates)


def _check_shapes(w: WeightStack, deltas: Sequence[np.ndarray]) -> None:
    if len(deltas) != len(w):
        raise DimensionError("updates", (len(deltas),), (len(w),))
    for W, dW in zip(w, deltas):
        if W.shape != np.shape(dW):
            raise DimensionError("updates", np.shape(dW), W.shape)


def sgd_step(w: WeightStack, updates, lr: float) -> WeightStack:
    """W ← W + α·ΔW"""
    if lr < 0:
        raise DomainError(f"學習率必須 ≥ 0: {lr}")
    deltas = _deltas(updates)
    _check_shapes(w, deltas)
    return WeightStack(w.shape, [W + lr * dW for W, dW in zip(w, deltas)])


def init_adam(w: WeightStack, lr: float = 0.01, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(m=[np.zeros_like(W) for W in w], v=[np.zeros_like(W) for W in w],
                     t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, w: WeightStack, updates) -> Tuple[WeightStack, AdamState]:
    """把更新量當作梯度的 Adam (上升方向)，含偏差修正"""
    deltas = _deltas(updates)
    _check_shapes(w, deltas)
    for M, W in zip(state.m, w):
        if M.shape != W.shape:
            raise DimensionError("AdamState", M.shape, W.shape)
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    m = [b1 * M + (1.0 - b1) * g for M, g in zip(state.m, deltas)]
    v = [b2 * V + (1.0 - b2) * g * g for V, g in zip(state.v, deltas)]
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    layers = [W + state.lr * (M / c1) / (np.sqrt(V / c2) + state.eps)
              for W, M, V in zip(w, m, v)]
    new_state = AdamState(m=m, v=v, t=t, lr=state.lr, beta1=b1, beta2=b2, eps=state.eps)
    return WeightStack(w.shape, layers), new_state


class Optimizer:
    """包裝 OptimizerSpec 與其狀態，供訓練迴圈使用"""

    def __init__(self, spec: OptimizerSpec, w: WeightStack):
        self.spec = spec
        self.state = init_adam(w, spec.lr, spec.beta1, spec.beta2, spec.eps) if spec.kind == "adam" else None

    @property
    def lr(self) -> float:
        return self.spec.lr

    def step(self, w: WeightStack, updates) -> WeightStack:
        if self.spec.kind == "sgd":
            return sgd_step(w, updates, self.spec.lr)
        w, self.state = adam_step(self.state, w, updates)
        return w

    def state_dict(self) -> Dict:
        d = {'spec': self.spec.to_dict()}
        if self.state is not None:
            d['adam'] = self.state.to_dict()
        return d

    def load_state_dict(self, d: Dict) -> None:
        if 'adam' in d:
            self.state = AdamState.from_dict(d['adam'])
