#!/usr/bin/env python3
"""
網路模組 - 多層 Bernoulli logistic 單元
Network of stochastic ±1 logistic units: shapes, weights, forward sampling

權重 W^l 形狀為 (m^{l-1}+1) × m^l (含偏置時，偏置列在最後一列)。
活化值一律在 {-1,+1}；所有運算都以「批次列」處理，單一狀態就是批次大小 1。
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .exceptions import ConfigError, DimensionError, DomainError
from .numerics import RandomStream, as_mat, log_sigmoid, sigmoid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetShape:
    """網路形狀：n → m¹ → … → m^{L-1} → 1"""
    input_dim: int
    hidden_sizes: Tuple[int, ...] = ()
    output_size: int = 1
    bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'hidden_sizes', tuple(int(m) for m in self.hidden_sizes))
        if self.input_dim < 1 or any(m < 1 for m in self.hidden_sizes):
            raise ConfigError(f"層大小必須 ≥ 1: {self.layer_sizes}")
        if self.output_size != 1:
            raise ConfigError("輸出層只支援單一單元 (m^L = 1)")

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        """(n, m¹, …, m^L)"""
        return (self.input_dim,) + self.hidden_sizes + (self.output_size,)

    @property
    def num_layers(self) -> int:
        return len(self.hidden_sizes) + 1

    @property
    def hidden_bits(self) -> int:
        return sum(self.hidden_sizes)

    def weight_shape(self, l: int) -> Tuple[int, int]:
        """W^l 的形狀 (l 從 1 起算)"""
        sizes = self.layer_sizes
        return (sizes[l - 1] + (1 if self.bias else 0), sizes[l])

    @property
    def param_count(self) -> int:
        return sum(r * c for r, c in (self.weight_shape(l) for l in range(1, self.num_layers + 1)))

    def to_dict(self) -> Dict:
        return {'shape': list(self.layer_sizes), 'bias': self.bias}

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], bias: bool = True) -> "NetShape":
        sizes = list(sizes)
        if len(sizes) < 2:
            raise ConfigError(f"shape 至少要有輸入與輸出: {sizes}")
        return cls(input_dim=sizes[0], hidden_sizes=tuple(sizes[1:-1]),
                   output_size=sizes[-1], bias=bias)


@dataclass
class WeightStack:
    """各層權重 W¹…W^L"""
    shape: NetShape
    layers: List[np.ndarray]

    def __post_init__(self):
        self.layers = [np.array(W, dtype=np.float64) for W in self.layers]
        if len(self.layers) != self.shape.num_layers:
            raise DimensionError("WeightStack", (len(self.layers),), (self.shape.num_layers,))
        for l, W in enumerate(self.layers, start=1):
            if W.shape != self.shape.weight_shape(l):
                raise DimensionError(f"WeightStack W^{l}", W.shape, self.shape.weight_shape(l))

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.layers[i]

    def __iter__(self):
        return iter(self.layers)

    def unit_rows(self, i: int) -> np.ndarray:
        """第 i 層 (0 起算) 權重去掉偏置列，只留對應單元的列"""
        return self.layers[i][:self.shape.layer_sizes[i], :]

    def copy(self) -> "WeightStack":
        return WeightStack(self.shape, [W.copy() for W in self.layers])

    def norms(self) -> List[float]:
        """各層 L2 (Frobenius) 範數，含偏置列"""
        return [float(np.linalg.norm(W)) for W in self.layers]

    @property
    def param_count(self) -> int:
        return int(sum(W.size for W in self.layers))

    def to_dict(self) -> Dict:
        d = self.shape.to_dict()
        d['layers'] = [W.ravel().tolist() for W in self.layers]
        return d

    @classmethod
    def from_dict(cls, d: Dict) -> "WeightStack":
        shape = NetShape.from_sizes(d['shape'], bias=bool(d.get('bias', True)))
        layers = []
        for l, flat in enumerate(d['layers'], start=1):
            rows, cols = shape.weight_shape(l)
            flat = np.asarray(flat, dtype=np.float64)
            if flat.size != rows * cols:
                raise DimensionError(f"load W^{l}", (flat.size,), (rows * cols,))
            layers.append(flat.reshape(rows, cols))
        return cls(shape, layers)


@dataclass
class ForwardTrace:
    """一批取樣：H⁰…H^L、S¹…S^L、P¹…P^L (都是 (B, m) 陣列)"""
    activations: List[np.ndarray]
    pre_activations: List[np.ndarray]
    probabilities: List[np.ndarray]
    bias: bool = True
    _inputs: List[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def batch_size(self) -> int:
        return self.activations[0].shape[0]

    @property
    def num_layers(self) -> int:
        return len(self.pre_activations)

    @property
    def states(self) -> np.ndarray:
        return self.activations[0]

    @property
    def actions(self) -> np.ndarray:
        """A = H^L，形狀 (B,)"""
        return self.activations[-1][:, 0]

    def layer_input(self, i: int) -> np.ndarray:
        """第 i 層 (0 起算) 的輸入 H^{i}，含偏置欄"""
        if not self._inputs:
            self._inputs = [with_bias(H, self.bias) for H in self.activations[:-1]]
        return self._inputs[i]

    def expectation(self, i: int) -> np.ndarray:
        """E[H^{i+1} | H^{i}] = 2P - 1"""
        return 2.0 * self.probabilities[i] - 1.0


# ==================== 函數 ====================

def with_bias(h: np.ndarray, bias: bool = True) -> np.ndarray:
    h = as_mat(h)
    if not bias:
        return h
    return np.hstack([h, np.ones((h.shape[0], 1))])


def init_weights(shape: NetShape, scale: float, rng: RandomStream) -> WeightStack:
    """權重 i.i.d. 均勻分布於 [-scale, +scale]"""
    if scale < 0:
        raise DomainError(f"init scale 必須 ≥ 0: {scale}")
    layers = []
    for l in range(1, shape.num_layers + 1):
        layers.append(rng.uniform(-scale, scale, size=shape.weight_shape(l)) + 0.0)
    return WeightStack(shape, layers)


def _check_input(w: WeightStack, l: int, h_prev) -> np.ndarray:
    h = as_mat(h_prev)
    expected = w.shape.layer_sizes[l - 1]
    if h.shape[1] != expected:
        raise DimensionError(f"layer {l} input", h.shape, (h.shape[0], expected))
    return h


def pre_activation(w: WeightStack, l: int, h_prev) -> np.ndarray:
    """S^l = H^{l-1} W^l"""
    h = _check_input(w, l, h_prev)
    return with_bias(h, w.shape.bias) @ w[l - 1]


def forward_sample(w: WeightStack, x, rng: RandomStream) -> ForwardTrace:
    """依序取樣 H¹…H^L；x 可以是單一狀態或 (B, n) 批次"""
    h = _check_input(w, 1, x)
    if not np.all(np.isfinite(h)):
        raise DomainError("forward_sample: 狀態含非有限值")
    activations, pres, probs = [h], [], []
    for l in range(1, w.shape.num_layers + 1):
        s = with_bias(h, w.shape.bias) @ w[l - 1]
        p = sigmoid(s)
        h = rng.bernoulli_pm1(p)
        pres.append(s)
        probs.append(p)
        activations.append(h)
    return ForwardTrace(activations, pres, probs, bias=w.shape.bias)


def trace_from_activations(w: WeightStack, activations: Sequence[np.ndarray]) -> ForwardTrace:
    """由給定的活化值重建 trace (窮舉時使用)"""
    activations = [as_mat(a) for a in activations]
    pres, probs = [], []
    for l in range(1, w.shape.num_layers + 1):
        s = pre_activation(w, l, activations[l - 1])
        pres.append(s)
        probs.append(sigmoid(s))
    return ForwardTrace(activations, pres, probs, bias=w.shape.bias)


def expected_activation(w: WeightStack, l: int, h_prev) -> np.ndarray:
    """E[H^l | H^{l-1}] = 2σ(H^{l-1}W^l) - 1"""
    return 2.0 * sigmoid(pre_activation(w, l, h_prev)) - 1.0


def layer_log_prob(w: WeightStack, l: int, h_prev, h_l) -> np.ndarray:
    """log π_l(H^{l-1}, H^l) = Σ_i log σ(h_i s_i)，每列一個值"""
    s = pre_activation(w, l, h_prev)
    h = as_mat(h_l)
    if h.shape != s.shape:
        raise DimensionError(f"layer {l} output", h.shape, s.shape)
    if np.any(np.abs(h) != 1.0):
        raise DomainError("layer_log_prob: H^l 必須在 {-1,+1}")
    return log_sigmoid(h * s).sum(axis=1)


# ==================== JSON ====================

def save_weights(w: WeightStack, path: str) -> None:
    """儲存權重 JSON"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(w.to_dict(), f)
    logger.info(f"權重已儲存: {path}")


def load_weights(path: str) -> WeightStack:
    """讀取權重 JSON"""
    with open(path, 'r', encoding='utf-8') as f:
        return WeightStack.from_dict(json.load(f))
