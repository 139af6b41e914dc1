#!/usr/bin/env python3
"""
環境模組 - 單步 MDP
Single-step MDP environments: k-bit multiplexer and enumerable toy tables

狀態取樣 → 動作 A ∈ {-1,+1} → 獎勵。狀態採雙極 {-1,+1} 編碼，
多工器的位址位元 0 為最高位。
"""

import itertools
import json
import logging
import os
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import BudgetExceededError, ConfigError, DomainError
from .numerics import RandomStream, as_mat

logger = logging.getLogger(__name__)

# (獎勵值, 機率) 每個都是 (B,) 陣列
RewardOutcomes = List[Tuple[np.ndarray, np.ndarray]]


class SingleStepEnv(ABC):
    """單步環境基底"""

    state_dim: int = 0

    @abstractmethod
    def sample_states(self, rng: RandomStream, batch: int) -> np.ndarray:
        """取樣 (batch, n) 個狀態"""

    @abstractmethod
    def reward_function(self, states, actions) -> np.ndarray:
        """R(x,a) = E[R | X=x, A=a]"""

    def rewards(self, states, actions, rng: Optional[RandomStream] = None) -> np.ndarray:
        """取樣獎勵；預設為確定性 R(x,a)"""
        return self.reward_function(states, actions)

    def reward_outcomes(self, states, actions) -> RewardOutcomes:
        """獎勵分布，供精確期望值使用"""
        r = self.reward_function(states, actions)
        return [(r, np.ones_like(r))]

    def reward(self, state, action: float) -> float:
        return float(self.rewards(as_mat(state), np.array([action]))[0])

    def enumerate_states(self, max_states: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """列出所有狀態與機率 (有限狀態空間才支援)"""
        raise DomainError(f"{type(self).__name__} 無法窮舉狀態")

    def _check_states(self, states) -> np.ndarray:
        s = as_mat(states)
        if s.shape[1] != self.state_dim:
            raise DomainError(f"狀態維度應為 {self.state_dim}，收到 {s.shape[1]}")
        return s


# ==================== 多工器 ====================

def mux_state_dim(k: int) -> int:
    return k + 2 ** k


def _mux_desired(k: int, states: np.ndarray) -> np.ndarray:
    if np.any(np.abs(states) != 1.0):
        raise DomainError("多工器狀態必須是 ±1")
    bits = (states[:, :k] + 1.0) / 2.0
    weights = 2 ** np.arange(k - 1, -1, -1)
    address = (bits @ weights).astype(np.int64)
    return states[np.arange(states.shape[0]), k + address]


def mux_sample_state(k: int, rng: RandomStream) -> np.ndarray:
    """每個位元 i.i.d. 均勻 ±1"""
    if k < 1:
        raise DomainError(f"k 必須 ≥ 1: {k}")
    return rng.bernoulli_pm1(np.full(mux_state_dim(k), 0.5))


def mux_reward(k: int, state, action: float) -> float:
    """動作等於被定址的資料位元時 +1，否則 -1"""
    s = as_mat(state)
    if s.shape != (1, mux_state_dim(k)):
        raise DomainError(f"k={k} 的狀態維度應為 {mux_state_dim(k)}，收到 {s.shape[1]}")
    if action not in (-1, 1):
        raise DomainError(f"動作必須是 ±1: {action}")
    return 1.0 if _mux_desired(k, s)[0] == action else -1.0


class Multiplexer(SingleStepEnv):
    """k-bit 多工器 (k 位址位元 + 2^k 資料位元)"""

    def __init__(self, k: int):
        if k < 1:
            raise DomainError(f"k 必須 ≥ 1: {k}")
        self.k = int(k)
        self.state_dim = mux_state_dim(self.k)

    def sample_states(self, rng: RandomStream, batch: int) -> np.ndarray:
        return rng.bernoulli_pm1(np.full((batch, self.state_dim), 0.5))

    def desired(self, states) -> np.ndarray:
        return _mux_desired(self.k, self._check_states(states))

    def reward_function(self, states, actions) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.float64).reshape(-1)
        return np.where(self.desired(states) == actions, 1.0, -1.0)

    def enumerate_states(self, max_states: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        count = 2 ** self.state_dim
        if max_states is not None and count > max_states:
            raise BudgetExceededError(f"多工器 k={self.k} 有 {count} 個狀態，超過上限 {max_states}")
        states = np.array(list(itertools.product((-1.0, 1.0), repeat=self.state_dim)))
        return states, np.full(count, 1.0 / count)

    def __repr__(self) -> str:
        return f"Multiplexer(k={self.k})"


# ==================== 小型表格環境 ====================

class ToyEnv(SingleStepEnv):
    """以表格定義的有限環境：每列 (state, probability, r_plus, r_minus)"""

    def __init__(self, rows: Sequence[Dict], binary_rewards: bool = False):
        if not rows:
            raise ConfigError("toy 表格至少要有一列")
        self.states = np.array([row['state'] for row in rows], dtype=np.float64).reshape(len(rows), -1)
        self.probs = np.array([row['probability'] for row in rows], dtype=np.float64)
        self.r_plus = np.array([row['r_plus'] for row in rows], dtype=np.float64)
        self.r_minus = np.array([row['r_minus'] for row in rows], dtype=np.float64)
        self.state_dim = self.states.shape[1]
        self.binary_rewards = bool(binary_rewards)
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ConfigError(f"狀態機率總和必須為 1 (誤差 1e-12)，目前 {self.probs.sum()!r}")
        if self.binary_rewards and (np.any(np.abs(self.r_plus) > 1) or np.any(np.abs(self.r_minus) > 1)):
            raise ConfigError("binary_rewards 時 R(x,a) 必須在 [-1,1]")
        self._index = {tuple(s): i for i, s in enumerate(self.states)}
        self._cdf = np.cumsum(self.probs)

    def _lookup(self, states) -> np.ndarray:
        s = self._check_states(states)
        try:
            return np.array([self._index[tuple(row)] for row in s], dtype=np.int64)
        except KeyError as e:
            raise DomainError(f"狀態不在表格中: {e.args[0]}") from None

    def sample_states(self, rng: RandomStream, batch: int) -> np.ndarray:
        u = rng.random(batch)
        idx = np.minimum(np.searchsorted(self._cdf, u, side='right'), len(self.probs) - 1)
        return self.states[idx].copy()

    def reward_function(self, states, actions) -> np.ndarray:
        idx = self._lookup(states)
        actions = np.asarray(actions, dtype=np.float64).reshape(-1)
        return np.where(actions > 0, self.r_plus[idx], self.r_minus[idx])

    def rewards(self, states, actions, rng: Optional[RandomStream] = None) -> np.ndarray:
        mean = self.reward_function(states, actions)
        if not self.binary_rewards:
            return mean
        if rng is None:
            raise ConfigError("binary_rewards 環境取樣獎勵需要 rng")
        return rng.bernoulli_pm1((1.0 + mean) / 2.0)

    def reward_outcomes(self, states, actions) -> RewardOutcomes:
        mean = self.reward_function(states, actions)
        if not self.binary_rewards:
            return [(mean, np.ones_like(mean))]
        ones = np.ones_like(mean)
        return [(ones, (1.0 + mean) / 2.0), (-ones, (1.0 - mean) / 2.0)]

    def enumerate_states(self, max_states: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        if max_states is not None and len(self.probs) > max_states:
            raise BudgetExceededError(f"表格有 {len(self.probs)} 個狀態，超過上限 {max_states}")
        return self.states.copy(), self.probs.copy()

    def __repr__(self) -> str:
        return f"ToyEnv(states={len(self.probs)}, dim={self.state_dim})"


def toy_env(table) -> ToyEnv:
    """由表格建立環境；table 可以是列的清單或 {"rows": [...], "binary_rewards": ...}"""
    if isinstance(table, dict):
        return ToyEnv(table.get('rows', []), binary_rewards=table.get('binary_rewards', False))
    return ToyEnv(list(table))


def load_toy_env(path: str) -> ToyEnv:
    if not os.path.exists(path):
        raise ConfigError(f"找不到 toy 表格: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            table = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"toy 表格 JSON 格式錯誤 {path}: {e}") from e
    return toy_env(table)


def xor_table() -> Dict:
    """兩位元 XOR：期望動作為 x1·x2"""
    rows = []
    for x1, x2 in itertools.product((-1.0, 1.0), repeat=2):
        rows.append({'state': [x1, x2], 'probability': 0.25,
                     'r_plus': x1 * x2, 'r_minus': -x1 * x2})
    return {'rows': rows}


def random_toy_env(n_bits: int, rng: RandomStream, binary_rewards: bool = False) -> ToyEnv:
    """所有 ±1 狀態均勻出現、R(x,a) 均勻取自 [-1,1] 的隨機表格"""
    rows = []
    states = list(itertools.product((-1.0, 1.0), repeat=n_bits))
    for s in states:
        r_plus, r_minus = rng.uniform(-1.0, 1.0, size=2)
        rows.append({'state': list(s), 'probability': 1.0 / len(states),
                     'r_plus': float(r_plus), 'r_minus': float(r_minus)})
    return ToyEnv(rows, binary_rewards=binary_rewards)


def make_env(spec: str, base_dir: Optional[str] = None) -> SingleStepEnv:
    """解析 "mux:k=5" 或 "toy:<path>" """
    kind, _, arg = spec.partition(':')
    if kind == 'mux':
        key, _, value = arg.partition('=')
        if key != 'k' or not value.isdigit():
            raise ConfigError(f"多工器設定格式應為 mux:k=<int>，收到 {spec!r}")
        return Multiplexer(int(value))
    if kind == 'toy':
        if not arg:
            raise ConfigError("toy 環境需要表格路徑")
        path = arg if os.path.isabs(arg) or base_dir is None else os.path.join(base_dir, arg)
        logger.info(f"載入 toy 表格: {path}")
        return load_toy_env(path)
    raise ConfigError(f"未知的環境設定: {spec!r}")
