#!/usr/bin/env python3
"""
數值基礎模組
Numerics: stable logistic functions, checked matrix ops, seeded random streams

矩陣一律是 float64 的 numpy 陣列，採列向量慣例 (H^{l-1} 為一列，
前置活化 S^l = H^{l-1} W^l)。
"""

import logging
from typing import Optional, Sequence, Union

import numpy as np

from .exceptions import DimensionError, DomainError, NumericalError

logger = logging.getLogger(__name__)

Real = Union[float, np.ndarray]


# ==================== Logistic ====================

def sigmoid(s: Real) -> Real:
    """σ(s) = 1/(1+exp(-s))，依正負號分開計算避免溢位"""
    s = np.asarray(s, dtype=np.float64)
    z = np.exp(-np.abs(s))
    out = np.where(s >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return out if out.ndim else float(out)


def sigmoid_prime(s: Real) -> Real:
    """σ'(s) = σ(s)(1-σ(s))"""
    p = sigmoid(s)
    return p * (1.0 - p)


def log_sigmoid(s: Real) -> Real:
    """log σ(s)"""
    s = np.asarray(s, dtype=np.float64)
    out = -np.logaddexp(0.0, -s)
    return out if out.ndim else float(out)


# ==================== 矩陣運算 ====================

def as_mat(a) -> np.ndarray:
    """轉成 2D float64；一維視為單列"""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 0:
        return m.reshape(1, 1)
    if m.ndim == 1:
        return m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError("as_mat", m.shape, ("rows", "cols"))
    return m


def _finite(op: str, out: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"{op}: 結果含 NaN/Inf")
    return out


def matmul(a, b) -> np.ndarray:
    a, b = as_mat(a), as_mat(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)
    return _finite("matmul", a @ b)


def hadamard(a, b) -> np.ndarray:
    a, b = as_mat(a), as_mat(b)
    if a.shape != b.shape:
        raise DimensionError("hadamard", a.shape, b.shape)
    return _finite("hadamard", a * b)


def transpose(a) -> np.ndarray:
    return as_mat(a).T.copy()


def row_sum(a) -> np.ndarray:
    """每列加總，回傳直行 (等於 M·k)"""
    a = as_mat(a)
    return _finite("row_sum", a.sum(axis=1, keepdims=True))


def scale(a, c: float) -> np.ndarray:
    return _finite("scale", as_mat(a) * float(c))


def add(a, b) -> np.ndarray:
    a = as_mat(a)
    if np.isscalar(b):
        return _finite("add", a + float(b))
    b = as_mat(b)
    if a.shape != b.shape:
        raise DimensionError("add", a.shape, b.shape)
    return _finite("add", a + b)


# ==================== 亂數串流 ====================

class RandomStream:
    """可重播的亂數串流

    Philox4x64-10 (counter-based)，key 為 SeedSequence(seed, spawn_key=path) 產生的
    兩個 uint64，counter 從 1 開始；random() = (uint64 >> 11)·2⁻⁵³。
    同一 (seed, path) 在任何平台都得到相同序列。不可多執行緒共用。
    """

    def __init__(self, seed: int, path: Sequence[int] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(int(p) for p in path)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def derive(self, *path: int) -> "RandomStream":
        """衍生子串流，key = (seed, *self.path, *path)"""
        return RandomStream(self.seed, self.path + tuple(path))

    def random(self, size=None):
        """[0,1) 均勻分布"""
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None):
        u = self._gen.random(size)
        return low + (high - low) * u

    def bernoulli_pm1(self, p: Real) -> Real:
        """以機率 p 回傳 +1，否則 -1；每個元素恰好消耗一次抽樣"""
        p_arr = np.asarray(p, dtype=np.float64)
        if np.any(~np.isfinite(p_arr)) or np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
            raise DomainError(f"bernoulli_pm1: p 必須在 [0,1]，收到 {p}")
        u = self._gen.random(p_arr.shape if p_arr.ndim else None)
        out = np.where(u < p_arr, 1.0, -1.0)
        return out if out.ndim else float(out)

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, path={self.path})"


def bernoulli_pm1(p: Real, rng: RandomStream) -> Real:
    return rng.bernoulli_pm1(p)


def check_finite(arrays: Sequence[np.ndarray]) -> Optional[int]:
    """回傳第一個含非有限值的索引，全部有限則 None"""
    for i, a in enumerate(arrays):
        if not np.all(np.isfinite(a)):
            return i
    return None
