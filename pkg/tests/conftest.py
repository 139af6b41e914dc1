"""
測試共用設定
Shared pytest fixtures
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from wmnet.envs import random_toy_env, toy_env, xor_table
from wmnet.network import NetShape, WeightStack, init_weights
from wmnet.numerics import RandomStream

XOR_C = 20.0


@pytest.fixture
def rng():
    return RandomStream(1234)


@pytest.fixture
def xor_env():
    return toy_env(xor_table())


@pytest.fixture
def xor_weights():
    """2-2-1 網路，動作 = x1·x2 (飽和)"""
    c = XOR_C
    shape = NetShape(2, (2,))
    w1 = np.array([[c, -c], [c, -c], [-c, -c]])
    w2 = np.array([[c], [c], [c]])
    return WeightStack(shape, [w1, w2])


@pytest.fixture
def small_net():
    """隨機 2-2-1 網路，權重均勻取自 [-0.5, 0.5]"""
    return init_weights(NetShape(2, (2,)), 0.5, RandomStream(7))


@pytest.fixture
def deep_net():
    """隨機 3-3-2-1 網路"""
    return init_weights(NetShape(3, (3, 2)), 0.5, RandomStream(8))


@pytest.fixture
def table2():
    return random_toy_env(2, RandomStream(11))


@pytest.fixture
def table3():
    return random_toy_env(3, RandomStream(12))
