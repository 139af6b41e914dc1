#!/usr/bin/env python3
"""
驗證套件
Verification suite: exact-oracle checks behind the `verify` command

每個檢查回傳 {name, passed, measured, tolerance}，整份報告可直接寫成 JSON。
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from .envs import random_toy_env
from .network import NetShape, WeightStack, forward_sample, init_weights
from .numerics import RandomStream
from .oracle import (DEFAULT_BUDGET, SPREAD_LIMIT, EnumBudget, cosine, exact_expected_update,
                     exact_gradient, exact_score_gradient, lemma1_expansion, lemma2_expansion,
                     relative_error, theorem1_scaling_check)
from .rules import (RuleSpec, arp_1, classification_1, reinforce_1, ste_backprop, wm_direct,
                    wm_reinforce)

logger = logging.getLogger(__name__)

# 論文實驗的網路 37 → 64 → 32 → 1
MUX5_SHAPE = NetShape(37, (64, 32))
MUX5_PARAM_COUNT = 4545


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> Dict:
        return asdict(self)


def _random_net(sizes: Tuple[int, ...], rng: RandomStream, scale: float = 0.5) -> WeightStack:
    return init_weights(NetShape.from_sizes(sizes), scale, rng)


# ==================== 個別檢查 ====================

def check_arp_identity(seed: int, samples: int = 10_000) -> CheckResult:
    """A_{R-P} = (1-λ)·½·REINFORCE(b=-1) + λ·classification"""
    rng = RandomStream(seed).derive(10)
    worst = 0.0
    for _ in range(samples):
        x = rng.uniform(-1.0, 1.0, size=3)
        w = rng.uniform(-2.0, 2.0, size=3)
        a = rng.bernoulli_pm1(0.5)
        r = rng.bernoulli_pm1(0.5)
        lam = float(rng.random())
        lhs = arp_1(x, a, r, w, lam)
        rhs = (1.0 - lam) * 0.5 * reinforce_1(x, a, r, -1.0, w) + lam * classification_1(x, a, r, w)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return CheckResult("arp_identity", worst <= 1e-12, worst, 1e-12)


def check_global_reinforce_unbiased(seed: int, budget: EnumBudget, nets: int = 5) -> CheckResult:
    """E[global REINFORCE 更新] = 2·∇E[R] (單一單元的因子 2)"""
    worst = 0.0
    for k in range(nets):
        rng = RandomStream(seed).derive(20, k)
        env = random_toy_env(2, rng.derive(0))
        w = _random_net((2, 2, 1), rng.derive(1))
        update = exact_expected_update(w, env, RuleSpec("global_reinforce"), budget=budget)
        grad = exact_gradient(w, env, method="analytic", budget=budget)
        worst = max(worst, max(float(np.max(np.abs(u - 2.0 * g))) for u, g in zip(update, grad)))
    return CheckResult("global_reinforce_unbiased", worst < 1e-10, worst, 1e-10)


def _ratio_spread(a: np.ndarray, b: np.ndarray) -> float:
    mask = np.abs(b) > 1e-12 * max(np.max(np.abs(b)), 1e-300)
    if not np.any(mask):
        return 0.0
    ratios = a[mask] / b[mask]
    return float((ratios.max() - ratios.min()) / abs(ratios.mean()))


def check_direct_matches_ste(seed: int, traces: int = 200) -> List[CheckResult]:
    """wm_direct 與 STE 每層只差一個常數；STE 與矩陣連乘展開完全相同"""
    spread, gap = 0.0, 0.0
    for k in range(traces):
        rng = RandomStream(seed).derive(30, k)
        w = _random_net((3, 4, 2, 1), rng.derive(0), scale=1.0)
        x = rng.bernoulli_pm1(np.full(3, 0.5))
        trace = forward_sample(w, x, rng.derive(1))
        r = float(rng.uniform(-1.0, 1.0))
        direct = wm_direct(trace, r, w)
        ste = ste_backprop(trace, r, w)
        expanded = lemma2_expansion(trace, r, w)
        for d, s, e in zip(direct.deltas, ste.deltas, expanded.deltas):
            spread = max(spread, _ratio_spread(d, s))
            gap = max(gap, float(np.max(np.abs(s - e))))
    return [CheckResult("wm_direct_ratio_constant", spread < 1e-9, spread, 1e-9),
            CheckResult("ste_equals_expansion", gap <= 1e-12, gap, 1e-12)]


def check_reinforce_matches_expansion(seed: int, traces: int = 100) -> CheckResult:
    """wm_reinforce 與閉式展開方向一致"""
    worst = 0.0
    for k in range(traces):
        rng = RandomStream(seed).derive(40, k)
        w = _random_net((2, 2, 1), rng.derive(0), scale=1.0)
        trace = forward_sample(w, rng.bernoulli_pm1(np.full(2, 0.5)), rng.derive(1))
        r = float(rng.uniform(-1.0, 1.0))
        wm = wm_reinforce(trace, r, w)
        expanded = lemma1_expansion(trace, r, w)
        for a, b in zip(wm.deltas, expanded.deltas):
            if np.any(a) or np.any(b):
                worst = max(worst, 1.0 - cosine(a, b))
    return CheckResult("wm_reinforce_direction", worst <= 1e-10, worst, 1e-10)


def check_scaling(seed: int, budget: EnumBudget, seeds: int = 5) -> List[CheckResult]:
    """小權重下 E[ΔW_wm] 沿梯度方向，偏差為二階"""
    min_cos, bounded = 1.0, True
    worst_spread = 0.0
    for k in range(seeds):
        rng = RandomStream(seed).derive(50, k)
        env = random_toy_env(2, rng)
        report = theorem1_scaling_check(NetShape(2, (2,)), env, (0.2, 0.1, 0.05),
                                        seed=seed * 100 + k, budget=budget)
        bounded = bounded and report['bounded']
        worst_spread = max(worst_spread, report['spread'])
        for layer in report['layers']:
            min_cos = min(min_cos, layer['cosine'][-1])
    return [CheckResult("wm_reinforce_cosine_small_norm", min_cos > 0.99, min_cos, 0.99),
            CheckResult("wm_reinforce_second_order", bounded, worst_spread, SPREAD_LIMIT)]


def check_gradient_agreement(seed: int, budget: EnumBudget) -> CheckResult:
    """中央差分與解析梯度一致"""
    worst = 0.0
    for k, sizes in enumerate([(2, 2, 1), (3, 3, 2, 1)]):
        rng = RandomStream(seed).derive(60, k)
        env = random_toy_env(sizes[0], rng.derive(0))
        w = _random_net(sizes, rng.derive(1))
        fd = exact_gradient(w, env, method="finite_difference", budget=budget)
        an = exact_gradient(w, env, method="analytic", budget=budget)
        worst = max(worst, relative_error(fd, an))
    return CheckResult("gradient_fd_vs_analytic", worst < 1e-6, worst, 1e-6)


def check_score_forms(seed: int, budget: EnumBudget) -> CheckResult:
    """三種條件化的 score function 期望都等於梯度"""
    worst = 0.0
    for k, sizes in enumerate([(2, 2, 1), (3, 3, 2, 1)]):
        rng = RandomStream(seed).derive(70, k)
        env = random_toy_env(sizes[0], rng.derive(0))
        w = _random_net(sizes, rng.derive(1))
        reference = exact_score_gradient(w, env, "layer", budget)
        for condition in ("state", "layer_input"):
            other = exact_score_gradient(w, env, condition, budget)
            worst = max(worst, max(float(np.max(np.abs(a - b))) for a, b in zip(other, reference)))
    return CheckResult("score_function_forms", worst < 1e-10, worst, 1e-10)


def check_param_count() -> CheckResult:
    count = MUX5_SHAPE.param_count
    return CheckResult("param_count", count == MUX5_PARAM_COUNT, float(count), 0.0,
                       detail=f"expected {MUX5_PARAM_COUNT}")


# ==================== 主流程 ====================

def run_verification(budget: EnumBudget = DEFAULT_BUDGET, seed: int = 0) -> Dict:
    """依序執行所有檢查並回傳報告"""
    steps: List[Callable[[], object]] = [
        lambda: check_arp_identity(seed),
        lambda: check_global_reinforce_unbiased(seed, budget),
        lambda: check_direct_matches_ste(seed),
        lambda: check_reinforce_matches_expansion(seed),
        lambda: check_scaling(seed, budget),
        lambda: check_gradient_agreement(seed, budget),
        lambda: check_score_forms(seed, budget),
        check_param_count,
    ]
    results: List[CheckResult] = []
    for step in steps:
        out = step()
        for result in (out if isinstance(out, list) else [out]):
            status = "通過" if result.passed else "失敗"
            logger.info(f"檢查 {result.name}: {status} (measured={result.measured:.3e}, tol={result.tolerance:g})")
            results.append(result)
    passed = all(r.passed for r in results)
    return {
        'seed': seed,
        'budget': asdict(budget),
        'passed': passed,
        'checks': [r.to_dict() for r in results],
    }
