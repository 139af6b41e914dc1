#!/usr/bin/env python3
"""
實驗執行模組
Experiment harness: training loop, metrics CSV, checkpoints, multi-seed summary

每一步：取樣一批狀態 → 前向取樣 → 取得獎勵 → 規則更新 (批次平均) →
正則化 → 優化器 → 記錄。第 step 步的亂數串流是 RandomStream(seed).derive(step)，
初始化使用 derive(0)，因此從檢查點續跑與一次跑完結果完全相同。
"""

import json
import logging
import os
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from .config import ExperimentConfig
from .envs import SingleStepEnv, make_env
from .exceptions import ConfigError, DimensionError, NonFiniteWeightError
from .network import WeightStack, forward_sample, init_weights
from .numerics import RandomStream, check_finite
from .optim import Optimizer
from .rules import apply_regularization, compute_updates

logger = logging.getLogger(__name__)

# 續跑時必須一致的欄位
_RESUME_KEYS = ('env', 'hidden_sizes', 'bias', 'init_scale', 'rule', 'optimizer',
                'batch_size', 'seed', 'window')


class RunMetrics:
    """每步一列：step, samples, batch_reward, running_avg, wnorm_1…wnorm_L"""

    def __init__(self, num_layers: int):
        self.num_layers = num_layers
        self.columns = ['step', 'samples', 'batch_reward', 'running_avg'] + \
            [f'wnorm_{l}' for l in range(1, num_layers + 1)]
        self._rows: List[list] = []

    def append(self, step: int, samples: int, batch_reward: float, running_avg: float,
               norms: Sequence[float]) -> None:
        if len(norms) != self.num_layers:
            raise DimensionError("RunMetrics.append", (len(norms),), (self.num_layers,))
        self._rows.append([step, samples, batch_reward, running_avg] + list(norms))

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self._rows, columns=self.columns)
        return df.astype({'step': 'int64', 'samples': 'int64'})

    @property
    def final_running_avg(self) -> float:
        return float(self._rows[-1][3]) if self._rows else float('nan')

    def to_csv(self, path: str) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self.frame.to_csv(path, index=False, lineterminator='\n')
        logger.info(f"指標已寫入: {path} ({len(self)} 列)")


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: RunMetrics
    weights: WeightStack
    optimizer: Optimizer
    step: int


# ==================== 檢查點 ====================

def save_checkpoint(path: str, cfg: ExperimentConfig, step: int, w: WeightStack,
                    optimizer: Optimizer, recent_rewards: Iterable[float]) -> None:
    """寫入檢查點 JSON"""
    data = {
        'config': cfg.to_dict(),
        'step': step,
        'weights': w.to_dict(),
        'optimizer': optimizer.state_dict(),
        'rng': {'seed': cfg.seed, 'next_step': step + 1},
        'recent_rewards': [float(r) for r in recent_rewards],
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + '.tmp'
    with open(tmp, 'w', encoding='utf-8') as f:
        json.dump(data, f)
    os.replace(tmp, path)
    logger.info(f"💾 檢查點已儲存: {path} (step {step})")


def load_checkpoint(path: str) -> Dict:
    if not os.path.exists(path):
        raise ConfigError(f"找不到檢查點: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def _check_resumable(cfg: ExperimentConfig, checkpoint: Dict) -> None:
    saved = checkpoint['config']
    current = cfg.to_dict()
    diff = [k for k in _RESUME_KEYS if saved.get(k) != current.get(k)]
    if diff:
        raise ConfigError(f"檢查點設定與目前設定不一致: {diff}")
    if checkpoint['step'] > cfg.num_steps:
        raise ConfigError(f"檢查點 step {checkpoint['step']} 已超過總步數 {cfg.num_steps}")


# ==================== 訓練 ====================

def run_experiment(cfg: ExperimentConfig, resume: Optional[str] = None,
                   env: Optional[SingleStepEnv] = None) -> RunResult:
    """執行一次訓練；resume 為檢查點路徑"""
    env = env or make_env(cfg.env, cfg.base_dir)
    shape = cfg.net_shape(env.state_dim)
    root = RandomStream(cfg.seed)

    w = init_weights(shape, cfg.init_scale, root.derive(0))
    optimizer = Optimizer(cfg.optimizer, w)
    recent = deque(maxlen=cfg.window)
    start = 0
    if resume:
        checkpoint = load_checkpoint(resume)
        _check_resumable(cfg, checkpoint)
        w = WeightStack.from_dict(checkpoint['weights'])
        optimizer.load_state_dict(checkpoint['optimizer'])
        recent.extend(checkpoint['recent_rewards'])
        start = int(checkpoint['step'])
        logger.info(f"從檢查點續跑: {resume} (step {start})")

    metrics = RunMetrics(shape.num_layers)
    saved_at = start if resume else None
    logger.info(f"🚀 開始訓練 {cfg.name}: {cfg.rule.kind} on {cfg.env}, "
                f"{shape.layer_sizes}, {cfg.num_steps} 步 × {cfg.batch_size}")

    for step in range(start + 1, cfg.num_steps + 1):
        # 每步一個串流，整個 batch 共用 (不是每個樣本各一個)
        rng = root.derive(step)
        states = env.sample_states(rng, cfg.batch_size)
        trace = forward_sample(w, states, rng)
        rewards = env.rewards(states, trace.actions, rng)

        updates = compute_updates(cfg.rule, trace, rewards, w, step_size=optimizer.lr)
        updates = apply_regularization(updates, w, cfg.rule.reg_weights)
        w = optimizer.step(w, updates)

        bad = check_finite(w.layers)
        if bad is not None:
            raise NonFiniteWeightError(step, bad + 1)

        batch_reward = float(np.mean(rewards))
        recent.append(batch_reward)
        running_avg = float(np.mean(recent))
        metrics.append(step, step * cfg.batch_size, batch_reward, running_avg, w.norms())

        if logger.isEnabledFor(logging.DEBUG):
            norms = ', '.join(f"{np.linalg.norm(d):.3e}" for d in updates.deltas)
            logger.debug(f"step {step} 更新量範數: {norms}")
        if cfg.log_interval and step % cfg.log_interval == 0:
            logger.info(f"step {step}: samples={step * cfg.batch_size}, "
                        f"batch_reward={batch_reward:.4f}, running_avg={running_avg:.4f}")
        if cfg.checkpoint_interval and step % cfg.checkpoint_interval == 0:
            save_checkpoint(cfg.checkpoint_path, cfg, step, w, optimizer, recent)
            saved_at = step

    end = max(start, cfg.num_steps)
    if cfg.checkpoint_path and saved_at != end:
        save_checkpoint(cfg.checkpoint_path, cfg, end, w, optimizer, recent)
    if cfg.output:
        metrics.to_csv(cfg.output)
    logger.info(f"✅ 訓練完成 {cfg.name}: running_avg={metrics.final_running_avg:.4f}")
    return RunResult(cfg, metrics, w, optimizer, end)


def run_matrix(configs: Sequence[ExperimentConfig], seeds: Sequence[int],
               out_dir: Optional[str] = None) -> pd.DataFrame:
    """每個設定 × 每個 seed 各跑一次，彙整 running_avg 的平均與標準差 (母體)"""
    if not seeds:
        raise ConfigError("至少需要一個 seed")
    frames = []
    for index, cfg in enumerate(configs):
        lengths = set()
        for seed in seeds:
            output = os.path.join(out_dir, f"{cfg.name}_seed{seed}.csv") if out_dir else None
            run_cfg = cfg.with_overrides(seed=int(seed), output=output, checkpoint_path=None,
                                         checkpoint_interval=0)
            df = run_experiment(run_cfg).metrics.frame
            lengths.add(len(df))
            frames.append(df[['step', 'samples', 'running_avg']].assign(
                index=index, config=cfg.name, seed=int(seed)))
        if len(lengths) > 1:
            raise DimensionError("run_matrix", tuple(sorted(lengths)), (min(lengths),))

    columns = ['index', 'config', 'step', 'samples', 'mean', 'std']
    if not frames:
        return pd.DataFrame(columns=columns)
    runs = pd.concat(frames, ignore_index=True)
    grouped = runs.groupby(['index', 'config', 'step', 'samples'], sort=True)['running_avg']
    summary = pd.DataFrame({'mean': grouped.mean(), 'std': grouped.std(ddof=0)}).reset_index()
    summary = summary[columns]
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, 'summary.csv')
        summary.to_csv(path, index=False, lineterminator='\n')
        logger.info(f"彙整結果已寫入: {path}")
    return summary
