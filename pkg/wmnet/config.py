#!/usr/bin/env python3
"""
設定模組
Experiment configuration: JSON loading, presets and validation

設定檔一律是 JSON (utf-8)。檔內的相對路徑以設定檔所在目錄為準。
預設的 presets 檔是專案根目錄的 config.json，可用環境變數 WMNET_CONFIG 指定其他檔案。
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from .exceptions import ConfigError
from .network import NetShape
from .optim import OptimizerSpec
from .rules import RuleSpec

logger = logging.getLogger(__name__)

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_CONFIG_PATH = os.path.join(ROOT_DIR, 'config.json')

_FIELDS = {
    'name', 'env', 'hidden_sizes', 'bias', 'init_scale', 'rule', 'optimizer', 'batch_size',
    'total_samples', 'seed', 'window', 'output', 'checkpoint_interval', 'checkpoint_path',
    'log_interval',
}


@dataclass
class ExperimentConfig:
    """一次訓練的完整設定"""
    name: str = "experiment"
    env: str = "mux:k=5"
    hidden_sizes: Tuple[int, ...] = (64, 32)
    bias: bool = True
    init_scale: float = 0.1
    rule: RuleSpec = field(default_factory=RuleSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    batch_size: int = 128
    total_samples: int = 40_000_000
    seed: int = 0
    window: int = 100
    output: Optional[str] = None
    checkpoint_interval: int = 0
    checkpoint_path: Optional[str] = None
    log_interval: int = 1000
    base_dir: Optional[str] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.hidden_sizes = tuple(int(m) for m in self.hidden_sizes)
        if self.batch_size < 1:
            raise ConfigError(f"batch_size 必須 ≥ 1: {self.batch_size}")
        if self.total_samples < 0 or self.total_samples % self.batch_size:
            raise ConfigError(f"total_samples ({self.total_samples}) 必須是 batch_size ({self.batch_size}) 的非負倍數")
        if self.window < 1:
            raise ConfigError(f"window 必須 ≥ 1: {self.window}")
        if self.checkpoint_interval < 0 or self.log_interval < 0:
            raise ConfigError("checkpoint_interval / log_interval 必須 ≥ 0")
        if self.checkpoint_interval and not self.checkpoint_path:
            raise ConfigError("設定 checkpoint_interval 時需要 checkpoint_path")
        if any(m < 1 for m in self.hidden_sizes):
            raise ConfigError(f"隱藏層大小必須 ≥ 1: {self.hidden_sizes}")
        if self.init_scale < 0:
            raise ConfigError(f"init_scale 必須 ≥ 0: {self.init_scale}")
        betas = self.rule.reg_weights
        if betas and len(betas) != len(self.hidden_sizes) + 1:
            raise ConfigError(f"reg_weights 需要 {len(self.hidden_sizes) + 1} 個值，收到 {len(betas)}")

    @property
    def num_steps(self) -> int:
        return self.total_samples // self.batch_size

    def net_shape(self, input_dim: int) -> NetShape:
        return NetShape(input_dim, self.hidden_sizes, bias=self.bias)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict:
        return {
            'name': self.name,
            'env': self.env,
            'hidden_sizes': list(self.hidden_sizes),
            'bias': self.bias,
            'init_scale': self.init_scale,
            'rule': self.rule.to_dict(),
            'optimizer': self.optimizer.to_dict(),
            'batch_size': self.batch_size,
            'total_samples': self.total_samples,
            'seed': self.seed,
            'window': self.window,
            'output': self.output,
            'checkpoint_interval': self.checkpoint_interval,
            'checkpoint_path': self.checkpoint_path,
            'log_interval': self.log_interval,
        }

    @classmethod
    def from_dict(cls, d: Dict, base_dir: Optional[str] = None,
                  presets: Optional[Dict[str, Dict]] = None) -> "ExperimentConfig":
        """d 可以用 "preset" 指定起點，其餘欄位覆寫"""
        d = dict(d)
        seen = set()
        while 'preset' in d:
            name = d.pop('preset')
            if name in seen:
                raise ConfigError(f"preset 循環引用: {name!r}")
            seen.add(name)
            presets = presets if presets is not None else _raw_presets(default_config_path())
            if name not in presets:
                raise ConfigError(f"找不到 preset {name!r}")
            merged = dict(presets[name])
            merged.setdefault('name', name)
            merged.update(d)
            d = merged
        unknown = set(d) - _FIELDS
        if unknown:
            raise ConfigError(f"experiment 設定有未知欄位: {sorted(unknown)}")
        try:
            values = dict(d)
            values['rule'] = RuleSpec.from_dict(d.get('rule', {}))
            values['optimizer'] = OptimizerSpec.from_dict(d.get('optimizer', {}))
            values['hidden_sizes'] = tuple(d.get('hidden_sizes', (64, 32)))
            for key in ('batch_size', 'total_samples', 'seed', 'window',
                        'checkpoint_interval', 'log_interval'):
                if key in values:
                    values[key] = int(values[key])
            for key in ('output', 'checkpoint_path'):
                if values.get(key) and base_dir and not os.path.isabs(values[key]):
                    values[key] = os.path.join(base_dir, values[key])
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"設定值型別錯誤: {e}") from e
        return cls(base_dir=base_dir, **values)


# ==================== 檔案 ====================

def default_config_path() -> str:
    return os.environ.get('WMNET_CONFIG', DEFAULT_CONFIG_PATH)


def load_config(path: Optional[str] = None) -> Dict:
    """讀取 JSON 設定檔 (原樣回傳)"""
    path = path or default_config_path()
    if not os.path.exists(path):
        raise ConfigError(f"找不到設定檔: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            config = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"設定檔 JSON 格式錯誤 {path}: {e}") from e
    logger.info(f"已載入設定: {path}")
    return config


def _raw_presets(path: str) -> Dict[str, Dict]:
    return load_config(path).get('presets', {})


def load_presets(path: Optional[str] = None) -> Dict[str, ExperimentConfig]:
    """所有 preset，依名稱"""
    path = path or default_config_path()
    raw = _raw_presets(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    presets = {}
    for name, d in raw.items():
        d = dict(d)
        d.setdefault('name', name)
        presets[name] = ExperimentConfig.from_dict(d, base_dir=base_dir, presets=raw)
    return presets


def get_preset(name: str, path: Optional[str] = None) -> ExperimentConfig:
    presets = load_presets(path)
    if name not in presets:
        raise ConfigError(f"找不到 preset {name!r}，可用: {', '.join(sorted(presets))}")
    return presets[name]


def load_experiments(path: str) -> List[ExperimentConfig]:
    """實驗設定檔：單一實驗，或 {"experiments": [...]}"""
    config = load_config(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    entries = config['experiments'] if 'experiments' in config else [config]
    if not entries:
        raise ConfigError(f"{path} 沒有任何實驗")
    return [ExperimentConfig.from_dict(d, base_dir=base_dir) for d in entries]


def load_section(section: str, path: Optional[str] = None) -> Dict:
    """讀取 presets 檔中的其他區段 (verify / logging)；檔案不存在時回傳空 dict"""
    path = path or default_config_path()
    if not os.path.exists(path):
        return {}
    return load_config(path).get(section, {})
