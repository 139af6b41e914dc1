#!/usr/bin/env python3
"""
Weight Maximization 實驗 - 命令列入口
Command line entry: train / verify / sweep / show-config

退出碼：0 成功、1 驗證失敗或執行中止、2 用法或設定錯誤
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from wmnet.checks import run_verification
from wmnet.config import (ExperimentConfig, default_config_path, get_preset, load_experiments,
                          load_presets, load_section)
from wmnet.exceptions import ConfigError, WMNetError
from wmnet.harness import run_experiment, run_matrix
from wmnet.oracle import EnumBudget

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def setup_logging(verbose: bool, presets_path: Optional[str]) -> None:
    """依 config.json 的 logging 區段設定等級，--verbose 改為 DEBUG"""
    try:
        level_name = load_section('logging', presets_path).get('level', 'INFO')
    except ConfigError:
        level_name = 'INFO'
    level = logging.DEBUG if verbose else getattr(logging, str(level_name).upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s'
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='wmnet', description='Weight Maximization 學習規則實驗')
    parser.add_argument('--verbose', '-v', action='store_true', help='顯示 DEBUG 訊息')
    parser.add_argument('--presets', help='presets 設定檔 (預設 config.json 或 $WMNET_CONFIG)')
    sub = parser.add_subparsers(dest='command', required=True)

    train = sub.add_parser('train', help='訓練一個設定')
    source = train.add_mutually_exclusive_group(required=True)
    source.add_argument('--config', help='實驗設定 JSON')
    source.add_argument('--preset', help='preset 名稱')
    train.add_argument('--seed', type=int, help='覆寫 seed')
    train.add_argument('--out', help='輸出 CSV 路徑')
    train.add_argument('--total-samples', type=int, help='覆寫總樣本數')
    train.add_argument('--checkpoint', help='檢查點路徑')
    train.add_argument('--checkpoint-interval', type=int, help='每 N 步存檔')
    train.add_argument('--resume', help='從檢查點續跑')

    verify = sub.add_parser('verify', help='執行精確驗證套件')
    verify.add_argument('--budget', help='預算，例如 hidden_bits=16,states=4096,joint=4194304')
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--report', help='JSON 報告輸出路徑 (預設印出)')

    sweep = sub.add_parser('sweep', help='多個 seed 執行並彙整')
    sweep_source = sweep.add_mutually_exclusive_group(required=True)
    sweep_source.add_argument('--config', help='實驗設定 JSON (可含 "experiments" 清單)')
    sweep_source.add_argument('--preset', action='append', help='preset 名稱 (可重複)')
    sweep.add_argument('--seeds', required=True, help='逗號分隔，例如 0,1,2,3,4')
    sweep.add_argument('--out-dir', default='results', help='輸出目錄')
    sweep.add_argument('--total-samples', type=int, help='覆寫總樣本數')

    show = sub.add_parser('show-config', help='列出 preset')
    show.add_argument('name', nargs='?', help='preset 名稱 (省略則列出全部)')
    return parser


def parse_budget(text: Optional[str], presets_path: Optional[str]) -> EnumBudget:
    """--budget 覆寫 config.json 的 verify 區段"""
    budget = EnumBudget.from_dict(load_section('verify', presets_path).get('budget', {}))
    if not text:
        return budget
    keys = {'hidden_bits': 'max_total_hidden_bits', 'states': 'max_states', 'joint': 'max_joint'}
    values = {
        'max_total_hidden_bits': budget.max_total_hidden_bits,
        'max_states': budget.max_states,
        'max_joint': budget.max_joint,
    }
    for item in text.split(','):
        key, _, value = item.partition('=')
        if key.strip() not in keys or not value.strip().isdigit():
            raise ConfigError(f"無法解析 --budget 項目: {item!r}")
        values[keys[key.strip()]] = int(value)
    return EnumBudget(**values)


def parse_seeds(text: str) -> List[int]:
    try:
        seeds = [int(s) for s in text.split(',') if s.strip()]
    except ValueError as e:
        raise ConfigError(f"無法解析 --seeds: {text!r}") from e
    if not seeds:
        raise ConfigError("--seeds 至少需要一個值")
    return seeds


def _with_total(cfg: ExperimentConfig, total: Optional[int]) -> ExperimentConfig:
    return cfg if total is None else cfg.with_overrides(total_samples=total)


# ==================== 子命令 ====================

def cmd_train(args) -> int:
    if args.preset:
        cfg = get_preset(args.preset, args.presets)
    else:
        configs = load_experiments(args.config)
        if len(configs) != 1:
            raise ConfigError(f"train 只接受單一實驗，{args.config} 有 {len(configs)} 個")
        cfg = configs[0]
    changes = {}
    if args.seed is not None:
        changes['seed'] = args.seed
    if args.out:
        changes['output'] = args.out
    if args.total_samples is not None:
        changes['total_samples'] = args.total_samples
    if args.checkpoint:
        changes['checkpoint_path'] = args.checkpoint
    if args.checkpoint_interval is not None:
        changes['checkpoint_interval'] = args.checkpoint_interval
    cfg = cfg.with_overrides(**changes) if changes else cfg

    result = run_experiment(cfg, resume=args.resume)
    print(f"✅ {cfg.name}: {len(result.metrics)} 步，final running_avg = {result.metrics.final_running_avg:.4f}")
    if cfg.output:
        print(f"📄 CSV: {cfg.output}")
    return EXIT_OK


def cmd_verify(args) -> int:
    budget = parse_budget(args.budget, args.presets)
    report = run_verification(budget, seed=args.seed)
    for check in report['checks']:
        mark = '✅' if check['passed'] else '❌'
        print(f"{mark} {check['name']}: measured={check['measured']:.3e} (tol {check['tolerance']:g})")
    text = json.dumps(report, indent=2, ensure_ascii=False)
    if args.report:
        with open(args.report, 'w', encoding='utf-8') as f:
            f.write(text + '\n')
        print(f"📄 報告: {args.report}")
    else:
        print(text)
    if report['passed']:
        print("✅ 全部檢查通過")
        return EXIT_OK
    print("❌ 驗證失敗")
    return EXIT_FAILED


def cmd_sweep(args) -> int:
    seeds = parse_seeds(args.seeds)
    if args.preset:
        configs = [get_preset(name, args.presets) for name in args.preset]
    else:
        configs = load_experiments(args.config)
    configs = [_with_total(cfg, args.total_samples) for cfg in configs]
    summary = run_matrix(configs, seeds, out_dir=args.out_dir)
    last = summary.groupby(['index', 'config'], sort=True).tail(1)
    for _, row in last.iterrows():
        print(f"📊 {row['config']}: mean={row['mean']:.4f} std={row['std']:.4f}")
    print(f"📄 {os.path.join(args.out_dir, 'summary.csv')}")
    return EXIT_OK


def cmd_show_config(args) -> int:
    presets = load_presets(args.presets)
    if args.name:
        if args.name not in presets:
            raise ConfigError(f"找不到 preset {args.name!r}，可用: {', '.join(sorted(presets))}")
        selected = {args.name: presets[args.name]}
    else:
        selected = presets
    for name, cfg in selected.items():
        betas = ', '.join(f"{b:g}" for b in cfg.rule.reg_weights) or '-'
        print(f"📋 {name}: rule={cfg.rule.kind} env={cfg.env} hidden={list(cfg.hidden_sizes)} β=({betas})")
        print(json.dumps(cfg.to_dict(), indent=2, ensure_ascii=False))
    return EXIT_OK


COMMANDS = {
    'train': cmd_train,
    'verify': cmd_verify,
    'sweep': cmd_sweep,
    'show-config': cmd_show_config,
}


def cli(argv: Optional[List[str]] = None) -> int:
    """解析參數並執行子命令，回傳退出碼"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    setup_logging(args.verbose, args.presets)
    logger.debug(f"presets: {args.presets or default_config_path()}")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"設定錯誤: {e}")
        print(f"❌ {e}")
        return EXIT_USAGE
    except WMNetError as e:
        logger.error(f"執行中止: {e}")
        print(f"❌ {e}")
        return EXIT_FAILED


def main():
    """主函數"""
    sys.exit(cli())


if __name__ == "__main__":
    main()
