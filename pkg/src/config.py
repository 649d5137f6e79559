"""
配置管理模块
从 config.yaml 和环境变量加载协议/经济参数与成本模型校准
"""
from __future__ import annotations

import copy
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv


# 项目根目录
PROJECT_ROOT = Path(__file__).parent.parent.resolve()

# 加载 .env
load_dotenv(PROJECT_ROOT / ".env")

DEFAULTS: Dict[str, Any] = {
    "protocol": {
        "rotation_period": 6,
        "dkg_trigger_count": 3,
        "dkg_wait_blocks": 2,
        "dispute_window": 12,
        "validator_threshold": None,
        "key_submission": "dispute",
    },
    "economics": {
        "min_stake": 100,
        "aggregation_reward": 10,
        "validation_contribution": 5,
        "slash_fraction": 0.5,
        "lottery_alpha": 0.5,
        "node_balance": 1_000,
        "client_balance": 100_000_000,
    },
    "cost": {},
    "paths": {
        "scenario_dir": "scenarios",
        "cost_file": None,
    },
    "logging": {
        "level": "INFO",
    },
}


def deep_merge(base: Dict[str, Any], override: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """递归合并，override 中的值优先（返回新字典）"""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """加载配置文件，环境变量优先级更高"""
    if config_path is None:
        path = PROJECT_ROOT / "config.yaml"
        explicit = False
    else:
        path = Path(config_path)
        explicit = True

    if path.exists():
        with open(path, "r", encoding="utf-8") as f:
            cfg = deep_merge(DEFAULTS, yaml.safe_load(f) or {})
    elif explicit:
        raise FileNotFoundError(f"配置文件不存在: {path}")
    else:
        # 没有 config.yaml 时使用内置默认值
        cfg = copy.deepcopy(DEFAULTS)

    # 环境变量覆盖
    env_scenarios = os.getenv("ORACLE_SCENARIO_DIR")
    env_level = os.getenv("ORACLE_LOG_LEVEL")
    env_cost = os.getenv("ORACLE_COST_FILE")

    if env_scenarios:
        cfg["paths"]["scenario_dir"] = env_scenarios
    if env_level:
        cfg["logging"]["level"] = env_level.upper()
    if env_cost:
        cfg["paths"]["cost_file"] = env_cost

    # 相对路径以项目根目录为基准
    scenario_dir = cfg["paths"].get("scenario_dir") or "scenarios"
    if not Path(scenario_dir).is_absolute():
        cfg["paths"]["scenario_dir"] = str(PROJECT_ROOT / scenario_dir)

    return cfg


def validate_config(cfg: dict) -> List[str]:
    """验证配置，返回错误列表"""
    errors = []

    proto = cfg.get("protocol", {})
    if int(proto.get("rotation_period", 0)) < 1:
        errors.append("protocol.rotation_period 必须 ≥ 1")
    if int(proto.get("dkg_trigger_count", 0)) < 1:
        errors.append("protocol.dkg_trigger_count 必须 ≥ 1")
    if int(proto.get("dkg_wait_blocks", -1)) < 0:
        errors.append("protocol.dkg_wait_blocks 不能为负")
    if int(proto.get("dispute_window", 0)) < 1:
        errors.append("protocol.dispute_window 必须 ≥ 1")
    v = proto.get("validator_threshold")
    if v is not None and int(v) < 1:
        errors.append("protocol.validator_threshold 必须 ≥ 1 或为 null")
    if proto.get("key_submission", "dispute") not in ("dispute", "vote"):
        errors.append("protocol.key_submission 只能是 dispute 或 vote")

    eco = cfg.get("economics", {})
    for key in ("min_stake", "aggregation_reward", "validation_contribution", "node_balance", "client_balance"):
        if int(eco.get(key, 0)) < 0:
            errors.append(f"economics.{key} 不能为负")
    if not 0 <= float(eco.get("slash_fraction", 0)) <= 1:
        errors.append("economics.slash_fraction 必须在 [0, 1] 内")
    if not 0 < float(eco.get("lottery_alpha", 0)) <= 1:
        errors.append("economics.lottery_alpha 必须在 (0, 1] 内")

    for key, value in (cfg.get("cost") or {}).items():
        if isinstance(value, (int, float)) and value < 0:
            errors.append(f"cost.{key} 不能为负")

    return errors
