"""
共享 fixture
慢速用例（完整种子扫描）默认跳过：--runslow 或 ORACLE_RUN_SLOW=1 时运行
"""
import copy
import os
import random
from pathlib import Path

import pytest

from src.config import DEFAULTS

PROJECT_ROOT = Path(__file__).parent.parent
SCENARIO_DIR = PROJECT_ROOT / "scenarios"
FIXTURES = Path(__file__).parent / "fixtures"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="运行完整种子扫描")


def run_slow(config) -> bool:
    return config.getoption("--runslow") or os.getenv("ORACLE_RUN_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    if run_slow(config):
        return
    skip = pytest.mark.skip(reason="慢速用例：加 --runslow 或 ORACLE_RUN_SLOW=1 运行")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def base_config():
    cfg = copy.deepcopy(DEFAULTS)
    cfg["paths"]["scenario_dir"] = str(SCENARIO_DIR)
    return cfg


def five_nodes(**behaviors):
    """node0..node4，behaviors 形如 node3={"kind": "lazy"}"""
    return [
        {"id": f"node{i}", "stake": 100, **({"behavior": behaviors[f"node{i}"]} if f"node{i}" in behaviors else {})}
        for i in range(5)
    ]


@pytest.fixture
def scenario_data():
    """5 个利他节点、tx-a 在第 2 块、请求在第 24 块的最小场景（测试按需修改）"""
    return {
        "name": "inline",
        "seed": 7,
        "blocks": 30,
        "protocol": {"dkg_trigger_count": 5},
        "nodes": five_nodes(),
        "source": {"events": [{"at": 2, "include": "tx-a"}]},
        "requests": [{"at": 24, "tx": "tx-a", "confirmations": 2}],
    }
