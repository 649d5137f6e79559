"""
批量运行
多个 (场景, 种子) 并发执行：asyncio.gather 调度，进程池执行（各次运行不共享可变状态）
"""
from __future__ import annotations

import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from .costmodel import DEFAULT_PARAMS, CostParams
from .scenario import load_scenario
from .simulator import run_scenario

logger = logging.getLogger("vote-oracle.batch")


def parse_seed_range(text: str) -> List[int]:
    """'1-20' / '3' / '1,5,9' → 种子列表"""
    seeds: List[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo_i, hi_i = (int(x) for x in part.split("-", 1))
            if hi_i < lo_i:
                raise ValueError(f"种子区间非法: {part}")
            seeds.extend(range(lo_i, hi_i + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError(f"种子区间为空: {text!r}")
    return seeds


def run_one(path: str, seed: int, config: Optional[Dict[str, Any]] = None,
            cost_params: CostParams = DEFAULT_PARAMS) -> Dict[str, Any]:
    """子进程入口：只返回摘要，完整记录留在子进程里"""
    scenario = load_scenario(path, config, seed=seed)
    result = run_scenario(scenario, cost_params=cost_params)
    m = result.metrics
    latencies = list(m.latencies.values())
    return {
        "seed": seed,
        "fulfilled": m.fulfilled,
        "unfulfilled": m.unfulfilled,
        "wrong_results": m.wrong_results,
        "max_latency": max(latencies) if latencies else None,
        "latencies": {str(k): v for k, v in sorted(m.latencies.items())},
        "transcript_digest": m.transcript_digest,
        "metrics": m.to_dict(),
    }


class BatchPool:
    """同一场景、多组种子的并发运行池"""

    def __init__(
        self,
        scenario_path: Union[str, Path],
        config: Optional[Dict[str, Any]] = None,
        cost_params: CostParams = DEFAULT_PARAMS,
        max_workers: Optional[int] = None,
    ):
        self.scenario_path = str(scenario_path)
        self.config = config
        self.cost_params = cost_params
        self.max_workers = max_workers

    async def run(self, seeds: Sequence[int]) -> List[Dict[str, Any]]:
        """按种子顺序返回摘要；任一运行失败即抛出"""
        seeds = list(seeds)
        logger.info(f"🚀 批量运行 {Path(self.scenario_path).name}: {len(seeds)} 个种子")

        if self.max_workers == 1:
            # 单 worker 不起子进程
            return list(await asyncio.gather(*[
                asyncio.to_thread(run_one, self.scenario_path, s, self.config, self.cost_params)
                for s in seeds
            ]))

        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=self.max_workers) as pool:
            results = await asyncio.gather(*[
                loop.run_in_executor(pool, run_one, self.scenario_path, s, self.config, self.cost_params)
                for s in seeds
            ])
        logger.info(f"✅ 批量运行完成: {len(results)} 个结果")
        return list(results)


def summarize(rows: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    latencies = [r["max_latency"] for r in rows if r["max_latency"] is not None]
    return {
        "runs": len(rows),
        "fulfilled": sum(r["fulfilled"] for r in rows),
        "unfulfilled": sum(r["unfulfilled"] for r in rows),
        "wrong_results": sum(r["wrong_results"] for r in rows),
        "max_latency": max(latencies) if latencies else None,
    }
