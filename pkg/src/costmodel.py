"""
Gas 成本模型
链上聚合 / ECDSA 多签 / BLS 门限签名 / 中继（逐块头）四种方案的参数化成本对比
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import yaml

logger = logging.getLogger("vote-oracle.costmodel")


class CostModelError(ValueError):
    """成本模型参数或查询非法"""


class NoBreakevenError(CostModelError):
    """在搜索范围内 a 从未比 b 便宜"""


class CalibrationError(CostModelError):
    """校准约束不可满足"""


class Mechanism(str, Enum):
    ON_CHAIN = "on-chain"
    ECDSA = "ecdsa"
    BLS = "bls"
    RELAY = "relay"

    @classmethod
    def parse(cls, value: Union[str, "Mechanism"]) -> "Mechanism":
        if isinstance(value, Mechanism):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"onchain": "on-chain", "threshold": "bls", "eth-relay": "relay"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise CostModelError(f"未知的聚合方案: {value}") from None


@dataclass(frozen=True)
class BoxplotStats:
    median: float = 255_779
    q1: float = 245_712.5
    q3: float = 270_834.5
    whisker_low: float = 230_979
    whisker_high: float = 357_977


@dataclass(frozen=True)
class CostParams:
    bls_submit_mean: int = 257_607
    bls_submit_sd: int = 21_671
    bls_boxplot: BoxplotStats = field(default_factory=BoxplotStats)
    relay_header_mean: int = 284_041
    relay_header_sd: int = 3_679
    # 链上聚合：c0 + n·c1
    onchain_base: int = 60_000
    onchain_per_node: int = 55_000
    # ECDSA 多签：d0 + n·d1
    ecdsa_base: int = 100_000
    ecdsa_per_signature: int = 10_000

    def __post_init__(self):
        for name, value in asdict(self).items():
            if isinstance(value, (int, float)) and value < 0:
                raise CostModelError(f"成本参数不能为负: {name}={value}")

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "CostParams":
        data = dict(data or {})
        box = data.pop("bls_boxplot", None)
        known = {f for f in cls.__dataclass_fields__ if f != "bls_boxplot"}
        unknown = set(data) - known
        if unknown:
            raise CostModelError(f"未知的成本参数: {', '.join(sorted(unknown))}")
        params = cls(**{k: int(v) for k, v in data.items()})
        if box:
            params = replace(params, bls_boxplot=BoxplotStats(**box))
        return params

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CostParams":
        """校准覆盖文件：与场景同一 YAML 方言，可以是顶层或 cost: 段"""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"校准文件不存在: {path}")
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if "cost" in data:
            data = data["cost"]
        return cls.from_dict(data)


DEFAULT_PARAMS = CostParams()


# ═══════════════════════════════════════════════════════
# 成本与交叉点
# ═══════════════════════════════════════════════════════


def cost(mechanism: Union[str, Mechanism], n: int, params: CostParams = DEFAULT_PARAMS) -> int:
    """
    单次结果提交的 gas 估计。

    relay 的 n 表示区块头数量（与节点数无关）。
    """
    mech = Mechanism.parse(mechanism)
    if n < 1:
        raise CostModelError(f"n 必须 ≥ 1: {n}")
    if mech == Mechanism.ON_CHAIN:
        return params.onchain_base + n * params.onchain_per_node
    if mech == Mechanism.ECDSA:
        return params.ecdsa_base + n * params.ecdsa_per_signature
    if mech == Mechanism.BLS:
        return params.bls_submit_mean
    return relay(n, params)


def relay(headers: int, params: CostParams = DEFAULT_PARAMS) -> int:
    if headers < 0:
        raise CostModelError(f"区块头数量不能为负: {headers}")
    return headers * params.relay_header_mean


def relay_breakeven_requests(blocks: int, params: CostParams = DEFAULT_PARAMS) -> int:
    """同一区块窗口内，结果数超过该值时中继更便宜"""
    return relay(blocks, params) // params.bls_submit_mean


def breakeven(a: Union[str, Mechanism], b: Union[str, Mechanism],
              params: CostParams = DEFAULT_PARAMS, max_n: int = 100_000) -> int:
    """最小的 n 使 cost(a, n) < cost(b, n)"""
    ma, mb = Mechanism.parse(a), Mechanism.parse(b)
    if ma == mb:
        raise NoBreakevenError(f"{ma.value} 不可能比自身便宜")
    for n in range(1, max_n + 1):
        if cost(ma, n, params) < cost(mb, n, params):
            return n
    raise NoBreakevenError(f"{ma.value} 在 n ≤ {max_n} 范围内从未比 {mb.value} 便宜")


def cost_table(max_nodes: int, params: CostParams = DEFAULT_PARAMS) -> List[Dict[str, int]]:
    if max_nodes < 1:
        raise CostModelError(f"max_nodes 必须 ≥ 1: {max_nodes}")
    return [
        {
            "n": n,
            "on-chain": cost(Mechanism.ON_CHAIN, n, params),
            "ecdsa": cost(Mechanism.ECDSA, n, params),
            "bls": cost(Mechanism.BLS, n, params),
        }
        for n in range(1, max_nodes + 1)
    ]


def cost_table_csv(rows: Sequence[Mapping[str, int]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["n", "on-chain", "ecdsa", "bls"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def run_costs(submissions: int, n: int, blocks: int, params: CostParams = DEFAULT_PARAMS) -> Dict[str, int]:
    """一次模拟中全部结果提交在各方案下的总 gas，以及同一窗口的中继成本"""
    return {
        "on-chain": submissions * cost(Mechanism.ON_CHAIN, max(n, 1), params),
        "ecdsa": submissions * cost(Mechanism.ECDSA, max(n, 1), params),
        "bls": submissions * cost(Mechanism.BLS, max(n, 1), params),
        "relay": relay(blocks, params),
    }


# ═══════════════════════════════════════════════════════
# 校准
# ═══════════════════════════════════════════════════════

Anchor = Tuple[int, int]


def _integer_interval(bounds: Sequence[Tuple[Fraction, str]]) -> Tuple[int, Optional[int]]:
    """把 c1 的线性不等式约束收敛成整数区间 [lo, hi]"""
    lo, hi = 0, None
    for q, op in bounds:
        if op == ">":
            lo = max(lo, math.floor(q) + 1)
        elif op == ">=":
            lo = max(lo, math.ceil(q))
        elif op == "<":
            cand = math.ceil(q) - 1
            hi = cand if hi is None else min(hi, cand)
        elif op == "<=":
            cand = math.floor(q)
            hi = cand if hi is None else min(hi, cand)
    return lo, hi


def _crosses_at(base: int, slope: int, bls: int, k: int) -> bool:
    """BLS 在 n=k 首次严格更便宜"""
    if base + k * slope <= bls:
        return False
    return k == 1 or base + (k - 1) * slope <= bls


def _solve_line(name: str, k: int, bls: int, anchors: Sequence[Anchor],
                default: Tuple[int, int]) -> Tuple[int, int]:
    if k < 1:
        raise CalibrationError(f"{name}: 交叉点必须 ≥ 1")

    if len(anchors) >= 2:
        (n1, g1), (n2, g2) = anchors[0], anchors[1]
        if n1 == n2:
            raise CalibrationError(f"{name}: 锚点 n 重复")
        slope = Fraction(g2 - g1, n2 - n1)
        base = g1 - slope * n1
        if slope.denominator != 1 or base.denominator != 1:
            raise CalibrationError(f"{name}: 锚点无法给出整数 gas 直线")
        base, slope = int(base), int(slope)
        if any(base + n * slope != g for n, g in anchors):
            raise CalibrationError(f"{name}: 锚点不共线")
        if base < 0 or slope < 0 or not _crosses_at(base, slope, bls, k):
            raise CalibrationError(f"{name}: 锚点与交叉点 n={k} 矛盾")
        return base, slope

    if not anchors and _crosses_at(default[0], default[1], bls, k):
        return default

    # 固定一个点 (na, ga)，求斜率 c1：cost(n) = ga + (n - na)·c1
    na, ga = anchors[0] if anchors else (0, default[0])
    bounds: List[Tuple[Fraction, str]] = []

    def add(m: int, op: str):
        rhs = Fraction(bls - ga)
        if m == 0:
            holds = {">": 0 > rhs, "<=": 0 <= rhs}[op]
            if not holds:
                raise CalibrationError(f"{name}: 锚点与交叉点 n={k} 矛盾")
            return
        flipped = {">": "<", "<=": ">="}[op] if m < 0 else op
        bounds.append((rhs / m, flipped))

    add(k - na, ">")
    if k > 1:
        add(k - 1 - na, "<=")
    if na > 0:
        bounds.append((Fraction(ga, na), "<="))  # c0 = ga - na·c1 ≥ 0

    lo, hi = _integer_interval(bounds)
    if hi is not None and lo > hi:
        raise CalibrationError(f"{name}: 不存在满足交叉点 n={k} 的斜率")
    slope = lo if hi is None else (lo + hi) // 2
    return ga - na * slope, slope


def calibrate(
    onchain_breakeven: int = 4,
    ecdsa_breakeven: int = 16,
    anchors: Optional[Mapping[str, Sequence[Anchor]]] = None,
    params: CostParams = DEFAULT_PARAMS,
) -> CostParams:
    """
    求出满足两个交叉点（BLS 首次更便宜的节点数）的线性模型常数。

    anchors 形如 {"on-chain": [(n, gas), ...], "ecdsa": [...]}；n=0 的锚点即固定基础成本。
    没有锚点且默认常数已满足约束时原样返回默认校准。
    """
    anchors = {Mechanism.parse(k): list(v) for k, v in (anchors or {}).items()}
    bls = params.bls_submit_mean
    c0, c1 = _solve_line(
        "on-chain", onchain_breakeven, bls, anchors.get(Mechanism.ON_CHAIN, []),
        (params.onchain_base, params.onchain_per_node),
    )
    d0, d1 = _solve_line(
        "ecdsa", ecdsa_breakeven, bls, anchors.get(Mechanism.ECDSA, []),
        (params.ecdsa_base, params.ecdsa_per_signature),
    )
    calibrated = replace(params, onchain_base=c0, onchain_per_node=c1, ecdsa_base=d0, ecdsa_per_signature=d1)
    logger.debug(f"校准结果: c0={c0}, c1={c1}, d0={d0}, d1={d1}")
    return calibrated
