"""
场景文件解析
与 config.yaml 同一 YAML 方言：节点画像、源链脚本、请求计划、故障计划、运行长度
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from .config import DEFAULTS, deep_merge
from .contracts.core import QueryFormat
from .nodes.behavior import BehaviorProfile

logger = logging.getLogger("vote-oracle.scenario")

# blocks_after_key 模式下，密钥迟迟不激活时的硬上限
MAX_SETUP_BLOCKS = 500


class ScenarioError(ValueError):
    """场景非法；location 是出错键的点分路径"""

    def __init__(self, path: Union[str, Path, None], location: str, message: str):
        self.path = str(path) if path is not None else "<inline>"
        self.location = location
        super().__init__(f"{self.path}: {location}: {message}")


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    stake: int
    behavior: BehaviorProfile
    join: int = 0
    leave: Optional[int] = None
    balance: Optional[int] = None


@dataclass(frozen=True)
class RequestSpec:
    at: int
    tx_id: str
    min_confirmations: int = 1
    format: QueryFormat = QueryFormat.BLOCK_NUMBER


@dataclass(frozen=True)
class SourceEvent:
    """源链脚本：include / fork / heal / lag"""

    at: int
    action: str
    tx_id: Optional[str] = None
    branch: Optional[str] = None
    parent: Optional[int] = None
    length: Optional[int] = None
    nodes: Tuple[str, ...] = ()
    lag: int = 0


@dataclass(frozen=True)
class FaultRule:
    """
    消息/交易故障规则。

    target 为 message 时按 sender/recipient/kind 匹配，为 tx 时按 sender/method 匹配；
    action 为 drop 或 delay（延迟 blocks 个区块）；times 为 None 表示不限次数。
    """

    target: str
    action: str
    sender: Optional[str] = None
    recipient: Optional[str] = None
    kind: Optional[str] = None
    method: Optional[str] = None
    start: int = 0
    until: Optional[int] = None
    blocks: int = 1
    times: Optional[int] = None

    def matches(self, height: int, sender: str, recipient: Optional[str] = None,
                kind: Optional[str] = None, method: Optional[str] = None) -> bool:
        if height < self.start or (self.until is not None and height >= self.until):
            return False
        if self.sender is not None and self.sender != sender:
            return False
        if self.recipient is not None and self.recipient != recipient:
            return False
        if self.kind is not None and self.kind != kind:
            return False
        if self.method is not None and self.method != method:
            return False
        return True


@dataclass(frozen=True)
class KickVote:
    at: int
    voter: str
    target: str


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    nodes: Tuple[NodeSpec, ...]
    protocol: Dict[str, Any] = field(default_factory=dict)
    economics: Dict[str, Any] = field(default_factory=dict)
    chain_id: str = "source"
    source_events: Tuple[SourceEvent, ...] = ()
    requests: Tuple[RequestSpec, ...] = ()
    faults: Tuple[FaultRule, ...] = ()
    kicks: Tuple[KickVote, ...] = ()
    blocks: Optional[int] = None
    blocks_after_key: Optional[int] = None
    path: Optional[str] = None
    # 原始数据，供 with_seed 重新解析
    raw: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)
    base_config: Optional[Dict[str, Any]] = field(default=None, repr=False, compare=False)

    @property
    def node_ids(self) -> List[str]:
        return [n.node_id for n in self.nodes]

    def with_seed(self, seed: int) -> "Scenario":
        """覆盖种子；随机请求计划按新种子重新生成"""
        return load_scenario_data(self.raw, self.path, seed=seed, config=self.base_config)


# ═══════════════════════════════════════════════════════
# 解析
# ═══════════════════════════════════════════════════════


def load_scenario(path: Union[str, Path], config: Optional[Dict[str, Any]] = None,
                  seed: Optional[int] = None) -> Scenario:
    """读取场景文件；seed 非 None 时覆盖文件里的种子"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"场景文件不存在: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ScenarioError(path, "<yaml>", f"YAML 解析失败: {e}") from None
    return load_scenario_data(data, str(path), seed=seed, config=config)


def resolve_scenario_path(name: str, scenario_dir: Union[str, Path]) -> Path:
    """裸名称（如 baseline）在场景目录里查找"""
    path = Path(name)
    if path.exists() or path.suffix:
        return path
    candidate = Path(scenario_dir) / f"{name}.yaml"
    return candidate if candidate.exists() else path


def load_scenario_data(data: Any, path: Optional[str] = None, seed: Optional[int] = None,
                       config: Optional[Dict[str, Any]] = None) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError(path, "<root>", "场景必须是一个映射")
    base = config or DEFAULTS
    p = _Parser(path)

    nodes = tuple(p.node(item, f"nodes[{i}]") for i, item in enumerate(p.require(data, "nodes", list)))
    if not nodes:
        raise ScenarioError(path, "nodes", "至少需要一个节点")
    ids = [n.node_id for n in nodes]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ScenarioError(path, "nodes", f"节点 ID 重复: {', '.join(dup)}")
    known = set(ids)
    for i, n in enumerate(nodes):
        bad = sorted(n.behavior.bad_deal_targets - known)
        if bad:
            raise ScenarioError(path, f"nodes[{i}].behavior.bad_deal_targets", f"未定义的节点: {', '.join(bad)}")

    run_seed = int(data.get("seed", 0)) if seed is None else int(seed)
    protocol = deep_merge(base.get("protocol", {}), p.section(data, "protocol"))
    economics = deep_merge(base.get("economics", {}), p.section(data, "economics"))

    source = p.section(data, "source")
    chain_id = str(source.get("chain_id", "source"))
    events = tuple(
        p.source_event(item, f"source.events[{i}]", known)
        for i, item in enumerate(source.get("events", []) or [])
    )
    requests = p.requests(data.get("requests"), run_seed, events, chain_id)
    faults = tuple(p.fault(item, f"faults[{i}]", known) for i, item in enumerate(data.get("faults", []) or []))
    kicks = tuple(p.kick(item, f"kicks[{i}]", known) for i, item in enumerate(data.get("kicks", []) or []))

    blocks = data.get("blocks")
    after_key = data.get("blocks_after_key")
    if blocks is None and after_key is None:
        raise ScenarioError(path, "blocks", "必须给出 blocks 或 blocks_after_key")
    if blocks is not None and int(blocks) < 1:
        raise ScenarioError(path, "blocks", "必须 ≥ 1")
    if after_key is not None and int(after_key) < 0:
        raise ScenarioError(path, "blocks_after_key", "不能为负")

    return Scenario(
        name=str(data.get("name") or (Path(path).stem if path else "scenario")),
        seed=run_seed,
        nodes=nodes,
        protocol=protocol,
        economics=economics,
        chain_id=chain_id,
        source_events=events,
        requests=requests,
        faults=faults,
        kicks=kicks,
        blocks=None if blocks is None else int(blocks),
        blocks_after_key=None if after_key is None else int(after_key),
        path=path,
        raw=data,
        base_config=config,
    )


class _Parser:
    def __init__(self, path: Optional[str]):
        self.path = path

    def fail(self, location: str, message: str):
        raise ScenarioError(self.path, location, message)

    def require(self, data: dict, key: str, kind: type, location: str = ""):
        loc = f"{location}.{key}" if location else key
        if key not in data:
            self.fail(loc, "缺少必填项")
        if not isinstance(data[key], kind):
            self.fail(loc, f"类型应为 {kind.__name__}")
        return data[key]

    def section(self, data: dict, key: str) -> dict:
        value = data.get(key) or {}
        if not isinstance(value, dict):
            self.fail(key, "应为映射")
        return value

    def integer(self, data: dict, key: str, location: str, default: Any = None, minimum: int = 0):
        value = data.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(f"{location}.{key}", f"应为整数，实际 {value!r}")
        if value < minimum:
            self.fail(f"{location}.{key}", f"必须 ≥ {minimum}")
        return value

    def known_node(self, node: Any, location: str, known: set) -> str:
        if node not in known:
            self.fail(location, f"未定义的节点: {node}")
        return node

    # ─── 各段 ───

    def node(self, item: Any, loc: str) -> NodeSpec:
        if not isinstance(item, dict):
            self.fail(loc, "节点应为映射")
        node_id = self.require(item, "id", str, loc)
        try:
            behavior = BehaviorProfile.from_dict(item.get("behavior"))
        except ValueError as e:
            self.fail(f"{loc}.behavior", str(e))
        join = self.integer(item, "join", loc, default=0)
        leave = self.integer(item, "leave", loc)
        if leave is not None and leave <= join:
            self.fail(f"{loc}.leave", "必须晚于 join")
        return NodeSpec(
            node_id=node_id,
            stake=self.integer(item, "stake", loc, default=100, minimum=1),
            behavior=behavior,
            join=join,
            leave=leave,
            balance=self.integer(item, "balance", loc),
        )

    def source_event(self, item: Any, loc: str, known: set) -> SourceEvent:
        if not isinstance(item, dict):
            self.fail(loc, "事件应为映射")
        at = self.integer(item, "at", loc, default=0)
        if "include" in item:
            ev = item["include"]
            if isinstance(ev, str):
                return SourceEvent(at, "include", tx_id=ev)
            if not isinstance(ev, dict):
                self.fail(f"{loc}.include", "应为交易 ID 或映射")
            return SourceEvent(at, "include", tx_id=self.require(ev, "tx", str, f"{loc}.include"),
                               branch=ev.get("branch"))
        if "fork" in item:
            ev = item["fork"]
            if not isinstance(ev, dict):
                self.fail(f"{loc}.fork", "应为映射")
            floc = f"{loc}.fork"
            nodes = tuple(
                self.known_node(n, f"{floc}.nodes[{i}]", known)
                for i, n in enumerate(self.require(ev, "nodes", list, floc))
            )
            return SourceEvent(
                at, "fork",
                branch=self.require(ev, "branch", str, floc),
                parent=self.integer(ev, "parent", floc, default=0),
                length=self.integer(ev, "length", floc),
                nodes=nodes,
            )
        if "lag" in item:
            ev = item["lag"]
            if not isinstance(ev, dict):
                self.fail(f"{loc}.lag", "应为映射")
            node = self.known_node(self.require(ev, "node", str, f"{loc}.lag"), f"{loc}.lag.node", known)
            return SourceEvent(at, "lag", nodes=(node,), lag=self.integer(ev, "blocks", f"{loc}.lag", default=0))
        if item.get("heal"):
            return SourceEvent(at, "heal")
        self.fail(loc, "未知的源链事件（应为 include / fork / lag / heal）")

    def request(self, item: Any, loc: str, chain_id: str) -> RequestSpec:
        if not isinstance(item, dict):
            self.fail(loc, "请求应为映射")
        try:
            fmt = QueryFormat(item.get("format", "block_number"))
        except ValueError:
            self.fail(f"{loc}.format", f"未知的查询格式: {item.get('format')}")
        if item.get("chain", chain_id) != chain_id:
            self.fail(f"{loc}.chain", f"未知的源链: {item.get('chain')}")
        return RequestSpec(
            at=self.integer(item, "at", loc, default=0),
            tx_id=self.require(item, "tx", str, loc),
            min_confirmations=self.integer(item, "confirmations", loc, default=1),
            format=fmt,
        )

    def requests(self, data: Any, seed: int, events: Tuple[SourceEvent, ...],
                 chain_id: str) -> Tuple[RequestSpec, ...]:
        if data is None:
            return ()
        if isinstance(data, list):
            data = {"schedule": data}
        if not isinstance(data, dict):
            self.fail("requests", "应为列表或映射")
        out = [self.request(item, f"requests.schedule[{i}]", chain_id)
               for i, item in enumerate(data.get("schedule", []) or [])]

        rnd = data.get("random")
        if rnd:
            loc = "requests.random"
            if not isinstance(rnd, dict):
                self.fail(loc, "应为映射")
            count = self.integer(rnd, "count", loc, default=0)
            start = self.integer(rnd, "from", loc, default=0)
            until = self.integer(rnd, "until", loc, default=start + 1)
            if until <= start:
                self.fail(f"{loc}.until", "必须大于 from")
            txs = rnd.get("txs") or sorted({e.tx_id for e in events if e.action == "include"})
            if not txs:
                self.fail(f"{loc}.txs", "没有可查询的交易")
            confirmations = self.integer(rnd, "confirmations", loc, default=1)
            try:
                fmt = QueryFormat(rnd.get("format", "block_number"))
            except ValueError:
                self.fail(f"{loc}.format", f"未知的查询格式: {rnd.get('format')}")
            rng = random.Random(f"{seed}:requests")
            for _ in range(count):
                out.append(RequestSpec(rng.randrange(start, until), rng.choice(list(txs)), confirmations, fmt))

        return tuple(sorted(out, key=lambda r: r.at))

    def fault(self, item: Any, loc: str, known: set) -> FaultRule:
        if not isinstance(item, dict):
            self.fail(loc, "故障规则应为映射")
        target = item.get("target", "message")
        if target not in ("message", "tx"):
            self.fail(f"{loc}.target", "只能是 message 或 tx")
        action = item.get("action", "drop")
        if action not in ("drop", "delay"):
            self.fail(f"{loc}.action", "只能是 drop 或 delay")
        for key in ("sender", "recipient"):
            if item.get(key) is not None:
                self.known_node(item[key], f"{loc}.{key}", known)
        return FaultRule(
            target=target,
            action=action,
            sender=item.get("sender"),
            recipient=item.get("recipient"),
            kind=item.get("kind"),
            method=item.get("method"),
            start=self.integer(item, "from", loc, default=0),
            until=self.integer(item, "until", loc),
            blocks=self.integer(item, "blocks", loc, default=1, minimum=1),
            times=self.integer(item, "times", loc, minimum=1),
        )

    def kick(self, item: Any, loc: str, known: set) -> KickVote:
        if not isinstance(item, dict):
            self.fail(loc, "踢出投票应为映射")
        return KickVote(
            at=self.integer(item, "at", loc, default=0),
            voter=self.known_node(item.get("voter"), f"{loc}.voter", known),
            target=self.known_node(item.get("target"), f"{loc}.target", known),
        )
