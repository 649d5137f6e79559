"""
确定性模拟器
单一逻辑时钟同时驱动目标链与源链：脚本事件 → 源链出块 → 客户端交易 → 账本出块 → 消息投递 → 节点按序号运行
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .contracts.core import ContractParams, Fees, Query, QueryFormat, encode_result_payload
from .costmodel import DEFAULT_PARAMS, CostParams, Mechanism, cost, relay_breakeven_requests, run_costs
from .ledger import Ledger, MinedBlock
from .nodes import Envelope, NodeContext, OracleNode
from .scenario import MAX_SETUP_BLOCKS, FaultRule, RequestSpec, Scenario
from .sourcechain import SourceChain, canonical_answers
from .transcript import digest, render_jsonl

logger = logging.getLogger("vote-oracle.simulator")

CLIENT = "client"


# ═══════════════════════════════════════════════════════
# 结果结构
# ═══════════════════════════════════════════════════════


@dataclass
class RequestOutcome:
    request_id: int
    tx_id: str
    min_confirmations: int
    format: QueryFormat
    requested_at: int
    fulfilled_at: Optional[int] = None
    aggregator: Optional[str] = None
    payload: Optional[bytes] = None
    correct: Optional[bool] = None

    @property
    def fulfilled(self) -> bool:
        return self.fulfilled_at is not None

    @property
    def latency(self) -> Optional[int]:
        """只对已完成的请求有定义"""
        if self.fulfilled_at is None:
            return None
        return self.fulfilled_at - self.requested_at


@dataclass
class Metrics:
    scenario: str
    seed: int
    blocks: int
    requests: List[RequestOutcome] = field(default_factory=list)
    balances: Dict[str, int] = field(default_factory=dict)
    rewards: Dict[str, int] = field(default_factory=dict)
    lottery_wins: Dict[str, int] = field(default_factory=dict)
    submissions_accepted: int = 0
    submissions_rejected: int = 0
    rejection_reasons: Dict[str, int] = field(default_factory=dict)
    dkg_sessions: int = 0
    key_activated_at: Optional[int] = None
    oracle_txs_after_key: int = 0
    messages: Dict[str, int] = field(default_factory=dict)
    costs: Dict[str, int] = field(default_factory=dict)
    relay_window: int = 0
    relay_breakeven_requests: int = 0
    pot: int = 0
    pot_paid: int = 0
    # 每个区块出块后的奖池余额，下标即区块高度
    pot_history: List[int] = field(default_factory=list)
    conservation: bool = True
    transcript_digest: str = ""

    @property
    def fulfilled(self) -> int:
        return sum(1 for r in self.requests if r.fulfilled)

    @property
    def unfulfilled(self) -> int:
        return len(self.requests) - self.fulfilled

    @property
    def wrong_results(self) -> int:
        return sum(1 for r in self.requests if r.correct is False)

    @property
    def latencies(self) -> Dict[int, int]:
        return {r.request_id: r.latency for r in self.requests if r.fulfilled}

    @property
    def pot_accrued(self) -> int:
        """奖池只靠成功提交的验证费增长：累计流入 = 余额 + 已发放"""
        return self.pot + self.pot_paid

    def to_dict(self) -> Dict[str, Any]:
        """JSON 报告的固定字段集"""
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "blocks": self.blocks,
            "requests": [
                {
                    "request_id": r.request_id,
                    "tx_id": r.tx_id,
                    "min_confirmations": r.min_confirmations,
                    "format": r.format.value,
                    "requested_at": r.requested_at,
                    "fulfilled_at": r.fulfilled_at,
                    "latency": r.latency,
                    "aggregator": r.aggregator,
                    "payload": r.payload.hex() if r.payload is not None else None,
                    "correct": r.correct,
                }
                for r in self.requests
            ],
            "fulfilled": self.fulfilled,
            "unfulfilled": self.unfulfilled,
            "wrong_results": self.wrong_results,
            "latencies": {str(k): v for k, v in sorted(self.latencies.items())},
            "balances": dict(sorted(self.balances.items())),
            "rewards": dict(sorted(self.rewards.items())),
            "lottery_wins": dict(sorted(self.lottery_wins.items())),
            "submissions": {
                "accepted": self.submissions_accepted,
                "rejected": self.submissions_rejected,
                "reasons": dict(sorted(self.rejection_reasons.items())),
            },
            "dkg_sessions": self.dkg_sessions,
            "key_activated_at": self.key_activated_at,
            "oracle_txs_after_key": self.oracle_txs_after_key,
            "messages": dict(sorted(self.messages.items())),
            "costs": dict(self.costs),
            "relay_window": self.relay_window,
            "relay_breakeven_requests": self.relay_breakeven_requests,
            "pot": {
                "final": self.pot,
                "paid": self.pot_paid,
                "accrued": self.pot_accrued,
                "history": list(self.pot_history),
            },
            "conservation": self.conservation,
            "transcript_digest": self.transcript_digest,
        }


@dataclass
class SimulationResult:
    metrics: Metrics
    records: List[dict]

    @property
    def digest(self) -> str:
        return self.metrics.transcript_digest

    def transcript(self) -> str:
        return render_jsonl(self.records)


@dataclass
class _PendingTx:
    release_at: int
    sender: str
    method: str
    args: Dict[str, Any]


# ═══════════════════════════════════════════════════════
# 模拟器
# ═══════════════════════════════════════════════════════


class Simulator:
    """
    单线程确定性事件循环。

    节点之间只能通过消息、账本广播日志和账本快照互相影响；
    相同的 (场景, 种子) 必然得到逐字节相同的记录。
    """

    def __init__(self, scenario: Scenario, cost_params: CostParams = DEFAULT_PARAMS):
        self.scenario = scenario
        self.cost_params = cost_params
        proto, eco = scenario.protocol, scenario.economics
        self.params = ContractParams.from_config(proto, eco, cost(Mechanism.BLS, 1, cost_params))

        balances = {CLIENT: int(eco.get("client_balance", 100_000_000))}
        for spec in scenario.nodes:
            balances[spec.node_id] = (
                spec.balance if spec.balance is not None else int(eco.get("node_balance", 1_000)) + spec.stake
            )
        self.ledger = Ledger(self.params, balances)
        self.source = SourceChain(scenario.chain_id)

        self.specs = {spec.node_id: spec for spec in scenario.nodes}
        self.ordinals = {spec.node_id: i for i, spec in enumerate(scenario.nodes)}
        self.nodes: Dict[str, OracleNode] = {
            spec.node_id: OracleNode(
                spec.node_id, spec.behavior, scenario.seed, self.params, spec.stake,
                dkg_wait=int(proto.get("dkg_wait_blocks", 2)),
            )
            for spec in scenario.nodes
        }

        self.height = -1
        self._mailbox: List[Tuple[int, Envelope]] = []
        self._msg_seq = 0
        self._held: List[_PendingTx] = []
        self._fault_hits: Counter = Counter()
        self._request_txs: Dict[int, RequestSpec] = {}
        self.outcomes: Dict[int, RequestOutcome] = {}
        self.message_stats: Counter = Counter()
        self.records: List[dict] = []
        self.key_activated_at: Optional[int] = None
        self.pot_history: List[int] = []

    # ─── 主循环 ───

    def run(self) -> SimulationResult:
        sc = self.scenario
        self.records.append({
            "type": "scenario",
            "name": sc.name,
            "seed": sc.seed,
            "nodes": [
                {"id": s.node_id, "stake": s.stake, "behavior": s.behavior, "join": s.join, "leave": s.leave}
                for s in sc.nodes
            ],
            "protocol": sc.protocol,
            "economics": sc.economics,
        })
        logger.info(f"▶️ 场景 {sc.name}（种子 {sc.seed}，{len(sc.nodes)} 个节点）")

        h = 0
        while not self._finished(h):
            self.step(h)
            h += 1

        metrics = self.collect_metrics(h)
        self.records.extend(self._dkg_records())
        self.records.append({"type": "metrics", **{k: v for k, v in metrics.to_dict().items() if k != "transcript_digest"}})
        metrics.transcript_digest = digest(self.records)
        logger.info(
            f"✅ 场景 {sc.name} 完成: {h} 块，完成请求 {metrics.fulfilled}/{len(metrics.requests)}，"
            f"错误结果 {metrics.wrong_results}"
        )
        return SimulationResult(metrics, self.records)

    def _finished(self, h: int) -> bool:
        sc = self.scenario
        if sc.blocks is not None and h >= sc.blocks:
            return True
        if sc.blocks_after_key is not None:
            if self.key_activated_at is not None:
                return h > self.key_activated_at + sc.blocks_after_key
            if h >= MAX_SETUP_BLOCKS:
                logger.warning(f"⚠️ {MAX_SETUP_BLOCKS} 块内没有激活公钥，提前结束")
                return True
        return False

    def step(self, h: int):
        self.height = h
        self._apply_source_script(h)
        self.source.advance(1)
        self._queue_scripted_txs(h)

        block = self.ledger.mine()
        self._on_mined(block)
        view = self.ledger.view()

        inboxes = self._deliver(h)
        for node_id in self.scenario.node_ids:
            spec = self.specs[node_id]
            if h < spec.join or spec.behavior.is_offline(h):
                continue
            ctx = NodeContext(h, view, self.source.view(node_id), inboxes.get(node_id, []))
            self.nodes[node_id].on_block(ctx)
            self._route_outputs(h, node_id, ctx)

    # ─── 每个区块的各阶段 ───

    def _apply_source_script(self, h: int):
        for ev in self.scenario.source_events:
            if ev.at != h:
                continue
            if ev.action == "include":
                self.source.include(ev.tx_id, ev.branch)
            elif ev.action == "fork":
                self.source.inject_fork(ev.branch, ev.parent, ev.nodes, ev.length)
            elif ev.action == "lag":
                for node in ev.nodes:
                    self.source.set_lag(node, ev.lag)
            elif ev.action == "heal":
                self.source.heal()
            self.records.append({"type": "source", "height": h, "action": ev.action, "event": ev})

    def _queue_scripted_txs(self, h: int):
        # 延迟到期的交易
        due = [p for p in self._held if p.release_at <= h]
        self._held = [p for p in self._held if p.release_at > h]
        for p in due:
            self.ledger.submit(p.sender, p.method, **p.args)

        for spec in self.scenario.nodes:
            if spec.join == h:
                self.ledger.submit(spec.node_id, "register", **self.nodes[spec.node_id].registration_args())
            if spec.leave == h:
                self.ledger.submit(spec.node_id, "deregister")
        for kick in self.scenario.kicks:
            if kick.at == h:
                self.ledger.submit(kick.voter, "vote_kick", target=kick.target)

        eco = self.scenario.economics
        fees = Fees(
            self.params.tx_compensation,
            int(eco.get("aggregation_reward", self.params.aggregation_reward)),
            int(eco.get("validation_contribution", self.params.validation_contribution)),
        )
        for req in self.scenario.requests:
            if req.at == h:
                q = Query(self.scenario.chain_id, req.tx_id, req.min_confirmations, req.format)
                tx = self.ledger.submit(CLIENT, "request_verification", query=q, fees=fees)
                self._request_txs[tx.seq] = req

    def _on_mined(self, block: MinedBlock):
        for receipt in block.receipts:
            req = self._request_txs.pop(receipt.tx.seq, None)
            if req is not None and receipt.accepted:
                rid = receipt.result
                self.outcomes[rid] = RequestOutcome(
                    rid, req.tx_id, req.min_confirmations, req.format, block.height,
                )
        for ev in block.events:
            if ev.kind == "ResultAvailable":
                out = self.outcomes.get(ev.data["request_id"])
                if out is not None:
                    out.fulfilled_at = ev.height
                    out.aggregator = ev.data["aggregator"]
                    out.payload = ev.data["payload"]
                    out.correct = self._is_canonical(out)
            elif ev.kind == "KeyActivated" and self.key_activated_at is None:
                self.key_activated_at = ev.height

        self.pot_history.append(self.ledger.pot)
        rec = self.ledger.block_record(block)
        rec["source_head"] = self.source.head.hash
        self.records.append(rec)

    def _is_canonical(self, out: RequestOutcome) -> bool:
        """结果载荷等于请求至结果期间某一时刻规范链上的答案"""
        answers = canonical_answers(
            self.source, out.tx_id, out.min_confirmations,
            range(out.requested_at + 1, out.fulfilled_at + 2),
        )
        return any(encode_result_payload(out.request_id, a, out.format) == out.payload for a in answers)

    def _deliver(self, h: int) -> Dict[str, List[Envelope]]:
        due = [(at, env) for at, env in self._mailbox if at <= h]
        self._mailbox = [(at, env) for at, env in self._mailbox if at > h]
        inboxes: Dict[str, List[Envelope]] = {}
        for _, env in sorted(due, key=lambda item: (self.ordinals[item[1].sender], item[1].seq)):
            spec = self.specs[env.recipient]
            if spec.behavior.is_offline(h):
                self.message_stats["dropped_offline"] += 1
                self._record_message(h, env, "dropped_offline")
                continue
            self.message_stats["delivered"] += 1
            inboxes.setdefault(env.recipient, []).append(env)
        return inboxes

    def _route_outputs(self, h: int, node_id: str, ctx: NodeContext):
        for recipient, body in ctx.sent:
            env = Envelope(self._msg_seq, node_id, recipient, h, body)
            self._msg_seq += 1
            rule = self._match_fault("message", h, node_id, recipient=recipient, kind=env.kind)
            if rule is not None and rule.action == "drop":
                self.message_stats["dropped"] += 1
                self._record_message(h, env, "dropped")
                continue
            delay = rule.blocks if rule is not None else 0
            if delay:
                self.message_stats["delayed"] += 1
                self._record_message(h, env, "delayed")
            self._mailbox.append((h + 1 + delay, env))
            self.message_stats["sent"] += 1

        for tx in ctx.txs:
            rule = self._match_fault("tx", h, node_id, method=tx.method)
            if rule is None:
                self.ledger.submit(node_id, tx.method, **tx.args)
                continue
            self.records.append({
                "type": "tx_fault", "height": h, "sender": node_id,
                "method": tx.method, "action": rule.action,
            })
            if rule.action == "drop":
                logger.debug(f"[#{h}] 丢弃 {node_id}.{tx.method}")
            else:
                self._held.append(_PendingTx(h + 1 + rule.blocks, node_id, tx.method, tx.args))

    def _match_fault(self, target: str, h: int, sender: str, **attrs) -> Optional[FaultRule]:
        for i, rule in enumerate(self.scenario.faults):
            if rule.target != target or not rule.matches(h, sender, **attrs):
                continue
            if rule.times is not None and self._fault_hits[i] >= rule.times:
                continue
            self._fault_hits[i] += 1
            return rule
        return None

    def _record_message(self, h: int, env: Envelope, status: str):
        self.records.append({
            "type": "message", "height": h, "seq": env.seq, "sender": env.sender,
            "recipient": env.recipient, "kind": env.kind, "status": status,
        })

    # ─── 统计 ───

    def collect_metrics(self, blocks: int) -> Metrics:
        ledger = self.ledger
        node_ids = self.scenario.node_ids
        rewards = {n: 0 for n in node_ids}
        wins = {n: 0 for n in node_ids}
        paid = 0
        for ev in ledger.events_of("ResultAvailable"):
            agg = ev.data["aggregator"]
            rewards[agg] = rewards.get(agg, 0) + ev.data["reward"] + ev.data["payout"]
            if ev.data["lottery_win"]:
                wins[agg] = wins.get(agg, 0) + 1
            paid += ev.data["payout"]

        accepted = rejected = 0
        reasons: Counter = Counter()
        for r in ledger.receipts:
            if r.tx.method != "submit_result":
                continue
            if r.accepted:
                accepted += 1
            else:
                rejected += 1
                reasons[r.reason] += 1

        after_key = 0
        if self.key_activated_at is not None:
            after_key = len(ledger.transactions_from(node_ids, after_height=self.key_activated_at))

        sc = self.scenario
        window = sc.blocks_after_key if sc.blocks_after_key is not None else blocks
        n = len(ledger.registry.active_ids()) or len(node_ids)
        return Metrics(
            scenario=sc.name,
            seed=sc.seed,
            blocks=blocks,
            requests=[self.outcomes[rid] for rid in sorted(self.outcomes)],
            balances={a: ledger.balance(a) for a in [CLIENT, *node_ids]},
            rewards=rewards,
            lottery_wins=wins,
            submissions_accepted=accepted,
            submissions_rejected=rejected,
            rejection_reasons=dict(reasons),
            dkg_sessions=len(ledger.events_of("KeyGeneration")),
            key_activated_at=self.key_activated_at,
            oracle_txs_after_key=after_key,
            messages=dict(self.message_stats),
            costs=run_costs(accepted, n, window, self.cost_params),
            relay_window=window,
            relay_breakeven_requests=relay_breakeven_requests(window, self.cost_params),
            conservation=ledger.conservation_holds(),
            pot=ledger.pot,
            pot_paid=paid,
            pot_history=list(self.pot_history),
        )

    def _dkg_records(self) -> List[dict]:
        """每个会话取第一个参与节点的广播记录（所有诚实节点的记录相同）"""
        records = []
        sessions = sorted({s for node in self.nodes.values() for s in node.sessions})
        for session in sessions:
            for node_id in self.scenario.node_ids:
                state = self.nodes[node_id].sessions.get(session)
                if state is not None and state.dkg is not None and state.finalized:
                    records.extend(state.transcript.to_records())
                    break
        return records


def run_scenario(scenario: Scenario, seed: Optional[int] = None,
                 cost_params: CostParams = DEFAULT_PARAMS) -> SimulationResult:
    if seed is not None and seed != scenario.seed:
        scenario = scenario.with_seed(seed)
    return Simulator(scenario, cost_params).run()
