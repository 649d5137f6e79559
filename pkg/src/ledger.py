"""
账本门面模式模块 (Facade)
对外提供统一的交易队列 / 出块 / 只读快照接口，内部路由到 src/contracts/ 的三个合约
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .contracts.core import (
    ContractError,
    ContractParams,
    Event,
    LedgerState,
    Receipt,
    ResultRecord,
    Tx,
)
from .contracts.keys import KeyContract
from .contracts.oracle import OracleContract
from .contracts.registry import RegistryContract
from .group import PointG2

logger = logging.getLogger("vote-oracle.ledger")


@dataclass(frozen=True)
class MinedBlock:
    height: int
    receipts: Tuple[Receipt, ...]
    events: Tuple[Event, ...]


@dataclass(frozen=True)
class PendingKeyView:
    session: int
    public_key: PointG2
    submitter: str
    height: int


@dataclass(frozen=True)
class LedgerView:
    """某一高度的只读快照，节点只能通过它读链上状态"""

    height: int
    events: Tuple[Event, ...]
    active: Tuple[str, ...]
    stakes: Mapping[str, int]
    rotation_period: int
    dispute_window: int
    key_session: int
    key_participants: Tuple[str, ...]
    key_threshold: int
    validator_threshold: int
    pending_key: Optional[PendingKeyView]
    active_pk: Optional[PointG2]
    active_session: int
    active_threshold: int
    results: Mapping[int, ResultRecord] = field(repr=False)
    open_requests: Tuple[int, ...] = ()

    def aggregator_at(self, height: int) -> Optional[str]:
        """与注册合约同一规则；没有活跃节点时返回 None"""
        if not self.active:
            return None
        return self.active[(height // self.rotation_period) % len(self.active)]

    def get_result(self, request_id: int) -> Optional[ResultRecord]:
        return self.results.get(request_id)

    def events_since(self, cursor: int) -> Tuple[Event, ...]:
        return self.events[cursor:]


class Ledger:
    """目标链模拟：单一所有者，所有修改都经由有序交易队列在出块时生效"""

    def __init__(self, params: ContractParams, balances: Optional[Mapping[str, int]] = None):
        self.params = params
        self.state = LedgerState(balances=dict(balances or {}))
        self.registry = RegistryContract(self.state, params)
        self.keys = KeyContract(self.state, params, self.registry)
        self.oracle = OracleContract(self.state, params, self.registry, self.keys)

        self._queue: List[Tx] = []
        self._seq = 0
        self.receipts: List[Receipt] = []
        self.blocks: List[MinedBlock] = []
        self.initial_supply = self.total_supply()

        self._methods: Dict[str, Callable[..., Any]] = {
            "register": self.registry.register,
            "deregister": self.registry.deregister,
            "vote_kick": self.registry.vote_kick,
            "kick": lambda sender, target, votes: self.registry.kick(target, votes),
            "submit_public_key": self.keys.submit_public_key,
            "dispute_key": self.keys.dispute_key,
            "report_failure": self.keys.report_failure,
            "request_verification": self.oracle.request_verification,
            "submit_result": self.oracle.submit_result,
            "broadcast": self._broadcast,
        }

    @property
    def height(self) -> int:
        return self.state.height

    # ─── 交易 ───

    def submit(self, sender: str, method: str, **args) -> Tx:
        """排队等待下一次出块"""
        if method not in self._methods:
            raise ValueError(f"未知合约方法: {method}")
        tx = Tx(self._seq, sender, method, args)
        self._seq += 1
        self._queue.append(tx)
        return tx

    def mine(self) -> MinedBlock:
        self.state.height += 1
        first_event = len(self.state.events)
        self.keys.on_block()

        receipts = []
        queue, self._queue = self._queue, []
        for tx in queue:
            receipts.append(self._apply(tx))

        block = MinedBlock(self.state.height, tuple(receipts), tuple(self.state.events[first_event:]))
        self.receipts.extend(receipts)
        self.blocks.append(block)
        return block

    def _apply(self, tx: Tx) -> Receipt:
        try:
            result = self._methods[tx.method](tx.sender, **tx.args)
        except ContractError as e:
            logger.debug(f"[#{self.height}] {tx.sender}.{tx.method} 被拒绝: {e.reason}")
            return Receipt(tx, self.height, False, e.reason)
        return Receipt(tx, self.height, True, result=result)

    def _broadcast(self, sender: str, topic: str, body: Any):
        """DKG 广播信道：只追加事件，不改状态"""
        if sender not in self.registry.records:
            raise ContractError("unknown_node", f"未注册的节点不能广播: {sender}")
        self.state.emit("Broadcast", sender=sender, topic=topic, body=body)

    # ─── 只读 ───

    def view(self) -> LedgerView:
        k = self.keys
        pending = None
        if k.pending is not None:
            pending = PendingKeyView(k.pending.session, k.pending.public_key, k.pending.submitter, k.pending.height)
        return LedgerView(
            height=self.height,
            events=tuple(self.state.events),
            active=tuple(self.registry.active_ids()),
            stakes={r.node_id: r.stake for r in self.registry.records.values()},
            rotation_period=self.params.rotation_period,
            dispute_window=self.params.dispute_window,
            key_session=k.session,
            key_participants=k.participants,
            key_threshold=k.threshold,
            validator_threshold=k.validator_threshold,
            pending_key=pending,
            active_pk=k.active_pk,
            active_session=k.active_session,
            active_threshold=k.active_threshold,
            results=dict(self.oracle.results),
            open_requests=tuple(self.oracle.open_request_ids()),
        )

    def current_aggregator(self, height: Optional[int] = None) -> str:
        return self.registry.current_aggregator(self.height if height is None else height)

    def get_result(self, request_id: int) -> Optional[ResultRecord]:
        return self.oracle.get_result(request_id)

    def balance(self, account: str) -> int:
        return self.state.balance(account)

    @property
    def pot(self) -> int:
        """尚未被抽走的验证奖池"""
        return self.state.pot

    def total_supply(self) -> int:
        """余额 + 托管 + 奖池 + 质押"""
        stakes = sum(r.stake for r in self.registry.records.values())
        return sum(self.state.balances.values()) + self.state.escrow + self.state.pot + stakes

    def conservation_holds(self) -> bool:
        return self.total_supply() + self.state.burned == self.initial_supply

    def events_of(self, kind: str) -> List[Event]:
        return [e for e in self.state.events if e.kind == kind]

    def transactions_from(self, senders: Sequence[str], after_height: int = -1) -> List[Receipt]:
        wanted = set(senders)
        return [r for r in self.receipts if r.tx.sender in wanted and r.height > after_height]

    def block_records(self) -> List[dict]:
        """账本记录（JSON lines 的行对象）"""
        return [self.block_record(b) for b in self.blocks]

    @staticmethod
    def block_record(b: MinedBlock) -> dict:
        return {
            "type": "block",
            "height": b.height,
            "txs": [
                {
                    "seq": r.tx.seq,
                    "sender": r.tx.sender,
                    "method": r.tx.method,
                    "args": r.tx.args,
                    "accepted": r.accepted,
                    "reason": r.reason,
                }
                for r in b.receipts
            ],
            "events": [{"seq": e.seq, "kind": e.kind, "data": e.data} for e in b.events],
        }
