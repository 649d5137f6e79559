"""
合约公共结构
账本状态、事件、交易回执、请求/结果记录以及结果载荷的规范编码
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from ..sourcechain import VerificationAnswer, ZERO_HASH
from ..tbls import Signature

logger = logging.getLogger("vote-oracle.contracts.core")

PAYLOAD_SIZE = 8 + 1 + 8 + 32 + 1


class ContractError(Exception):
    """合约拒绝交易；reason 为机器可读的短标识"""

    def __init__(self, reason: str, message: str = ""):
        self.reason = reason
        super().__init__(message or reason)


class NodeStatus(str, Enum):
    ACTIVE = "active"
    EXITING = "exiting"
    KICKED = "kicked"


class QueryFormat(str, Enum):
    BLOCK_NUMBER = "block_number"
    INCLUSION = "inclusion"


class KeySubmissionMode(str, Enum):
    DISPUTE = "dispute"
    VOTE = "vote"


# ═══════════════════════════════════════════════════════
# 合约参数
# ═══════════════════════════════════════════════════════


@dataclass(frozen=True)
class ContractParams:
    rotation_period: int = 6
    dkg_trigger_count: int = 3
    dispute_window: int = 12
    slash_fraction: float = 0.5
    min_stake: int = 100
    tx_compensation: int = 257_607
    aggregation_reward: int = 10
    validation_contribution: int = 5
    lottery_alpha: float = 0.5
    validator_threshold: Optional[int] = None
    key_submission: KeySubmissionMode = KeySubmissionMode.DISPUTE

    @classmethod
    def from_config(cls, protocol: Dict[str, Any], economics: Dict[str, Any],
                    tx_compensation: int) -> "ContractParams":
        return cls(
            rotation_period=int(protocol.get("rotation_period", 6)),
            dkg_trigger_count=int(protocol.get("dkg_trigger_count", 3)),
            dispute_window=int(protocol.get("dispute_window", 12)),
            slash_fraction=float(economics.get("slash_fraction", 0.5)),
            min_stake=int(economics.get("min_stake", 100)),
            tx_compensation=int(tx_compensation),
            aggregation_reward=int(economics.get("aggregation_reward", 10)),
            validation_contribution=int(economics.get("validation_contribution", 5)),
            lottery_alpha=float(economics.get("lottery_alpha", 0.5)),
            validator_threshold=protocol.get("validator_threshold"),
            key_submission=KeySubmissionMode(protocol.get("key_submission", "dispute")),
        )


# ═══════════════════════════════════════════════════════
# 账本结构
# ═══════════════════════════════════════════════════════


@dataclass(frozen=True)
class Event:
    height: int
    seq: int
    kind: str
    data: Dict[str, Any]


@dataclass(frozen=True)
class Tx:
    seq: int
    sender: str
    method: str
    args: Dict[str, Any]


@dataclass(frozen=True)
class Receipt:
    tx: Tx
    height: int
    accepted: bool
    reason: str = ""
    result: Any = None


@dataclass
class LedgerState:
    """所有合约共享的存储（由 Ledger 门面独占持有）"""

    height: int = -1
    events: List[Event] = field(default_factory=list)
    balances: Dict[str, int] = field(default_factory=dict)
    escrow: int = 0
    pot: int = 0
    burned: int = 0

    def emit(self, kind: str, **data) -> Event:
        ev = Event(self.height, len(self.events), kind, data)
        self.events.append(ev)
        logger.debug(f"[#{self.height}] 事件 {kind}")
        return ev

    def balance(self, account: str) -> int:
        return self.balances.get(account, 0)

    def debit(self, account: str, amount: int, reason: str = "insufficient_balance"):
        if amount < 0:
            raise ContractError("negative_amount", f"金额不能为负: {amount}")
        if self.balance(account) < amount:
            raise ContractError(reason, f"{account} 余额不足: {self.balance(account)} < {amount}")
        self.balances[account] = self.balance(account) - amount

    def credit(self, account: str, amount: int):
        self.balances[account] = self.balance(account) + amount


# ═══════════════════════════════════════════════════════
# 请求与结果
# ═══════════════════════════════════════════════════════


@dataclass(frozen=True)
class Query:
    chain_id: str
    tx_id: str
    min_confirmations: int
    format: QueryFormat = QueryFormat.BLOCK_NUMBER


@dataclass(frozen=True)
class Fees:
    compensation: int
    aggregation_reward: int
    validation_contribution: int

    @property
    def total(self) -> int:
        return self.compensation + self.aggregation_reward + self.validation_contribution


@dataclass(frozen=True)
class Request:
    """合约存储中只保留 id + 托管金额，查询内容只出现在事件里"""

    request_id: int
    client: str
    fees: Fees
    height: int


@dataclass(frozen=True)
class ResultRecord:
    request_id: int
    payload: bytes
    signature: Signature
    aggregator: str
    height: int
    lottery_win: bool
    payout: int


@dataclass(frozen=True)
class ResultPayload:
    request_id: int
    answer: VerificationAnswer


def encode_result_payload(request_id: int, answer: VerificationAnswer,
                          query_format: QueryFormat = QueryFormat.BLOCK_NUMBER) -> bytes:
    """
    规范编码（即被签名的消息）：
    request_id 8B ‖ included 1B ‖ block number 8B ‖ block hash 32B ‖ confirmed 1B

    inclusion 格式只回答"是否包含并确认"，区块号与哈希置零。
    """
    number, bhash = answer.block_number, answer.block_hash
    if not answer.included or query_format == QueryFormat.INCLUSION:
        number, bhash = 0, ZERO_HASH
    if len(bhash) != 32:
        raise ValueError(f"区块哈希长度应为 32 字节，实际 {len(bhash)}")
    return (
        request_id.to_bytes(8, "big")
        + (b"\x01" if answer.included else b"\x00")
        + number.to_bytes(8, "big")
        + bhash
        + (b"\x01" if answer.confirmed else b"\x00")
    )


def decode_result_payload(payload: bytes) -> ResultPayload:
    if len(payload) != PAYLOAD_SIZE:
        raise ValueError(f"结果载荷长度应为 {PAYLOAD_SIZE} 字节，实际 {len(payload)}")
    flags = payload[8], payload[49]
    if any(f not in (0, 1) for f in flags):
        raise ValueError("结果载荷标志位只能为 0/1")
    return ResultPayload(
        int.from_bytes(payload[:8], "big"),
        VerificationAnswer(
            included=bool(payload[8]),
            block_number=int.from_bytes(payload[9:17], "big"),
            block_hash=payload[17:49],
            confirmed=bool(payload[49]),
        ),
    )


def payload_request_id(payload: bytes) -> int:
    return int.from_bytes(payload[:8], "big")
