"""
预言机合约
请求托管、结果验证（配对校验）、奖励发放与基于签名随机性的抽奖
"""
from __future__ import annotations

import hashlib
import logging
from fractions import Fraction
from typing import Dict, Optional, Tuple

from ..tbls import Signature, verify
from .core import (
    ContractError,
    ContractParams,
    Fees,
    LedgerState,
    Query,
    Request,
    ResultRecord,
    payload_request_id,
    PAYLOAD_SIZE,
)
from .keys import KeyContract
from .registry import RegistryContract

logger = logging.getLogger("vote-oracle.contracts.oracle")

LOTTERY_EXPONENT = 2


def win_probability(stake: int, total_stake: int, alpha: float) -> Fraction:
    """p = min(1, α·(stake/total)²)，用有理数精确表示"""
    if total_stake <= 0 or stake <= 0:
        return Fraction(0)
    share = Fraction(stake, total_stake)
    return min(Fraction(1), Fraction(str(alpha)) * share ** LOTTERY_EXPONENT)


def lottery_draw(signature: Signature) -> Fraction:
    """u = SHA-256(σ 编码) / 2²⁵⁶ ∈ [0, 1)"""
    digest = hashlib.sha256(signature.to_bytes()).digest()
    return Fraction(int.from_bytes(digest, "big"), 1 << 256)


def run_lottery(signature: Signature, stake: int, total_stake: int, pot: int,
                alpha: float = 0.5) -> Tuple[bool, int]:
    """纯函数：相同签名与质押表必然得到相同结果"""
    win = lottery_draw(signature) < win_probability(stake, total_stake, alpha)
    return win, (pot if win else 0)


class OracleContract:
    def __init__(self, state: LedgerState, params: ContractParams,
                 registry: RegistryContract, keys: KeyContract):
        self.state = state
        self.params = params
        self.registry = registry
        self.keys = keys
        self.next_request_id = 1
        self.requests: Dict[int, Request] = {}
        self.results: Dict[int, ResultRecord] = {}

    def request_verification(self, sender: str, query: Query, fees: Fees) -> int:
        p = self.params
        if (
            fees.compensation < p.tx_compensation
            or fees.aggregation_reward < p.aggregation_reward
            or fees.validation_contribution < p.validation_contribution
        ):
            raise ContractError(
                "underpaid",
                f"费用不足: 需要 ({p.tx_compensation}, {p.aggregation_reward}, "
                f"{p.validation_contribution})",
            )
        if query.min_confirmations < 0:
            raise ContractError("invalid_query", "确认数不能为负")
        self.state.debit(sender, fees.total)
        self.state.escrow += fees.total

        rid = self.next_request_id
        self.next_request_id += 1
        self.requests[rid] = Request(rid, sender, fees, self.state.height)
        self.state.emit(
            "Request", request_id=rid, client=sender, chain_id=query.chain_id,
            tx_id=query.tx_id, min_confirmations=query.min_confirmations,
            format=query.format.value, fees=fees.total,
        )
        logger.info(f"📨 请求 #{rid}: {query.tx_id}@{query.chain_id} (n={query.min_confirmations})")
        return rid

    def submit_result(self, sender: str, request_id: int, payload: bytes, signature: Signature) -> ResultRecord:
        scheduled = self.registry.current_aggregator(self.state.height)
        if sender != scheduled:
            raise ContractError("not_aggregator", f"{sender} 不是当前聚合者（应为 {scheduled}）")
        pk = self.keys.active_pk
        if pk is None:
            raise ContractError("no_active_key", "尚无激活的公钥")
        if request_id in self.results:
            raise ContractError("duplicate_result", f"请求 #{request_id} 已有结果")
        req = self.requests.get(request_id)
        if req is None:
            raise ContractError("unknown_request", f"请求 #{request_id} 不存在")
        if len(payload) != PAYLOAD_SIZE or payload_request_id(payload) != request_id:
            raise ContractError("payload_mismatch", "载荷与请求编号不符")
        if not verify(signature, payload, pk):
            raise ContractError("invalid_signature", "配对校验失败")

        fees = req.fees
        self.state.escrow -= fees.total
        self.state.credit(sender, fees.compensation + fees.aggregation_reward)
        self.state.pot += fees.validation_contribution

        stake = self.registry.records[sender].stake
        win, payout = run_lottery(
            signature, stake, self.registry.total_stake(), self.state.pot, self.params.lottery_alpha,
        )
        if win:
            self.state.pot -= payout
            self.state.credit(sender, payout)

        record = ResultRecord(request_id, payload, signature, sender, self.state.height, win, payout)
        self.results[request_id] = record
        del self.requests[request_id]
        self.state.emit(
            "ResultAvailable", request_id=request_id, aggregator=sender, payload=payload,
            reward=fees.compensation + fees.aggregation_reward, lottery_win=win, payout=payout,
        )
        if win:
            logger.info(f"🎰 {sender} 抽中验证奖池 {payout}")
        logger.info(f"✅ 请求 #{request_id} 结果已上链（聚合者 {sender}）")
        return record

    def get_result(self, request_id: int) -> Optional[ResultRecord]:
        return self.results.get(request_id)

    def open_request_ids(self):
        return sorted(self.requests)
