"""
注册合约
节点注册/退出/踢出、质押记账、聚合者轮换以及密钥生成触发
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Set

from ..group import PointG2
from .core import ContractError, ContractParams, LedgerState, NodeStatus

if TYPE_CHECKING:
    from .keys import KeyContract

logger = logging.getLogger("vote-oracle.contracts.registry")


@dataclass
class NodeRecord:
    node_id: str
    host: str
    identity_key: PointG2
    stake: int
    ordinal: int
    status: NodeStatus = NodeStatus.ACTIVE
    joined_height: int = 0


class RegistryContract:
    def __init__(self, state: LedgerState, params: ContractParams):
        self.state = state
        self.params = params
        self.records: Dict[str, NodeRecord] = {}
        self.counter = 0
        self.kick_votes: Dict[str, Set[str]] = {}
        self.keys: Optional["KeyContract"] = None

    # ─── 查询 ───

    def active_nodes(self) -> List[NodeRecord]:
        """按注册序排列的活跃节点（序号永不复用）"""
        return [r for r in self.records.values() if r.status == NodeStatus.ACTIVE]

    def active_ids(self) -> List[str]:
        return [r.node_id for r in self.active_nodes()]

    def is_active(self, node_id: str) -> bool:
        rec = self.records.get(node_id)
        return rec is not None and rec.status == NodeStatus.ACTIVE

    def total_stake(self) -> int:
        return sum(r.stake for r in self.active_nodes())

    def current_aggregator(self, height: int) -> str:
        """floor(height / period) mod |active| 处的活跃节点"""
        actives = self.active_nodes()
        if not actives:
            raise ContractError("no_active_nodes", "没有活跃节点，无法确定聚合者")
        slot = (height // self.params.rotation_period) % len(actives)
        return actives[slot].node_id

    # ─── 交易 ───

    def register(self, sender: str, host: str, identity_key: PointG2, stake: int):
        if sender in self.records:
            raise ContractError("duplicate_node", f"节点 ID 已注册: {sender}")
        if stake < self.params.min_stake:
            raise ContractError(
                "insufficient_stake", f"质押 {stake} 低于最低要求 {self.params.min_stake}"
            )
        if not isinstance(identity_key, PointG2) or identity_key.is_identity():
            raise ContractError("invalid_identity_key", "身份公钥非法")
        self.state.debit(sender, stake)

        rec = NodeRecord(sender, host, identity_key, stake, len(self.records), joined_height=self.state.height)
        self.records[sender] = rec
        self.counter += 1
        self.state.emit(
            "NodeRegistered", node=sender, host=host, ordinal=rec.ordinal,
            stake=stake, identity_key=identity_key,
        )
        logger.info(f"✅ 节点注册 {sender}（序号 {rec.ordinal}，质押 {stake}）")

        if self.counter >= self.params.dkg_trigger_count:
            self.counter = 0
            self.keys.start_generation("registrations")

    def deregister(self, sender: str):
        rec = self._active_record(sender)
        rec.status = NodeStatus.EXITING
        self.state.credit(sender, rec.stake)
        returned, rec.stake = rec.stake, 0
        self.kick_votes.pop(sender, None)
        self.state.emit("NodeExited", node=sender, returned=returned)
        logger.info(f"👋 节点退出 {sender}，返还质押 {returned}")
        self._check_validators()

    def kick(self, target: str, votes: Iterable[str]):
        """活跃节点（不含目标）的严格多数同意后踢出并销毁质押"""
        rec = self._active_record(target)
        others = [n for n in self.active_ids() if n != target]
        voters = {v for v in votes if v in others}
        if 2 * len(voters) <= len(others):
            raise ContractError(
                "no_majority", f"踢出 {target} 需要 {len(others) // 2 + 1} 票，只有 {len(voters)} 票"
            )
        self._burn(rec, rec.stake)
        rec.status = NodeStatus.KICKED
        self.kick_votes.pop(target, None)
        self.state.emit("NodeKicked", node=target, voters=sorted(voters))
        logger.warning(f"🚫 节点 {target} 被多数投票踢出，质押销毁")
        self._check_validators()

    def vote_kick(self, sender: str, target: str):
        self._active_record(sender)
        self._active_record(target)
        if sender == target:
            raise ContractError("self_vote", "不能投票踢出自己")
        votes = self.kick_votes.setdefault(target, set())
        votes.add(sender)
        self.state.emit("KickVote", voter=sender, target=target, votes=len(votes))
        others = len(self.active_ids()) - 1
        if 2 * len(votes) > others:
            self.kick(target, votes)

    def slash(self, node_id: str, fraction: float) -> int:
        """按比例销毁质押；不足最低质押时强制退出并返还剩余部分"""
        rec = self.records[node_id]
        amount = int(rec.stake * fraction)
        self._burn(rec, amount)
        self.state.emit("Slashed", node=node_id, amount=amount, remaining=rec.stake)
        logger.warning(f"⚔️ 节点 {node_id} 被罚没 {amount}，剩余质押 {rec.stake}")
        if rec.status == NodeStatus.ACTIVE and rec.stake < self.params.min_stake:
            rec.status = NodeStatus.EXITING
            self.state.credit(node_id, rec.stake)
            returned, rec.stake = rec.stake, 0
            self.state.emit("NodeExited", node=node_id, returned=returned)
            self._check_validators()
        return amount

    # ─── 内部 ───

    def _active_record(self, node_id: str) -> NodeRecord:
        rec = self.records.get(node_id)
        if rec is None:
            raise ContractError("unknown_node", f"未注册的节点: {node_id}")
        if rec.status != NodeStatus.ACTIVE:
            raise ContractError("inactive_node", f"节点 {node_id} 状态为 {rec.status.value}")
        return rec

    def _burn(self, rec: NodeRecord, amount: int):
        rec.stake -= amount
        self.state.burned += amount

    def _check_validators(self):
        """活跃验证者低于 v 时重新生成密钥"""
        keys = self.keys
        if keys is None or keys.session == 0:
            return
        if len(self.active_nodes()) < keys.validator_threshold and self.active_nodes():
            logger.warning(
                f"⚠️ 活跃节点 {len(self.active_nodes())} 个，低于验证者门限 {keys.validator_threshold}"
            )
            keys.start_generation("validators_below_threshold")
