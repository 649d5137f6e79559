"""
密钥合约
发起密钥生成会话、公钥提交/争议/激活（或链上投票聚合），以及失败会话重跑
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Set, Tuple

from ..group import PointG2
from .core import ContractError, ContractParams, KeySubmissionMode, LedgerState
from .registry import RegistryContract

logger = logging.getLogger("vote-oracle.contracts.keys")


@dataclass
class PendingKey:
    session: int
    public_key: PointG2
    submitter: str
    height: int
    disputes: Set[str] = field(default_factory=set)


class KeyContract:
    def __init__(self, state: LedgerState, params: ContractParams, registry: RegistryContract):
        self.state = state
        self.params = params
        self.registry = registry
        registry.keys = self

        self.session = 0
        self.participants: Tuple[str, ...] = ()
        self.threshold = 0
        self.validator_threshold = 0
        self.pending: Optional[PendingKey] = None
        self.votes: Dict[bytes, Set[str]] = {}

        self.active_pk: Optional[PointG2] = None
        self.active_session = 0
        self.active_threshold = 0
        self.active_validator_threshold = 0

        self.failed_sessions: Set[int] = set()
        self.slashed: Dict[int, Set[str]] = {}

    # ─── 会话 ───

    def start_generation(self, reason: str):
        participants = tuple(self.registry.active_ids())
        if not participants:
            logger.warning("⚠️ 没有活跃节点，跳过密钥生成")
            return
        n = len(participants)
        t = n // 2 + 1
        configured = self.params.validator_threshold or t
        v = max(t, min(int(configured), n))

        self.session += 1
        self.participants = participants
        self.threshold = t
        self.validator_threshold = v
        self.pending = None
        self.votes = {}
        self.state.emit(
            "KeyGeneration", session=self.session, participants=list(participants),
            threshold=t, validator_threshold=v, reason=reason,
        )
        logger.info(f"🔑 发起密钥生成会话 #{self.session}: n={n}, t={t}, v={v}（{reason}）")

    def on_block(self):
        """出块时先结算到期的待定公钥"""
        p = self.pending
        if p is not None and self.state.height - p.height >= self.params.dispute_window:
            self._activate(p.session, p.public_key, p.submitter)

    # ─── 交易 ───

    def submit_public_key(self, sender: str, session: int, public_key: PointG2):
        self._check_participant(sender, session)
        if not isinstance(public_key, PointG2) or public_key.is_identity():
            raise ContractError("invalid_public_key", "公钥非法")
        if self.active_session == session:
            raise ContractError("already_active", f"会话 #{session} 的公钥已激活")

        if self.params.key_submission == KeySubmissionMode.VOTE:
            self._vote(sender, session, public_key)
            return

        if self.pending is not None:
            raise ContractError("pending_exists", f"已有待定公钥（提交者 {self.pending.submitter}）")
        if sender in self.slashed.get(session, set()):
            raise ContractError("slashed_submitter", f"{sender} 在本会话已被罚没")
        self.pending = PendingKey(session, public_key, sender, self.state.height)
        self.state.emit(
            "KeySubmitted", session=session, submitter=sender, public_key=public_key,
            window_end=self.state.height + self.params.dispute_window,
        )
        logger.info(f"🔑 {sender} 提交会话 #{session} 公钥，争议窗口 {self.params.dispute_window} 块")

    def dispute_key(self, sender: str, session: int):
        p = self.pending
        if p is None or p.session != session:
            raise ContractError("no_pending", f"会话 #{session} 没有待定公钥")
        if self.state.height - p.height >= self.params.dispute_window:
            raise ContractError("window_closed", "争议窗口已关闭")
        self._check_participant(sender, session)
        if sender == p.submitter:
            raise ContractError("self_dispute", "提交者不能争议自己的公钥")
        if sender in p.disputes:
            raise ContractError("duplicate_dispute", f"{sender} 已提出争议")

        p.disputes.add(sender)
        self.state.emit("KeyDisputed", session=session, node=sender, disputes=len(p.disputes))
        if 2 * len(p.disputes) > len(self.participants):
            self.pending = None
            self.slashed.setdefault(session, set()).add(p.submitter)
            self.state.emit(
                "KeyRejected", session=session, submitter=p.submitter,
                disputes=sorted(p.disputes),
            )
            logger.warning(f"❌ 会话 #{session} 公钥被多数争议否决，罚没 {p.submitter}")
            self.registry.slash(p.submitter, self.params.slash_fraction)

    def report_failure(self, sender: str, session: int):
        """合格集合不足时由参与者上报，每个失败会话只重跑一次"""
        self._check_participant(sender, session)
        if session in self.failed_sessions:
            raise ContractError("already_reported", f"会话 #{session} 已上报失败")
        if self.pending is not None and self.pending.session == session:
            raise ContractError("pending_exists", "会话已有待定公钥")
        self.failed_sessions.add(session)
        self.state.emit("KeyGenerationFailed", session=session, reporter=sender)
        logger.warning(f"🔄 会话 #{session} 失败（{sender} 上报），重新发起")
        self.start_generation("session_failed")

    # ─── 内部 ───

    def _check_participant(self, sender: str, session: int):
        if session != self.session:
            raise ContractError("stale_session", f"会话 #{session} 不是当前会话 #{self.session}")
        if sender not in self.participants:
            raise ContractError("not_participant", f"{sender} 不是会话 #{session} 的参与者")
        if not self.registry.is_active(sender):
            raise ContractError("inactive_node", f"{sender} 不是活跃节点")

    def _vote(self, sender: str, session: int, public_key: PointG2):
        for voters in self.votes.values():
            if sender in voters:
                raise ContractError("duplicate_vote", f"{sender} 已投票")
        voters = self.votes.setdefault(public_key.to_bytes(), set())
        voters.add(sender)
        self.state.emit("KeyVoted", session=session, node=sender, public_key=public_key, votes=len(voters))
        if 2 * len(voters) > len(self.participants):
            self._activate(session, public_key, sender)

    def _activate(self, session: int, public_key: PointG2, submitter: str):
        self.active_pk = public_key
        self.active_session = session
        self.active_threshold = self.threshold
        self.active_validator_threshold = self.validator_threshold
        self.pending = None
        self.votes = {}
        self.state.emit(
            "KeyActivated", session=session, public_key=public_key,
            threshold=self.threshold, validator_threshold=self.validator_threshold,
            submitter=submitter,
        )
        logger.info(f"✅ 会话 #{session} 公钥激活，t={self.threshold}")
