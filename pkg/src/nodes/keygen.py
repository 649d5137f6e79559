import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional, Set

from ..contracts.core import Event, KeySubmissionMode
from ..dkg import (
    Complaint,
    DealCommitment,
    DkgConfig,
    DkgError,
    DkgSession,
    DkgTranscript,
    KeyShare,
    public_material,
)
from ..group import PointG2, random_scalar
from .behavior import BehaviorKind
from .messages import NodeContext, ShareDelivery

logger = logging.getLogger("vote-oracle.nodes.keygen")

# 分发阶段与投诉阶段各占的区块数
DEAL_PHASE_BLOCKS = 2
COMPLAINT_PHASE_BLOCKS = 2
# 候选提交者之间的间隔
SUBMIT_STAGGER = 2

TOPIC_DEAL = "dkg/deal"
TOPIC_COMPLAINT = "dkg/complaint"


@dataclass
class SessionState:
    """单个会话在本节点上的视图；非参与者只做旁观（可以算出 PK 与验证公钥）"""

    config: DkgConfig
    started_at: int
    validator_threshold: int
    transcript: DkgTranscript
    dkg: Optional[DkgSession] = None
    dealt: bool = False
    checked: bool = False
    finalized: bool = False
    failed: bool = False
    qualified: FrozenSet[str] = frozenset()
    public_key: Optional[PointG2] = None
    verification_keys: Dict[int, PointG2] = field(default_factory=dict)
    key_share: Optional[KeyShare] = None
    slashed: Set[str] = field(default_factory=set)
    submit_base: int = 0
    submitted_round: int = -1
    rejections: int = 0
    disputed: Set[int] = field(default_factory=set)

    @property
    def session(self) -> int:
        return self.config.session

    def deal_at(self, wait: int) -> int:
        return self.started_at + wait

    def deal_deadline(self, wait: int) -> int:
        return self.deal_at(wait) + DEAL_PHASE_BLOCKS

    def complaint_deadline(self, wait: int) -> int:
        return self.deal_deadline(wait) + COMPLAINT_PHASE_BLOCKS


class KeygenMixin:
    """DKG 参与、公钥提交/争议；依赖 OracleNode 上的 node_id / profile / identity / rng"""

    def _on_key_generation(self, ev: Event):
        config = DkgConfig(tuple(ev.data["participants"]), ev.data["threshold"], ev.data["session"])
        state = SessionState(
            config=config,
            started_at=ev.height,
            validator_threshold=ev.data["validator_threshold"],
            transcript=DkgTranscript(config),
        )
        if self.node_id in config.participants:
            state.dkg = DkgSession(self.node_id, config, self.identity.secret, self.identities, self.rng)
            state.transcript = state.dkg.transcript
        self.sessions[config.session] = state
        logger.debug(f"[{self.node_id}] 会话 #{config.session} 开始（参与: {state.dkg is not None}）")

    def _on_broadcast(self, ev: Event):
        topic, body, sender = ev.data["topic"], ev.data["body"], ev.data["sender"]
        if topic == TOPIC_DEAL and isinstance(body, DealCommitment):
            state = self.sessions.get(body.session)
            if state is None or sender != body.dealer:
                return
            if ev.height > state.deal_deadline(self.dkg_wait):
                logger.debug(f"[{self.node_id}] 忽略迟到的分发 {body.dealer}")
                return
            if state.dkg is not None:
                state.dkg.receive_commitment(body)
            else:
                try:
                    state.transcript.add_deal(body)
                except DkgError as e:
                    logger.warning(f"⚠️ [{self.node_id}] {e}")
        elif topic == TOPIC_COMPLAINT and isinstance(body, Complaint):
            state = self.sessions.get(body.session)
            if state is None or sender != body.complainer:
                return
            if ev.height > state.complaint_deadline(self.dkg_wait):
                return
            state.transcript.add_complaint(body)

    def _on_key_rejected(self, ev: Event):
        state = self.sessions.get(ev.data["session"])
        if state is None:
            return
        state.slashed.add(ev.data["submitter"])
        state.rejections += 1
        state.submit_base = ev.height + 1

    def _on_share_delivery(self, msg: ShareDelivery):
        state = self.sessions.get(msg.private.session)
        if state is not None and state.dkg is not None:
            state.dkg.receive_share(msg.private)

    # ─── 阶段推进 ───

    def _advance_keygen(self, ctx: NodeContext):
        for state in self.sessions.values():
            if state.failed:
                continue
            if not state.finalized:
                self._advance_dkg(ctx, state)
            if state.finalized and state.public_key is not None:
                self._advance_key_submission(ctx, state)
        self._sync_active_key(ctx)

    def _sync_active_key(self, ctx: NodeContext):
        """链上激活的公钥必须与本地计算一致才使用对应会话的密钥材料"""
        session = ctx.ledger.active_session
        state = self.sessions.get(session)
        if state is not None and state.public_key is not None and state.public_key == ctx.ledger.active_pk:
            if self.active_session != session:
                logger.debug(f"[{self.node_id}] 切换到会话 #{session} 的密钥材料")
            self.active_session = session
        elif session and self.active_session is not None:
            logger.warning(f"⚠️ [{self.node_id}] 会话 #{session} 激活的公钥与本地计算不一致")
            self.active_session = None

    def _advance_dkg(self, ctx: NodeContext, state: SessionState):
        h, wait = ctx.height, self.dkg_wait
        dkg = state.dkg

        if dkg is not None and not state.dealt and state.deal_at(wait) <= h < state.deal_deadline(wait):
            state.dealt = True
            tamper = self.profile.bad_deal_targets
            deal = dkg.deal(tamper)
            ctx.broadcast(TOPIC_DEAL, deal.public)
            for recipient in state.config.participants:
                private = deal.private_for(recipient)
                if recipient == self.node_id:
                    dkg.receive_share(private)
                else:
                    ctx.send(recipient, ShareDelivery(private))
            logger.info(f"📤 [{self.node_id}] 会话 #{state.session} 已分发")

        if dkg is not None and not state.checked and h >= state.deal_deadline(wait):
            state.checked = True
            if h < state.complaint_deadline(wait):
                for complaint in dkg.check_deals():
                    ctx.broadcast(TOPIC_COMPLAINT, complaint)

        if h >= state.complaint_deadline(wait):
            self._finalize_session(ctx, state)

    def _finalize_session(self, ctx: NodeContext, state: SessionState):
        state.finalized = True
        q = state.transcript.qualified(self.identities)
        state.qualified = q
        if len(q) < state.validator_threshold:
            state.failed = True
            logger.warning(
                f"❌ [{self.node_id}] 会话 #{state.session} 合格集合 {len(q)} < v={state.validator_threshold}"
            )
            if state.dkg is not None and ctx.ledger.key_session == state.session:
                ctx.submit("report_failure", session=state.session)
            return

        deals = [d for d in state.transcript.ordered_deals() if d.dealer in q]
        state.public_key, state.verification_keys = public_material(state.config, deals)
        state.submit_base = ctx.height
        if state.dkg is not None:
            try:
                state.key_share = state.dkg.finalize(state.validator_threshold)
            except DkgError as e:
                # 缺少某个合格分发者的私有分片：只能旁观
                logger.warning(f"⚠️ [{self.node_id}] 无法生成密钥分片: {e}")
        state.transcript.public_key = state.public_key

    def _advance_key_submission(self, ctx: NodeContext, state: SessionState):
        ledger = ctx.ledger
        if ledger.key_session != state.session or ledger.active_session == state.session:
            return
        if self.node_id not in ledger.active or self.node_id not in state.config.participants:
            return
        forger = self.profile.kind == BehaviorKind.BYZANTINE and self.profile.forge_key

        pending = ledger.pending_key
        if pending is not None and pending.session == state.session:
            if (
                not forger
                and pending.submitter != self.node_id
                and pending.public_key != state.public_key
                and pending.height not in state.disputed
                and ctx.height + 1 - pending.height < ledger.dispute_window
            ):
                state.disputed.add(pending.height)
                ctx.submit("dispute_key", session=state.session)
                logger.warning(f"⚠️ [{self.node_id}] 争议 {pending.submitter} 提交的公钥")
            return

        if state.key_share is None or state.submitted_round == state.rejections:
            return

        if self.params.key_submission == KeySubmissionMode.VOTE:
            state.submitted_round = state.rejections
            ctx.submit("submit_public_key", session=state.session, public_key=state.public_key)
            return

        if forger:
            state.submitted_round = state.rejections
            fake = PointG2.generator() * random_scalar(self.rng)
            ctx.submit("submit_public_key", session=state.session, public_key=fake)
            logger.warning(f"😈 [{self.node_id}] 提交伪造公钥")
            return

        eligible = [
            p for p in state.config.participants
            if p in state.qualified and p not in state.slashed and p in ledger.active
        ]
        if self.node_id not in eligible:
            return
        rank = eligible.index(self.node_id)
        if ctx.height >= state.submit_base + 1 + rank * SUBMIT_STAGGER:
            state.submitted_round = state.rejections
            ctx.submit("submit_public_key", session=state.session, public_key=state.public_key)
            logger.info(f"🔑 [{self.node_id}] 提交会话 #{state.session} 公钥")

    # ─── 密钥材料 ───

    def active_material(self) -> Optional[SessionState]:
        if self.active_session is None:
            return None
        state = self.sessions.get(self.active_session)
        if state is None or state.public_key is None:
            return None
        return state
