"""
分布式密钥生成模块
Pedersen DKG：n 路并行 Feldman VSS + 投诉处理 + 合格集合计算 + 密钥分片汇总
"""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    Collection, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union,
)

from .group import PointG2, Scalar, random_scalar
from .sharing import (
    FeldmanCommitment,
    Share,
    aggregate_commitments,
    deal as shamir_deal,
    feldman_verify,
)
from .tbls import Signature, sign, verify

logger = logging.getLogger("vote-oracle.dkg")

_COMMIT_DOMAIN = b"vote-oracle/dkg/commit"
_SHARE_DOMAIN = b"vote-oracle/dkg/share"


class DkgError(ValueError):
    """DKG 参数或消息非法"""


class DuplicateDealerError(DkgError):
    """同一会话中同一节点重复分发"""


class DkgSessionFailed(DkgError):
    """合格集合低于验证者门限，需要重新运行"""


@dataclass(frozen=True)
class DkgConfig:
    """participants 按注册序排列，节点的分片位置 = 列表下标 + 1"""

    participants: Tuple[str, ...]
    threshold: int
    session: int

    def __post_init__(self):
        if len(set(self.participants)) != len(self.participants):
            raise DkgError("参与者 ID 重复")
        if not 1 <= self.threshold <= len(self.participants):
            raise DkgError(
                f"门限非法: t={self.threshold}, n={len(self.participants)}"
            )

    @property
    def n(self) -> int:
        return len(self.participants)

    def index_of(self, node_id: str) -> int:
        try:
            return self.participants.index(node_id) + 1
        except ValueError:
            raise DkgError(f"节点 {node_id} 不是会话 #{self.session} 的参与者") from None

    def node_at(self, index: int) -> str:
        return self.participants[index - 1]


def _id_bytes(node_id: str) -> bytes:
    raw = node_id.encode("utf-8")
    return len(raw).to_bytes(2, "big") + raw


def commitment_message(session: int, dealer: str, commitment: FeldmanCommitment) -> bytes:
    return (
        _COMMIT_DOMAIN + session.to_bytes(8, "big") + _id_bytes(dealer)
        + b"".join(pt.to_bytes() for pt in commitment.points)
    )


def share_message(session: int, dealer: str, share: Share) -> bytes:
    return (
        _SHARE_DOMAIN + session.to_bytes(8, "big") + _id_bytes(dealer)
        + share.index.to_bytes(4, "big") + share.value.to_bytes()
    )


# ═══════════════════════════════════════════════════════
# 消息类型
# ═══════════════════════════════════════════════════════


@dataclass(frozen=True)
class DealCommitment:
    """广播部分：承诺 + 分发者签名"""

    dealer: str
    session: int
    commitment: FeldmanCommitment
    signature: Signature


@dataclass(frozen=True)
class PrivateShare:
    """点对点部分：发给单个接收者的分片 + 分发者对分片的签名"""

    dealer: str
    session: int
    recipient: str
    share: Share
    signature: Signature


@dataclass(frozen=True)
class Deal:
    dealer: str
    session: int
    commitment: FeldmanCommitment
    shares: Mapping[str, Share]
    signature: Signature
    share_signatures: Mapping[str, Signature]

    @property
    def public(self) -> DealCommitment:
        return DealCommitment(self.dealer, self.session, self.commitment, self.signature)

    def private_for(self, recipient: str) -> Optional[PrivateShare]:
        share = self.shares.get(recipient)
        if share is None:
            return None
        return PrivateShare(
            self.dealer, self.session, recipient, share,
            self.share_signatures[recipient],
        )

    @classmethod
    def assemble(cls, public: DealCommitment, private: Optional[PrivateShare]) -> "Deal":
        """接收方视角：广播承诺 + 自己收到的那一份分片"""
        shares: Dict[str, Share] = {}
        sigs: Dict[str, Signature] = {}
        if private is not None:
            shares[private.recipient] = private.share
            sigs[private.recipient] = private.signature
        return cls(public.dealer, public.session, public.commitment, shares, public.signature, sigs)


@dataclass(frozen=True)
class Complaint:
    complainer: str
    dealer: str
    session: int
    share: Optional[Share]
    signature: Optional[Signature]


@dataclass(frozen=True)
class KeyShare:
    session: int
    index: int
    secret: Scalar
    public_key: PointG2
    verification_keys: Mapping[int, PointG2]
    threshold: int
    qualified: FrozenSet[str] = frozenset()


DealLike = Union[Deal, DealCommitment]


# ═══════════════════════════════════════════════════════
# 协议步骤
# ═══════════════════════════════════════════════════════


def dkg_deal(
    node_id: str,
    config: DkgConfig,
    rng: random.Random,
    identity_secret: Scalar,
    tamper: Collection[str] = (),
) -> Deal:
    """
    作为分发者随机选取秘密并分享。

    tamper 中的接收者会收到被篡改（+1）但仍然带签名的分片，用于模拟恶意分发者。
    """
    config.index_of(node_id)
    poly, shares = shamir_deal(random_scalar(rng), config.threshold, config.n, rng)
    commitment = FeldmanCommitment(tuple(PointG2.generator() * a for a in poly.coefficients))

    by_recipient: Dict[str, Share] = {}
    for share in shares:
        recipient = config.node_at(share.index)
        if recipient in tamper:
            share = Share(share.index, share.value + 1)
            logger.debug(f"[{node_id}] 篡改发给 {recipient} 的分片")
        by_recipient[recipient] = share

    return Deal(
        dealer=node_id,
        session=config.session,
        commitment=commitment,
        shares=by_recipient,
        signature=sign(identity_secret, commitment_message(config.session, node_id, commitment)),
        share_signatures={
            r: sign(identity_secret, share_message(config.session, node_id, s))
            for r, s in by_recipient.items()
        },
    )


def process_deal(receiver: str, deal: Deal, config: DkgConfig) -> Optional[Complaint]:
    """校验自己收到的分片；不通过（或缺失）则返回投诉"""
    share = deal.shares.get(receiver)
    signature = deal.share_signatures.get(receiver)
    if share is None or signature is None:
        logger.warning(f"⚠️ [{receiver}] 缺少来自 {deal.dealer} 的分片")
        return Complaint(receiver, deal.dealer, deal.session, None, None)

    if (
        len(deal.commitment) != config.threshold
        or share.index != config.index_of(receiver)
        or not feldman_verify(share, deal.commitment)
    ):
        logger.warning(f"⚠️ [{receiver}] 来自 {deal.dealer} 的分片校验失败，发起投诉")
        return Complaint(receiver, deal.dealer, deal.session, share, signature)
    return None


def complaint_is_valid(
    complaint: Complaint,
    deal: DealLike,
    config: DkgConfig,
    identities: Mapping[str, PointG2],
) -> bool:
    """
    投诉成立条件：内嵌分片带有分发者的真实签名，且无法通过其广播承诺的 Feldman 校验。
    """
    if complaint.share is None or complaint.signature is None:
        return False
    if complaint.complainer not in config.participants or complaint.session != deal.session:
        return False
    if complaint.share.index != config.index_of(complaint.complainer):
        return False
    dealer_key = identities.get(deal.dealer)
    if dealer_key is None:
        return False
    msg = share_message(deal.session, deal.dealer, complaint.share)
    if not verify(complaint.signature, msg, dealer_key):
        return False
    if len(deal.commitment) != config.threshold:
        return True
    return not feldman_verify(complaint.share, deal.commitment)


def qualified_set(
    deals: Sequence[DealLike],
    complaints: Sequence[Complaint],
    config: DkgConfig,
    identities: Mapping[str, PointG2],
) -> FrozenSet[str]:
    """成功分发且未被有效投诉的分发者集合"""
    by_dealer: Dict[str, DealLike] = {}
    for d in deals:
        if d.session != config.session or d.dealer not in config.participants:
            continue
        if len(d.commitment) != config.threshold:
            # 承诺格式错误是公开可见的，直接排除
            continue
        by_dealer.setdefault(d.dealer, d)

    excluded = set()
    for c in complaints:
        deal = by_dealer.get(c.dealer)
        if deal is None or c.dealer in excluded:
            continue
        if complaint_is_valid(c, deal, config, identities):
            logger.info(f"🚫 会话 #{config.session}: 投诉成立，排除分发者 {c.dealer}")
            excluded.add(c.dealer)
        else:
            logger.info(f"ℹ️ 会话 #{config.session}: 忽略 {c.complainer} 对 {c.dealer} 的无效投诉")

    return frozenset(d for d in by_dealer if d not in excluded)


def finalize(
    node_id: str,
    config: DkgConfig,
    deals: Sequence[DealLike],
    shares: Mapping[str, Share],
    validator_threshold: Optional[int] = None,
) -> KeyShare:
    """
    汇总合格分发者的分片：xᵢ = Σ s_{j,i}，PK = Σ A_{j,0}。

    deals 必须已限制在合格集合 Q 内；shares 为本节点从各分发者处收到的分片。
    """
    v = validator_threshold if validator_threshold is not None else config.threshold
    ordered = sorted(deals, key=lambda d: config.index_of(d.dealer))
    qualified = frozenset(d.dealer for d in ordered)
    if len(qualified) < v:
        raise DkgSessionFailed(
            f"会话 #{config.session} 合格分发者 {len(qualified)} 个，低于验证者门限 {v}"
        )

    index = config.index_of(node_id)
    missing = [d.dealer for d in ordered if d.dealer not in shares]
    if missing:
        raise DkgError(f"[{node_id}] 缺少合格分发者的分片: {', '.join(missing)}")

    secret = sum((shares[d.dealer].value for d in ordered), Scalar(0))
    public_key, verification_keys = public_material(config, ordered)

    return KeyShare(
        session=config.session,
        index=index,
        secret=secret,
        public_key=public_key,
        verification_keys=verification_keys,
        threshold=config.threshold,
        qualified=qualified,
    )


def public_material(config: DkgConfig, deals: Sequence[DealLike]) -> Tuple[PointG2, Dict[int, PointG2]]:
    """
    只根据合格分发者的广播承诺计算 PK 与各位置的验证公钥（不需要任何私有分片）。

    vk_i = Σ_j Σ_k A_{j,k}·i^k，PK = Σ_j A_{j,0}
    """
    combined = aggregate_commitments([d.commitment for d in deals])
    return combined.points[0], {i: combined.evaluate(i) for i in range(1, config.n + 1)}


# ═══════════════════════════════════════════════════════
# 广播记录
# ═══════════════════════════════════════════════════════


@dataclass
class DkgTranscript:
    """按 (session, dealer index) 排序的广播记录，所有诚实节点据此得出相同的 Q"""

    config: DkgConfig
    deals: Dict[str, DealCommitment] = field(default_factory=dict)
    complaints: List[Complaint] = field(default_factory=list)
    public_key: Optional[PointG2] = None

    def add_deal(self, deal: DealLike):
        if deal.session != self.config.session:
            raise DkgError(f"会话不匹配: {deal.session} != {self.config.session}")
        self.config.index_of(deal.dealer)
        if deal.dealer in self.deals:
            raise DuplicateDealerError(
                f"会话 #{self.config.session} 中 {deal.dealer} 重复分发"
            )
        public = deal.public if isinstance(deal, Deal) else deal
        self.deals[deal.dealer] = public

    def add_complaint(self, complaint: Complaint):
        if complaint.session != self.config.session:
            raise DkgError(f"会话不匹配: {complaint.session} != {self.config.session}")
        self.complaints.append(complaint)

    def ordered_deals(self) -> List[DealCommitment]:
        return sorted(self.deals.values(), key=lambda d: self.config.index_of(d.dealer))

    def ordered_complaints(self) -> List[Complaint]:
        return sorted(
            self.complaints,
            key=lambda c: (self.config.index_of(c.dealer), self.config.index_of(c.complainer)),
        )

    def qualified(self, identities: Mapping[str, PointG2]) -> FrozenSet[str]:
        return qualified_set(self.ordered_deals(), self.ordered_complaints(), self.config, identities)

    def to_records(self) -> List[dict]:
        records: List[dict] = [{
            "type": "session",
            "session": self.config.session,
            "participants": list(self.config.participants),
            "threshold": self.config.threshold,
        }]
        for d in self.ordered_deals():
            records.append({
                "type": "deal",
                "session": d.session,
                "dealer": d.dealer,
                "commitment": [pt.hex() for pt in d.commitment.points],
                "signature": d.signature.to_bytes().hex(),
            })
        for c in self.ordered_complaints():
            records.append({
                "type": "complaint",
                "session": c.session,
                "complainer": c.complainer,
                "dealer": c.dealer,
                "share_index": c.share.index if c.share else None,
                "share_value": c.share.value.to_bytes().hex() if c.share else None,
                "signature": c.signature.to_bytes().hex() if c.signature else None,
            })
        if self.public_key is not None:
            records.append({
                "type": "public_key",
                "session": self.config.session,
                "public_key": self.public_key.hex(),
            })
        return records

    def dump(self, path: Union[str, Path]):
        """写出 JSON lines，供 CLI 事后检查"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.to_records():
                f.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def load_transcript_records(path: Union[str, Path]) -> List[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"DKG 记录文件不存在: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


# ═══════════════════════════════════════════════════════
# 单节点状态机
# ═══════════════════════════════════════════════════════


class DkgSession:
    """
    单个节点在一次 DKG 会话中的状态机（单一所有者，按消息推进）。

    同一会话内按收件顺序处理；不同会话互相独立。
    """

    def __init__(
        self,
        node_id: str,
        config: DkgConfig,
        identity_secret: Scalar,
        identities: Mapping[str, PointG2],
        rng: random.Random,
    ):
        self.node_id = node_id
        self.config = config
        self.identity_secret = identity_secret
        self.identities = dict(identities)
        self.rng = rng
        self.transcript = DkgTranscript(config)
        self.received: Dict[str, PrivateShare] = {}
        self.own_deal: Optional[Deal] = None
        self.key_share: Optional[KeyShare] = None
        self.failed = False
        self._checked: set = set()

    @property
    def index(self) -> int:
        return self.config.index_of(self.node_id)

    def deal(self, tamper: Collection[str] = ()) -> Deal:
        if self.own_deal is not None:
            raise DuplicateDealerError(f"[{self.node_id}] 本会话已分发过")
        self.own_deal = dkg_deal(self.node_id, self.config, self.rng, self.identity_secret, tamper)
        return self.own_deal

    def receive_commitment(self, public: DealCommitment):
        try:
            self.transcript.add_deal(public)
        except DuplicateDealerError as e:
            logger.warning(f"⚠️ [{self.node_id}] {e}")

    def receive_share(self, private: PrivateShare):
        if private.recipient != self.node_id or private.session != self.config.session:
            return
        self.received.setdefault(private.dealer, private)

    def receive_complaint(self, complaint: Complaint):
        self.transcript.add_complaint(complaint)

    def check_deals(self) -> List[Complaint]:
        """对所有已收到承诺的分发者校验自己的分片，返回需要广播的投诉"""
        complaints = []
        for public in self.transcript.ordered_deals():
            if public.dealer in self._checked:
                continue
            self._checked.add(public.dealer)
            local = Deal.assemble(public, self.received.get(public.dealer))
            complaint = process_deal(self.node_id, local, self.config)
            if complaint is not None and complaint.share is not None:
                complaints.append(complaint)
        return complaints

    def qualified(self) -> FrozenSet[str]:
        return self.transcript.qualified(self.identities)

    def finalize(self, validator_threshold: Optional[int] = None) -> KeyShare:
        q = self.qualified()
        deals = [d for d in self.transcript.ordered_deals() if d.dealer in q]
        shares = {d: p.share for d, p in self.received.items() if d in q}
        try:
            self.key_share = finalize(self.node_id, self.config, deals, shares, validator_threshold)
        except DkgError:
            self.failed = True
            raise
        self.transcript.public_key = self.key_share.public_key
        logger.info(
            f"🔑 [{self.node_id}] 会话 #{self.config.session} 完成: "
            f"|Q|={len(q)}, PK={self.key_share.public_key.hex()[:16]}…"
        )
        return self.key_share


def run_local_dkg(
    config: DkgConfig,
    rng: random.Random,
    tamper: Optional[Mapping[str, Collection[str]]] = None,
    validator_threshold: Optional[int] = None,
) -> Tuple[Dict[str, KeyShare], DkgTranscript]:
    """
    在单进程内跑完一次完整 DKG（CLI 演示与测试使用）。

    tamper: 分发者 → 收到篡改分片的接收者集合
    """
    from .tbls import keygen

    tamper = tamper or {}
    identities = {node: keygen(rng) for node in config.participants}
    public_ids = {node: kp.public for node, kp in identities.items()}
    sessions = {
        node: DkgSession(node, config, identities[node].secret, public_ids, rng)
        for node in config.participants
    }

    deals = [sessions[node].deal(tamper.get(node, ())) for node in config.participants]
    for deal in deals:
        for node, session in sessions.items():
            session.receive_commitment(deal.public)
            private = deal.private_for(node)
            if private is not None:
                session.receive_share(private)

    complaints = [c for s in sessions.values() for c in s.check_deals()]
    for c in complaints:
        for session in sessions.values():
            session.receive_complaint(c)

    key_shares = {
        node: session.finalize(validator_threshold) for node, session in sessions.items()
    }
    first = sessions[config.participants[0]]
    return key_shares, first.transcript
