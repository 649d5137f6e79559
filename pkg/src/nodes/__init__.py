"""
预言机节点
由 keygen / validator / aggregator 三个 Mixin 组装，每个节点是一个独立的顺序状态机
"""
from __future__ import annotations

import logging
import random
from typing import Any, Dict, Optional, Tuple

from ..contracts.core import ContractParams
from ..tbls import keygen as tbls_keygen
from .aggregator import AggregatorMixin
from .behavior import BehaviorKind, BehaviorProfile, CorruptionMode
from .keygen import KeygenMixin, SessionState
from .messages import (
    CollectRequest,
    Envelope,
    NodeContext,
    OutgoingTx,
    Response,
    ShareDelivery,
)
from .validator import OpenQuery, ValidatorMixin

logger = logging.getLogger("vote-oracle.nodes")


class OracleNode(KeygenMixin, ValidatorMixin, AggregatorMixin):
    """单个预言机节点；只能通过消息、广播日志和账本快照与外界交互"""

    def __init__(
        self,
        node_id: str,
        profile: BehaviorProfile,
        seed: Any,
        params: ContractParams,
        stake: int,
        host: Optional[str] = None,
        dkg_wait: int = 2,
    ):
        self.node_id = node_id
        self.profile = profile
        self.params = params
        self.stake = stake
        self.host = host or f"{node_id}.oracle.local"
        self.dkg_wait = dkg_wait
        self.rng = random.Random(f"{seed}:{node_id}")
        self.identity = tbls_keygen(self.rng)

        self.identities: Dict[str, Any] = {}
        self.sessions: Dict[int, SessionState] = {}
        self.active_session: Optional[int] = None
        self.queries: Dict[int, OpenQuery] = {}
        self.collected: Dict[int, Dict[int, Response]] = {}
        self.submissions: Dict[int, int] = {}
        # request_id → {(序号, 载荷, 分片编码): 是否有效}
        self._verified: Dict[int, Dict[Tuple[int, bytes, bytes], bool]] = {}
        self.cursor = 0

    def registration_args(self) -> Dict[str, Any]:
        return {"host": self.host, "identity_key": self.identity.public, "stake": self.stake}

    def on_block(self, ctx: NodeContext):
        collects = []
        for env in ctx.inbox:
            body = env.body
            if isinstance(body, ShareDelivery):
                self._on_share_delivery(body)
            elif isinstance(body, Response):
                self._accept_response(body)
            elif isinstance(body, CollectRequest):
                collects.append(env)

        # 离线期间错过的事件在这里按日志顺序补齐
        fresh: Dict[int, OpenQuery] = {}
        events = ctx.ledger.events_since(self.cursor)
        self.cursor = len(ctx.ledger.events)
        for ev in events:
            if ev.kind == "NodeRegistered":
                self.identities[ev.data["node"]] = ev.data["identity_key"]
            elif ev.kind == "KeyGeneration":
                self._on_key_generation(ev)
            elif ev.kind == "Broadcast":
                self._on_broadcast(ev)
            elif ev.kind == "KeyRejected":
                self._on_key_rejected(ev)
            elif ev.kind == "Request":
                self._on_request(ev)
                fresh[ev.data["request_id"]] = self.queries[ev.data["request_id"]]
            elif ev.kind == "ResultAvailable":
                rid = ev.data["request_id"]
                self.queries.pop(rid, None)
                fresh.pop(rid, None)
                self._close_request(rid)

        self._advance_keygen(ctx)
        if fresh:
            self._push_responses(ctx, fresh)
        for env in collects:
            self._answer_collect(ctx, env)
        self._aggregate_round(ctx)


__all__ = [
    "BehaviorKind",
    "BehaviorProfile",
    "CollectRequest",
    "CorruptionMode",
    "Envelope",
    "NodeContext",
    "OpenQuery",
    "OracleNode",
    "OutgoingTx",
    "Response",
    "SessionState",
    "ShareDelivery",
]
