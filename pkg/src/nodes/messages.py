"""
节点间消息
点对点信道上的私有分片、验证响应、收集请求，以及节点每个区块拿到的上下文
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from ..dkg import PrivateShare
from ..ledger import LedgerView
from ..sourcechain import SourceView
from ..tbls import SignatureShare


@dataclass(frozen=True)
class ShareDelivery:
    private: PrivateShare

    kind = "dkg_share"


@dataclass(frozen=True)
class Response:
    request_id: int
    session: int
    payload: bytes
    share: SignatureShare

    kind = "response"


@dataclass(frozen=True)
class CollectRequest:
    request_ids: Tuple[int, ...]

    kind = "collect"


@dataclass(frozen=True)
class Envelope:
    seq: int
    sender: str
    recipient: str
    sent_at: int
    body: Any

    @property
    def kind(self) -> str:
        return getattr(self.body, "kind", type(self.body).__name__)


@dataclass
class OutgoingTx:
    method: str
    args: Dict[str, Any]


@dataclass
class NodeContext:
    """模拟器在每个区块交给节点的只读输入 + 输出缓冲"""

    height: int
    ledger: LedgerView
    source: SourceView
    inbox: List[Envelope] = field(default_factory=list)
    sent: List[Tuple[str, Any]] = field(default_factory=list)
    txs: List[OutgoingTx] = field(default_factory=list)

    def send(self, recipient: str, body: Any):
        self.sent.append((recipient, body))

    def submit(self, method: str, **args):
        self.txs.append(OutgoingTx(method, args))

    def broadcast(self, topic: str, body: Any):
        """DKG 广播走账本事件日志"""
        self.submit("broadcast", topic=topic, body=body)
