"""
源链模拟模块
提供交易包含查询、确认深度、分叉/延迟视图，用于模拟"暂时性不一致"
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

logger = logging.getLogger("vote-oracle.sourcechain")

ZERO_HASH = bytes(32)
GENESIS_HASH = hashlib.sha256(b"vote-oracle/source/genesis").digest()


class SourceChainError(ValueError):
    """源链脚本引用了不存在的区块/分支"""


def block_hash(parent: bytes, number: int, tx_ids: Iterable[str], salt: str = "") -> bytes:
    """SHA-256(parent ‖ number ‖ sorted tx ids [‖ branch salt])"""
    h = hashlib.sha256()
    h.update(parent)
    h.update(number.to_bytes(8, "big"))
    for tx in sorted(tx_ids):
        raw = tx.encode("utf-8")
        h.update(len(raw).to_bytes(2, "big") + raw)
    if salt:
        h.update(b"branch:" + salt.encode("utf-8"))
    return h.digest()


@dataclass(frozen=True)
class SourceBlock:
    number: int
    hash: bytes
    parent: bytes
    tx_ids: FrozenSet[str] = frozenset()
    branch: Optional[str] = None


@dataclass(frozen=True)
class VerificationAnswer:
    """查询结果；未包含时区块字段全部为零"""

    included: bool
    block_number: int = 0
    block_hash: bytes = ZERO_HASH
    confirmed: bool = False

    @classmethod
    def absent(cls) -> "VerificationAnswer":
        return cls(False, 0, ZERO_HASH, False)


@dataclass(frozen=True)
class SourceView:
    """某个节点看到的源链快照（只读）"""

    owner: str
    head: SourceBlock
    lag: int = 0
    branch: Optional[str] = None
    blocks: Mapping[bytes, SourceBlock] = field(default_factory=dict, repr=False, compare=False)

    def ancestors(self):
        """从 head 向创世块回溯"""
        block = self.head
        while block is not None:
            yield block
            block = self.blocks.get(block.parent)


def query(view: SourceView, tx_id: str, min_confirmations: int) -> VerificationAnswer:
    """交易所在区块，以及其上方是否已有至少 n 个区块"""
    for block in view.ancestors():
        if tx_id in block.tx_ids:
            depth = view.head.number - block.number
            return VerificationAnswer(True, block.number, block.hash, depth >= min_confirmations)
    return VerificationAnswer.absent()


@dataclass
class _Branch:
    branch_id: str
    head: SourceBlock
    salt: str = ""
    pending: List[str] = field(default_factory=list)


class SourceChain:
    """
    单一所有者的源链状态，只由模拟器调度推进。

    规范链持续增长；分支从规范链上某个祖先块分出，与规范链同步出块，
    被分配到分支的节点看到的是分支头；heal() 后所有视图回到规范链。
    """

    def __init__(self, chain_id: str = "source"):
        self.chain_id = chain_id
        genesis = SourceBlock(0, GENESIS_HASH, ZERO_HASH)
        self.blocks: Dict[bytes, SourceBlock] = {genesis.hash: genesis}
        self.canonical: List[SourceBlock] = [genesis]
        self.pending: List[str] = []
        self.branches: Dict[str, _Branch] = {}
        self.assignments: Dict[str, str] = {}
        self.lags: Dict[str, int] = {}
        self._forks = 0

    @property
    def head(self) -> SourceBlock:
        return self.canonical[-1]

    # ─── 脚本事件 ───

    def include(self, tx_id: str, branch: Optional[str] = None):
        """把交易放入下一个出块（规范链或指定分支）"""
        if branch is None:
            self.pending.append(tx_id)
            return
        if branch not in self.branches:
            raise SourceChainError(f"分支不存在: {branch}")
        self.branches[branch].pending.append(tx_id)

    def advance(self, k: int = 1) -> SourceBlock:
        if k < 1:
            raise SourceChainError(f"出块数必须 ≥ 1: {k}")
        for _ in range(k):
            parent = self.head
            txs = frozenset(self.pending)
            self.pending = []
            blk = SourceBlock(parent.number + 1, block_hash(parent.hash, parent.number + 1, txs), parent.hash, txs)
            self._store(blk)
            self.canonical.append(blk)
            for br in self.branches.values():
                br.head = self._extend(br, frozenset(br.pending))
                br.pending = []
        return self.head

    def inject_fork(
        self,
        branch_id: str,
        parent_number: int,
        nodes: Iterable[str],
        length: Optional[int] = None,
    ) -> SourceBlock:
        """
        从规范链第 parent_number 块分叉。

        length 缺省时分支补齐到与规范链同高，保证分支节点不会因为链更短而显得"落后"。
        """
        if branch_id in self.branches:
            raise SourceChainError(f"分支已存在: {branch_id}")
        if not 0 <= parent_number <= self.head.number:
            raise SourceChainError(
                f"分叉父块 #{parent_number} 不存在（规范链高度 {self.head.number}）"
            )
        self._forks += 1
        br = _Branch(branch_id, self.canonical[parent_number], f"{branch_id}#{self._forks}")
        if length is None:
            length = self.head.number - parent_number
        for _ in range(length):
            br.head = self._extend(br, frozenset())
        self.branches[branch_id] = br
        for node in nodes:
            self.assignments[node] = branch_id
        logger.info(
            f"🔀 源链分叉 {branch_id}: 自 #{parent_number} 起 {length} 块，"
            f"节点 {', '.join(sorted(self.assignments_of(branch_id)))}"
        )
        return br.head

    def set_lag(self, node_id: str, lag: int):
        if lag < 0:
            raise SourceChainError(f"延迟必须 ≥ 0: {lag}")
        self.lags[node_id] = lag

    def heal(self):
        """所有视图收敛到规范链"""
        if self.branches or self.lags:
            logger.info(f"🩹 源链恢复一致，规范头 #{self.head.number}")
        self.branches.clear()
        self.assignments.clear()
        self.lags.clear()

    # ─── 视图 ───

    def assignments_of(self, branch_id: str) -> List[str]:
        return [n for n, b in self.assignments.items() if b == branch_id]

    def view(self, node_id: str) -> SourceView:
        branch = self.assignments.get(node_id)
        head = self.branches[branch].head if branch else self.head
        lag = self.lags.get(node_id, 0)
        for _ in range(lag):
            parent = self.blocks.get(head.parent)
            if parent is None:
                break
            head = parent
        return SourceView(node_id, head, lag, branch, self.blocks)

    def canonical_view(self, number: Optional[int] = None) -> SourceView:
        """规范链视图；number 指定历史高度"""
        head = self.head if number is None else self.canonical[min(number, self.head.number)]
        return SourceView("canonical", head, 0, None, self.blocks)

    def block_at(self, number: int) -> SourceBlock:
        if not 0 <= number <= self.head.number:
            raise SourceChainError(f"规范链上不存在 #{number}")
        return self.canonical[number]

    def _extend(self, br: _Branch, txs: FrozenSet[str]) -> SourceBlock:
        parent = br.head
        number = parent.number + 1
        blk = SourceBlock(
            number, block_hash(parent.hash, number, txs, salt=br.salt),
            parent.hash, txs, br.branch_id,
        )
        self._store(blk)
        return blk

    def _store(self, blk: SourceBlock):
        if blk.hash in self.blocks:
            raise SourceChainError(f"区块哈希碰撞 #{blk.number}")
        self.blocks[blk.hash] = blk


def canonical_answers(chain: SourceChain, tx_id: str, min_confirmations: int,
                      heights: Iterable[int]) -> Tuple[VerificationAnswer, ...]:
    """规范链在若干历史高度上的答案（用于判定结果是否正确）"""
    return tuple(query(chain.canonical_view(h), tx_id, min_confirmations) for h in heights)
