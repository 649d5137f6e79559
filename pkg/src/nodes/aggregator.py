import logging
from collections import defaultdict
from typing import Dict, List, Optional, Tuple

from ..tbls import Signature, SignatureShare, recover, verify_share
from .behavior import BehaviorKind, CorruptionMode
from .messages import CollectRequest, NodeContext, Response

logger = logging.getLogger("vote-oracle.nodes.aggregator")


class AggregatorMixin:
    """聚合者路径：收集 → 按载荷分组 → 过滤无效分片 → 恢复签名 → 提交"""

    def _accept_response(self, resp: Response):
        # 同一签名者的新响应覆盖旧响应
        self.collected.setdefault(resp.request_id, {})[resp.share.index] = resp

    def _share_ok(self, resp: Response, vk) -> bool:
        cache = self._verified.setdefault(resp.request_id, {})
        key = (resp.share.index, resp.payload, resp.share.point.to_bytes())
        if key not in cache:
            cache[key] = verify_share(resp.share, resp.payload, vk)
            if not cache[key]:
                logger.info(f"🚫 [{self.node_id}] 丢弃无效签名分片（序号 {resp.share.index}）")
        return cache[key]

    def _close_request(self, request_id: int):
        """结果上链后丢掉该请求的响应、提交记录和校验缓存"""
        self.collected.pop(request_id, None)
        self.submissions.pop(request_id, None)
        self._verified.pop(request_id, None)

    def aggregate(self, request_id: int) -> Optional[Tuple[bytes, Signature]]:
        """
        找出至少 t 个相同载荷且分片有效的分组并恢复完整签名。

        分组按大小降序（同大小按载荷字节序）依次尝试，只有通过 verify_share 的分片才进入 recover。
        """
        material = self.active_material()
        if material is None:
            return None
        t = material.config.threshold
        groups: Dict[bytes, List[Response]] = defaultdict(list)
        for resp in self.collected.get(request_id, {}).values():
            if resp.session == material.session and resp.payload[:8] == request_id.to_bytes(8, "big"):
                groups[resp.payload].append(resp)

        for payload, group in sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0])):
            if len(group) < t:
                break
            valid: List[SignatureShare] = []
            for resp in sorted(group, key=lambda r: r.share.index):
                vk = material.verification_keys.get(resp.share.index)
                if vk is not None and self._share_ok(resp, vk):
                    valid.append(resp.share)
                    if len(valid) == t:
                        return payload, recover(valid, t)
        return None

    def _aggregate_round(self, ctx: NodeContext):
        h, ledger = ctx.height, ctx.ledger
        # 本区块发出的交易在 h+1 上链，只有 h+1 的当班聚合者才提交
        if ledger.aggregator_at(h + 1) != self.node_id:
            if ledger.aggregator_at(h + 2) != self.node_id and (self.collected or self.submissions):
                logger.debug(f"[{self.node_id}] 轮换离任，放弃未完成的请求")
                self.collected.clear()
                self.submissions.clear()
                self._verified.clear()
            return
        if self.profile.kind == BehaviorKind.BYZANTINE and self.profile.corruption == CorruptionMode.WITHHOLD:
            return
        if self.active_material() is None or not ledger.open_requests:
            return

        short = []
        for rid in ledger.open_requests:
            request = self.queries.get(rid)
            if request is None:
                continue
            own = self.validator_respond(ctx, request)
            if own is not None:
                self._accept_response(own)

            result = self.aggregate(rid)
            if result is not None:
                payload, signature = result
                if rid in self.submissions:
                    logger.info(f"🔄 [{self.node_id}] 请求 #{rid} 结果未上链，重新提交")
                self.submissions[rid] = h
                ctx.submit("submit_result", request_id=rid, payload=payload, signature=signature)
            elif request.height < h:
                short.append(rid)

        if short:
            msg = CollectRequest(tuple(short))
            for node in ledger.active:
                if node != self.node_id:
                    ctx.send(node, msg)
            logger.debug(f"[{self.node_id}] 响应不足，向验证者收集 {list(short)}")
