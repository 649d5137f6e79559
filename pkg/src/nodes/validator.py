import logging
from dataclasses import dataclass
from typing import Dict, Optional

from ..contracts.core import Event, Query, QueryFormat, encode_result_payload
from ..group import PointG1, random_scalar
from ..sourcechain import VerificationAnswer, ZERO_HASH, query
from ..tbls import SignatureShare, sign_share
from .behavior import BehaviorKind, CorruptionMode
from .messages import CollectRequest, Envelope, NodeContext, Response

logger = logging.getLogger("vote-oracle.nodes.validator")


@dataclass(frozen=True)
class OpenQuery:
    request_id: int
    query: Query
    height: int


class ValidatorMixin:
    """验证者路径：读源链 → 规范编码 → 签名分片 → 发给聚合者"""

    def _on_request(self, ev: Event):
        d = ev.data
        q = Query(d["chain_id"], d["tx_id"], d["min_confirmations"], QueryFormat(d["format"]))
        self.queries[d["request_id"]] = OpenQuery(d["request_id"], q, ev.height)

    def observe(self, ctx: NodeContext, request: OpenQuery) -> VerificationAnswer:
        """按行为画像得到本节点对查询的回答（尚未签名）"""
        if self.profile.kind == BehaviorKind.LAZY:
            # 不读链，直接给出固定答案
            return VerificationAnswer(True, self.profile.lazy_block, ZERO_HASH, True)
        answer = query(ctx.source, request.query.tx_id, request.query.min_confirmations)
        if self.profile.kind == BehaviorKind.BYZANTINE and self.profile.corruption == CorruptionMode.WRONG_PAYLOAD:
            return VerificationAnswer(
                not answer.included, answer.block_number + 1, answer.block_hash, not answer.confirmed,
            )
        return answer

    def validator_respond(self, ctx: NodeContext, request: OpenQuery) -> Optional[Response]:
        material = self.active_material()
        if material is None or material.key_share is None:
            return None
        if not self.profile.answers_queries():
            return None

        answer = self.observe(ctx, request)
        payload = encode_result_payload(request.request_id, answer, request.query.format)
        share = sign_share(material.key_share, payload)
        if self.profile.kind == BehaviorKind.BYZANTINE and self.profile.corruption == CorruptionMode.RANDOM_POINT:
            share = SignatureShare(share.index, PointG1.generator() * random_scalar(self.rng))
        return Response(request.request_id, material.session, payload, share)

    # ─── 主动推送 / 响应收集请求 ───

    def _push_responses(self, ctx: NodeContext, fresh: Dict[int, OpenQuery]):
        """新请求立即推给下一个负责提交的聚合者"""
        target = ctx.ledger.aggregator_at(ctx.height + 2)
        if target is None:
            return
        for rid in sorted(fresh):
            if ctx.ledger.get_result(rid) is not None or rid not in ctx.ledger.open_requests:
                continue
            resp = self.validator_respond(ctx, fresh[rid])
            if resp is not None:
                self._deliver_response(ctx, target, resp)

    def _answer_collect(self, ctx: NodeContext, env: Envelope):
        msg: CollectRequest = env.body
        scheduled = {ctx.ledger.aggregator_at(ctx.height), ctx.ledger.aggregator_at(ctx.height + 1)}
        if env.sender not in scheduled:
            logger.debug(f"[{self.node_id}] 忽略非当班聚合者 {env.sender} 的收集请求")
            return
        for rid in msg.request_ids:
            request = self.queries.get(rid)
            if request is None or rid not in ctx.ledger.open_requests:
                continue
            resp = self.validator_respond(ctx, request)
            if resp is not None:
                self._deliver_response(ctx, env.sender, resp)

    def _deliver_response(self, ctx: NodeContext, target: str, resp: Response):
        if target == self.node_id:
            self._accept_response(resp)
        else:
            ctx.send(target, resp)
