"""注册/密钥/预言机合约（经由账本门面）"""
import random
from fractions import Fraction

import pytest

from src.contracts import (
    ContractParams,
    Fees,
    KeySubmissionMode,
    NodeStatus,
    Query,
    QueryFormat,
    decode_result_payload,
    encode_result_payload,
    lottery_draw,
    run_lottery,
    win_probability,
)
from src.group import PointG1, PointG2, Scalar
from src.ledger import Ledger
from src.sourcechain import VerificationAnswer, ZERO_HASH
from src.tbls import Signature, keygen, sign

NODES = [f"node{i}" for i in range(5)]


def _ledger(stake=100, **overrides):
    params = ContractParams(**{"dkg_trigger_count": 5, **overrides})
    ledger = Ledger(params, {**{n: 1000 for n in NODES}, "client": 10 ** 9})
    rng = random.Random(0)
    for n in NODES:
        ledger.submit(n, "register", host=f"{n}.local", identity_key=keygen(rng).public, stake=stake)
    ledger.mine()
    return ledger


def _receipt(block, method):
    return next(r for r in block.receipts if r.tx.method == method)


def _activate_by_vote(ledger, public_key):
    for n in NODES[:3]:
        ledger.submit(n, "submit_public_key", session=1, public_key=public_key)
    ledger.mine()
    assert ledger.keys.active_pk == public_key


def _fees(ledger):
    p = ledger.params
    return Fees(p.tx_compensation, p.aggregation_reward, p.validation_contribution)


# ═══════════════════════════════════════════════════════
# 注册合约
# ═══════════════════════════════════════════════════════


def test_rotation_schedule():
    ledger = _ledger()
    ordinals = [ledger.registry.records[ledger.current_aggregator(h)].ordinal for h in range(60)]
    assert ordinals == [(h // 6) % 5 for h in range(60)]
    view = ledger.view()
    assert all(view.aggregator_at(h) == ledger.current_aggregator(h) for h in range(60))


def test_registration_triggers_key_generation():
    ledger = _ledger()
    [ev] = ledger.events_of("KeyGeneration")
    assert ev.data["participants"] == NODES
    assert ev.data["threshold"] == 3
    assert ev.data["validator_threshold"] == 3
    assert ledger.total_supply() == 5 * 1000 + 10 ** 9


def test_registration_rejections():
    ledger = _ledger()
    rng = random.Random(1)
    ledger.state.credit("late", 1000)
    ledger.submit("node0", "register", host="x", identity_key=keygen(rng).public, stake=100)
    ledger.submit("late", "register", host="x", identity_key=keygen(rng).public, stake=10)
    ledger.submit("late", "register", host="x", identity_key=PointG2.identity(), stake=100)
    block = ledger.mine()
    assert [r.reason for r in block.receipts] == ["duplicate_node", "insufficient_stake", "invalid_identity_key"]


def test_deregister_returns_stake():
    ledger = _ledger()
    ledger.submit("node4", "deregister")
    ledger.mine()
    assert ledger.registry.records["node4"].status == NodeStatus.EXITING
    assert ledger.balance("node4") == 1000
    assert "node4" not in ledger.view().active
    assert ledger.conservation_holds()


def test_majority_kick_burns_stake():
    ledger = _ledger()
    ledger.submit("node0", "vote_kick", target="node4")
    ledger.submit("node1", "vote_kick", target="node4")
    ledger.mine()
    assert ledger.registry.is_active("node4")
    ledger.submit("node2", "vote_kick", target="node4")
    ledger.submit("node4", "vote_kick", target="node4")
    block = ledger.mine()
    assert _receipt(block, "vote_kick").accepted
    assert block.receipts[1].reason == "inactive_node"
    assert ledger.registry.records["node4"].status == NodeStatus.KICKED
    assert ledger.state.burned == 100
    assert ledger.conservation_holds()
    assert ledger.view().active == tuple(NODES[:4])


def test_rotation_recomputed_after_kick():
    ledger = _ledger()
    assert [ledger.current_aggregator(h) for h in range(6, 12)] == ["node1"] * 6
    for voter in NODES[2:5]:
        ledger.submit(voter, "vote_kick", target="node1")
    ledger.mine()
    assert ledger.registry.records["node1"].status == NodeStatus.KICKED
    remaining = ["node0", "node2", "node3", "node4"]
    assert [ledger.current_aggregator(h) for h in range(6, 12)] == ["node2"] * 6
    assert [ledger.current_aggregator(h) for h in range(48)] == [remaining[(h // 6) % 4] for h in range(48)]
    view = ledger.view()
    assert all(view.aggregator_at(h) == ledger.current_aggregator(h) for h in range(48))


def test_slash_keeps_node_above_min_stake():
    ledger = _ledger(stake=300)
    ledger.registry.slash("node1", 0.5)
    rec = ledger.registry.records["node1"]
    assert rec.stake == 150
    assert rec.status == NodeStatus.ACTIVE


def test_too_few_validators_restarts_key_generation():
    ledger = _ledger(key_submission=KeySubmissionMode.VOTE)
    _activate_by_vote(ledger, PointG2.generator() * 5)
    for n in NODES[2:]:
        ledger.submit(n, "deregister")
    ledger.mine()
    ev = ledger.events_of("KeyGeneration")[-1]
    assert ev.data["session"] == 2
    assert ev.data["reason"] == "validators_below_threshold"
    assert ev.data["participants"] == NODES[:2]


# ═══════════════════════════════════════════════════════
# 密钥合约
# ═══════════════════════════════════════════════════════


def test_key_activates_after_dispute_window():
    ledger = _ledger(dispute_window=4)
    pk = PointG2.generator() * 7
    ledger.submit("node0", "submit_public_key", session=1, public_key=pk)
    submitted = ledger.mine().height
    while ledger.height < submitted + 3:
        ledger.mine()
        assert ledger.keys.active_pk is None
    ledger.mine()
    assert ledger.keys.active_pk == pk
    [ev] = ledger.events_of("KeyActivated")
    assert ev.height == submitted + 4


def test_majority_dispute_rejects_and_slashes():
    ledger = _ledger()
    ledger.submit("node1", "submit_public_key", session=1, public_key=PointG2.generator() * 3)
    ledger.mine()
    for n in ("node0", "node2", "node3"):
        ledger.submit(n, "dispute_key", session=1)
    ledger.submit("node4", "submit_public_key", session=1, public_key=PointG2.generator() * 4)
    ledger.mine()

    assert ledger.events_of("KeyRejected")
    assert ledger.registry.records["node1"].status == NodeStatus.EXITING
    assert ledger.balance("node1") == 900 + 50
    assert ledger.state.burned == 50
    assert ledger.keys.pending.submitter == "node4"
    assert ledger.conservation_holds()

    ledger.submit("node1", "submit_public_key", session=1, public_key=PointG2.generator() * 3)
    assert ledger.mine().receipts[0].reason == "inactive_node"
    assert ledger.keys.pending.submitter == "node4"


def test_dispute_rules():
    ledger = _ledger(dispute_window=2)
    ledger.submit("node0", "dispute_key", session=1)
    ledger.submit("node0", "submit_public_key", session=1, public_key=PointG2.generator() * 3)
    ledger.submit("node1", "submit_public_key", session=1, public_key=PointG2.generator() * 4)
    ledger.submit("node0", "dispute_key", session=1)
    ledger.submit("node2", "dispute_key", session=1)
    ledger.submit("node2", "dispute_key", session=1)
    block = ledger.mine()
    assert [r.reason for r in block.receipts] == [
        "no_pending", "", "pending_exists", "self_dispute", "", "duplicate_dispute",
    ]
    ledger.mine()
    ledger.submit("node3", "dispute_key", session=1)
    assert ledger.mine().receipts[0].reason == "no_pending"
    assert ledger.keys.active_pk == PointG2.generator() * 3


def test_vote_mode_needs_majority():
    ledger = _ledger(key_submission=KeySubmissionMode.VOTE)
    good, bad = PointG2.generator() * 11, PointG2.generator() * 12
    ledger.submit("node0", "submit_public_key", session=1, public_key=good)
    ledger.submit("node1", "submit_public_key", session=1, public_key=bad)
    ledger.submit("node2", "submit_public_key", session=1, public_key=good)
    ledger.submit("node2", "submit_public_key", session=1, public_key=good)
    block = ledger.mine()
    assert block.receipts[3].reason == "duplicate_vote"
    assert ledger.keys.active_pk is None
    ledger.submit("node3", "submit_public_key", session=1, public_key=good)
    ledger.mine()
    assert ledger.keys.active_pk == good


def test_report_failure_restarts_once():
    ledger = _ledger()
    ledger.submit("node0", "report_failure", session=1)
    ledger.submit("node1", "report_failure", session=1)
    block = ledger.mine()
    assert block.receipts[0].accepted
    assert block.receipts[1].reason == "stale_session"
    assert ledger.keys.session == 2
    assert ledger.events_of("KeyGenerationFailed")[0].data["reporter"] == "node0"


def test_stale_session_rejected():
    ledger = _ledger()
    ledger.submit("node0", "submit_public_key", session=7, public_key=PointG2.generator())
    assert ledger.mine().receipts[0].reason == "stale_session"


# ═══════════════════════════════════════════════════════
# 预言机合约
# ═══════════════════════════════════════════════════════


def _answer():
    return VerificationAnswer(True, 12, b"\x07" * 32, True)


def test_request_and_result():
    ledger = _ledger(key_submission=KeySubmissionMode.VOTE)
    kp = keygen(random.Random(5))
    _activate_by_vote(ledger, kp.public)

    fees = _fees(ledger)
    ledger.submit("client", "request_verification", query=Query("src", "tx-a", 2), fees=fees)
    block = ledger.mine()
    rid = _receipt(block, "request_verification").result
    assert rid == 1
    assert ledger.state.escrow == fees.total
    [req] = ledger.events_of("Request")
    assert req.data["tx_id"] == "tx-a" and req.data["min_confirmations"] == 2

    payload = encode_result_payload(rid, _answer())
    sig = sign(kp.secret, payload)
    aggregator = ledger.current_aggregator(ledger.height + 1)
    other = next(n for n in NODES if n != aggregator)
    before = ledger.balance(aggregator)

    ledger.submit(other, "submit_result", request_id=rid, payload=payload, signature=sig)
    ledger.submit(aggregator, "submit_result", request_id=rid, payload=payload,
                  signature=Signature(PointG1.generator()))
    ledger.submit(aggregator, "submit_result", request_id=rid, payload=payload, signature=sig)
    ledger.submit(aggregator, "submit_result", request_id=rid, payload=payload, signature=sig)
    block = ledger.mine()
    assert [r.reason for r in block.receipts] == [
        "not_aggregator", "invalid_signature", "", "duplicate_result",
    ]

    record = ledger.get_result(rid)
    assert record.aggregator == aggregator
    assert decode_result_payload(record.payload).answer == _answer()
    gained = ledger.balance(aggregator) - before
    assert gained == fees.compensation + fees.aggregation_reward + record.payout
    assert ledger.state.escrow == 0
    assert ledger.state.pot == fees.validation_contribution - record.payout
    assert ledger.conservation_holds()


def test_result_rejections_without_key():
    ledger = _ledger()
    ledger.submit("client", "request_verification", query=Query("src", "tx-a", 1), fees=_fees(ledger))
    ledger.mine()
    aggregator = ledger.current_aggregator(ledger.height + 1)
    payload = encode_result_payload(1, _answer())
    sig = Signature(PointG1.generator())
    ledger.submit(aggregator, "submit_result", request_id=1, payload=payload, signature=sig)
    assert ledger.mine().receipts[0].reason == "no_active_key"


def test_request_rejections():
    ledger = _ledger()
    fees = _fees(ledger)
    cheap = Fees(fees.compensation - 1, fees.aggregation_reward, fees.validation_contribution)
    ledger.submit("client", "request_verification", query=Query("src", "tx", 1), fees=cheap)
    ledger.submit("client", "request_verification", query=Query("src", "tx", -1), fees=fees)
    ledger.submit("pauper", "request_verification", query=Query("src", "tx", 1), fees=fees)
    block = ledger.mine()
    assert [r.reason for r in block.receipts] == ["underpaid", "invalid_query", "insufficient_balance"]


def test_payload_encoding():
    payload = encode_result_payload(9, _answer())
    assert len(payload) == 50
    assert decode_result_payload(payload).request_id == 9

    inclusion = decode_result_payload(encode_result_payload(9, _answer(), QueryFormat.INCLUSION))
    assert inclusion.answer == VerificationAnswer(True, 0, ZERO_HASH, True)

    absent = decode_result_payload(encode_result_payload(3, VerificationAnswer.absent()))
    assert absent.answer == VerificationAnswer.absent()

    with pytest.raises(ValueError):
        decode_result_payload(payload[:-1])
    with pytest.raises(ValueError):
        decode_result_payload(payload[:8] + b"\x02" + payload[9:])


# ═══════════════════════════════════════════════════════
# 抽奖
# ═══════════════════════════════════════════════════════


def test_win_probability():
    assert win_probability(20, 100, 0.5) == Fraction(1, 50)
    assert win_probability(100, 100, 0.5) == Fraction(1, 2)
    assert win_probability(100, 100, 10) == 1
    assert win_probability(0, 100, 0.5) == 0
    assert win_probability(10, 0, 0.5) == 0


def test_lottery_is_deterministic():
    sig = Signature(PointG1.generator() * Scalar(99))
    assert run_lottery(sig, 20, 100, 1000) == run_lottery(sig, 20, 100, 1000)
    win, payout = run_lottery(sig, 100, 100, 1000, alpha=1)
    assert win and payout == 1000


def test_lottery_statistics():
    # 10,000 个不同签名（连加生成元得到不同的 G1 点）
    p = win_probability(20, 100, 0.5)
    point, g = PointG1.generator(), PointG1.generator()
    draws = []
    for _ in range(10_000):
        draws.append(lottery_draw(Signature(point)))
        point = point + g

    wins = sum(1 for u in draws if u < p)
    sigma = (10_000 * 0.02 * 0.98) ** 0.5
    assert abs(wins - 200) <= 3 * sigma

    # 质押凸性：一个 0.2 身份的期望中奖数严格大于两个 0.1 身份之和
    half = win_probability(10, 100, 0.5)
    assert p > 2 * half
    split_wins = sum(1 for u in draws[:5_000] if u < half) + sum(1 for u in draws[5_000:] if u < half)
    assert wins > split_wins
