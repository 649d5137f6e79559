"""
端到端模拟

5 节点 / dkg_trigger_count=5 的时间线：第 0 块注册并发起会话，第 2 块分发，第 6 块完成，
秩 0 节点第 7 块提交公钥，第 8 块上链，争议窗口 12 块后于第 20 块激活。
"""
import copy
import json
from functools import lru_cache

import pytest

from src.contracts import QueryFormat
from src.scenario import load_scenario, load_scenario_data
from src.simulator import CLIENT, Simulator, run_scenario

from .conftest import SCENARIO_DIR, five_nodes

ALL_SCENARIOS = sorted(p.stem for p in SCENARIO_DIR.glob("*.yaml"))


@lru_cache(maxsize=None)
def bundled(name, seed=None):
    return run_scenario(load_scenario(SCENARIO_DIR / f"{name}.yaml", seed=seed))


def _events(result, kind):
    return [
        (rec["height"], ev["data"])
        for rec in result.records if rec["type"] == "block"
        for ev in rec["events"] if ev["kind"] == kind
    ]


# ═══════════════════════════════════════════════════════
# 基础流程
# ═══════════════════════════════════════════════════════


def test_baseline():
    m = bundled("baseline").metrics
    assert m.key_activated_at == 20
    assert m.dkg_sessions == 1
    assert m.fulfilled == 3
    assert m.wrong_results == 0
    assert all(r.correct for r in m.requests)
    assert all(lat <= 2 for lat in m.latencies.values())
    assert m.submissions_accepted == 3
    assert m.conservation
    assert m.pot_accrued == 3 * 5
    assert len(m.pot_history) == m.blocks
    assert m.pot_history[-1] == m.pot


def test_baseline_rewards_and_fees():
    m = bundled("baseline").metrics
    assert m.balances[CLIENT] == 100_000_000 - 3 * (257_607 + 10 + 5)
    assert sum(m.rewards.values()) >= 3 * (257_607 + 10)
    aggregators = {r.aggregator for r in m.requests}
    assert all(m.rewards[a] > 0 for a in aggregators)


def test_absent_transaction_is_answered():
    m = bundled("baseline").metrics
    missing = next(r for r in m.requests if r.tx_id == "tx-missing")
    assert missing.fulfilled and missing.correct
    assert missing.payload[8] == 0


def test_metrics_schema():
    d = bundled("baseline").metrics.to_dict()
    assert set(d) == {
        "scenario", "seed", "blocks", "requests", "fulfilled", "unfulfilled", "wrong_results",
        "latencies", "balances", "rewards", "lottery_wins", "submissions", "dkg_sessions",
        "key_activated_at", "oracle_txs_after_key", "messages", "costs", "relay_window",
        "relay_breakeven_requests", "conservation", "pot", "transcript_digest",
    }
    assert set(d["submissions"]) == {"accepted", "rejected", "reasons"}
    assert set(d["pot"]) == {"final", "paid", "accrued", "history"}
    json.dumps(d)


def test_transcript_records():
    result = bundled("baseline")
    lines = result.transcript().splitlines()
    first, last = json.loads(lines[0]), json.loads(lines[-1])
    assert first["type"] == "scenario" and first["name"] == "baseline"
    assert last["type"] == "metrics"
    types = {json.loads(line)["type"] for line in lines}
    assert {"block", "source", "session", "deal", "public_key"} <= types


# ═══════════════════════════════════════════════════════
# 懒惰投票 / 离线聚合者 / 分叉
# ═══════════════════════════════════════════════════════


def test_lazy_minority_is_outvoted():
    m = bundled("lazy_voting").metrics
    assert all(r.format == QueryFormat.BLOCK_NUMBER for r in m.requests)
    assert m.fulfilled == len(m.requests) == 3
    assert m.wrong_results == 0


def test_lazy_majority_decides_alone():
    m = bundled("lazy_collusion").metrics
    assert m.fulfilled == 1
    assert m.wrong_results == 1
    assert m.submissions_accepted == 1


def _check_offline_liveness(result):
    m = result.metrics
    assert m.unfulfilled == 0
    assert m.wrong_results == 0
    assert max(m.latencies.values()) <= 12


def test_offline_aggregator():
    result = bundled("offline_aggregator")
    _check_offline_liveness(result)
    m = result.metrics
    assert m.messages["dropped_offline"] > 0
    assert "node2" not in {r.aggregator for r in m.requests}


@pytest.mark.parametrize("seed", [1, 2])
def test_offline_aggregator_other_seeds(seed):
    _check_offline_liveness(bundled("offline_aggregator", seed))


@pytest.mark.slow
def test_offline_aggregator_sweep():
    for seed in range(1, 21):
        _check_offline_liveness(bundled("offline_aggregator", seed))


def test_fork_resolves_after_heal():
    m = bundled("fork_heal").metrics
    [req] = m.requests
    assert 40 < req.fulfilled_at <= 48
    assert req.correct
    assert m.wrong_results == 0


@pytest.mark.slow
def test_free_loading():
    m = bundled("free_loading").metrics
    assert m.unfulfilled == 0
    assert m.wrong_results == 0
    assert m.pot_accrued == 5 * m.submissions_accepted


# ═══════════════════════════════════════════════════════
# 成本与确定性
# ═══════════════════════════════════════════════════════


def test_idle_has_no_ongoing_cost():
    m = bundled("idle").metrics
    assert m.key_activated_at == 20
    assert m.blocks == 20 + 100 + 1
    assert m.requests == []
    assert m.oracle_txs_after_key == 0
    assert m.relay_window == 100
    assert m.costs["relay"] == 28_404_100
    assert m.costs["bls"] == 0
    assert m.relay_breakeven_requests == 110


def test_same_seed_same_transcript():
    a = bundled("baseline")
    b = run_scenario(load_scenario(SCENARIO_DIR / "baseline.yaml"))
    assert a.transcript() == b.transcript()
    assert a.digest == b.digest


def test_seed_changes_identities():
    a = bundled("baseline")
    b = bundled("baseline", 8)
    assert a.digest != b.digest
    assert b.metrics.fulfilled == 3


@pytest.mark.slow
@pytest.mark.parametrize("name", ALL_SCENARIOS)
def test_all_scenarios_deterministic(name):
    first = bundled(name)
    again = run_scenario(load_scenario(SCENARIO_DIR / f"{name}.yaml"))
    assert first.transcript() == again.transcript()


# ═══════════════════════════════════════════════════════
# 拜占庭行为与故障注入
# ═══════════════════════════════════════════════════════


def test_forged_key_is_disputed():
    result = bundled("key_dispute")
    m = result.metrics
    [(rejected_at, rejected)] = _events(result, "KeyRejected")
    assert rejected["submitter"] == "node1"
    assert rejected_at == 8
    assert m.key_activated_at == 23
    # 质押 100 罚没一半，剩余 50 低于最低质押，强制退出并返还
    assert m.balances["node1"] == 1000 + 50
    assert m.fulfilled == 1 and m.wrong_results == 0
    assert m.conservation


def test_malicious_dealer_excluded():
    result = bundled("malicious_dealer")
    m = result.metrics
    complaints = [r for r in result.records if r["type"] == "complaint"]
    assert complaints and all(c["dealer"] == "node1" for c in complaints)
    assert m.dkg_sessions == 1
    assert m.fulfilled == len(m.requests) == 3
    assert m.wrong_results == 0


def test_dropped_result_tx_is_resubmitted(scenario_data):
    scenario_data["faults"] = [{"target": "tx", "action": "drop", "method": "submit_result", "times": 1}]
    result = run_scenario(load_scenario_data(scenario_data))
    [req] = result.metrics.requests
    assert req.fulfilled and req.correct
    assert req.latency == 3
    assert [r["action"] for r in result.records if r["type"] == "tx_fault"] == ["drop"]


def test_delayed_messages(scenario_data):
    scenario_data["faults"] = [{"target": "message", "action": "delay", "kind": "response", "blocks": 1}]
    result = run_scenario(load_scenario_data(scenario_data))
    [req] = result.metrics.requests
    assert req.fulfilled and req.correct
    assert req.latency == 3
    assert result.metrics.messages["delayed"] > 0


def test_vote_mode_activates_by_majority(scenario_data):
    scenario_data["protocol"]["key_submission"] = "vote"
    m = run_scenario(load_scenario_data(scenario_data)).metrics
    assert m.key_activated_at == 7
    assert m.fulfilled == 1


def test_kick_vote(scenario_data):
    scenario_data["nodes"] = five_nodes(node4="withholder")
    scenario_data["kicks"] = [{"at": 22, "voter": v, "target": "node4"} for v in ("node0", "node1", "node2")]
    result = run_scenario(load_scenario_data(scenario_data))
    [(kicked_at, kicked)] = _events(result, "NodeKicked")
    assert kicked_at == 22 and kicked["node"] == "node4"
    m = result.metrics
    assert m.balances["node4"] == 1000
    assert m.fulfilled == 1
    assert m.conservation


def test_late_joiner_below_trigger_keeps_session(scenario_data):
    scenario_data["protocol"]["dkg_trigger_count"] = 4
    scenario_data["nodes"][4]["join"] = 10
    scenario_data["requests"] = []
    scenario_data["blocks"] = 12
    result = run_scenario(load_scenario_data(scenario_data))
    sessions = _events(result, "KeyGeneration")
    assert [(h, d["participants"]) for h, d in sessions] == [(0, ["node0", "node1", "node2", "node3"])]
    registered = [d["node"] for _, d in _events(result, "NodeRegistered")]
    assert registered[-1] == "node4"


def _lagged_withholding(scenario_data, **behaviors):
    # node2 的源链视图停在创世块，只会回答"不存在"
    scenario_data["nodes"] = five_nodes(**behaviors)
    scenario_data["source"]["events"].append({"at": 0, "lag": {"node": "node2", "blocks": 50}})
    return run_scenario(load_scenario_data(scenario_data)).metrics


def test_withholding_starves_pot(scenario_data):
    altruistic = _lagged_withholding(copy.deepcopy(scenario_data))
    free = _lagged_withholding(scenario_data, node3="withholder", node4="withholder")
    assert altruistic.fulfilled == 1 and altruistic.wrong_results == 0
    assert altruistic.pot_accrued == 5
    # 两个诚实答案 + 一个陈旧答案凑不出 t=3 个相同响应
    assert free.unfulfilled == 1
    assert free.pot_accrued == 0
    assert free.pot_history == [0] * free.blocks


def test_node_restart_answers_later_requests(scenario_data):
    # node3 / node4 不响应，请求只能靠 node0..node2 凑满 t=3
    scenario_data["nodes"] = five_nodes(
        node2={"kind": "offline", "offline": [[21, 23]]}, node3="withholder", node4="withholder",
    )
    scenario_data["requests"] = [{"at": 30, "tx": "tx-a", "confirmations": 2}]
    scenario_data["blocks"] = 40
    m = run_scenario(load_scenario_data(scenario_data)).metrics
    [req] = m.requests
    assert req.fulfilled and req.correct
    assert req.aggregator == "node0"
    assert req.latency <= 2


def test_offline_dealer_excluded_from_qualified_set(scenario_data):
    scenario_data["nodes"] = five_nodes(node2={"kind": "offline", "offline": [[0, 8]]})
    sim = Simulator(load_scenario_data(scenario_data))
    result = sim.run()
    dealers = [r["dealer"] for r in result.records if r["type"] == "deal"]
    assert dealers == ["node0", "node1", "node3", "node4"]
    assert sim.nodes["node0"].sessions[1].qualified == {"node0", "node1", "node3", "node4"}
    assert any(r["type"] == "public_key" for r in result.records)
    m = result.metrics
    assert m.messages["dropped_offline"] > 0
    assert m.dkg_sessions == 1
    assert m.fulfilled == 1 and m.wrong_results == 0
