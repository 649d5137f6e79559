"""源链：包含/确认查询、分叉视图、延迟、恢复"""
import pytest

from src.sourcechain import (
    GENESIS_HASH,
    SourceChain,
    SourceChainError,
    VerificationAnswer,
    block_hash,
    canonical_answers,
    query,
)


@pytest.fixture
def chain():
    c = SourceChain("src")
    c.advance(2)
    c.include("tx-a")
    c.advance()
    return c


def test_inclusion_and_confirmations(chain):
    ans = query(chain.view("node0"), "tx-a", 0)
    assert ans.included and ans.confirmed
    assert ans.block_number == 3
    assert ans.block_hash == chain.block_at(3).hash

    assert not query(chain.view("node0"), "tx-a", 2).confirmed
    chain.advance(2)
    assert query(chain.view("node0"), "tx-a", 2).confirmed


def test_absent_transaction(chain):
    assert query(chain.view("node0"), "tx-missing", 0) == VerificationAnswer.absent()


def test_block_hash_is_order_insensitive():
    assert block_hash(GENESIS_HASH, 1, ["b", "a"]) == block_hash(GENESIS_HASH, 1, ["a", "b"])
    assert block_hash(GENESIS_HASH, 1, ["a"]) != block_hash(GENESIS_HASH, 1, ["a"], salt="x")


def test_fork_view(chain):
    head = chain.inject_fork("west", 2, ["node1"])
    assert head.number == chain.head.number
    assert head.hash != chain.head.hash

    view = chain.view("node1")
    assert view.branch == "west"
    assert not query(view, "tx-a", 0).included

    chain.include("tx-w", branch="west")
    chain.advance()
    assert query(chain.view("node1"), "tx-w", 0).included
    assert not query(chain.view("node0"), "tx-w", 0).included
    assert chain.assignments_of("west") == ["node1"]


def test_fork_with_explicit_length(chain):
    head = chain.inject_fork("short", 1, ["node2"], length=1)
    assert head.number == 2


def test_heal_restores_canonical_view(chain):
    chain.inject_fork("west", 1, ["node1"])
    chain.set_lag("node2", 1)
    chain.heal()
    assert chain.view("node1").head == chain.head
    assert chain.view("node2").head == chain.head


def test_lag(chain):
    chain.set_lag("node3", 2)
    view = chain.view("node3")
    assert view.head.number == chain.head.number - 2
    assert not query(view, "tx-a", 0).included


def test_lag_stops_at_genesis():
    c = SourceChain()
    c.set_lag("node0", 5)
    assert c.view("node0").head.number == 0


def test_script_errors(chain):
    with pytest.raises(SourceChainError):
        chain.inject_fork("x", 99, [])
    chain.inject_fork("west", 1, [])
    with pytest.raises(SourceChainError):
        chain.inject_fork("west", 1, [])
    with pytest.raises(SourceChainError):
        chain.include("tx", branch="east")
    with pytest.raises(SourceChainError):
        chain.advance(0)
    with pytest.raises(SourceChainError):
        chain.set_lag("node0", -1)
    with pytest.raises(SourceChainError):
        chain.block_at(42)


def test_canonical_answers(chain):
    answers = canonical_answers(chain, "tx-a", 1, [2, 3, 4])
    assert [a.included for a in answers] == [False, True, True]
    assert [a.confirmed for a in answers] == [False, False, False]
    chain.advance()
    assert canonical_answers(chain, "tx-a", 1, [4])[0].confirmed
