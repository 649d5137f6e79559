"""
批量运行
"""
import pytest

from src.batch import BatchPool, parse_seed_range, run_one, summarize
from src.scenario import load_scenario
from src.simulator import run_scenario

from .conftest import SCENARIO_DIR


@pytest.mark.parametrize("text, expected", [
    ("3", [3]),
    ("1-4", [1, 2, 3, 4]),
    ("1,5,9", [1, 5, 9]),
    ("1-2, 7", [1, 2, 7]),
    ("5-5", [5]),
])
def test_parse_seed_range(text, expected):
    assert parse_seed_range(text) == expected


@pytest.mark.parametrize("text", ["", ",", "5-1", "a", "1-x"])
def test_parse_seed_range_errors(text):
    with pytest.raises(ValueError):
        parse_seed_range(text)


async def test_single_worker_matches_direct_run():
    path = SCENARIO_DIR / "idle.yaml"
    rows = await BatchPool(path, max_workers=1).run([1, 2])
    assert [r["seed"] for r in rows] == [1, 2]

    direct = run_scenario(load_scenario(path, seed=2))
    assert rows[1]["transcript_digest"] == direct.digest
    assert rows[1]["metrics"] == direct.metrics.to_dict()


def test_run_one_summary():
    row = run_one(str(SCENARIO_DIR / "idle.yaml"), 1)
    assert row["seed"] == 1
    assert row["fulfilled"] == row["unfulfilled"] == row["wrong_results"] == 0
    assert row["max_latency"] is None
    assert row["latencies"] == {}


def test_summarize():
    rows = [
        {"seed": 1, "fulfilled": 3, "unfulfilled": 0, "wrong_results": 0, "max_latency": 2},
        {"seed": 2, "fulfilled": 2, "unfulfilled": 1, "wrong_results": 1, "max_latency": 7},
        {"seed": 3, "fulfilled": 0, "unfulfilled": 0, "wrong_results": 0, "max_latency": None},
    ]
    assert summarize(rows) == {
        "runs": 3, "fulfilled": 5, "unfulfilled": 1, "wrong_results": 1, "max_latency": 7,
    }
    assert summarize([])["max_latency"] is None
