from .core import (
    ContractError,
    ContractParams,
    Event,
    Fees,
    KeySubmissionMode,
    LedgerState,
    NodeStatus,
    Query,
    QueryFormat,
    Receipt,
    Request,
    ResultPayload,
    ResultRecord,
    Tx,
    decode_result_payload,
    encode_result_payload,
)
from .keys import KeyContract, PendingKey
from .oracle import OracleContract, lottery_draw, run_lottery, win_probability
from .registry import NodeRecord, RegistryContract

__all__ = [
    "ContractError",
    "ContractParams",
    "Event",
    "Fees",
    "KeyContract",
    "KeySubmissionMode",
    "LedgerState",
    "NodeRecord",
    "NodeStatus",
    "OracleContract",
    "PendingKey",
    "Query",
    "QueryFormat",
    "Receipt",
    "RegistryContract",
    "Request",
    "ResultPayload",
    "ResultRecord",
    "Tx",
    "decode_result_payload",
    "encode_result_payload",
    "lottery_draw",
    "run_lottery",
    "win_probability",
]
